#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <deque>
#include <optional>
#include <span>
#include <vector>

#include "vbfs/common.hpp"
#include "vbfs/core_data.hpp"

namespace vbfs {

// ---------------------------------------------------------------------------
// Mean frame removal
// ---------------------------------------------------------------------------

struct MeanFrame {
  Frame pixels;
  std::size_t count = 0;
};

inline void require_same_shape(const Frame& a, const Frame& b, const char* what) {
  if (!a.same_shape(b)) throw data_error(std::string(what) + ": frame shape mismatch");
}

/// Per-pixel arithmetic mean over the whole sequence.
inline MeanFrame mean_frame_offline(std::span<const Frame> frames) {
  if (frames.empty()) throw data_error("mean_frame_offline: no frames");
  MeanFrame m;
  m.pixels = Frame(frames[0].height, frames[0].width, frames[0].channels, FrameKind::raw_rgb);
  for (const auto& f : frames) {
    require_same_shape(f, m.pixels, "mean_frame_offline");
    for (std::size_t i = 0; i < f.pixels.size(); ++i) m.pixels.pixels[i] += f.pixels[i];
  }
  const double n = static_cast<double>(frames.size());
  for (double& p : m.pixels.pixels) p /= n;
  m.count = frames.size();
  return m;
}

/// Running mean over the frames seen so far. An empty state (count 0) adopts
/// the first frame.
inline MeanFrame mean_frame_causal(MeanFrame state, const Frame& frame) {
  if (state.count == 0) {
    state.pixels = frame;
    state.pixels.kind = FrameKind::raw_rgb;
    state.count = 1;
    return state;
  }
  require_same_shape(frame, state.pixels, "mean_frame_causal");
  state.count += 1;
  const double inv = 1.0 / static_cast<double>(state.count);
  auto& m = state.pixels.pixels;
  for (std::size_t i = 0; i < m.size(); ++i) m[i] += (frame.pixels[i] - m[i]) * inv;
  return state;
}

/// Signed residual against the background, kept in [-1, 1].
inline Frame subtract_mean(const Frame& frame, const MeanFrame& mean) {
  require_same_shape(frame, mean.pixels, "subtract_mean");
  Frame out(frame.height, frame.width, frame.channels, FrameKind::mean_removed);
  for (std::size_t i = 0; i < out.pixels.size(); ++i)
    out.pixels[i] = std::clamp(frame.pixels[i] - mean.pixels.pixels[i], -1.0, 1.0);
  return out;
}

// ---------------------------------------------------------------------------
// Grayscale and space-time frames
// ---------------------------------------------------------------------------

/// BT.601 luma.
inline Frame to_grayscale(const Frame& rgb) {
  if (rgb.channels != 3) throw data_error("to_grayscale: expected 3 channels");
  Frame out(rgb.height, rgb.width, 1, FrameKind::grayscale);
  const std::size_t n = static_cast<std::size_t>(rgb.height) * rgb.width;
  for (std::size_t i = 0; i < n; ++i) {
    const double* p = &rgb.pixels[3 * i];
    out.pixels[i] = 0.299 * p[0] + 0.587 * p[1] + 0.114 * p[2];
  }
  return out;
}

inline Frame as_grayscale(const Frame& f) {
  if (f.channels == 1) {
    Frame g = f;
    g.kind = FrameKind::grayscale;
    return g;
  }
  return to_grayscale(f);
}

struct SpaceTimeFrame {
  Frame pixels;  // H x W x 3
  std::array<std::int64_t, 3> sources{};
  int delta = 15;
};

inline std::array<std::int64_t, 3> space_time_sources(std::int64_t t, int delta, bool causal) {
  if (causal) return {t - 2 * delta, t - delta, t};
  return {t - delta, t, t + delta};
}

/// Stacks grayscale versions of three frames spaced `delta` apart: (t-d, t, t+d),
/// or (t-2d, t-d, t) in causal mode.
inline SpaceTimeFrame space_time(std::span<const Frame> frames, std::int64_t t, int delta, bool causal) {
  if (delta < 0) throw usage_error("space_time: negative spacing");
  SpaceTimeFrame out;
  out.delta = delta;
  out.sources = space_time_sources(t, delta, causal);
  for (auto s : out.sources)
    if (s < 0 || s >= static_cast<std::int64_t>(frames.size()))
      throw data_error("space_time: source index out of range");
  std::array<Frame, 3> g;
  for (int c = 0; c < 3; ++c) g[c] = as_grayscale(frames[out.sources[c]]);
  for (int c = 1; c < 3; ++c) require_same_shape(g[c], g[0], "space_time");
  out.pixels = Frame(g[0].height, g[0].width, 3, FrameKind::space_time);
  const std::size_t n = g[0].pixels.size();
  for (std::size_t i = 0; i < n; ++i)
    for (int c = 0; c < 3; ++c) out.pixels.pixels[3 * i + c] = g[c].pixels[i];
  return out;
}

// ---------------------------------------------------------------------------
// Region of interest
// ---------------------------------------------------------------------------

struct RoiBox {
  int center_row = 0;
  int center_col = 0;
  int height = 200;
  int width = 300;

  int top() const { return center_row - height / 2; }
  int left() const { return center_col - width / 2; }
  bool inside(int frame_h, int frame_w) const {
    return top() >= 0 && left() >= 0 && top() + height <= frame_h && left() + width <= frame_w;
  }
  bool operator==(const RoiBox&) const = default;
};

/// Moves the box center so the whole box lies inside the frame.
inline RoiBox clamp_box(RoiBox b, int frame_h, int frame_w) {
  if (b.height > frame_h || b.width > frame_w) throw data_error("clamp_box: box larger than frame");
  const int top = std::clamp(b.top(), 0, frame_h - b.height);
  const int left = std::clamp(b.left(), 0, frame_w - b.width);
  b.center_row = top + b.height / 2;
  b.center_col = left + b.width / 2;
  return b;
}

struct TrackerConfig {
  int box_height = 200;
  int box_width = 300;
  double smoothing = 0.8;     // weight on the predicted centroid
  double velocity_gain = 0.05;
  double min_threshold = 0.02;  // foreground floor below which Otsu is ignored
};

struct TrackerState {
  std::optional<RoiBox> box;
  std::array<double, 2> position{};
  std::array<double, 2> velocity{};
  int detections = 0;
};

struct RoiResult {
  RoiBox box;
  bool no_motion = false;
};

namespace detail {

inline std::vector<double> box_blur3(const std::vector<double>& img, int h, int w) {
  std::vector<double> out(img.size());
  for (int r = 0; r < h; ++r)
    for (int c = 0; c < w; ++c) {
      double s = 0.0;
      int n = 0;
      for (int dr = -1; dr <= 1; ++dr)
        for (int dc = -1; dc <= 1; ++dc) {
          const int rr = r + dr, cc = c + dc;
          if (rr < 0 || rr >= h || cc < 0 || cc >= w) continue;
          s += img[static_cast<std::size_t>(rr) * w + cc];
          ++n;
        }
      out[static_cast<std::size_t>(r) * w + c] = s / n;
    }
  return out;
}

/// Otsu threshold over a 256-bin histogram spanning [0, max].
inline double otsu_threshold(const std::vector<double>& v) {
  double vmax = 0.0;
  for (double x : v) vmax = std::max(vmax, x);
  if (vmax <= 0.0) return 0.0;
  constexpr int kBins = 256;
  std::array<double, kBins> hist{};
  for (double x : v) {
    int b = static_cast<int>(x / vmax * (kBins - 1) + 0.5);
    hist[std::clamp(b, 0, kBins - 1)] += 1.0;
  }
  const double total = static_cast<double>(v.size());
  double sum_all = 0.0;
  for (int b = 0; b < kBins; ++b) sum_all += b * hist[b];
  double w0 = 0.0, sum0 = 0.0, best = -1.0;
  int best_bin = 0;
  for (int b = 0; b < kBins; ++b) {
    w0 += hist[b];
    if (w0 == 0.0) continue;
    const double w1 = total - w0;
    if (w1 == 0.0) break;
    sum0 += b * hist[b];
    const double m0 = sum0 / w0, m1 = (sum_all - sum0) / w1;
    const double between = w0 * w1 * (m0 - m1) * (m0 - m1);
    if (between > best) {
      best = between;
      best_bin = b;
    }
  }
  // Pixels strictly above the boundary bin are foreground.
  return (best_bin + 0.5) / (kBins - 1) * vmax;
}

inline std::vector<std::uint8_t> morph3(const std::vector<std::uint8_t>& m, int h, int w, bool dilate) {
  std::vector<std::uint8_t> out(m.size());
  for (int r = 0; r < h; ++r)
    for (int c = 0; c < w; ++c) {
      bool acc = !dilate;
      for (int dr = -1; dr <= 1; ++dr)
        for (int dc = -1; dc <= 1; ++dc) {
          const int rr = r + dr, cc = c + dc;
          if (rr < 0 || rr >= h || cc < 0 || cc >= w) continue;
          const bool v = m[static_cast<std::size_t>(rr) * w + cc] != 0;
          acc = dilate ? (acc || v) : (acc && v);
        }
      out[static_cast<std::size_t>(r) * w + c] = acc ? 1 : 0;
    }
  return out;
}

/// Centroid (row, col) of the largest 8-connected component; nullopt if empty.
inline std::optional<std::array<double, 2>> largest_component_centroid(const std::vector<std::uint8_t>& m,
                                                                       int h, int w) {
  std::vector<int> label(m.size(), 0);
  std::size_t best_area = 0;
  std::array<double, 2> best{};
  int next = 0;
  std::deque<std::size_t> queue;
  for (std::size_t start = 0; start < m.size(); ++start) {
    if (!m[start] || label[start]) continue;
    ++next;
    label[start] = next;
    queue.push_back(start);
    std::size_t area = 0;
    double sr = 0.0, sc = 0.0;
    while (!queue.empty()) {
      const std::size_t p = queue.front();
      queue.pop_front();
      const int r = static_cast<int>(p / w), c = static_cast<int>(p % w);
      ++area;
      sr += r;
      sc += c;
      for (int dr = -1; dr <= 1; ++dr)
        for (int dc = -1; dc <= 1; ++dc) {
          const int rr = r + dr, cc = c + dc;
          if (rr < 0 || rr >= h || cc < 0 || cc >= w) continue;
          const std::size_t q = static_cast<std::size_t>(rr) * w + cc;
          if (m[q] && !label[q]) {
            label[q] = next;
            queue.push_back(q);
          }
        }
    }
    if (area > best_area) {
      best_area = area;
      best = {sr / area, sc / area};
    }
  }
  if (best_area == 0) return std::nullopt;
  return best;
}

}  // namespace detail

/// Foreground mask of a mean-removed frame: blurred residual magnitude,
/// thresholded with Otsu, then opened and closed with a 3x3 square.
inline std::vector<std::uint8_t> foreground_mask(const Frame& mean_removed, double min_threshold) {
  const Frame g = as_grayscale(mean_removed);
  const int h = g.height, w = g.width;
  auto blurred = detail::box_blur3(g.pixels, h, w);
  for (double& x : blurred) x = std::abs(x);
  const double thr = std::max(detail::otsu_threshold(blurred), min_threshold);
  std::vector<std::uint8_t> mask(blurred.size());
  for (std::size_t i = 0; i < blurred.size(); ++i) mask[i] = blurred[i] > thr ? 1 : 0;
  mask = detail::morph3(detail::morph3(mask, h, w, false), h, w, true);  // open
  mask = detail::morph3(detail::morph3(mask, h, w, true), h, w, false);  // close
  return mask;
}

/// One tracker update. The centroid is smoothed with a constant-velocity
/// predictor weighted `smoothing` against the new detection.
inline RoiResult track_roi_step(TrackerState& state, const Frame& mean_removed, const TrackerConfig& cfg) {
  const int h = mean_removed.height, w = mean_removed.width;
  if (!state.box) state.box = clamp_box(RoiBox{h / 2, w / 2, cfg.box_height, cfg.box_width}, h, w);

  const auto mask = foreground_mask(mean_removed, cfg.min_threshold);
  const auto centroid = detail::largest_component_centroid(mask, h, w);
  RoiResult res;
  if (!centroid) {
    res.box = *state.box;
    res.no_motion = true;
    return res;
  }
  const auto& m = *centroid;
  if (state.detections == 0) {
    state.position = m;
    state.velocity = {0.0, 0.0};
  } else if (state.detections == 1) {
    for (int a = 0; a < 2; ++a) {
      state.velocity[a] = m[a] - state.position[a];
      state.position[a] = m[a];
    }
  } else {
    for (int a = 0; a < 2; ++a) {
      const double predicted = state.position[a] + state.velocity[a];
      const double residual = m[a] - predicted;
      state.position[a] = predicted + (1.0 - cfg.smoothing) * residual;
      state.velocity[a] += cfg.velocity_gain * residual;
    }
  }
  ++state.detections;
  RoiBox b{static_cast<int>(std::lround(state.position[0])), static_cast<int>(std::lround(state.position[1])),
           cfg.box_height, cfg.box_width};
  state.box = clamp_box(b, h, w);
  res.box = *state.box;
  return res;
}

inline std::vector<RoiResult> track_roi(std::span<const Frame> mean_removed, std::optional<RoiBox> prev_box,
                                        const TrackerConfig& cfg = {}) {
  TrackerState state;
  state.box = prev_box;
  if (prev_box && !mean_removed.empty())
    state.box = clamp_box(*prev_box, mean_removed[0].height, mean_removed[0].width);
  std::vector<RoiResult> out;
  out.reserve(mean_removed.size());
  for (const auto& f : mean_removed) out.push_back(track_roi_step(state, f, cfg));
  return out;
}

// ---------------------------------------------------------------------------
// Crop and resample
// ---------------------------------------------------------------------------

/// Bilinear resample with half-pixel centers and edge clamping.
inline Frame resize_bilinear(const Frame& in, int out_h, int out_w) {
  Frame out(out_h, out_w, in.channels, in.kind);
  const double sy = static_cast<double>(in.height) / out_h;
  const double sx = static_cast<double>(in.width) / out_w;
  for (int r = 0; r < out_h; ++r) {
    const double fy = std::clamp((r + 0.5) * sy - 0.5, 0.0, static_cast<double>(in.height - 1));
    const int y0 = static_cast<int>(std::floor(fy));
    const int y1 = std::min(y0 + 1, in.height - 1);
    const double wy = fy - y0;
    for (int c = 0; c < out_w; ++c) {
      const double fx = std::clamp((c + 0.5) * sx - 0.5, 0.0, static_cast<double>(in.width - 1));
      const int x0 = static_cast<int>(std::floor(fx));
      const int x1 = std::min(x0 + 1, in.width - 1);
      const double wx = fx - x0;
      for (int ch = 0; ch < in.channels; ++ch) {
        const double top = in.at(y0, x0, ch) * (1.0 - wx) + in.at(y0, x1, ch) * wx;
        const double bot = in.at(y1, x0, ch) * (1.0 - wx) + in.at(y1, x1, ch) * wx;
        out.at(r, c, ch) = top * (1.0 - wy) + bot * wy;
      }
    }
  }
  return out;
}

inline Frame crop(const Frame& in, int top, int left, int h, int w) {
  Frame out(h, w, in.channels, in.kind);
  for (int r = 0; r < h; ++r)
    for (int c = 0; c < w; ++c)
      for (int ch = 0; ch < in.channels; ++ch) out.at(r, c, ch) = in.at(top + r, left + c, ch);
  return out;
}

/// Crops the box, keeps its centered square, and resamples that to size x size.
inline Frame crop_resize(const Frame& frame, const RoiBox& box, int size) {
  if (!box.inside(frame.height, frame.width)) throw data_error("crop_resize: box outside frame");
  if (size <= 0) throw usage_error("crop_resize: output size must be positive");
  const int side = std::min(box.height, box.width);
  const int top = box.top() + (box.height - side) / 2;
  const int left = box.left() + (box.width - side) / 2;
  Frame sq = crop(frame, top, left, side, side);
  if (side == size) return sq;
  return resize_bilinear(sq, size, size);
}

}  // namespace vbfs
