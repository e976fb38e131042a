#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <concepts>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "vbfs/common.hpp"

namespace vbfs {

// ---------------------------------------------------------------------------
// Signals
// ---------------------------------------------------------------------------

struct ToolSample {
  std::int64_t t = 0;  // sample index at the sequence rate
  std::array<double, 3> position{};
  std::array<double, 3> orientation_axis{0.0, 0.0, 1.0};
  double orientation_angle = 0.0;
  int grasper = 1;  // 1 open, 0 closed
};

/// Forces (N) followed by torques (Nm): fx, fy, fz, tx, ty, tz.
struct ForceVector {
  std::array<double, kForceDim> components{};

  double& operator[](std::size_t j) { return components[j]; }
  double operator[](std::size_t j) const { return components[j]; }
  bool operator==(const ForceVector&) const = default;
};

/// Physical envelope of the force/torque sensor.
struct ForceEnvelope {
  double force_min = -10.0;
  double force_max = 2.5;
  double torque_abs = 5.0;
};

/// Per-component envelope violations; values are flagged, never clipped.
inline std::array<bool, kForceDim> envelope_violations(const ForceVector& f,
                                                        const ForceEnvelope& env = {}) {
  std::array<bool, kForceDim> out{};
  for (std::size_t j = 0; j < 3; ++j) out[j] = f[j] < env.force_min || f[j] > env.force_max;
  for (std::size_t j = 3; j < kForceDim; ++j) out[j] = std::abs(f[j]) > env.torque_abs;
  return out;
}

inline bool is_valid_tool_sample(const ToolSample& s) {
  const auto& a = s.orientation_axis;
  const double norm = std::sqrt(a[0] * a[0] + a[1] * a[1] + a[2] * a[2]);
  return std::abs(norm - 1.0) <= 1e-9 && (s.grasper == 0 || s.grasper == 1);
}

// ---------------------------------------------------------------------------
// Frames
// ---------------------------------------------------------------------------

enum class FrameKind { raw_rgb, mean_removed, grayscale, space_time };

/// Image with interleaved (row, col, channel) storage.
struct Frame {
  int height = 0;
  int width = 0;
  int channels = 0;
  FrameKind kind = FrameKind::raw_rgb;
  std::vector<double> pixels;

  Frame() = default;
  Frame(int h, int w, int c, FrameKind k, double fill = 0.0)
      : height(h), width(w), channels(c), kind(k),
        pixels(static_cast<std::size_t>(h) * w * c, fill) {}

  std::size_t index(int r, int col, int ch) const {
    return (static_cast<std::size_t>(r) * width + col) * channels + ch;
  }
  double& at(int r, int col, int ch) { return pixels[index(r, col, ch)]; }
  double at(int r, int col, int ch) const { return pixels[index(r, col, ch)]; }
  bool same_shape(const Frame& o) const {
    return height == o.height && width == o.width && channels == o.channels;
  }
  bool consistent() const {
    return pixels.size() == static_cast<std::size_t>(height) * width * channels;
  }
};

enum class Task { pushing, pulling };

inline const char* task_name(Task t) { return t == Task::pushing ? "pushing" : "pulling"; }

inline Task parse_task(const std::string& s) {
  if (s == "pushing") return Task::pushing;
  if (s == "pulling") return Task::pulling;
  throw data_error("unknown task '" + s + "'");
}

struct SequenceRecord {
  std::string id;
  Task task = Task::pushing;
  std::vector<Frame> frames;
  std::vector<ToolSample> tool;
  std::vector<ForceVector> force;
  double rate = 50.0;
};

/// Affine maps applied to tool positions and forces. Computed on training data only.
struct NormalizationParams {
  std::array<double, 3> tool_mean{};
  std::array<double, 3> tool_scale{1.0, 1.0, 1.0};
  std::array<double, kForceDim> force_offset{};
  std::array<double, kForceDim> force_scale{1.0, 1.0, 1.0, 1.0, 1.0, 1.0};
};

// ---------------------------------------------------------------------------
// Normalization
// ---------------------------------------------------------------------------

struct ToolNormalization {
  std::vector<ToolSample> samples;
  std::array<double, 3> mean{};
  std::array<double, 3> scale{1.0, 1.0, 1.0};
  std::array<bool, 3> degenerate{};
};

inline ToolSample apply_tool_normalization(ToolSample s, const std::array<double, 3>& mean,
                                           const std::array<double, 3>& scale) {
  for (std::size_t a = 0; a < 3; ++a) s.position[a] = (s.position[a] - mean[a]) / scale[a];
  return s;
}

inline ToolSample denormalize_tool(ToolSample s, const std::array<double, 3>& mean,
                                   const std::array<double, 3>& scale) {
  for (std::size_t a = 0; a < 3; ++a) s.position[a] = s.position[a] * scale[a] + mean[a];
  return s;
}

/// Removes the per-axis mean and divides by the largest absolute deviation.
inline ToolNormalization normalize_tool(std::span<const ToolSample> samples) {
  if (samples.empty()) throw data_error("normalize_tool: empty sample list");
  ToolNormalization out;
  const double n = static_cast<double>(samples.size());
  for (std::size_t a = 0; a < 3; ++a) {
    double sum = 0.0;
    for (const auto& s : samples) sum += s.position[a];
    out.mean[a] = sum / n;
    double dev = 0.0;
    for (const auto& s : samples) dev = std::max(dev, std::abs(s.position[a] - out.mean[a]));
    if (dev > 0.0) {
      out.scale[a] = dev;
    } else {
      out.scale[a] = 1.0;
      out.degenerate[a] = true;
    }
  }
  out.samples.reserve(samples.size());
  for (const auto& s : samples) out.samples.push_back(apply_tool_normalization(s, out.mean, out.scale));
  return out;
}

struct ForceNormalization {
  std::vector<ForceVector> forces;
  std::array<double, kForceDim> offset{};
  std::array<double, kForceDim> scale{1.0, 1.0, 1.0, 1.0, 1.0, 1.0};
  std::array<bool, kForceDim> degenerate{};
};

inline constexpr double kForceHalfRange = 5.0;

inline ForceVector apply_force_normalization(const ForceVector& f,
                                             const std::array<double, kForceDim>& offset,
                                             const std::array<double, kForceDim>& scale) {
  ForceVector out;
  for (std::size_t j = 0; j < kForceDim; ++j) out[j] = (f[j] - offset[j]) / scale[j];
  return out;
}

inline ForceVector denormalize_force(const ForceVector& f, const std::array<double, kForceDim>& offset,
                                     const std::array<double, kForceDim>& scale) {
  ForceVector out;
  for (std::size_t j = 0; j < kForceDim; ++j) out[j] = f[j] * scale[j] + offset[j];
  return out;
}

/// Maps each component's observed range onto [-5, +5] around its midpoint.
inline ForceNormalization normalize_force(std::span<const ForceVector> forces) {
  if (forces.empty()) throw data_error("normalize_force: empty force list");
  ForceNormalization out;
  for (std::size_t j = 0; j < kForceDim; ++j) {
    double lo = forces[0][j], hi = forces[0][j];
    for (const auto& f : forces) {
      lo = std::min(lo, f[j]);
      hi = std::max(hi, f[j]);
    }
    out.offset[j] = 0.5 * (lo + hi);
    if (hi > lo) {
      out.scale[j] = (hi - lo) / (2.0 * kForceHalfRange);
    } else {
      out.scale[j] = 1.0;
      out.degenerate[j] = true;
    }
  }
  out.forces.reserve(forces.size());
  for (const auto& f : forces) out.forces.push_back(apply_force_normalization(f, out.offset, out.scale));
  return out;
}

/// Input vector for the recurrent stage: (x, y, z, s), or with orientation
/// (x, y, z, u, v, w, theta, s).
inline std::vector<double> tool_features(const ToolSample& s, bool with_orientation = false) {
  if (!with_orientation)
    return {s.position[0], s.position[1], s.position[2], static_cast<double>(s.grasper)};
  return {s.position[0],         s.position[1],         s.position[2],
          s.orientation_axis[0], s.orientation_axis[1], s.orientation_axis[2],
          s.orientation_angle,   static_cast<double>(s.grasper)};
}

// ---------------------------------------------------------------------------
// Resampling and filtering
// ---------------------------------------------------------------------------

/// A multi-channel signal with strictly increasing timestamps (seconds).
struct TimedSignal {
  std::vector<double> times;
  std::vector<std::vector<double>> values;  // one row per timestamp
};

struct SyncResult {
  TimedSignal signal;
  std::size_t dropped = 0;  // requested grid points outside the signal support
};

struct GridSpec {
  double start = 0.0;
  std::size_t count = 0;
};

/// Linear-interpolation resampling onto start + k / rate after shifting the
/// source timestamps by `shift`. Without an explicit grid, the grid starts at
/// the first shifted timestamp and covers the support. Never extrapolates.
inline SyncResult synchronize(const TimedSignal& in, double target_rate, double shift,
                              std::optional<GridSpec> grid = std::nullopt) {
  if (in.times.size() != in.values.size()) throw data_error("synchronize: times/values length mismatch");
  if (in.times.empty()) throw data_error("synchronize: empty signal");
  if (!(target_rate > 0.0)) throw usage_error("synchronize: target rate must be positive");
  for (std::size_t i = 1; i < in.times.size(); ++i)
    if (!(in.times[i] > in.times[i - 1])) throw data_error("synchronize: timestamps not strictly increasing");

  const double t_first = in.times.front() + shift;
  const double t_last = in.times.back() + shift;
  GridSpec g;
  if (grid) {
    g = *grid;
  } else {
    g.start = t_first;
    // Small slack absorbs representation error of (t_last - t_first) * rate.
    g.count = static_cast<std::size_t>(std::floor((t_last - t_first) * target_rate + 1e-9)) + 1;
  }

  SyncResult out;
  std::size_t seg = 0;
  for (std::size_t k = 0; k < g.count; ++k) {
    const double tq = g.start + static_cast<double>(k) / target_rate;
    const double ts = tq - shift;  // query in source time
    if (ts < in.times.front() - 1e-12 || ts > in.times.back() + 1e-12) {
      ++out.dropped;
      continue;
    }
    while (seg + 1 < in.times.size() - 1 && in.times[seg + 1] < ts) ++seg;
    std::vector<double> row;
    if (in.times.size() == 1) {
      row = in.values[0];
    } else {
      const double t0 = in.times[seg], t1 = in.times[seg + 1];
      const auto& v0 = in.values[seg];
      const auto& v1 = in.values[seg + 1];
      if (v0.size() != v1.size()) throw data_error("synchronize: ragged channel count");
      const double u = std::clamp((ts - t0) / (t1 - t0), 0.0, 1.0);
      row.resize(v0.size());
      for (std::size_t c = 0; c < v0.size(); ++c) {
        if (u == 0.0) row[c] = v0[c];
        else if (u == 1.0) row[c] = v1[c];
        else row[c] = v0[c] + (v1[c] - v0[c]) * u;
      }
    }
    out.signal.times.push_back(tq);
    out.signal.values.push_back(std::move(row));
  }
  return out;
}

/// Centered moving average; the window shrinks symmetrically-by-truncation at the edges.
inline std::vector<double> smooth(std::span<const double> x, int window) {
  if (window < 1 || window % 2 == 0) throw usage_error("smooth: window must be odd and >= 1");
  const std::ptrdiff_t n = static_cast<std::ptrdiff_t>(x.size());
  const std::ptrdiff_t half = window / 2;
  std::vector<double> out(x.size());
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    const std::ptrdiff_t lo = std::max<std::ptrdiff_t>(0, i - half);
    const std::ptrdiff_t hi = std::min<std::ptrdiff_t>(n - 1, i + half);
    double s = 0.0;
    for (std::ptrdiff_t k = lo; k <= hi; ++k) s += x[k];
    out[i] = s / static_cast<double>(hi - lo + 1);
  }
  return out;
}

/// Smooths every force component independently.
inline std::vector<ForceVector> smooth_forces(std::span<const ForceVector> f, int window) {
  std::vector<ForceVector> out(f.size());
  std::vector<double> ch(f.size());
  for (std::size_t j = 0; j < kForceDim; ++j) {
    for (std::size_t i = 0; i < f.size(); ++i) ch[i] = f[i][j];
    const auto s = smooth(ch, window);
    for (std::size_t i = 0; i < f.size(); ++i) out[i][j] = s[i];
  }
  return out;
}

// ---------------------------------------------------------------------------
// Dataset splitting
// ---------------------------------------------------------------------------

/// Anything carrying an id plus aligned tool and force signals.
template <class R>
concept SignalRecord = requires(const R& r) {
  { r.id } -> std::convertible_to<std::string>;
  { r.tool } -> std::convertible_to<std::vector<ToolSample>>;
  { r.force } -> std::convertible_to<std::vector<ForceVector>>;
};

template <class R>
struct Split {
  std::vector<R> train;
  std::vector<R> test;
  NormalizationParams norm;
  std::array<bool, 3> tool_degenerate{};
  std::array<bool, kForceDim> force_degenerate{};
};

using Dataset = Split<SequenceRecord>;

/// Splits whole sequences by id. Normalization is fitted on the training
/// partition and applied to both; records come back normalized.
template <SignalRecord R>
Split<R> split_dataset(std::vector<R> sequences, const std::vector<std::string>& test_ids) {
  std::set<std::string> ids;
  for (const auto& s : sequences)
    if (!ids.insert(s.id).second) throw data_error("split_dataset: duplicate sequence id '" + s.id + "'");
  std::set<std::string> wanted;
  for (const auto& id : test_ids) {
    if (!ids.count(id)) throw data_error("split_dataset: unknown test id '" + id + "'");
    if (!wanted.insert(id).second) throw data_error("split_dataset: test id listed twice '" + id + "'");
  }

  Split<R> out;
  for (auto& s : sequences) (wanted.count(s.id) ? out.test : out.train).push_back(std::move(s));

  std::vector<ToolSample> tool;
  std::vector<ForceVector> force;
  for (const auto& s : out.train) {
    tool.insert(tool.end(), s.tool.begin(), s.tool.end());
    force.insert(force.end(), s.force.begin(), s.force.end());
  }
  if (!tool.empty()) {
    const auto tn = normalize_tool(tool);
    out.norm.tool_mean = tn.mean;
    out.norm.tool_scale = tn.scale;
    out.tool_degenerate = tn.degenerate;
  }
  if (!force.empty()) {
    const auto fn = normalize_force(force);
    out.norm.force_offset = fn.offset;
    out.norm.force_scale = fn.scale;
    out.force_degenerate = fn.degenerate;
  }
  auto apply = [&](std::vector<R>& part) {
    for (auto& s : part) {
      for (auto& t : s.tool) t = apply_tool_normalization(t, out.norm.tool_mean, out.norm.tool_scale);
      for (auto& f : s.force) f = apply_force_normalization(f, out.norm.force_offset, out.norm.force_scale);
    }
  };
  apply(out.train);
  apply(out.test);
  return out;
}

}  // namespace vbfs
