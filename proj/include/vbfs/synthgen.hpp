#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <cstdio>
#include <numbers>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "vbfs/common.hpp"
#include "vbfs/core_data.hpp"

namespace vbfs {

using Vec3 = std::array<double, 3>;

inline Vec3 cross(const Vec3& a, const Vec3& b) {
  return {a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]};
}

struct SceneConfig {
  int height = 64;
  int width = 64;
  int texture_res = 256;   // texture table cells per side
  double extent = 0.06;    // texture covers [-extent, extent]^2 metres
  double k1 = 500.0;       // N/m
  double k3 = 1e5;         // N/m^3
  double damping = 5.0;    // N s/m
  double ks = 800.0;       // grasp shear stiffness, N/m
  double mu = 0.35;        // tangential friction ratio
  Vec3 lever{0.02, -0.03, 0.15};
  int specular_count = 5;
  double specular_intensity = 0.6;
  std::uint64_t texture_seed = 7;
  double rate = 50.0;
  double px_per_m = 640.0;
  double tilt = 0.6;            // camera elevation tilt, radians
  double dimple_sigma = 0.006;  // m
  double bulge_sigma = 0.008;   // m
  double tool_radius_px = 2.2;
  double pixel_noise = 0.03;  // camera noise std on [0, 1] intensities
  double force_noise = 0.02;  // sensor noise std, N
  double torque_noise = 0.002;  // N m

  void validate() const {
    if (k1 < 0 || k3 < 0 || damping < 0 || ks < 0) throw usage_error("SceneConfig: stiffnesses must be non-negative");
    if (!(rate > 0)) throw usage_error("SceneConfig: rate must be positive");
    if (height < 8 || width < 8) throw usage_error("SceneConfig: frame too small");
    if (pixel_noise < 0 || force_noise < 0 || torque_noise < 0)
      throw usage_error("SceneConfig: noise levels must be non-negative");
  }
};

struct Waypoint {
  double t = 0.0;  // seconds
  Vec3 p{};
  int grasper = 1;
};

struct ToolScript {
  Task task = Task::pushing;
  std::vector<Waypoint> waypoints;
  double rest_z = 0.0;  // membrane rest height z0

  double duration() const { return waypoints.empty() ? 0.0 : waypoints.back().t; }
};

struct ToolState {
  Vec3 p{};
  Vec3 v{};
  int grasper = 1;
  std::optional<Vec3> grasp_point;
  double rest_z = 0.0;
};

/// Contact law. Pushing below the rest surface: cubic spring plus damping on
/// the penetration rate, friction opposing tangential motion. Grasped: linear
/// spring towards the grasp point in all axes plus damping. Torques r x f.
inline ForceVector force_oracle(const ToolState& s, const SceneConfig& sc) {
  Vec3 f{0.0, 0.0, 0.0};
  if (s.grasper == 0 && s.grasp_point) {
    for (int k = 0; k < 3; ++k) f[k] = -sc.ks * (s.p[k] - (*s.grasp_point)[k]) - sc.damping * s.v[k];
  } else if (s.p[2] < s.rest_z) {
    const double d = s.rest_z - s.p[2];
    const double d_dot = -s.v[2];
    f[2] = -(sc.k1 * d + sc.k3 * d * d * d) - sc.damping * d_dot;
    const double vt = std::hypot(s.v[0], s.v[1]);
    constexpr double v0 = 2e-3;  // smooths the direction near rest
    const double scale = sc.mu * std::abs(f[2]) / std::sqrt(vt * vt + v0 * v0);
    f[0] = -scale * s.v[0];
    f[1] = -scale * s.v[1];
  }
  const Vec3 tau = cross(sc.lever, f);
  ForceVector out;
  out.components = {f[0], f[1], f[2], tau[0], tau[1], tau[2]};
  return out;
}

/// Procedural organ-like texture and fixed highlight positions.
class MembraneTexture {
 public:
  explicit MembraneTexture(const SceneConfig& sc) : n_(sc.texture_res), extent_(sc.extent) {
    std::mt19937_64 rng(sc.texture_seed);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::vector<double> field(static_cast<std::size_t>(n_) * n_, 0.0);
    double amp = 1.0, norm = 0.0;
    for (int cells : {4, 9, 21, 47}) {
      std::vector<double> lattice(static_cast<std::size_t>(cells + 1) * (cells + 1));
      for (double& v : lattice) v = u(rng);
      for (int r = 0; r < n_; ++r)
        for (int c = 0; c < n_; ++c) {
          const double fy = double(r) / (n_ - 1) * cells, fx = double(c) / (n_ - 1) * cells;
          const int iy = std::min(int(fy), cells - 1), ix = std::min(int(fx), cells - 1);
          auto sm = [](double t) { return t * t * (3.0 - 2.0 * t); };
          const double ty = sm(fy - iy), tx = sm(fx - ix);
          auto L = [&](int y, int x) { return lattice[static_cast<std::size_t>(y) * (cells + 1) + x]; };
          const double top = L(iy, ix) * (1 - tx) + L(iy, ix + 1) * tx;
          const double bot = L(iy + 1, ix) * (1 - tx) + L(iy + 1, ix + 1) * tx;
          field[static_cast<std::size_t>(r) * n_ + c] += amp * (top * (1 - ty) + bot * ty);
        }
      norm += amp;
      amp *= 0.55;
    }
    rgb_.resize(field.size() * 3);
    for (std::size_t i = 0; i < field.size(); ++i) {
      const double v = field[i] / norm;           // ~[0,1]
      const double vein = std::pow(std::abs(std::sin(9.0 * v * std::numbers::pi)), 8.0);
      rgb_[3 * i + 0] = std::clamp(0.55 + 0.45 * v - 0.15 * vein, 0.0, 1.0);
      rgb_[3 * i + 1] = std::clamp(0.20 + 0.35 * v * v - 0.08 * vein, 0.0, 1.0);
      rgb_[3 * i + 2] = std::clamp(0.22 + 0.25 * v + 0.10 * vein, 0.0, 1.0);
    }
    std::uniform_real_distribution<double> pos(-0.035, 0.035);
    for (int k = 0; k < sc.specular_count; ++k) highlights_.push_back({pos(rng), pos(rng)});
  }

  // Bilinear lookup; coordinates outside the table are clamped.
  std::array<double, 3> color(double x, double y) const {
    const double gx = std::clamp((x + extent_) / (2 * extent_) * (n_ - 1), 0.0, double(n_ - 1));
    const double gy = std::clamp((y + extent_) / (2 * extent_) * (n_ - 1), 0.0, double(n_ - 1));
    const int ix = std::min(int(gx), n_ - 2), iy = std::min(int(gy), n_ - 2);
    const double tx = gx - ix, ty = gy - iy;
    std::array<double, 3> out{};
    for (int ch = 0; ch < 3; ++ch) {
      auto T = [&](int r, int c) { return rgb_[(static_cast<std::size_t>(r) * n_ + c) * 3 + ch]; };
      out[ch] = (T(iy, ix) * (1 - tx) + T(iy, ix + 1) * tx) * (1 - ty) + (T(iy + 1, ix) * (1 - tx) + T(iy + 1, ix + 1) * tx) * ty;
    }
    return out;
  }
  const std::vector<std::array<double, 2>>& highlights() const { return highlights_; }

 private:
  int n_;
  double extent_;
  std::vector<double> rgb_;
  std::vector<std::array<double, 2>> highlights_;
};

/// Image position (row, col) of a world point given its height above the rest surface.
inline std::array<double, 2> project(const SceneConfig& sc, double x, double y, double h) {
  return {sc.height / 2.0 + sc.px_per_m * (y * std::cos(sc.tilt) - h * std::sin(sc.tilt)),
          sc.width / 2.0 + sc.px_per_m * x};
}

namespace detail {

// Surface displacement field: vertical height h plus in-plane drag (dx, dy),
// with the partial derivatives of h.
struct Surface {
  double h, hx, hy, dx, dy;
};

inline Surface membrane_at(const ToolState& s, const SceneConfig& sc, double x, double y) {
  Surface out{0, 0, 0, 0, 0};
  if (s.grasper == 0 && s.grasp_point) {
    const Vec3& g = *s.grasp_point;
    const double sig2 = sc.bulge_sigma * sc.bulge_sigma;
    const double cx = 0.5 * (g[0] + s.p[0]), cy = 0.5 * (g[1] + s.p[1]);
    const double rx = x - cx, ry = y - cy;
    const double w = std::exp(-(rx * rx + ry * ry) / (2 * sig2));
    const double lift = s.p[2] - s.rest_z;
    out.h = lift * w;
    out.hx = -lift * w * rx / sig2;
    out.hy = -lift * w * ry / sig2;
    out.dx = (s.p[0] - g[0]) * w;
    out.dy = (s.p[1] - g[1]) * w;
  } else if (s.p[2] < s.rest_z) {
    const double d = s.rest_z - s.p[2];
    const double sig2 = sc.dimple_sigma * sc.dimple_sigma;
    const double rx = x - s.p[0], ry = y - s.p[1];
    const double w = std::exp(-(rx * rx + ry * ry) / (2 * sig2));
    out.h = -d * w;
    out.hx = d * w * rx / sig2;
    out.hy = d * w * ry / sig2;
  }
  return out;
}

}  // namespace detail

/// Renders one frame. Deterministic in (state, scene, texture).
inline Frame render_frame(const ToolState& s, const SceneConfig& sc, const MembraneTexture& tex) {
  Frame f;
  f.height = sc.height;
  f.width = sc.width;
  f.channels = 3;
  f.kind = FrameKind::raw_rgb;
  f.pixels.assign(static_cast<std::size_t>(sc.height) * sc.width * 3, 0.0);
  const double ct = std::cos(sc.tilt), st = std::sin(sc.tilt);
  const Vec3 light = [] {
    Vec3 l{-0.35, -0.55, 1.0};
    const double n = std::sqrt(l[0] * l[0] + l[1] * l[1] + l[2] * l[2]);
    return Vec3{l[0] / n, l[1] / n, l[2] / n};
  }();
  // Half vector between the light and a viewer tilted towards -y.
  const Vec3 half = [&] {
    Vec3 h{light[0], light[1] - st, light[2] + ct};
    const double n = std::sqrt(h[0] * h[0] + h[1] * h[1] + h[2] * h[2]);
    return Vec3{h[0] / n, h[1] / n, h[2] / n};
  }();
  const double hl_r2 = 2.0 * 0.004 * 0.004;

  for (int r = 0; r < sc.height; ++r)
    for (int c = 0; c < sc.width; ++c) {
      const double x = (c + 0.5 - sc.width / 2.0) / sc.px_per_m;
      const double yi = (r + 0.5 - sc.height / 2.0) / sc.px_per_m;
      double y = yi / ct;
      detail::Surface m{};
      for (int it = 0; it < 4; ++it) {
        m = detail::membrane_at(s, sc, x, y);
        y = (yi + m.h * st) / ct;
      }
      m = detail::membrane_at(s, sc, x, y);
      const double nn = std::sqrt(m.hx * m.hx + m.hy * m.hy + 1.0);
      const Vec3 n{-m.hx / nn, -m.hy / nn, 1.0 / nn};
      const double diffuse = std::max(0.0, n[0] * light[0] + n[1] * light[1] + n[2] * light[2]);
      const auto base = tex.color(x - m.dx, y - m.dy);
      double blob = 0.0;
      for (const auto& hl : tex.highlights()) {
        const double ex = x - m.dx - hl[0], ey = y - m.dy - hl[1];
        blob += std::exp(-(ex * ex + ey * ey) / hl_r2);
      }
      const double nh = std::max(0.0, n[0] * half[0] + n[1] * half[1] + n[2] * half[2]);
      const double spec = sc.specular_intensity * std::min(1.0, blob) * std::pow(nh, 24.0);
      for (int ch = 0; ch < 3; ++ch)
        f.pixels[(static_cast<std::size_t>(r) * sc.width + c) * 3 + ch] =
            std::clamp(base[ch] * (0.3 + 0.75 * diffuse) + spec, 0.0, 1.0);
    }

  // Tool: dark capsule from the tip towards the upper right, leaving the frame.
  const auto tip = project(sc, s.p[0], s.p[1], s.p[2] - s.rest_z);
  const double dr = -0.8, dc = 0.6;  // unit direction in image space
  const double len = 3.0 * (sc.height + sc.width);
  const double rad2 = sc.tool_radius_px * sc.tool_radius_px;
  for (int r = 0; r < sc.height; ++r)
    for (int c = 0; c < sc.width; ++c) {
      const double pr = r + 0.5 - tip[0], pc = c + 0.5 - tip[1];
      const double along = std::clamp(pr * dr + pc * dc, 0.0, len);
      const double qr = pr - along * dr, qc = pc - along * dc;
      const double d2 = qr * qr + qc * qc;
      if (d2 > rad2) continue;
      const double rim = std::sqrt(d2 / rad2);
      const double shade = 0.10 + 0.12 * (1.0 - rim) + (along < 3.0 ? 0.08 : 0.0);
      for (int ch = 0; ch < 3; ++ch)
        f.pixels[(static_cast<std::size_t>(r) * sc.width + c) * 3 + ch] = shade + (ch == 2 ? 0.02 : 0.0);
    }
  return f;
}

/// Rounds every pixel to the nearest 8-bit level, as a PNG round trip would.
inline void quantize8(Frame& f) {
  for (double& v : f.pixels) v = std::round(std::clamp(v, 0.0, 1.0) * 255.0) / 255.0;
}

namespace detail {

inline double smoothstep(double t) { return t * t * (3.0 - 2.0 * t); }

// Piecewise smooth interpolation; the grasper state is that of the segment start.
inline std::pair<Vec3, int> script_at(const ToolScript& sc, double t) {
  const auto& w = sc.waypoints;
  if (t <= w.front().t) return {w.front().p, w.front().grasper};
  if (t >= w.back().t) return {w.back().p, w.back().grasper};
  const auto it = std::upper_bound(w.begin(), w.end(), t, [](double v, const Waypoint& p) { return v < p.t; });
  const Waypoint& b = *it;
  const Waypoint& a = *(it - 1);
  const double u = smoothstep((t - a.t) / (b.t - a.t));
  Vec3 p;
  for (int k = 0; k < 3; ++k) p[k] = a.p[k] + (b.p[k] - a.p[k]) * u;
  return {p, a.grasper};
}

struct Jitter {
  std::array<std::array<double, 3>, 3> amp, freq, phase;  // [axis][component]
  Vec3 at(double t) const {
    Vec3 out{};
    for (int k = 0; k < 3; ++k)
      for (int j = 0; j < 3; ++j) out[k] += amp[k][j] * std::sin(2 * std::numbers::pi * freq[k][j] * t + phase[k][j]);
    return out;
  }
};

inline Jitter make_jitter(std::mt19937_64& rng, double amplitude) {
  std::uniform_real_distribution<double> a(0.3 * amplitude, amplitude), f(0.15, 1.2),
      ph(0.0, 2 * std::numbers::pi);
  Jitter j{};
  for (int k = 0; k < 3; ++k)
    for (int m = 0; m < 3; ++m) {
      j.amp[k][m] = a(rng) / 3.0;
      j.freq[k][m] = f(rng);
      j.phase[k][m] = ph(rng);
    }
  return j;
}

}  // namespace detail

/// Random pushing or pulling script of roughly `duration` seconds.
inline ToolScript make_script(Task task, double duration, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> U(0.0, 1.0);
  auto uni = [&](double lo, double hi) { return lo + (hi - lo) * U(rng); };
  ToolScript s;
  s.task = task;
  s.rest_z = uni(-0.0015, 0.0015);
  const double z0 = s.rest_z;
  double t = 0.0;
  Vec3 p{uni(-0.015, 0.015), uni(-0.015, 0.015), z0 + 0.008};
  s.waypoints.push_back({t, p, 1});
  auto add = [&](double dt, Vec3 q, int g) {
    t += dt;
    s.waypoints.push_back({t, q, g});
    p = q;
  };
  // at least one interaction cycle, even for very short episodes
  if (task == Task::pushing) {
    do {
      const Vec3 above{uni(-0.02, 0.02), uni(-0.02, 0.02), z0 + uni(0.003, 0.009)};
      add(uni(0.5, 1.0), above, 1);
      const double depth = uni(0.002, 0.014);
      const Vec3 down{above[0] + uni(-0.006, 0.006), above[1] + uni(-0.006, 0.006), z0 - depth};
      add(uni(0.9, 1.6), down, 1);
      add(uni(0.2, 0.8), {down[0] + uni(-0.002, 0.002), down[1] + uni(-0.002, 0.002), down[2] + uni(-0.0015, 0.0015)}, 1);
      add(uni(0.8, 1.4), {p[0] + uni(-0.004, 0.004), p[1] + uni(-0.004, 0.004), z0 + uni(0.002, 0.006)}, 1);
    } while (t < duration - 4.5);
  } else {
    do {
      const Vec3 above{uni(-0.018, 0.012), uni(-0.018, 0.012), z0 + uni(0.005, 0.009)};
      add(uni(0.5, 1.0), above, 1);
      const Vec3 touch{above[0], above[1], z0 - 0.0005};
      add(uni(0.5, 0.8), touch, 1);
      add(0.2, touch, 0);  // grasper closes at the start of this segment
      const Vec3 pulled{touch[0] + uni(0.0, 0.006), touch[1] + uni(-0.0025, 0.008), touch[2] + uni(0.004, 0.011)};
      add(uni(1.2, 1.8), pulled, 0);
      add(uni(0.4, 1.0), {pulled[0] + uni(-0.001, 0.001), pulled[1] + uni(-0.001, 0.001), pulled[2]}, 0);
      add(uni(1.0, 1.4), touch, 0);
      add(0.2, touch, 1);  // opens
      add(uni(0.5, 0.8), {touch[0], touch[1], z0 + uni(0.005, 0.009)}, 1);
    } while (t < duration - 6.5);
  }
  add(std::max(0.5, duration - t), {p[0], p[1], z0 + 0.008}, 1);
  return s;
}

struct GeneratedEpisode {
  SequenceRecord record;
  std::vector<ToolState> states;
};

/// Samples the script at the scene rate with smooth seeded jitter, evaluates
/// the force law and renders every frame (8-bit quantized).
inline GeneratedEpisode generate(const ToolScript& script, const SceneConfig& sc, std::uint64_t seed,
                                 const std::string& id, const MembraneTexture* texture = nullptr,
                                 bool render = true) {
  sc.validate();
  if (script.waypoints.size() < 2) throw usage_error("generate: script needs at least two waypoints");
  for (std::size_t k = 1; k < script.waypoints.size(); ++k)
    if (!(script.waypoints[k].t > script.waypoints[k - 1].t)) throw usage_error("generate: waypoints not time-sorted");
  for (const auto& w : script.waypoints)
    if (std::abs(w.p[0]) > sc.extent || std::abs(w.p[1]) > sc.extent)
      throw usage_error("generate: script leaves the scene");

  std::optional<MembraneTexture> own;
  if (!texture) {
    own.emplace(sc);
    texture = &*own;
  }
  std::mt19937_64 rng(seed);
  const auto jitter = detail::make_jitter(rng, 0.0004);
  auto pos = [&](double t) {
    Vec3 p = detail::script_at(script, t).first;
    const Vec3 j = jitter.at(t);
    for (int k = 0; k < 3; ++k) p[k] += j[k];
    return p;
  };

  GeneratedEpisode ep;
  auto& rec = ep.record;
  rec.id = id;
  rec.task = script.task;
  rec.rate = sc.rate;
  const std::size_t n = static_cast<std::size_t>(std::floor(script.duration() * sc.rate)) + 1;
  std::optional<Vec3> grasp;
  int prev_g = 1;
  const double h = 1e-4;
  std::mt19937_64 noise_rng(seed ^ 0x6a09e667f3bcc909ULL);
  std::normal_distribution<double> sensor(0.0, sc.pixel_noise > 0 ? sc.pixel_noise : 1.0);
  std::mt19937_64 ft_rng(seed ^ 0xbb67ae8584caa73bULL);
  std::normal_distribution<double> unit(0.0, 1.0);
  for (std::size_t i = 0; i < n; ++i) {
    const double t = static_cast<double>(i) / sc.rate;
    ToolState st;
    st.p = pos(t);
    const Vec3 a = pos(t + h), b = pos(t - h);
    for (int k = 0; k < 3; ++k) st.v[k] = (a[k] - b[k]) / (2 * h);
    st.grasper = detail::script_at(script, t).second;
    if (st.grasper == 0 && prev_g == 1) grasp = st.p;
    if (st.grasper == 1) grasp.reset();
    prev_g = st.grasper;
    st.grasp_point = grasp;
    st.rest_z = script.rest_z;

    ToolSample ts;
    ts.t = static_cast<std::int64_t>(i);
    ts.position = st.p;
    ts.grasper = st.grasper;
    rec.tool.push_back(ts);
    ForceVector f = force_oracle(st, sc);
    for (std::size_t j = 0; j < kForceDim; ++j) f[j] += (j < 3 ? sc.force_noise : sc.torque_noise) * unit(ft_rng);
    rec.force.push_back(f);
    if (render) {
      Frame fr = render_frame(st, sc, *texture);
      if (sc.pixel_noise > 0)
        for (double& v : fr.pixels) v += sensor(noise_rng);
      quantize8(fr);
      rec.frames.push_back(std::move(fr));
    }
    ep.states.push_back(st);
  }
  return ep;
}

struct EpisodePlan {
  std::string id;
  Task task = Task::pushing;
  double duration = 30.0;
  std::uint64_t seed = 0;
  bool test = false;
};

/// 44 episodes split 28/16 with durations chosen so that about 77% of the
/// samples fall in the training partition.
inline std::vector<EpisodePlan> default_plan(std::uint64_t seed, double time_scale = 1.0) {
  struct Group {
    const char* prefix;
    Task task;
    int count;
    double seconds;
    bool test;
  };
  const Group groups[] = {{"push_train", Task::pushing, 16, 34.0, false},
                          {"pull_train", Task::pulling, 12, 39.0, false},
                          {"push_test", Task::pushing, 12, 19.7, true},
                          {"pull_test", Task::pulling, 4, 17.0, true}};
  std::vector<EpisodePlan> out;
  std::uint64_t k = 0;
  for (const auto& g : groups)
    for (int i = 0; i < g.count; ++i) {
      char id[32];
      std::snprintf(id, sizeof id, "%s_%02d", g.prefix, i);
      out.push_back({id, g.task, g.seconds * time_scale, seed * 1000003ULL + (++k) * 7919ULL, g.test});
    }
  return out;
}

}  // namespace vbfs
