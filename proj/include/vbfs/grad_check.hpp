#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <numeric>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "vbfs/common.hpp"
#include "vbfs/param_store.hpp"

namespace vbfs {

struct GradCheckConfig {
  double h = 1e-4;
  std::size_t max_coords = 0;  // 0 checks every coordinate
  std::uint64_t seed = 0;      // subsample selection
  // One-sided slopes that disagree by more than this (relative) mark a kink
  // inside [theta - 2h, theta + 2h]; such coordinates are skipped.
  double kink_tol = 1e-3;
  // Coordinates where both |analytic| and |numeric| fall below this are
  // compared by absolute error instead; central differences cannot resolve them.
  double noise_floor = 1e-7;
};

struct GradCheckReport {
  double max_rel_error = 0.0;
  double max_abs_error_below_floor = 0.0;
  std::string worst_param;
  std::size_t worst_index = 0;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
  std::size_t checked = 0;
  std::size_t skipped_kinks = 0;
  std::size_t below_floor = 0;
};

inline double relative_error(double a, double n) {
  return std::abs(a - n) / std::max({std::abs(a), std::abs(n), 1e-12});
}

/// Compares the analytic gradient against central differences.
/// `loss()` evaluates the scalar loss at the current parameter values;
/// `fill_grad()` must leave d loss / d theta in the store's gradient buffers.
template <class LossFn, class GradFn>
GradCheckReport grad_check(ParamStore& ps, LossFn&& loss, GradFn&& fill_grad, const GradCheckConfig& cfg = {}) {
  ps.zero_grad();
  fill_grad();
  const double f0 = loss();
  if (!std::isfinite(f0)) throw numeric_error("grad_check: non-finite loss");

  std::vector<std::pair<std::size_t, std::size_t>> coords;
  for (std::size_t p = 0; p < ps.count(); ++p)
    for (std::size_t k = 0; k < ps[p].size(); ++k) coords.emplace_back(p, k);
  if (cfg.max_coords && coords.size() > cfg.max_coords) {
    std::mt19937_64 rng(cfg.seed);
    std::shuffle(coords.begin(), coords.end(), rng);
    coords.resize(cfg.max_coords);
    std::sort(coords.begin(), coords.end());
  }

  GradCheckReport rep;
  for (auto [p, k] : coords) {
    double& theta = ps[p].value[k];
    const double saved = theta;
    auto at = [&](double offset) {
      theta = saved + offset;
      const double v = loss();
      if (!std::isfinite(v)) throw numeric_error("grad_check: non-finite loss at " + ps[p].name);
      return v;
    };
    const double fp = at(cfg.h), fm = at(-cfg.h), fp2 = at(2.0 * cfg.h), fm2 = at(-2.0 * cfg.h);
    theta = saved;

    const double up = (fp - f0) / cfg.h, down = (f0 - fm) / cfg.h;
    const double near = (fp - fm) / (2.0 * cfg.h), wide = (fp2 - fm2) / (4.0 * cfg.h);
    // five-point stencil: truncation error O(h^4) lets h stay large enough to keep rounding small
    const double numeric = (8.0 * (fp - fm) - (fp2 - fm2)) / (12.0 * cfg.h);
    const double analytic = ps[p].grad[k];
    const double scale = std::max({std::abs(up), std::abs(down), cfg.noise_floor});
    if (std::abs(up - down) > cfg.kink_tol * scale || std::abs(near - wide) > cfg.kink_tol * scale) {
      ++rep.skipped_kinks;
      continue;
    }
    ++rep.checked;
    if (std::max(std::abs(analytic), std::abs(numeric)) < cfg.noise_floor) {
      ++rep.below_floor;
      rep.max_abs_error_below_floor = std::max(rep.max_abs_error_below_floor, std::abs(analytic - numeric));
      continue;
    }
    const double e = relative_error(analytic, numeric);
    if (e > rep.max_rel_error || rep.worst_param.empty()) {
      if (e >= rep.max_rel_error) {
        rep.max_rel_error = e;
        rep.worst_param = ps[p].name;
        rep.worst_index = k;
        rep.worst_analytic = analytic;
        rep.worst_numeric = numeric;
      }
    }
  }
  return rep;
}

}  // namespace vbfs
