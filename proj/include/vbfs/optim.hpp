#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <vector>

#include "vbfs/common.hpp"
#include "vbfs/core_data.hpp"
#include "vbfs/param_store.hpp"

namespace vbfs {

struct RmsPropConfig {
  double lr = 1e-3;
  double beta = 0.9;
  double eps = 1e-8;
};

struct RmsPropState {
  std::vector<std::vector<double>> s;  // running mean of squared gradients, one per parameter
  std::size_t steps = 0;
  std::size_t skipped = 0;  // steps refused because a gradient was not finite
};

/// s <- beta s + (1 - beta) g^2;  theta <- theta - lr g / sqrt(s + eps).
inline void rmsprop_update(double& theta, double& s, double g, const RmsPropConfig& cfg) {
  s = cfg.beta * s + (1.0 - cfg.beta) * g * g;
  theta -= cfg.lr * g / std::sqrt(s + cfg.eps);
}

/// Applies one update to every parameter. Returns false (and changes nothing)
/// when any gradient entry is NaN or infinite.
inline bool rmsprop_step(ParamStore& ps, RmsPropState& st, const RmsPropConfig& cfg) {
  if (!(cfg.lr > 0.0)) throw usage_error("rmsprop: learning rate must be positive");
  if (st.s.size() != ps.count()) {
    st.s.clear();
    for (const auto& p : ps) st.s.emplace_back(p.size(), 0.0);
  }
  for (const auto& p : ps)
    if (!all_finite(p.grad)) {
      ++st.skipped;
      return false;
    }
  std::size_t i = 0;
  for (auto& p : ps) {
    auto& s = st.s[i++];
    if (s.size() != p.size()) throw data_error("rmsprop: state shape does not match '" + p.name + "'");
    for (std::size_t k = 0; k < p.size(); ++k) rmsprop_update(p.value[k], s[k], p.grad[k], cfg);
  }
  ++st.steps;
  return true;
}

/// Adds i.i.d. N(0, sigma^2) to the (normalized) position channels. Grasper
/// state and orientation are left alone.
inline std::vector<ToolSample> add_tool_noise(std::span<const ToolSample> tool, double sigma, std::uint64_t seed) {
  if (sigma < 0.0) throw usage_error("add_tool_noise: sigma must be non-negative");
  std::vector<ToolSample> out(tool.begin(), tool.end());
  if (sigma == 0.0) return out;
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n(0.0, sigma);
  for (auto& s : out)
    for (double& v : s.position) v += n(rng);
  return out;
}

}  // namespace vbfs
