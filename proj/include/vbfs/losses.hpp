#pragma once

#include <cmath>
#include <cstddef>
#include <numeric>
#include <span>
#include <tuple>
#include <array>
#include <vector>

#include "vbfs/common.hpp"
#include "vbfs/core_data.hpp"

namespace vbfs {

enum class RhoKind { log, linear };

struct RhoValue {
  double value;
  double derivative;
};

/// ln(x^gamma + epsilon); saturates large residuals.
inline RhoValue rho_log(double x, double gamma, double epsilon) {
  if (x < 0.0) throw numeric_error("rho_log: negative argument");
  if (!(epsilon > 0.0)) throw usage_error("rho_log: epsilon must be positive");
  const double xg = std::pow(x, gamma);
  const double d = x == 0.0 ? (gamma == 1.0 ? 1.0 / epsilon : 0.0) : gamma * std::pow(x, gamma - 1.0) / (xg + epsilon);
  return {std::log(xg + epsilon), d};
}

inline RhoValue rho_linear(double x) { return {x, 1.0}; }

/// alpha * L_rmse + (1 - alpha) * L_gdl, each a sum of rho over samples.
struct LossConfig {
  double alpha = 0.75;
  RhoKind rho = RhoKind::linear;
  double gamma_rmse = 2.0;
  double gamma_gdl = 1.0;
  double epsilon = 0.01;

  void validate() const {
    if (!(alpha >= 0.0 && alpha <= 1.0)) throw usage_error("LossConfig: alpha must lie in [0, 1]");
    if (rho == RhoKind::log && !(epsilon > 0.0)) throw usage_error("LossConfig: epsilon must be positive");
  }

  /// CNN stage: log rho with gamma 2 on the RMSE term and 1 on the GDL term.
  static LossConfig cnn_stage(double alpha = 0.8) { return {alpha, RhoKind::log, 2.0, 1.0, 0.01}; }
  /// Recurrent stage, RMSE + GDL.
  static LossConfig loss_a() { return {0.75, RhoKind::linear, 2.0, 1.0, 0.01}; }
  /// Recurrent stage, RMSE only.
  static LossConfig loss_b() { return {1.0, RhoKind::linear, 2.0, 1.0, 0.01}; }
};

inline RhoValue apply_rho(const LossConfig& cfg, double x, double gamma) {
  return cfg.rho == RhoKind::log ? rho_log(x, gamma, cfg.epsilon) : rho_linear(x);
}

/// Width of a sample row: 6 for ForceVector, N for std::array<double, N>.
template <class Row>
inline constexpr std::size_t row_width = std::tuple_size_v<Row>;
template <>
inline constexpr std::size_t row_width<ForceVector> = kForceDim;

template <class Row>
struct LossTerm {
  double value = 0.0;
  std::vector<Row> grad;  // d value / d estimate
};

/// Sum over samples of rho(per-sample RMS error across components).
/// The gradient is taken as 0 where a sample's error is exactly 0.
template <class Row>
LossTerm<Row> loss_rmse(std::span<const Row> y, std::span<const Row> yhat, const LossConfig& cfg) {
  if (y.size() != yhat.size()) throw data_error("loss_rmse: batch shape mismatch");
  constexpr std::size_t N = row_width<Row>;
  LossTerm<Row> out;
  out.grad.assign(y.size(), Row{});
  for (std::size_t i = 0; i < y.size(); ++i) {
    double ss = 0.0;
    for (std::size_t j = 0; j < N; ++j) {
      const double e = yhat[i][j] - y[i][j];
      ss += e * e;
    }
    const double x = std::sqrt(ss / static_cast<double>(N));
    const auto r = apply_rho(cfg, x, cfg.gamma_rmse);
    out.value += r.value;
    if (x > 0.0)
      for (std::size_t j = 0; j < N; ++j)
        out.grad[i][j] = r.derivative * (yhat[i][j] - y[i][j]) / (static_cast<double>(N) * x);
  }
  return out;
}

inline int sign_or_zero(double v) { return (v > 0.0) - (v < 0.0); }

/// Sum over samples of rho(sum_j | |dY_j| - |dYhat_j| |), where d is the
/// difference to the previous sample of the same segment. Each segment is
/// contiguous in time; its first sample contributes no term. Subgradient 0 at
/// every absolute-value kink.
template <class Row>
LossTerm<Row> loss_gdl(std::span<const Row> y, std::span<const Row> yhat, std::span<const std::size_t> segments,
                       const LossConfig& cfg) {
  if (y.size() != yhat.size()) throw data_error("loss_gdl: batch shape mismatch");
  if (std::accumulate(segments.begin(), segments.end(), std::size_t{0}) != y.size())
    throw data_error("loss_gdl: segment lengths do not cover the batch");
  constexpr std::size_t N = row_width<Row>;
  LossTerm<Row> out;
  out.grad.assign(y.size(), Row{});
  std::size_t start = 0;
  for (std::size_t len : segments) {
    if (len < 2) throw data_error("loss_gdl: segment shorter than 2");
    for (std::size_t i = start + 1; i < start + len; ++i) {
      double x = 0.0;
      Row dxd{};  // d x / d (yhat_i - yhat_{i-1})
      for (std::size_t j = 0; j < N; ++j) {
        const double dt = y[i][j] - y[i - 1][j];
        const double de = yhat[i][j] - yhat[i - 1][j];
        const double inner = std::abs(de) - std::abs(dt);
        x += std::abs(inner);
        dxd[j] = sign_or_zero(inner) * sign_or_zero(de);
      }
      const auto r = apply_rho(cfg, x, cfg.gamma_gdl);
      out.value += r.value;
      for (std::size_t j = 0; j < N; ++j) {
        const double g = r.derivative * dxd[j];
        out.grad[i][j] += g;
        out.grad[i - 1][j] -= g;
      }
    }
    start += len;
  }
  return out;
}

template <class Row>
struct LossBreakdown {
  double total = 0.0;
  double rmse = 0.0;
  double gdl = 0.0;
  std::vector<Row> grad;
};

/// Composite loss. With alpha == 1 the GDL term is skipped and the total is
/// the RMSE term itself.
template <class Row>
LossBreakdown<Row> loss_composite(std::span<const Row> y, std::span<const Row> yhat,
                                  std::span<const std::size_t> segments, const LossConfig& cfg) {
  cfg.validate();
  auto r = loss_rmse<Row>(y, yhat, cfg);
  LossBreakdown<Row> out;
  out.rmse = r.value;
  if (cfg.alpha == 1.0) {
    out.total = r.value;
    out.grad = std::move(r.grad);
    return out;
  }
  const auto g = loss_gdl<Row>(y, yhat, segments, cfg);
  out.gdl = g.value;
  out.total = cfg.alpha * r.value + (1.0 - cfg.alpha) * g.value;
  out.grad.assign(y.size(), Row{});
  for (std::size_t i = 0; i < y.size(); ++i)
    for (std::size_t j = 0; j < row_width<Row>; ++j)
      out.grad[i][j] = cfg.alpha * r.grad[i][j] + (1.0 - cfg.alpha) * g.grad[i][j];
  return out;
}

}  // namespace vbfs
