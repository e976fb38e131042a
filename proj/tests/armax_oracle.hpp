#pragma once

#include <cmath>
#include <random>

#include "vbfs/armax.hpp"

namespace vbfs::testing {

struct ArmaxTruth {
  std::vector<double> a{1.2, -0.5};
  std::vector<double> b{1.0, 0.5};
  std::vector<double> c{0.7, 0.4};
  double sigma = 1e-4;
};

/// One-input ARMAX(2,2,2) process with nk = 1, white unit-variance input.
inline ArmaxSeries simulate_truth(const ArmaxTruth& tr, std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> u(0.0, 1.0), e(0.0, tr.sigma);
  ArmaxSeries s;
  std::vector<double> ev(n);
  for (std::size_t t = 0; t < n; ++t) {
    s.u.push_back({u(rng)});
    ev[t] = e(rng);
  }
  s.y.assign(n, 0.0);
  for (std::size_t t = 0; t < n; ++t) {
    double y = ev[t];
    for (std::size_t k = 1; k <= 2; ++k)
      if (t >= k) y += tr.a[k - 1] * s.y[t - k] + tr.b[k - 1] * s.u[t - k][0] + tr.c[k - 1] * ev[t - k];
    s.y[t] = y;
  }
  return s;
}

struct ArmaxOracleResult {
  double max_coef_rel_error = 0.0;
  double rmse_over_sigma = 0.0;
  ArmaxModel model;
};

inline ArmaxOracleResult armax_oracle(std::size_t n = 10000) {
  const ArmaxTruth tr;
  const ArmaxOrders o{2, 2, 2, 1};
  ArmaxOracleResult r;
  r.model = fit_armax_single({simulate_truth(tr, n, 21)}, o);
  auto rel = [&](double est, double truth) {
    r.max_coef_rel_error = std::max(r.max_coef_rel_error, std::abs(est - truth) / std::abs(truth));
  };
  for (int k = 0; k < 2; ++k) {
    rel(r.model.a[k], tr.a[k]);
    rel(r.model.b[0][k], tr.b[k]);
    rel(r.model.c[k], tr.c[k]);
  }
  // fresh realisation for the one-step predictor
  const auto test = simulate_truth(tr, n, 22);
  const auto yhat = predict_armax(r.model, test);
  double ss = 0.0;
  std::size_t cnt = 0;
  for (std::size_t t = 50; t < n; ++t, ++cnt) ss += std::pow(test.y[t] - yhat[t], 2);
  r.rmse_over_sigma = std::sqrt(ss / cnt) / tr.sigma;
  return r;
}

}  // namespace vbfs::testing
