#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <complex>
#include <cstddef>
#include <limits>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "vbfs/common.hpp"
#include "vbfs/core_data.hpp"

namespace vbfs {

// y_t = sum_k a_k y_{t-k} + sum_i sum_k b_ik u_i,{t-nk-k} + e_t + sum_k c_k e_{t-k}
struct ArmaxOrders {
  int na = 2;
  int nb = 2;
  int nc = 2;
  int nk = 1;

  void validate(int inputs) const {
    if (na < 0 || nb < 0 || nc < 0 || nk < 0) throw usage_error("ArmaxOrders: orders must be non-negative");
    if (na + nb * inputs + nc <= 0) throw usage_error("ArmaxOrders: model has no coefficients");
  }
  // First index with a full regressor.
  int start() const { return std::max({na, nb > 0 ? nk + nb - 1 : 0, nc}); }
  int parameters(int inputs) const { return na + nb * inputs + nc; }
};

struct ArmaxModel {
  ArmaxOrders orders;
  int inputs = 0;
  std::vector<double> a;
  std::vector<std::vector<double>> b;  // [input][lag]
  std::vector<double> c;
  double noise_variance = 0.0;
  bool ridge_fallback = false;
  bool stable = true;  // roots of the AR polynomial inside the unit circle
  int els_iterations = 0;
  int lm_iterations = 0;
};

/// One input/output record: u[t] is the input vector at sample t.
struct ArmaxSeries {
  std::vector<std::vector<double>> u;
  std::vector<double> y;
};

namespace detail {

inline double lagged(const std::vector<double>& v, long t) { return t >= 0 ? v[t] : 0.0; }

inline void armax_regressor(const ArmaxOrders& o, int m, const ArmaxSeries& s, const std::vector<double>& e, long t,
                            double* phi) {
  int k = 0;
  for (int i = 1; i <= o.na; ++i) phi[k++] = lagged(s.y, t - i);
  for (int in = 0; in < m; ++in)
    for (int j = 0; j < o.nb; ++j) {
      const long tt = t - o.nk - j;
      phi[k++] = tt >= 0 ? s.u[tt][in] : 0.0;
    }
  for (int i = 1; i <= o.nc; ++i) phi[k++] = lagged(e, t - i);
}

// Innovations e_t = y_t - phi_t' theta run forward with e = 0 before `start`.
inline std::vector<double> armax_residuals(const ArmaxOrders& o, int m, const ArmaxSeries& s,
                                           const Eigen::VectorXd& theta) {
  const long n = static_cast<long>(s.y.size());
  std::vector<double> e(n, 0.0);
  Eigen::VectorXd phi(theta.size());
  for (long t = o.start(); t < n; ++t) {
    armax_regressor(o, m, s, e, t, phi.data());
    e[t] = s.y[t] - phi.dot(theta);
  }
  return e;
}

inline double armax_cost(const ArmaxOrders& o, int m, const std::vector<ArmaxSeries>& data,
                         const Eigen::VectorXd& theta) {
  double v = 0.0;
  for (const auto& s : data) {
    const auto e = armax_residuals(o, m, s, theta);
    for (long t = o.start(); t < static_cast<long>(e.size()); ++t) v += e[t] * e[t];
  }
  return std::isfinite(v) ? v : std::numeric_limits<double>::infinity();
}

inline bool ar_stable(const std::vector<double>& a) {
  const int n = static_cast<int>(a.size());
  if (n == 0) return true;
  Eigen::MatrixXd comp = Eigen::MatrixXd::Zero(n, n);
  for (int k = 0; k < n; ++k) comp(0, k) = a[k];
  for (int k = 1; k < n; ++k) comp(k, k - 1) = 1.0;
  Eigen::EigenSolver<Eigen::MatrixXd> es(comp, false);
  for (int k = 0; k < n; ++k)
    if (std::abs(es.eigenvalues()[k]) >= 1.0) return false;
  return true;
}

}  // namespace detail

/// Extended least squares followed by Levenberg-Marquardt on the one-step
/// prediction error, for a single output driven by m inputs.
inline ArmaxModel fit_armax_single(const std::vector<ArmaxSeries>& data, const ArmaxOrders& o) {
  if (data.empty()) throw data_error("fit_armax: no data");
  const int m = data.front().u.empty() ? 0 : static_cast<int>(data.front().u.front().size());
  o.validate(m);
  const int p = o.parameters(m);
  const long t0 = o.start();
  std::size_t rows = 0;
  for (const auto& s : data) {
    if (s.u.size() != s.y.size()) throw data_error("fit_armax: input and output lengths differ");
    for (const auto& ut : s.u)
      if (static_cast<int>(ut.size()) != m) throw data_error("fit_armax: ragged input vectors");
    if (static_cast<long>(s.y.size()) > t0) rows += s.y.size() - t0;
  }
  if (rows == 0 || rows <= static_cast<std::size_t>(10 * p)) throw data_error("fit_armax: not enough samples");

  ArmaxModel model;
  model.orders = o;
  model.inputs = m;

  // Least squares on the pseudo-linear regression with the current residuals.
  std::vector<std::vector<double>> resid(data.size());
  for (std::size_t k = 0; k < data.size(); ++k) resid[k].assign(data[k].y.size(), 0.0);
  auto solve_ls = [&](Eigen::VectorXd& theta) {
    Eigen::MatrixXd X(rows, p);
    Eigen::VectorXd Y(rows);
    std::size_t r = 0;
    for (std::size_t k = 0; k < data.size(); ++k)
      for (long t = t0; t < static_cast<long>(data[k].y.size()); ++t, ++r) {
        Eigen::VectorXd phi(p);
        detail::armax_regressor(o, m, data[k], resid[k], t, phi.data());
        X.row(r) = phi.transpose();
        Y(r) = data[k].y[t];
      }
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(X);
    if (qr.rank() < p) {
      model.ridge_fallback = true;
      Eigen::MatrixXd G = X.transpose() * X;
      G.diagonal().array() += 1e-8;
      theta = G.ldlt().solve(X.transpose() * Y);
    } else {
      theta = qr.solve(Y);
    }
  };

  Eigen::VectorXd theta = Eigen::VectorXd::Zero(p);
  solve_ls(theta);
  model.els_iterations = 1;
  if (o.nc > 0) {
    for (int it = 1; it < 50; ++it) {
      for (std::size_t k = 0; k < data.size(); ++k) resid[k] = detail::armax_residuals(o, m, data[k], theta);
      Eigen::VectorXd next;
      solve_ls(next);
      ++model.els_iterations;
      const double change = (next - theta).norm() / std::max(theta.norm(), 1e-300);
      theta = next;
      if (change < 1e-8) break;
    }

    // Levenberg-Marquardt. psi_t = -de_t/dtheta obeys psi_t = phi_t - sum_k c_k psi_{t-k}.
    double cost = detail::armax_cost(o, m, data, theta);
    double mu = 1e-3;
    for (int it = 0; it < 30 && std::isfinite(cost) && cost > 0.0; ++it) {
      Eigen::MatrixXd JtJ = Eigen::MatrixXd::Zero(p, p);
      Eigen::VectorXd Jte = Eigen::VectorXd::Zero(p);
      for (const auto& s : data) {
        const auto e = detail::armax_residuals(o, m, s, theta);
        const long n = static_cast<long>(s.y.size());
        std::vector<Eigen::VectorXd> psi(n, Eigen::VectorXd::Zero(p));
        Eigen::VectorXd phi(p);
        for (long t = t0; t < n; ++t) {
          detail::armax_regressor(o, m, s, e, t, phi.data());
          psi[t] = phi;
          for (int k = 1; k <= o.nc; ++k)
            if (t - k >= t0) psi[t] -= theta(p - o.nc + k - 1) * psi[t - k];
          JtJ.noalias() += psi[t] * psi[t].transpose();
          Jte += psi[t] * e[t];
        }
      }
      bool improved = false;
      for (int tries = 0; tries < 10; ++tries) {
        Eigen::MatrixXd A = JtJ;
        A.diagonal() += mu * JtJ.diagonal().cwiseMax(1e-12);
        const Eigen::VectorXd step = A.ldlt().solve(Jte);
        const Eigen::VectorXd cand = theta + step;
        const double c2 = detail::armax_cost(o, m, data, cand);
        if (c2 < cost) {
          const double rel = step.norm() / std::max(theta.norm(), 1e-300);
          theta = cand;
          cost = c2;
          mu = std::max(mu * 0.3, 1e-12);
          improved = rel > 1e-10;
          break;
        }
        mu *= 10.0;
      }
      ++model.lm_iterations;
      if (!improved) break;
    }
  }

  int k = 0;
  for (int i = 0; i < o.na; ++i) model.a.push_back(theta(k++));
  model.b.assign(m, std::vector<double>(o.nb));
  for (int in = 0; in < m; ++in)
    for (int j = 0; j < o.nb; ++j) model.b[in][j] = theta(k++);
  for (int i = 0; i < o.nc; ++i) model.c.push_back(theta(k++));
  for (double v : std::vector<double>(theta.data(), theta.data() + p))
    if (!std::isfinite(v)) throw numeric_error("fit_armax: non-finite coefficient");

  double sse = 0.0;
  for (const auto& s : data) {
    const auto e = detail::armax_residuals(o, m, s, theta);
    for (long t = t0; t < static_cast<long>(e.size()); ++t) sse += e[t] * e[t];
  }
  model.noise_variance = sse / static_cast<double>(rows);
  model.stable = detail::ar_stable(model.a);
  return model;
}

namespace detail {

inline Eigen::VectorXd armax_theta(const ArmaxModel& mdl) {
  Eigen::VectorXd theta(mdl.orders.parameters(mdl.inputs));
  int k = 0;
  for (double v : mdl.a) theta(k++) = v;
  for (const auto& row : mdl.b)
    for (double v : row) theta(k++) = v;
  for (double v : mdl.c) theta(k++) = v;
  return theta;
}

inline void check_series(const ArmaxModel& mdl, const ArmaxSeries& s, bool need_y) {
  if (need_y && s.u.size() != s.y.size()) throw data_error("armax: input and output lengths differ");
  for (const auto& ut : s.u)
    if (static_cast<int>(ut.size()) != mdl.inputs) throw data_error("armax: input width does not match the model");
}

}  // namespace detail

/// One-step-ahead predictor using measured outputs and running innovations
/// (zero before the first full regressor).
inline std::vector<double> predict_armax(const ArmaxModel& mdl, const ArmaxSeries& s) {
  detail::check_series(mdl, s, true);
  const auto& o = mdl.orders;
  const long need = std::max({o.na, o.nb + o.nk, o.nc});
  if (static_cast<long>(s.y.size()) <= need) throw data_error("predict_armax: insufficient history");
  const Eigen::VectorXd theta = detail::armax_theta(mdl);
  const long n = static_cast<long>(s.y.size());
  std::vector<double> e(n, 0.0), yhat(n, 0.0);
  Eigen::VectorXd phi(theta.size());
  for (long t = 0; t < n; ++t) {
    detail::armax_regressor(o, mdl.inputs, s, e, t, phi.data());
    yhat[t] = phi.dot(theta);
    e[t] = t >= o.start() ? s.y[t] - yhat[t] : 0.0;
  }
  return yhat;
}

/// Free-run simulation from the inputs alone (noise terms and initial outputs zero).
inline std::vector<double> simulate_armax(const ArmaxModel& mdl, const std::vector<std::vector<double>>& u) {
  ArmaxSeries s{u, std::vector<double>(u.size(), 0.0)};
  detail::check_series(mdl, s, false);
  const auto& o = mdl.orders;
  const Eigen::VectorXd theta = detail::armax_theta(mdl);
  const std::vector<double> e(u.size(), 0.0);
  Eigen::VectorXd phi(theta.size());
  for (long t = 0; t < static_cast<long>(u.size()); ++t) {
    detail::armax_regressor(o, mdl.inputs, s, e, t, phi.data());
    s.y[t] = phi.dot(theta);
    if (!std::isfinite(s.y[t])) throw numeric_error("simulate_armax: diverged");
  }
  return s.y;
}

using ArmaxMiso = std::array<ArmaxModel, kForceDim>;

/// Six independent single-output fits sharing the same inputs.
inline ArmaxMiso fit_armax(const std::vector<std::vector<std::vector<double>>>& u,
                           const std::vector<std::vector<ForceVector>>& y, const ArmaxOrders& o) {
  if (u.size() != y.size()) throw data_error("fit_armax: sequence count mismatch");
  ArmaxMiso out;
  for (std::size_t j = 0; j < kForceDim; ++j) {
    std::vector<ArmaxSeries> data(u.size());
    for (std::size_t k = 0; k < u.size(); ++k) {
      data[k].u = u[k];
      for (const auto& f : y[k]) data[k].y.push_back(f[j]);
    }
    out[j] = fit_armax_single(data, o);
  }
  return out;
}

inline std::vector<ForceVector> simulate_armax(const ArmaxMiso& models, const std::vector<std::vector<double>>& u) {
  std::vector<ForceVector> out(u.size());
  for (std::size_t j = 0; j < kForceDim; ++j) {
    const auto y = simulate_armax(models[j], u);
    for (std::size_t t = 0; t < u.size(); ++t) out[t][j] = y[t];
  }
  return out;
}

}  // namespace vbfs
