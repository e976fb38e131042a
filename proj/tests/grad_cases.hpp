#pragma once

// Small CNN and CIFG stacks with random data, checked against central
// differences under a given loss.

#include <random>
#include <vector>

#include "vbfs/cnn.hpp"
#include "vbfs/grad_check.hpp"
#include "vbfs/losses.hpp"
#include "vbfs/lstm.hpp"

namespace vbfs::testing {

inline LossConfig loss_a_log() { return {0.75, RhoKind::log, 2.0, 1.0, 0.01}; }
inline LossConfig loss_b_linear() { return LossConfig::loss_b(); }

inline std::vector<ForceVector> random_targets(std::size_t n, std::mt19937_64& rng) {
  std::normal_distribution<double> g(0.0, 1.0);
  std::vector<ForceVector> y(n);
  for (auto& f : y)
    for (double& v : f.components) v = g(rng);
  return y;
}

inline GradCheckReport cnn_grad_check(const LossConfig& loss, std::uint64_t seed = 7) {
  CnnConfig cfg;
  cfg.input_size = 8;
  cfg.conv_widths = {3, 4};
  cfg.fc_widths = {6, 5};
  cfg.dropout = 0.0;
  FeatureCnn net(cfg, seed);
  std::mt19937_64 rng(seed + 1);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (auto& p : net.params())
    if (p.name.ends_with(".b"))
      for (double& v : p.value) v = 0.1 * u(rng);

  // two contiguous pairs, as in CNN-stage batches
  const std::size_t n = 4;
  std::vector<std::vector<double>> x(n, std::vector<double>(net.input_length()));
  for (auto& xi : x)
    for (double& v : xi) v = u(rng);
  const auto y = random_targets(n, rng);
  const std::size_t seg[2] = {2, 2};

  auto forward = [&](std::vector<CnnCache>* caches) {
    std::vector<ForceVector> yhat(n);
    for (std::size_t i = 0; i < n; ++i) yhat[i] = cnn_forward(net, x[i], Mode::eval, nullptr, caches ? &(*caches)[i] : nullptr);
    return yhat;
  };
  auto f = [&] {
    const auto yhat = forward(nullptr);
    return loss_composite<ForceVector>(y, yhat, seg, loss).total;
  };
  auto g = [&] {
    std::vector<CnnCache> caches(n);
    const auto yhat = forward(&caches);
    const auto L = loss_composite<ForceVector>(y, yhat, seg, loss);
    for (std::size_t i = 0; i < n; ++i) cnn_backward(net, caches[i], L.grad[i]);
  };
  return grad_check(net.params(), f, g);
}

inline GradCheckReport lstm_grad_check(const LossConfig& loss, std::size_t T = 4, std::uint64_t seed = 11) {
  LstmConfig cfg;
  cfg.input_dim = 5;
  cfg.hidden = {4, 3};
  cfg.dropout = {0.0, 0.0};
  LstmStack net(cfg, seed);
  std::mt19937_64 rng(seed + 1);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (auto& p : net.params())
    for (double& v : p.value) v += 0.3 * u(rng);

  const std::size_t windows = 2;
  std::vector<std::vector<std::vector<double>>> x(windows, std::vector<std::vector<double>>(T, std::vector<double>(5)));
  for (auto& w : x)
    for (auto& s : w)
      for (double& v : s) v = u(rng);
  std::vector<std::vector<ForceVector>> y;
  for (std::size_t k = 0; k < windows; ++k) y.push_back(random_targets(T, rng));
  const std::size_t seg[1] = {T};

  auto f = [&] {
    double total = 0.0;
    for (std::size_t k = 0; k < windows; ++k)
      total += loss_composite<ForceVector>(y[k], lstm_forward(net, x[k], Mode::eval), seg, loss).total;
    return total;
  };
  auto g = [&] {
    for (std::size_t k = 0; k < windows; ++k) {
      LstmCache cc;
      const auto yhat = lstm_forward(net, x[k], Mode::eval, nullptr, &cc);
      lstm_backward(net, cc, loss_composite<ForceVector>(y[k], yhat, seg, loss).grad);
    }
  };
  return grad_check(net.params(), f, g);
}

}  // namespace vbfs::testing
