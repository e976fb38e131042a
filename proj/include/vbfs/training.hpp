#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>
#include <random>
#include <set>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "vbfs/cnn.hpp"
#include "vbfs/common.hpp"
#include "vbfs/core_data.hpp"
#include "vbfs/losses.hpp"
#include "vbfs/lstm.hpp"
#include "vbfs/metrics.hpp"
#include "vbfs/optim.hpp"

namespace vbfs {

enum class Stage { cnn, lstm };
enum class InputCase { I, II, III };

inline const char* case_name(InputCase c) { return c == InputCase::I ? "I" : c == InputCase::II ? "II" : "III"; }

inline InputCase parse_case(const std::string& s) {
  if (s == "I") return InputCase::I;
  if (s == "II") return InputCase::II;
  if (s == "III") return InputCase::III;
  throw usage_error("unknown case '" + s + "' (expected I, II or III)");
}

/// "A" -> alpha 0.75, "B" -> alpha 1.0, recurrent stage (linear rho).
inline LossConfig parse_loss(const std::string& s) {
  if (s == "A") return LossConfig::loss_a();
  if (s == "B") return LossConfig::loss_b();
  throw usage_error("unknown loss '" + s + "' (expected A or B)");
}

struct TrainConfig {
  Stage stage = Stage::lstm;
  double lr = 2.5e-3;
  std::size_t batch = 16;
  std::size_t iters = 2000;
  std::size_t T = 16;
  std::vector<double> dropout{0.25, 0.25};
  LossConfig loss = LossConfig::loss_a();
  InputCase input_case = InputCase::III;
  std::uint64_t seed = 1;
  double beta = 0.9;
  double eps_opt = 1e-8;
  std::size_t log_every = 250;
  std::size_t mre_every = 1000;
  std::size_t mre_samples = 512;  // cap on samples per MRE evaluation
  double delta = 1e-3;

  void validate() const {
    if (!(lr > 0.0)) throw usage_error("TrainConfig: lr must be positive");
    if (batch < 1) throw usage_error("TrainConfig: batch must be at least 1");
    if (stage == Stage::lstm && T < 1) throw usage_error("TrainConfig: T must be at least 1");
    if (log_every == 0 || mre_every == 0) throw usage_error("TrainConfig: logging intervals must be positive");
    loss.validate();
  }
};

struct TrainLogRow {
  std::size_t iteration = 0;
  double loss = 0.0;
  double loss_rmse = 0.0;
  double loss_gdl = 0.0;
  double mre_train = std::numeric_limits<double>::quiet_NaN();
  double mre_test = std::numeric_limits<double>::quiet_NaN();
};

/// One sequence of space-time inputs (CHW, float storage) with aligned targets.
struct StfSequence {
  std::vector<std::vector<float>> inputs;
  std::vector<ForceVector> targets;
};

/// One sequence of per-instant feature vectors with aligned targets.
struct FeatureSequence {
  std::vector<std::vector<double>> inputs;
  std::vector<ForceVector> targets;
};

namespace detail {

inline std::vector<double> widen(const std::vector<float>& v) { return {v.begin(), v.end()}; }

// Deterministic, evenly spread subset of (sequence, index) pairs.
template <class Seq>
std::vector<std::pair<std::size_t, std::size_t>> spread_indices(const std::vector<Seq>& seqs, std::size_t cap) {
  std::vector<std::pair<std::size_t, std::size_t>> all;
  for (std::size_t s = 0; s < seqs.size(); ++s)
    for (std::size_t k = 0; k < seqs[s].targets.size(); ++k) all.emplace_back(s, k);
  if (cap == 0 || all.size() <= cap) return all;
  std::vector<std::pair<std::size_t, std::size_t>> out;
  for (std::size_t i = 0; i < cap; ++i) out.push_back(all[i * all.size() / cap]);
  return out;
}

inline double cnn_mre(const FeatureCnn& net, const std::vector<StfSequence>& seqs, std::size_t cap, std::size_t batch,
                      double delta) {
  const auto idx = spread_indices(seqs, cap);
  if (idx.empty()) return std::numeric_limits<double>::quiet_NaN();
  std::vector<ForceVector> y, yhat;
  for (auto [s, k] : idx) {
    y.push_back(seqs[s].targets[k]);
    yhat.push_back(cnn_forward(net, widen(seqs[s].inputs[k]), Mode::eval));
  }
  return mre_batched(y, yhat, batch, delta);
}

}  // namespace detail

struct CnnTrainResult {
  FeatureCnn net;
  std::vector<TrainLogRow> log;
  std::size_t skipped_steps = 0;
};

/// Regression training of the CNN on space-time frames. Batches are
/// batch/2 shuffled pairs of consecutive instants so the GDL term sees real
/// neighbours.
inline CnnTrainResult train_cnn(const std::vector<StfSequence>& train, const std::vector<StfSequence>& test,
                                const CnnConfig& net_cfg, const TrainConfig& cfg,
                                const std::function<void(const TrainLogRow&)>& on_log = {}) {
  cfg.validate();
  std::vector<std::pair<std::size_t, std::size_t>> pairs;
  for (std::size_t s = 0; s < train.size(); ++s) {
    if (train[s].inputs.size() != train[s].targets.size()) throw data_error("train_cnn: inputs/targets mismatch");
    for (std::size_t k = 0; k + 1 < train[s].inputs.size(); ++k) pairs.emplace_back(s, k);
  }
  if (pairs.empty()) throw data_error("train_cnn: empty dataset");

  CnnTrainResult res{FeatureCnn(net_cfg, cfg.seed), {}, 0};
  auto& net = res.net;
  std::mt19937_64 rng(cfg.seed ^ 0x9e3779b97f4a7c15ULL);
  RmsPropState opt;
  const RmsPropConfig ocfg{cfg.lr, cfg.beta, cfg.eps_opt};
  const std::size_t n_pairs = std::max<std::size_t>(1, cfg.batch / 2);
  std::uniform_int_distribution<std::size_t> pick(0, pairs.size() - 1);

  auto log_mre = [&](TrainLogRow& row) {
    row.mre_train = detail::cnn_mre(net, train, cfg.mre_samples, cfg.batch, cfg.delta);
    if (!test.empty()) row.mre_test = detail::cnn_mre(net, test, cfg.mre_samples, cfg.batch, cfg.delta);
  };

  double acc_loss = 0.0, acc_rmse = 0.0, acc_gdl = 0.0;
  std::size_t acc_n = 0;
  std::vector<CnnCache> caches(2 * n_pairs);
  for (std::size_t it = 0; it < cfg.iters; ++it) {
    std::vector<ForceVector> y, yhat;
    for (std::size_t p = 0; p < n_pairs; ++p) {
      const auto [s, k] = pairs[pick(rng)];
      for (std::size_t d = 0; d < 2; ++d) {
        y.push_back(train[s].targets[k + d]);
        yhat.push_back(cnn_forward(net, detail::widen(train[s].inputs[k + d]), Mode::train, &rng, &caches[2 * p + d]));
      }
    }
    const std::vector<std::size_t> segments(n_pairs, 2);
    const auto L = loss_composite<ForceVector>(y, yhat, segments, cfg.loss);
    net.params().zero_grad();
    for (std::size_t i = 0; i < yhat.size(); ++i) cnn_backward(net, caches[i], L.grad[i]);
    rmsprop_step(net.params(), opt, ocfg);

    acc_loss += L.total;
    acc_rmse += L.rmse;
    acc_gdl += L.gdl;
    ++acc_n;
    const std::size_t done = it + 1;
    if (done % cfg.log_every == 0 || done == cfg.iters) {
      TrainLogRow row{done, acc_loss / acc_n, acc_rmse / acc_n, acc_gdl / acc_n};
      if (done % cfg.mre_every == 0 || done == cfg.iters) log_mre(row);
      res.log.push_back(row);
      if (on_log) on_log(row);
      acc_loss = acc_rmse = acc_gdl = 0.0;
      acc_n = 0;
    }
  }
  res.skipped_steps = opt.skipped;
  return res;
}

/// Video features for every instant of a sequence, in order.
inline std::vector<std::vector<double>> extract_features(const FeatureCnn& net, const StfSequence& seq) {
  std::vector<std::vector<double>> out;
  out.reserve(seq.inputs.size());
  for (const auto& x : seq.inputs) {
    if (x.size() != net.input_length()) throw data_error("extract_features: missing or malformed frame");
    out.push_back(cnn_features(net, detail::widen(x)));
  }
  return out;
}

/// Input vectors for one of the three cases: tool only, video only, or
/// [video | tool].
inline std::vector<std::vector<double>> build_inputs(InputCase c, const std::vector<std::vector<double>>& video,
                                                     const std::vector<std::vector<double>>& tool) {
  const std::size_t n = c == InputCase::I ? tool.size() : video.size();
  if (c == InputCase::III && video.size() != tool.size()) throw data_error("build_inputs: length mismatch");
  std::vector<std::vector<double>> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    if (c != InputCase::I) out[i] = video[i];
    if (c != InputCase::II) out[i].insert(out[i].end(), tool[i].begin(), tool[i].end());
  }
  return out;
}

/// Estimate at every instant from the window of at most T inputs ending there.
inline std::vector<ForceVector> predict_sequence(const LstmStack& net, const std::vector<std::vector<double>>& inputs,
                                                 std::size_t T) {
  std::vector<ForceVector> out;
  out.reserve(inputs.size());
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    const std::size_t start = i + 1 >= T ? i + 1 - T : 0;
    std::vector<std::vector<double>> win(inputs.begin() + start, inputs.begin() + i + 1);
    out.push_back(lstm_forward(net, win, Mode::eval).back());
  }
  return out;
}

struct LstmTrainResult {
  LstmStack net;
  std::vector<TrainLogRow> log;
  std::size_t skipped_steps = 0;
};

namespace detail {

inline double lstm_mre(const LstmStack& net, const std::vector<FeatureSequence>& seqs, std::size_t T, std::size_t cap,
                       std::size_t batch, double delta) {
  const auto idx = spread_indices(seqs, cap);
  if (idx.empty()) return std::numeric_limits<double>::quiet_NaN();
  std::vector<ForceVector> y, yhat;
  for (auto [s, k] : idx) {
    const std::size_t start = k + 1 >= T ? k + 1 - T : 0;
    std::vector<std::vector<double>> win(seqs[s].inputs.begin() + start, seqs[s].inputs.begin() + k + 1);
    y.push_back(seqs[s].targets[k]);
    yhat.push_back(lstm_forward(net, win, Mode::eval).back());
  }
  return mre_batched(y, yhat, batch, delta);
}

}  // namespace detail

/// Trains the recurrent stage on batches of `batch` windows of length T with
/// random starts; the loss covers every step of every window.
inline LstmTrainResult train_lstm(const std::vector<FeatureSequence>& train, const std::vector<FeatureSequence>& test,
                                  LstmConfig net_cfg, const TrainConfig& cfg,
                                  const std::function<void(const TrainLogRow&)>& on_log = {}) {
  cfg.validate();
  if (train.empty()) throw data_error("train_lstm: empty dataset");
  if (cfg.T < 2 && cfg.loss.alpha != 1.0) throw usage_error("train_lstm: the GDL term needs T >= 2");
  std::vector<std::size_t> cumulative;  // valid window starts, prefix sums
  std::size_t total = 0;
  for (const auto& s : train) {
    if (s.inputs.size() != s.targets.size()) throw data_error("train_lstm: inputs/targets mismatch");
    if (s.inputs.size() < cfg.T) throw data_error("train_lstm: sequence shorter than T");
    if (!s.inputs.empty() && s.inputs.front().size() != std::size_t(net_cfg.input_dim))
      throw data_error("train_lstm: input width does not match the network");
    total += s.inputs.size() - cfg.T + 1;
    cumulative.push_back(total);
  }
  net_cfg.dropout = cfg.dropout;
  if (net_cfg.dropout.size() != net_cfg.hidden.size()) throw usage_error("train_lstm: one dropout rate per layer");

  LstmTrainResult res{LstmStack(net_cfg, cfg.seed), {}, 0};
  auto& net = res.net;
  std::mt19937_64 rng(cfg.seed ^ 0xd1b54a32d192ed03ULL);
  RmsPropState opt;
  const RmsPropConfig ocfg{cfg.lr, cfg.beta, cfg.eps_opt};
  std::uniform_int_distribution<std::size_t> pick(0, total - 1);
  const std::size_t M = std::min(cfg.batch, total);

  double acc_loss = 0.0, acc_rmse = 0.0, acc_gdl = 0.0;
  std::size_t acc_n = 0;
  LstmCache cache;
  for (std::size_t it = 0; it < cfg.iters; ++it) {
    std::set<std::size_t> chosen;
    while (chosen.size() < M) chosen.insert(pick(rng));
    net.params().zero_grad();
    double loss = 0.0, lr_ = 0.0, lg = 0.0;
    for (std::size_t flat : chosen) {
      const std::size_t s = std::upper_bound(cumulative.begin(), cumulative.end(), flat) - cumulative.begin();
      const std::size_t start = flat - (s ? cumulative[s - 1] : 0);
      std::vector<std::vector<double>> win(train[s].inputs.begin() + start, train[s].inputs.begin() + start + cfg.T);
      std::span<const ForceVector> y(train[s].targets.data() + start, cfg.T);
      const auto yhat = lstm_forward(net, win, Mode::train, &rng, &cache);
      const std::size_t seg[1] = {cfg.T};
      const auto L = loss_composite<ForceVector>(y, yhat, seg, cfg.loss);
      lstm_backward(net, cache, L.grad);
      loss += L.total;
      lr_ += L.rmse;
      lg += L.gdl;
    }
    rmsprop_step(net.params(), opt, ocfg);

    acc_loss += loss;
    acc_rmse += lr_;
    acc_gdl += lg;
    ++acc_n;
    const std::size_t done = it + 1;
    if (done % cfg.log_every == 0 || done == cfg.iters) {
      TrainLogRow row{done, acc_loss / acc_n, acc_rmse / acc_n, acc_gdl / acc_n};
      if (done % cfg.mre_every == 0 || done == cfg.iters) {
        row.mre_train = detail::lstm_mre(net, train, cfg.T, cfg.mre_samples, cfg.batch, cfg.delta);
        if (!test.empty()) row.mre_test = detail::lstm_mre(net, test, cfg.T, cfg.mre_samples, cfg.batch, cfg.delta);
      }
      res.log.push_back(row);
      if (on_log) on_log(row);
      acc_loss = acc_rmse = acc_gdl = 0.0;
      acc_n = 0;
    }
  }
  res.skipped_steps = opt.skipped;
  return res;
}

}  // namespace vbfs
