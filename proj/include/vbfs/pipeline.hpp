#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "vbfs/armax.hpp"
#include "vbfs/cnn.hpp"
#include "vbfs/common.hpp"
#include "vbfs/core_data.hpp"
#include "vbfs/lstm.hpp"
#include "vbfs/metrics.hpp"
#include "vbfs/optim.hpp"
#include "vbfs/synthgen.hpp"
#include "vbfs/training.hpp"
#include "vbfs/videoproc.hpp"

namespace vbfs {

struct PreprocessConfig {
  int delta = 15;
  bool causal_stf = false;   // (t-2d, t-d, t) instead of (t-d, t, t+d)
  bool causal_mean = false;  // running mean of past frames instead of the whole sequence
  int stride = 5;            // learning instants every `stride` samples
  int out_size = 32;
  bool oracle_roi = true;    // box centred on the projected tool tip instead of the tracker
  TrackerConfig tracker{40, 48, 0.8, 0.05, 0.02};
};

/// Instants that have every space-time source available in both modes.
inline std::vector<std::int64_t> learning_instants(std::size_t length, int delta, int stride) {
  if (stride < 1) throw usage_error("learning_instants: stride must be positive");
  std::vector<std::int64_t> out;
  for (std::int64_t t = 2 * delta; t + delta < static_cast<std::int64_t>(length); t += stride) out.push_back(t);
  return out;
}

/// Aligned per-instant data of one episode after video preprocessing.
struct PreprocessedEpisode {
  std::string id;
  Task task = Task::pushing;
  std::vector<std::int64_t> instants;
  std::vector<std::vector<float>> stf;  // CHW, out_size^2 * 3
  std::vector<ToolSample> tool;
  std::vector<ForceVector> force;
  std::size_t no_motion = 0;  // tracker frames without foreground
};

/// Image position of the tool tip on the rest plane, per sample.
inline std::vector<std::array<double, 2>> oracle_centers(const std::vector<ToolSample>& tool, const SceneConfig& sc) {
  std::vector<std::array<double, 2>> out;
  out.reserve(tool.size());
  for (const auto& s : tool) out.push_back(project(sc, s.position[0], s.position[1], 0.0));
  return out;
}

inline PreprocessedEpisode preprocess_episode(const SequenceRecord& rec, const PreprocessConfig& cfg,
                                              const std::vector<std::array<double, 2>>& centers = {}) {
  const std::size_t L = rec.frames.size();
  if (L == 0) throw data_error("preprocess: sequence " + rec.id + " has no frames");
  if (rec.tool.size() != L || rec.force.size() != L) throw data_error("preprocess: " + rec.id + " is not synchronized");
  if (cfg.oracle_roi && centers.size() != L) throw data_error("preprocess: oracle ROI needs one center per frame");

  std::vector<Frame> residual(L);
  if (cfg.causal_mean) {
    MeanFrame m;
    for (std::size_t s = 0; s < L; ++s) {
      m = mean_frame_causal(std::move(m), rec.frames[s]);
      residual[s] = to_grayscale(subtract_mean(rec.frames[s], m));
    }
  } else {
    const MeanFrame m = mean_frame_offline(rec.frames);
    for (std::size_t s = 0; s < L; ++s) residual[s] = to_grayscale(subtract_mean(rec.frames[s], m));
  }

  const int H = rec.frames[0].height, W = rec.frames[0].width;
  PreprocessedEpisode ep;
  ep.id = rec.id;
  ep.task = rec.task;
  std::vector<RoiBox> boxes(L);
  if (cfg.oracle_roi) {
    for (std::size_t s = 0; s < L; ++s)
      boxes[s] = clamp_box(RoiBox{static_cast<int>(std::lround(centers[s][0])), static_cast<int>(std::lround(centers[s][1])),
                                  cfg.tracker.box_height, cfg.tracker.box_width},
                           H, W);
  } else {
    const auto tr = track_roi(residual, std::nullopt, cfg.tracker);
    for (std::size_t s = 0; s < L; ++s) {
      boxes[s] = tr[s].box;
      ep.no_motion += tr[s].no_motion ? 1 : 0;
    }
  }

  ep.instants = learning_instants(L, cfg.delta, cfg.stride);
  for (auto t : ep.instants) {
    const auto st = space_time(residual, t, cfg.delta, cfg.causal_stf);
    const Frame roi = crop_resize(st.pixels, boxes[t], cfg.out_size);
    const auto chw = to_chw(roi);
    ep.stf.emplace_back(chw.begin(), chw.end());
    ep.tool.push_back(rec.tool[t]);
    ep.force.push_back(rec.force[t]);
  }
  return ep;
}

using PreparedData = Split<PreprocessedEpisode>;

inline std::vector<StfSequence> stf_sequences(const std::vector<PreprocessedEpisode>& eps) {
  std::vector<StfSequence> out;
  for (const auto& e : eps) out.push_back({e.stf, e.force});
  return out;
}

/// Normalized tool feature vectors (x, y, z, grasper), optionally with noise.
inline std::vector<std::vector<double>> tool_inputs(const PreprocessedEpisode& e, double sigma = 0.0,
                                                    std::uint64_t seed = 0) {
  const auto noisy = add_tool_noise(e.tool, sigma, seed);
  std::vector<std::vector<double>> out;
  for (const auto& s : noisy) out.push_back(tool_features(s));
  return out;
}

// ---- experiment configuration ---------------------------------------------

struct ExperimentConfig {
  std::uint64_t seed = 1;
  SceneConfig scene;
  double time_scale = 1.0;
  PreprocessConfig prep;
  CnnConfig cnn;
  TrainConfig cnn_train = [] {
    TrainConfig t;
    t.stage = Stage::cnn;
    t.lr = 1e-3;
    t.batch = 16;
    t.iters = 6000;
    t.loss = LossConfig::cnn_stage(0.8);
    t.mre_every = 1000;
    return t;
  }();
  TrainConfig lstm_train = [] {
    TrainConfig t;
    t.stage = Stage::lstm;
    t.lr = 2.5e-3;
    t.batch = 16;
    t.iters = 4000;
    t.T = 16;
    return t;
  }();
  std::vector<int> hidden_tool{32, 32};     // case I
  std::vector<int> hidden_video{64, 64};    // cases II and III
  std::vector<double> dropout_tool{0.75, 0.75};
  std::vector<double> dropout_video{0.25, 0.25};
  bool peepholes = true;
  ArmaxOrders armax;
};

inline int tool_dim() { return 4; }

inline int input_width(InputCase c, int feature_dim) {
  return c == InputCase::I ? tool_dim() : c == InputCase::II ? feature_dim : feature_dim + tool_dim();
}

inline LstmConfig lstm_config_for(InputCase c, const ExperimentConfig& cfg) {
  LstmConfig l;
  l.input_dim = input_width(c, cfg.cnn.fc_widths.back());
  l.hidden = c == InputCase::I ? cfg.hidden_tool : cfg.hidden_video;
  l.dropout = c == InputCase::I ? cfg.dropout_tool : cfg.dropout_video;
  l.peepholes = cfg.peepholes;
  return l;
}

inline TrainConfig lstm_train_for(InputCase c, const LossConfig& loss, const ExperimentConfig& cfg) {
  TrainConfig t = cfg.lstm_train;
  t.input_case = c;
  t.loss = loss;
  t.dropout = c == InputCase::I ? cfg.dropout_tool : cfg.dropout_video;
  return t;
}

inline FeatureSequence feature_sequence(InputCase c, const PreprocessedEpisode& e,
                                        const std::vector<std::vector<double>>& video, double sigma = 0.0,
                                        std::uint64_t seed = 0) {
  return {build_inputs(c, video, tool_inputs(e, sigma, seed)), e.force};
}

// ---- evaluation -------------------------------------------------------------

struct TaskMetrics {
  std::optional<MetricReport> pushing;
  std::optional<MetricReport> pulling;
  MetricReport all;

  /// Mean over components of the PCC on the whole test set.
  double mean_pcc() const { return vbfs::mean_pcc(all.pcc); }

  double fz_pcc(Task t) const {
    const auto& r = t == Task::pushing ? pushing : pulling;
    return r && r->pcc[2] ? *r->pcc[2] : std::nan("");
  }
};

/// Metrics per task over concatenated test episodes (normalized units, with
/// physical RMSE from the stored scales).
inline TaskMetrics evaluate_episodes(const std::vector<PreprocessedEpisode>& eps,
                                     const std::vector<std::vector<ForceVector>>& preds,
                                     const NormalizationParams& norm, double delta = 1e-3) {
  if (eps.size() != preds.size()) throw data_error("evaluate: prediction count mismatch");
  std::vector<ForceVector> y[2], yhat[2], ya, yhata;
  for (std::size_t k = 0; k < eps.size(); ++k) {
    if (eps[k].force.size() != preds[k].size()) throw data_error("evaluate: prediction length mismatch");
    const int t = eps[k].task == Task::pushing ? 0 : 1;
    y[t].insert(y[t].end(), eps[k].force.begin(), eps[k].force.end());
    yhat[t].insert(yhat[t].end(), preds[k].begin(), preds[k].end());
  }
  TaskMetrics out;
  if (!y[0].empty()) out.pushing = evaluate_metrics(y[0], yhat[0], norm.force_scale, delta);
  if (!y[1].empty()) out.pulling = evaluate_metrics(y[1], yhat[1], norm.force_scale, delta);
  for (int t = 0; t < 2; ++t) {
    ya.insert(ya.end(), y[t].begin(), y[t].end());
    yhata.insert(yhata.end(), yhat[t].begin(), yhat[t].end());
  }
  if (ya.empty()) throw data_error("evaluate: no test data");
  out.all = evaluate_metrics(ya, yhata, norm.force_scale, delta);
  return out;
}

/// Features for every episode with the given CNN.
inline std::vector<std::vector<std::vector<double>>> episode_features(const FeatureCnn& cnn,
                                                                      const std::vector<PreprocessedEpisode>& eps) {
  std::vector<std::vector<std::vector<double>>> out;
  for (const auto& e : eps) out.push_back(extract_features(cnn, StfSequence{e.stf, {}}));
  return out;
}

inline std::vector<std::vector<ForceVector>> predict_episodes(const LstmStack& net, InputCase c,
                                                              const std::vector<PreprocessedEpisode>& eps,
                                                              const std::vector<std::vector<std::vector<double>>>& video,
                                                              std::size_t T, double sigma = 0.0,
                                                              std::uint64_t seed = 0) {
  std::vector<std::vector<ForceVector>> out;
  for (std::size_t k = 0; k < eps.size(); ++k)
    out.push_back(predict_sequence(net, feature_sequence(c, eps[k], video[k], sigma, seed + k).inputs, T));
  return out;
}

// ---- ARMAX baseline -----------------------------------------------------------

inline ArmaxMiso fit_armax_baseline(const std::vector<PreprocessedEpisode>& train, const ArmaxOrders& o) {
  std::vector<std::vector<std::vector<double>>> u;
  std::vector<std::vector<ForceVector>> y;
  for (const auto& e : train) {
    u.push_back(tool_inputs(e));
    y.push_back(e.force);
  }
  return fit_armax(u, y, o);
}

/// Free-run simulation on each test episode from its tool inputs.
inline std::vector<std::vector<ForceVector>> armax_predictions(const ArmaxMiso& m,
                                                               const std::vector<PreprocessedEpisode>& eps) {
  std::vector<std::vector<ForceVector>> out;
  for (const auto& e : eps) out.push_back(simulate_armax(m, tool_inputs(e)));
  return out;
}

}  // namespace vbfs
