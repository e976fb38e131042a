#pragma once

// File-based implementations of the CLI subcommands. Everything lives under
// one output directory:
//   dataset/<id>/...  dataset/manifest.csv
//   preprocessed/<id>.vbfs (+ .index.csv, .signals.csv)  preprocessed/manifest.csv
//   features/<id>.csv
//   models/<name>/params.vbfp, training_log.csv
//   reports/*.csv, *.svg

#include <algorithm>
#include <cstdint>
#include <functional>
#include <limits>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "vbfs/config.hpp"
#include "vbfs/io.hpp"
#include "vbfs/pipeline.hpp"
#include "vbfs/report.hpp"
#include "vbfs/synthgen.hpp"

namespace vbfs {

using Progress = std::function<void(const std::string&)>;

struct Layout {
  fs::path root;
  fs::path dataset() const { return root / "dataset"; }
  fs::path preprocessed() const { return root / "preprocessed"; }
  fs::path features() const { return root / "features"; }
  fs::path models() const { return root / "models"; }
  fs::path reports() const { return root / "reports"; }
};

// ---- manifests ------------------------------------------------------------------

struct ManifestRow {
  std::string id;
  Task task = Task::pushing;
  std::uint64_t seed = 0;
  std::size_t length = 0;
  bool test = false;
};

inline std::string manifest_csv(const std::vector<ManifestRow>& rows) {
  std::ostringstream out;
  out << "id,task,seed,length,split\n";
  for (const auto& r : rows)
    out << r.id << ',' << task_name(r.task) << ',' << r.seed << ',' << r.length << ',' << (r.test ? "test" : "train")
        << '\n';
  return out.str();
}

inline std::vector<ManifestRow> read_manifest(const fs::path& p) {
  if (!fs::exists(p)) throw data_error("missing manifest " + p.string());
  std::istringstream in(read_text(p));
  std::string line;
  std::getline(in, line);
  if (line != "id,task,seed,length,split") throw data_error(p.string() + ": unexpected manifest header");
  std::vector<ManifestRow> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto f = split_csv_line(line);
    if (f.size() != 5) throw data_error(p.string() + ": manifest rows need 5 fields");
    ManifestRow r;
    r.id = std::string(f[0]);
    r.task = parse_task(std::string(f[1]));
    r.seed = static_cast<std::uint64_t>(parse_double(f[2], "seed"));
    r.length = static_cast<std::size_t>(parse_double(f[3], "length"));
    if (f[4] != "train" && f[4] != "test") throw data_error(p.string() + ": split must be train or test");
    r.test = f[4] == "test";
    rows.push_back(r);
  }
  return rows;
}

inline std::vector<std::string> test_ids(const std::vector<ManifestRow>& rows) {
  std::vector<std::string> out;
  for (const auto& r : rows)
    if (r.test) out.push_back(r.id);
  return out;
}

// ---- synth ----------------------------------------------------------------------

struct SynthResult {
  std::vector<ManifestRow> manifest;
};

/// Renders the default episode plan. `limit` keeps only the first episodes.
/// First `n` plan entries taken one per group in turn, so small runs still
/// cover both tasks and both splits. Plan order is kept.
inline std::vector<EpisodePlan> take_round_robin(const std::vector<EpisodePlan>& plan, std::size_t n) {
  std::vector<std::vector<std::size_t>> groups;
  std::vector<std::string> keys;
  for (std::size_t k = 0; k < plan.size(); ++k) {
    const std::string key = plan[k].id.substr(0, plan[k].id.rfind('_'));
    auto it = std::find(keys.begin(), keys.end(), key);
    if (it == keys.end()) {
      keys.push_back(key);
      groups.emplace_back();
      it = keys.end() - 1;
    }
    groups[it - keys.begin()].push_back(k);
  }
  std::vector<std::size_t> pick;
  for (std::size_t round = 0; pick.size() < n; ++round)
    for (const auto& g : groups)
      if (round < g.size() && pick.size() < n) pick.push_back(g[round]);
  std::sort(pick.begin(), pick.end());
  std::vector<EpisodePlan> out;
  for (auto k : pick) out.push_back(plan[k]);
  return out;
}

inline SynthResult cmd_synth(const ExperimentConfig& cfg, const fs::path& dataset_dir,
                             std::optional<std::size_t> limit = std::nullopt, const Progress& log = {}) {
  auto plan = default_plan(cfg.seed, cfg.time_scale);
  if (limit && *limit < plan.size()) plan = take_round_robin(plan, *limit);
  fs::create_directories(dataset_dir);
  const MembraneTexture tex(cfg.scene);
  SynthResult res;
  for (const auto& p : plan) {
    const auto ep = generate(make_script(p.task, p.duration, p.seed), cfg.scene, p.seed, p.id, &tex);
    write_sequence(dataset_dir / p.id, ep.record);
    res.manifest.push_back({p.id, p.task, p.seed, ep.record.tool.size(), p.test});
    if (log) log("synth " + p.id + " (" + std::to_string(ep.record.tool.size()) + " samples)");
  }
  atomic_write(dataset_dir / "manifest.csv", manifest_csv(res.manifest));
  return res;
}

// ---- preprocess -------------------------------------------------------------------

inline std::vector<float> chw_to_hwc(const std::vector<float>& v, int h, int w, int c) {
  std::vector<float> out(v.size());
  for (int ch = 0; ch < c; ++ch)
    for (int r = 0; r < h; ++r)
      for (int q = 0; q < w; ++q) out[(std::size_t(r) * w + q) * c + ch] = v[(std::size_t(ch) * h + r) * w + q];
  return out;
}

inline std::vector<float> hwc_to_chw(const std::vector<float>& v, int h, int w, int c) {
  std::vector<float> out(v.size());
  for (int ch = 0; ch < c; ++ch)
    for (int r = 0; r < h; ++r)
      for (int q = 0; q < w; ++q) out[(std::size_t(ch) * h + r) * w + q] = v[(std::size_t(r) * w + q) * c + ch];
  return out;
}

inline void write_prep_settings(const fs::path& dir, const PreprocessConfig& p) {
  nlohmann::ordered_json j;
  j["delta"] = p.delta;
  j["causal"] = p.causal_stf;
  j["causal_mean"] = p.causal_mean;
  j["stride"] = p.stride;
  j["size"] = p.out_size;
  j["roi"] = p.oracle_roi ? "oracle" : "tracker";
  atomic_write(dir / "preprocess.json", j.dump(2) + "\n");
}

inline PreprocessConfig read_prep_settings(const fs::path& dir, PreprocessConfig base = {}) {
  try {
    const auto j = nlohmann::json::parse(read_text(dir / "preprocess.json"));
    base.delta = j.at("delta").get<int>();
    base.causal_stf = j.at("causal").get<bool>();
    base.causal_mean = j.at("causal_mean").get<bool>();
    base.stride = j.at("stride").get<int>();
    base.out_size = j.at("size").get<int>();
    base.oracle_roi = j.at("roi").get<std::string>() == "oracle";
    return base;
  } catch (const nlohmann::json::exception& e) {
    throw data_error("bad preprocess.json in " + dir.string() + ": " + e.what());
  }
}

inline std::string instant_signals_csv(const PreprocessedEpisode& e) {
  auto tool = e.tool;
  for (std::size_t i = 0; i < tool.size(); ++i) tool[i].t = e.instants[i];
  return signals_to_csv(tool, e.force);
}

inline PreprocessedEpisode preprocess_record(const SequenceRecord& rec, const PreprocessConfig& prep,
                                             const SceneConfig& scene) {
  return preprocess_episode(rec, prep, prep.oracle_roi ? oracle_centers(rec.tool, scene) : decltype(oracle_centers(rec.tool, scene)){});
}

inline std::size_t cmd_preprocess(const ExperimentConfig& cfg, const fs::path& dataset_dir, const fs::path& out_dir,
                                  const Progress& log = {}) {
  const auto rows = read_manifest(dataset_dir / "manifest.csv");
  fs::create_directories(out_dir);
  const int s = cfg.prep.out_size;
  for (const auto& r : rows) {
    const auto rec = read_sequence(dataset_dir / r.id);
    const auto ep = preprocess_record(rec, cfg.prep, cfg.scene);
    TensorFile tf{s, s, 3, {}, ep.instants};
    for (const auto& x : ep.stf) tf.frames.push_back(chw_to_hwc(x, s, s, 3));
    write_tensor(out_dir / (r.id + ".vbfs"), tf);
    atomic_write(out_dir / (r.id + ".signals.csv"), instant_signals_csv(ep));
    if (log) log("preprocess " + r.id + " (" + std::to_string(ep.instants.size()) + " instants)");
  }
  atomic_write(out_dir / "manifest.csv", manifest_csv(rows));
  write_prep_settings(out_dir, cfg.prep);
  return rows.size();
}

/// Preprocessed episodes with train-fitted normalization applied.
inline PreparedData load_prepared(const fs::path& dir, bool with_frames = true) {
  const auto rows = read_manifest(dir / "manifest.csv");
  std::vector<PreprocessedEpisode> eps;
  for (const auto& r : rows) {
    PreprocessedEpisode e;
    e.id = r.id;
    e.task = r.task;
    csv_to_signals(read_text(dir / (r.id + ".signals.csv")), e.tool, e.force);
    for (const auto& t : e.tool) e.instants.push_back(t.t);
    if (with_frames) {
      const auto tf = read_tensor(dir / (r.id + ".vbfs"));
      if (tf.frames.size() != e.tool.size()) throw data_error("preprocessed " + r.id + ": tensor and signals disagree");
      for (const auto& f : tf.frames) e.stf.push_back(hwc_to_chw(f, tf.height, tf.width, tf.channels));
    }
    eps.push_back(std::move(e));
  }
  return split_dataset(std::move(eps), test_ids(rows));
}

// ---- checkpoints ------------------------------------------------------------------

inline CheckpointMeta cnn_meta(const CnnConfig& c) {
  CheckpointMeta m{{"stage", 0}, {"input_size", c.input_size}, {"in_channels", c.in_channels},
                   {"dropout", c.dropout}, {"conv_layers", double(c.conv_widths.size())},
                   {"fc_layers", double(c.fc_widths.size())}};
  for (std::size_t i = 0; i < c.conv_widths.size(); ++i) m["conv" + std::to_string(i)] = c.conv_widths[i];
  for (std::size_t i = 0; i < c.fc_widths.size(); ++i) m["fc" + std::to_string(i)] = c.fc_widths[i];
  return m;
}

inline CnnConfig cnn_config_from(const CheckpointMeta& m) {
  if (meta_value(m, "stage") != 0) throw data_error("checkpoint is not a CNN");
  CnnConfig c;
  c.input_size = int(meta_value(m, "input_size"));
  c.in_channels = int(meta_value(m, "in_channels"));
  c.dropout = meta_value(m, "dropout");
  c.conv_widths.assign(std::size_t(meta_value(m, "conv_layers")), 0);
  for (std::size_t i = 0; i < c.conv_widths.size(); ++i) c.conv_widths[i] = int(meta_value(m, "conv" + std::to_string(i)));
  c.fc_widths.assign(std::size_t(meta_value(m, "fc_layers")), 0);
  for (std::size_t i = 0; i < c.fc_widths.size(); ++i) c.fc_widths[i] = int(meta_value(m, "fc" + std::to_string(i)));
  return c;
}

inline FeatureCnn load_cnn(const fs::path& p) {
  const auto ck = read_checkpoint(p);
  FeatureCnn net(cnn_config_from(ck.meta), 0);
  load_params(net.params(), ck);
  return net;
}

struct LstmModelInfo {
  LstmConfig net;
  InputCase input_case = InputCase::III;
  std::string loss = "A";
  double alpha = 0.75;
  std::size_t T = 16;
};

inline CheckpointMeta lstm_meta(const LstmModelInfo& info) {
  CheckpointMeta m{{"stage", 1},
                   {"input_dim", info.net.input_dim},
                   {"layers", double(info.net.hidden.size())},
                   {"peepholes", info.net.peepholes ? 1.0 : 0.0},
                   {"case", double(static_cast<int>(info.input_case))},
                   {"loss", info.loss == "A" ? 0.0 : 1.0},
                   {"alpha", info.alpha},
                   {"T", double(info.T)}};
  for (std::size_t i = 0; i < info.net.hidden.size(); ++i) {
    m["hidden" + std::to_string(i)] = info.net.hidden[i];
    m["dropout" + std::to_string(i)] = info.net.dropout[i];
  }
  return m;
}

inline LstmModelInfo lstm_info_from(const CheckpointMeta& m) {
  if (meta_value(m, "stage") != 1) throw data_error("checkpoint is not a recurrent model");
  LstmModelInfo info;
  info.net.input_dim = int(meta_value(m, "input_dim"));
  info.net.peepholes = meta_value(m, "peepholes") != 0.0;
  const auto layers = std::size_t(meta_value(m, "layers"));
  info.net.hidden.assign(layers, 0);
  info.net.dropout.assign(layers, 0.0);
  for (std::size_t i = 0; i < layers; ++i) {
    info.net.hidden[i] = int(meta_value(m, "hidden" + std::to_string(i)));
    info.net.dropout[i] = meta_value(m, "dropout" + std::to_string(i));
  }
  const int c = int(meta_value(m, "case"));
  if (c < 0 || c > 2) throw data_error("checkpoint has an unknown input case");
  info.input_case = static_cast<InputCase>(c);
  info.loss = meta_value(m, "loss") == 0.0 ? "A" : "B";
  info.alpha = meta_value(m, "alpha");
  info.T = std::size_t(meta_value(m, "T"));
  return info;
}

struct LoadedLstm {
  LstmModelInfo info;
  LstmStack net;
};

inline LoadedLstm load_lstm(const fs::path& p) {
  const auto ck = read_checkpoint(p);
  LoadedLstm out{lstm_info_from(ck.meta), LstmStack(LstmConfig{}, 0)};
  out.net = LstmStack(out.info.net, 0);
  load_params(out.net.params(), ck);
  return out;
}

inline std::string model_name(InputCase c, const std::string& loss) { return std::string("lstm_") + case_name(c) + "_" + loss; }
inline std::string case_label(InputCase c, const std::string& loss) { return std::string(case_name(c)) + "-" + loss; }

inline void write_loss_curve(const fs::path& p, const std::string& title, const std::vector<TrainLogRow>& log) {
  std::vector<std::string> xs;
  Series total{"loss", {}}, rm{"loss_rmse", {}}, gd{"loss_gdl", {}};
  for (const auto& r : log) {
    xs.push_back(std::to_string(r.iteration));
    total.y.push_back(r.loss);
    rm.y.push_back(r.loss_rmse);
    gd.y.push_back(r.loss_gdl);
  }
  atomic_write(p, svg_line_chart(title, xs, {total, rm, gd}, "loss"));
}

// ---- features -----------------------------------------------------------------------

inline std::string features_csv(const std::vector<std::vector<double>>& f) {
  std::ostringstream out;
  const std::size_t d = f.empty() ? 0 : f[0].size();
  for (std::size_t k = 0; k < d; ++k) out << (k ? "," : "") << 'f' << k;
  out << '\n';
  for (const auto& row : f) {
    for (std::size_t k = 0; k < row.size(); ++k) out << (k ? "," : "") << fmt_double(row[k]);
    out << '\n';
  }
  return out.str();
}

inline std::vector<std::vector<double>> read_features(const fs::path& p) {
  if (!fs::exists(p)) throw data_error("missing features " + p.string() + " (run extract first)");
  std::istringstream in(read_text(p));
  std::string line;
  std::getline(in, line);
  const std::size_t d = split_csv_line(line).size();
  std::vector<std::vector<double>> out;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto f = split_csv_line(line);
    if (f.size() != d) throw data_error(p.string() + ": ragged feature row");
    std::vector<double> row;
    for (auto v : f) row.push_back(parse_double(v, "feature"));
    out.push_back(std::move(row));
  }
  return out;
}

inline std::size_t cmd_extract(const fs::path& cnn_ckpt, const fs::path& prep_dir, const fs::path& out_dir,
                               const Progress& log = {}) {
  const auto net = load_cnn(cnn_ckpt);
  const auto data = load_prepared(prep_dir);
  fs::create_directories(out_dir);
  std::size_t n = 0;
  for (const auto* part : {&data.train, &data.test})
    for (const auto& e : *part) {
      atomic_write(out_dir / (e.id + ".csv"), features_csv(extract_features(net, StfSequence{e.stf, {}})));
      if (log) log("extract " + e.id);
      ++n;
    }
  return n;
}

inline std::vector<std::vector<std::vector<double>>> load_features(const fs::path& dir,
                                                                   const std::vector<PreprocessedEpisode>& eps) {
  std::vector<std::vector<std::vector<double>>> out;
  for (const auto& e : eps) {
    out.push_back(read_features(dir / (e.id + ".csv")));
    if (out.back().size() != e.force.size()) throw data_error("features for " + e.id + " do not match its instants");
  }
  return out;
}

// ---- train --------------------------------------------------------------------------

struct TrainRequest {
  Stage stage = Stage::lstm;
  InputCase input_case = InputCase::III;
  std::string loss = "A";
};

inline fs::path cmd_train(const ExperimentConfig& cfg, const ConfigOverrides& o, const TrainRequest& req,
                          const Layout& lay, const Progress& log = {}) {
  const auto tcfg = resolve_train(cfg, req.stage, req.input_case, req.loss, o);
  auto on_log = [&](const TrainLogRow& r) {
    if (log) log("iter " + std::to_string(r.iteration) + " loss " + fmt_double(r.loss));
  };
  if (req.stage == Stage::cnn) {
    const auto data = load_prepared(lay.preprocessed());
    const auto res = train_cnn(stf_sequences(data.train), stf_sequences(data.test), cfg.cnn, tcfg, on_log);
    const fs::path dir = lay.models() / "cnn";
    fs::create_directories(dir);
    write_checkpoint(dir / "params.vbfp", res.net.params(), cnn_meta(cfg.cnn));
    atomic_write(dir / "training_log.csv", training_log_csv(res.log));
    write_loss_curve(dir / "loss.svg", "CNN training loss", res.log);
    return dir;
  }
  const bool video = req.input_case != InputCase::I;
  const auto data = load_prepared(lay.preprocessed(), false);
  std::vector<std::vector<std::vector<double>>> ftr(data.train.size()), fte(data.test.size());
  if (video) {
    ftr = load_features(lay.features(), data.train);
    fte = load_features(lay.features(), data.test);
  }
  const int fdim = video ? int(ftr.at(0).at(0).size()) : cfg.cnn.fc_widths.back();
  ExperimentConfig ec = cfg;
  ec.cnn.fc_widths.back() = fdim;
  LstmModelInfo info;
  info.net = lstm_config_for(req.input_case, ec);
  info.net.dropout = tcfg.dropout;
  info.input_case = req.input_case;
  info.loss = req.loss;
  info.alpha = tcfg.loss.alpha;
  info.T = tcfg.T;
  std::vector<FeatureSequence> tr, te;
  for (std::size_t k = 0; k < data.train.size(); ++k) tr.push_back(feature_sequence(req.input_case, data.train[k], ftr[k]));
  for (std::size_t k = 0; k < data.test.size(); ++k) te.push_back(feature_sequence(req.input_case, data.test[k], fte[k]));
  const auto res = train_lstm(tr, te, info.net, tcfg, on_log);
  const fs::path dir = lay.models() / model_name(req.input_case, req.loss);
  fs::create_directories(dir);
  write_checkpoint(dir / "params.vbfp", res.net.params(), lstm_meta(info));
  atomic_write(dir / "training_log.csv", training_log_csv(res.log));
  write_loss_curve(dir / "loss.svg", "Recurrent stage loss, case " + case_label(req.input_case, req.loss), res.log);
  return dir;
}

// ---- eval / robustness ----------------------------------------------------------------

struct EvalResult {
  std::string label;
  TaskMetrics metrics;
};

inline void write_metric_reports(const fs::path& reports, const std::string& stem, const std::string& label,
                                 const TaskMetrics& m) {
  fs::create_directories(reports);
  atomic_write(reports / ("metrics_" + stem + ".csv"), metrics_csv(m));
  atomic_write(reports / ("summary_" + stem + ".csv"), summary_csv(label, m));
  std::vector<Series> s;
  if (m.pushing) s.push_back({"pushing", pcc_values(*m.pushing)});
  if (m.pulling) s.push_back({"pulling", pcc_values(*m.pulling)});
  atomic_write(reports / ("pcc_" + stem + ".svg"), svg_line_chart("PCC per component, " + label, component_labels(), s, "PCC"));
}

inline TaskMetrics evaluate_lstm(const LoadedLstm& m, const PreparedData& data,
                                 const std::vector<std::vector<std::vector<double>>>& fte, double sigma,
                                 std::uint64_t seed) {
  return evaluate_episodes(data.test,
                           predict_episodes(m.net, m.info.input_case, data.test, fte, m.info.T, sigma, seed), data.norm);
}

inline EvalResult cmd_eval(const fs::path& model_dir, const Layout& lay) {
  const fs::path ck = model_dir / "params.vbfp";
  if (!fs::exists(ck)) throw data_error("missing checkpoint " + ck.string());
  const auto meta = read_checkpoint(ck).meta;
  if (meta_value(meta, "stage") == 0) {
    const auto net = load_cnn(ck);
    const auto data = load_prepared(lay.preprocessed());
    std::vector<std::vector<ForceVector>> preds;
    for (const auto& e : data.test) {
      std::vector<ForceVector> p;
      for (const auto& x : e.stf) p.push_back(cnn_forward(net, detail::widen(x), Mode::eval));
      preds.push_back(std::move(p));
    }
    EvalResult r{"CNN", evaluate_episodes(data.test, preds, data.norm)};
    write_metric_reports(lay.reports(), "cnn", r.label, r.metrics);
    return r;
  }
  const auto m = load_lstm(ck);
  const auto data = load_prepared(lay.preprocessed(), false);
  std::vector<std::vector<std::vector<double>>> fte(data.test.size());
  if (m.info.input_case != InputCase::I) fte = load_features(lay.features(), data.test);
  EvalResult r{case_label(m.info.input_case, m.info.loss), evaluate_lstm(m, data, fte, 0.0, 0)};
  write_metric_reports(lay.reports(), std::string(case_name(m.info.input_case)) + "_" + m.info.loss, r.label, r.metrics);
  return r;
}

inline std::vector<double> parse_sigmas(const std::string& s) {
  std::vector<double> out;
  for (auto f : split_csv_line(s)) {
    const double v = parse_double(f, "sigma");
    if (!(v >= 0.0)) throw usage_error("sigmas must be non-negative");
    out.push_back(v);
  }
  if (out.empty()) throw usage_error("empty sigma list");
  std::sort(out.begin(), out.end());
  return out;
}

inline std::vector<SweepPoint> cmd_robustness(const fs::path& model_dir, const std::vector<double>& sigmas,
                                              std::uint64_t seed, const Layout& lay) {
  const auto m = load_lstm(model_dir / "params.vbfp");
  const auto data = load_prepared(lay.preprocessed(), false);
  std::vector<std::vector<std::vector<double>>> fte(data.test.size());
  if (m.info.input_case != InputCase::I) fte = load_features(lay.features(), data.test);
  std::vector<SweepPoint> pts;
  for (double s : sigmas) pts.push_back({s, evaluate_lstm(m, data, fte, s, seed)});
  std::sort(pts.begin(), pts.end(), [](const auto& a, const auto& b) { return a.sigma < b.sigma; });
  const std::string stem = std::string(case_name(m.info.input_case)) + "_" + m.info.loss;
  fs::create_directories(lay.reports());
  atomic_write(lay.reports() / ("robustness_" + stem + ".csv"), robustness_csv(pts));
  std::vector<std::string> xs;
  Series push{"pushing", {}}, pull{"pulling", {}};
  for (const auto& p : pts) {
    xs.push_back(fmt_double(p.sigma));
    push.y.push_back(p.metrics.pushing ? mean_pcc(p.metrics.pushing->pcc) : std::nan(""));
    pull.y.push_back(p.metrics.pulling ? mean_pcc(p.metrics.pulling->pcc) : std::nan(""));
  }
  atomic_write(lay.reports() / ("robustness_" + stem + ".svg"),
               svg_line_chart("Mean PCC vs tool noise, " + case_label(m.info.input_case, m.info.loss), xs, {push, pull},
                              "mean PCC"));
  return pts;
}

// ---- offline vs real-time preprocessing ------------------------------------------

struct RtCompareResult {
  TaskMetrics offline;
  TaskMetrics realtime;
  std::vector<std::string> sequences;
};

/// First pushing and first pulling test sequence of the manifest.
inline std::vector<std::string> default_rt_sequences(const std::vector<ManifestRow>& rows) {
  std::vector<std::string> out;
  for (Task t : {Task::pushing, Task::pulling})
    for (const auto& r : rows)
      if (r.test && r.task == t) {
        out.push_back(r.id);
        break;
      }
  return out;
}

inline PreprocessedEpisode normalized(PreprocessedEpisode e, const NormalizationParams& n) {
  for (auto& t : e.tool) t = apply_tool_normalization(t, n.tool_mean, n.tool_scale);
  for (auto& f : e.force) f = apply_force_normalization(f, n.force_offset, n.force_scale);
  return e;
}

/// Runs the model on raw sequences preprocessed with the whole-sequence mean
/// (offline) and with the running mean (real-time).
inline RtCompareResult cmd_rt_compare(const ExperimentConfig& cfg, const fs::path& model_dir, const fs::path& cnn_ckpt,
                                      std::vector<std::string> sequences, const Layout& lay) {
  const auto m = load_lstm(model_dir / "params.vbfp");
  const bool video = m.info.input_case != InputCase::I;
  std::optional<FeatureCnn> cnn;
  if (video) cnn.emplace(load_cnn(cnn_ckpt));
  const auto rows = read_manifest(lay.dataset() / "manifest.csv");
  if (sequences.empty()) sequences = default_rt_sequences(rows);
  if (sequences.empty()) throw data_error("rt-compare: no test sequences available");
  const auto data = load_prepared(lay.preprocessed(), false);
  const PreprocessConfig base = read_prep_settings(lay.preprocessed(), cfg.prep);

  RtCompareResult res;
  res.sequences = sequences;
  for (bool rt : {false, true}) {
    PreprocessConfig p = base;
    p.causal_mean = rt;
    std::vector<PreprocessedEpisode> eps;
    for (const auto& id : sequences) {
      if (!fs::exists(lay.dataset() / id / "meta.json")) throw data_error("rt-compare: missing sequence " + id);
      eps.push_back(normalized(preprocess_record(read_sequence(lay.dataset() / id), p, cfg.scene), data.norm));
    }
    std::vector<std::vector<std::vector<double>>> f(eps.size());
    if (video) f = episode_features(*cnn, eps);
    auto& out = rt ? res.realtime : res.offline;
    out = evaluate_episodes(eps, predict_episodes(m.net, m.info.input_case, eps, f, m.info.T), data.norm);
  }
  fs::create_directories(lay.reports());
  atomic_write(lay.reports() / "rt_compare.csv", rt_compare_csv(res.offline, res.realtime));
  return res;
}

// ---- ARMAX -------------------------------------------------------------------------------

inline EvalResult cmd_armax(const ArmaxOrders& orders, const Layout& lay) {
  const auto data = load_prepared(lay.preprocessed(), false);
  if (data.train.empty() || data.test.empty()) throw data_error("armax: needs training and test sequences");
  const auto model = fit_armax_baseline(data.train, orders);
  fs::create_directories(lay.models() / "armax");
  atomic_write(lay.models() / "armax" / "model.csv", armax_csv(model));
  EvalResult r{"ARMAX", evaluate_episodes(data.test, armax_predictions(model, data.test), data.norm)};
  write_metric_reports(lay.reports(), "armax", r.label, r.metrics);
  return r;
}

// ---- report ------------------------------------------------------------------------------

/// Collects every metrics_*.csv into one table and per-task PCC charts.
inline std::size_t cmd_report(const Layout& lay) {
  const fs::path dir = lay.reports();
  if (!fs::exists(dir)) throw data_error("no reports directory at " + dir.string());
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(dir)) {
    const auto name = e.path().filename().string();
    if (name.rfind("metrics_", 0) == 0 && e.path().extension() == ".csv") files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  if (files.empty()) throw data_error("no metrics files in " + dir.string());

  std::ostringstream table;
  table << "model,task,pcc_max,pcc_min,pcc_mean,rmse_max,rmse_min,rmse_mean\n";
  std::map<std::string, std::vector<Series>> charts;
  for (const auto& f : files) {
    const std::string stem = f.stem().string().substr(8);
    std::istringstream in(read_text(f));
    std::string line;
    std::getline(in, line);
    if (line != "component,rmse_norm,rmse_phys,pcc,task") throw data_error(f.string() + ": unexpected header");
    std::map<std::string, std::pair<std::vector<double>, std::vector<double>>> by_task;
    std::vector<std::string> order;
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      const auto c = split_csv_line(line);
      if (c.size() != 5) throw data_error(f.string() + ": bad row");
      const std::string task(c[4]);
      if (!by_task.count(task)) order.push_back(task);
      by_task[task].first.push_back(parse_double(c[3], "pcc"));
      by_task[task].second.push_back(parse_double(c[1], "rmse"));
    }
    for (const auto& task : order) {
      const auto& [pcc, rmse] = by_task[task];
      std::vector<std::optional<double>> p;
      for (double v : pcc) p.push_back(std::isfinite(v) ? std::optional<double>(v) : std::nullopt);
      const auto sp = summarize(std::span<const std::optional<double>>(p));
      const auto sr = summarize(std::span<const std::optional<double>>(
          std::vector<std::optional<double>>(rmse.begin(), rmse.end())));
      table << stem << ',' << task << ',' << fmt_double(sp.max) << ',' << fmt_double(sp.min) << ','
            << fmt_double(sp.mean) << ',' << fmt_double(sr.max) << ',' << fmt_double(sr.min) << ','
            << fmt_double(sr.mean) << '\n';
      charts[task].push_back({stem, pcc});
    }
  }
  atomic_write(dir / "summary.csv", table.str());
  for (const auto& [task, series] : charts)
    atomic_write(dir / ("pcc_" + task + ".svg"), svg_line_chart("PCC per component, " + task, component_labels(), series, "PCC"));
  return files.size();
}

}  // namespace vbfs
