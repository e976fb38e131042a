#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <sstream>
#include <string>

#include "vbfs/common.hpp"
#include "vbfs/io.hpp"
#include "vbfs/pipeline.hpp"
#include "vbfs/training.hpp"

namespace vbfs {

/// Values read from a flat key=value file. Anything unset keeps the
/// built-in default.
struct ConfigOverrides {
  std::optional<Stage> stage;
  std::optional<InputCase> input_case;
  std::optional<std::string> loss;
  std::optional<double> alpha;
  std::optional<double> lr;
  std::optional<std::size_t> batch;
  std::optional<std::size_t> iters;
  std::optional<std::size_t> T;
  std::optional<std::uint64_t> seed;
  std::optional<int> feature_dim;
  std::optional<double> dropout1;
  std::optional<double> dropout2;
  std::optional<bool> causal;
  std::optional<int> delta;
  std::optional<double> time_scale;  // episode length multiplier for synth
};

namespace detail {

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  return s.substr(b, s.find_last_not_of(" \t\r") - b + 1);
}

inline bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "1" || v == "true" || v == "on" || v == "yes") return true;
  if (v == "0" || v == "false" || v == "off" || v == "no") return false;
  throw usage_error("config: " + key + " expects a boolean, got '" + v + "'");
}

template <class T>
T parse_number(const std::string& key, const std::string& v) {
  std::istringstream in(v);
  T out{};
  if (!(in >> out) || !(in >> std::ws).eof()) throw usage_error("config: bad value for " + key + ": '" + v + "'");
  return out;
}

}  // namespace detail

inline ConfigOverrides parse_config(const std::string& text) {
  ConfigOverrides c;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    line = detail::trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw usage_error("config line " + std::to_string(lineno) + ": expected key=value");
    const std::string key = detail::trim(line.substr(0, eq)), v = detail::trim(line.substr(eq + 1));
    using detail::parse_number;
    if (key == "stage") {
      if (v == "cnn") c.stage = Stage::cnn;
      else if (v == "lstm") c.stage = Stage::lstm;
      else throw usage_error("config: stage must be cnn or lstm");
    } else if (key == "case") c.input_case = parse_case(v);
    else if (key == "loss") {
      parse_loss(v);
      c.loss = v;
    } else if (key == "alpha") c.alpha = parse_number<double>(key, v);
    else if (key == "lr") c.lr = parse_number<double>(key, v);
    else if (key == "batch") c.batch = parse_number<std::size_t>(key, v);
    else if (key == "iters") c.iters = parse_number<std::size_t>(key, v);
    else if (key == "T") c.T = parse_number<std::size_t>(key, v);
    else if (key == "seed") c.seed = parse_number<std::uint64_t>(key, v);
    else if (key == "feature_dim") c.feature_dim = parse_number<int>(key, v);
    else if (key == "dropout1") c.dropout1 = parse_number<double>(key, v);
    else if (key == "dropout2") c.dropout2 = parse_number<double>(key, v);
    else if (key == "causal") c.causal = detail::parse_bool(key, v);
    else if (key == "delta") c.delta = parse_number<int>(key, v);
    else if (key == "time_scale") c.time_scale = parse_number<double>(key, v);
    else throw usage_error("config: unknown key '" + key + "'");
  }
  if (c.feature_dim && *c.feature_dim < 1) throw usage_error("config: feature_dim must be positive");
  if (c.delta && *c.delta < 1) throw usage_error("config: delta must be positive");
  if (c.time_scale && !(*c.time_scale > 0.0)) throw usage_error("config: time_scale must be positive");
  for (auto d : {c.dropout1, c.dropout2})
    if (d && !(*d >= 0.0 && *d < 1.0)) throw usage_error("config: dropout must lie in [0, 1)");
  return c;
}

inline ConfigOverrides load_config(const std::string& path) { return parse_config(read_text(path)); }

/// Folds the stage-independent keys into an experiment config.
inline void apply_config(const ConfigOverrides& o, ExperimentConfig& e) {
  if (o.seed) e.seed = *o.seed;
  if (o.time_scale) e.time_scale = *o.time_scale;
  if (o.feature_dim) e.cnn.fc_widths.back() = *o.feature_dim;
  if (o.causal) e.prep.causal_stf = *o.causal;
  if (o.delta) e.prep.delta = *o.delta;
  if (o.T) e.lstm_train.T = *o.T;
}

/// Training settings for one stage/case/loss with the overrides applied.
inline TrainConfig resolve_train(const ExperimentConfig& e, Stage stage, InputCase c, const std::string& loss,
                                 const ConfigOverrides& o) {
  TrainConfig t = stage == Stage::cnn ? e.cnn_train : lstm_train_for(c, parse_loss(loss), e);
  t.seed = e.seed;
  if (o.lr) t.lr = *o.lr;
  if (o.batch) t.batch = *o.batch;
  if (o.iters) t.iters = *o.iters;
  if (o.alpha) t.loss.alpha = *o.alpha;
  if (stage == Stage::lstm) {
    if (o.dropout1) t.dropout[0] = *o.dropout1;
    if (o.dropout2 && t.dropout.size() > 1) t.dropout[1] = *o.dropout2;
  }
  t.validate();
  return t;
}

}  // namespace vbfs
