#include <cstdio>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "vbfs/commands.hpp"

using namespace vbfs;

namespace {

void say(const std::string& s) { std::cerr << s << '\n'; }

int fail(const std::string& msg, int code) {
  std::cerr << "vbfs: " << msg << '\n';
  return code;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Vision-based force estimation toolkit"};
  app.require_subcommand(1);
  std::string config_path, out_dir = "work";
  std::optional<std::uint64_t> seed;
  bool quiet = false;
  app.add_option("--config", config_path, "key=value configuration file");
  app.add_option("--seed", seed, "random seed (overrides the config)");
  app.add_option("--out", out_dir, "working directory");
  app.add_flag("-q,--quiet", quiet, "no progress output");

  auto* synth = app.add_subcommand("synth", "render the synthetic episode set");
  std::optional<std::size_t> episodes;
  synth->add_option("--episodes", episodes, "keep only the first N episodes");

  auto* prep = app.add_subcommand("preprocess", "mean removal, ROI and space-time frames");
  bool causal = false, causal_mean = false, tracker = false;
  std::optional<int> delta;
  prep->add_flag("--causal", causal, "use frames t-2d, t-d, t");
  prep->add_flag("--causal-mean", causal_mean, "running mean instead of the whole-sequence mean");
  prep->add_flag("--tracker", tracker, "track the ROI from the video instead of the tool projection");
  prep->add_option("--delta", delta, "frame spacing")->check(CLI::PositiveNumber);

  auto* train = app.add_subcommand("train", "train the CNN or the recurrent stage");
  std::optional<std::string> stage_s, case_s, loss_s;
  train->add_option("--stage", stage_s, "cnn or lstm");
  train->add_option("--case", case_s, "I, II or III");
  train->add_option("--loss", loss_s, "A or B");
  std::optional<std::size_t> iters;
  train->add_option("--iters", iters, "iterations");

  auto* extract = app.add_subcommand("extract", "write CNN features for every preprocessed sequence");
  std::string cnn_path;
  extract->add_option("--cnn", cnn_path, "CNN checkpoint (default OUT/models/cnn/params.vbfp)");

  auto* eval = app.add_subcommand("eval", "metrics on the test split");
  std::string model_dir;
  eval->add_option("--model", model_dir, "model directory")->required();

  auto* robust = app.add_subcommand("robustness", "noise sweep on the tool inputs");
  std::string sigmas = "0,0.05,0.1,0.2";
  robust->add_option("--model", model_dir, "model directory")->required();
  robust->add_option("--sigmas", sigmas, "comma-separated noise levels");

  auto* rt = app.add_subcommand("rt-compare", "offline vs running-mean preprocessing");
  std::string sequences;
  rt->add_option("--model", model_dir, "model directory")->required();
  rt->add_option("--cnn", cnn_path, "CNN checkpoint (default OUT/models/cnn/params.vbfp)");
  rt->add_option("--sequences", sequences, "comma-separated raw sequence ids");

  auto* armax = app.add_subcommand("armax", "fit and evaluate the linear baseline");
  ArmaxOrders orders;
  armax->add_option("--na", orders.na)->check(CLI::NonNegativeNumber);
  armax->add_option("--nb", orders.nb)->check(CLI::NonNegativeNumber);
  armax->add_option("--nc", orders.nc)->check(CLI::NonNegativeNumber);
  armax->add_option("--nk", orders.nk)->check(CLI::NonNegativeNumber);

  auto* report = app.add_subcommand("report", "collect metrics files into one summary");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    return fail(e.what(), 2);
  }

  const Progress log = quiet ? Progress{} : Progress{say};
  try {
    ConfigOverrides o;
    if (!config_path.empty()) o = load_config(config_path);
    if (seed) o.seed = *seed;
    if (iters) o.iters = *iters;
    ExperimentConfig cfg;
    apply_config(o, cfg);
    if (delta) cfg.prep.delta = *delta;
    if (causal) cfg.prep.causal_stf = true;
    cfg.prep.causal_mean = causal_mean;
    cfg.prep.oracle_roi = !tracker;

    const Layout lay{out_dir};
    DirLock lock(lay.root);
    const fs::path cnn_ckpt = cnn_path.empty() ? lay.models() / "cnn" / "params.vbfp" : fs::path(cnn_path);

    if (*synth) {
      const auto r = cmd_synth(cfg, lay.dataset(), episodes, log);
      std::cout << "synth: " << r.manifest.size() << " episodes in " << lay.dataset().string() << '\n';
    } else if (*prep) {
      const auto n = cmd_preprocess(cfg, lay.dataset(), lay.preprocessed(), log);
      std::cout << "preprocess: " << n << " sequences\n";
    } else if (*train) {
      TrainRequest req;
      const std::string st = stage_s ? *stage_s : o.stage ? (*o.stage == Stage::cnn ? "cnn" : "lstm") : "lstm";
      if (st == "cnn") req.stage = Stage::cnn;
      else if (st == "lstm") req.stage = Stage::lstm;
      else throw usage_error("unknown stage '" + st + "' (expected cnn or lstm)");
      req.input_case = case_s ? parse_case(*case_s) : o.input_case.value_or(InputCase::III);
      req.loss = loss_s ? *loss_s : o.loss.value_or("A");
      parse_loss(req.loss);
      const auto dir = cmd_train(cfg, o, req, lay, log);
      std::cout << "train: wrote " << dir.string() << '\n';
    } else if (*extract) {
      const auto n = cmd_extract(cnn_ckpt, lay.preprocessed(), lay.features(), log);
      std::cout << "extract: " << n << " sequences\n";
    } else if (*eval) {
      const auto r = cmd_eval(model_dir, lay);
      std::cout << "eval " << r.label << ": mean PCC " << fmt_double(r.metrics.mean_pcc()) << '\n';
    } else if (*robust) {
      const auto pts = cmd_robustness(model_dir, parse_sigmas(sigmas), cfg.seed, lay);
      for (const auto& p : pts)
        std::cout << "sigma " << fmt_double(p.sigma) << ": mean PCC " << fmt_double(p.metrics.mean_pcc()) << '\n';
    } else if (*rt) {
      std::vector<std::string> ids;
      for (auto s : split_csv_line(sequences))
        if (!s.empty()) ids.emplace_back(s);
      const auto r = cmd_rt_compare(cfg, model_dir, cnn_ckpt, ids, lay);
      std::cout << "rt-compare: offline " << fmt_double(r.offline.mean_pcc()) << ", real-time "
                << fmt_double(r.realtime.mean_pcc()) << '\n';
    } else if (*armax) {
      orders.validate(4);
      const auto r = cmd_armax(orders, lay);
      std::cout << "armax: mean PCC " << fmt_double(r.metrics.mean_pcc()) << '\n';
    } else if (*report) {
      std::cout << "report: " << cmd_report(lay) << " metrics files\n";
    }
  } catch (const Error& e) {
    return fail(e.what(), e.exit_code());
  } catch (const std::exception& e) {
    return fail(e.what(), 3);
  }
  return 0;
}
