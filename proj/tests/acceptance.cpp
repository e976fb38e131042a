// Acceptance run: one PASS/FAIL line per criterion, exit status 0 only if all pass.
// Usage: acceptance [work_dir]

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <random>
#include <string>

#include "armax_oracle.hpp"
#include "grad_cases.hpp"
#include "vbfs/commands.hpp"
#include "vbfs/metrics.hpp"
#include "vbfs/videoproc.hpp"

using namespace vbfs;
namespace fs = std::filesystem;
using clk = std::chrono::steady_clock;

namespace {

// pinned tolerances
constexpr double kGradTol = 1e-5;
constexpr double kGradBudgetS = 120.0;
constexpr double kUnrollTol = 1e-12;
constexpr double kCausalMeanTol = 1e-6;
constexpr double kTrackTolPx = 2.0;
constexpr double kExactTol = 1e-12;
constexpr double kArmaxCoefTol = 0.05;
constexpr double kArmaxRmseTol = 0.20;
constexpr double kArmaxBudgetS = 60.0;
constexpr double kE2eBudgetS = 3600.0;
constexpr double kCaseStep = 0.1;
constexpr double kPushFzMin = 0.8;
constexpr double kLossSlack = 0.02;
constexpr double kArmaxGap = 0.2;
constexpr double kNoiseRetain = 0.7;
constexpr double kRtRelTol = 0.15;
constexpr std::size_t kSeeds = 3;  // recurrent-stage training seeds per configuration

int failures = 0;

double since(clk::time_point t) { return std::chrono::duration<double>(clk::now() - t).count(); }

void verdict(int id, bool ok, const std::string& what) {
  std::printf("[%s] AC%-2d %s\n", ok ? "PASS" : "FAIL", id, what.c_str());
  std::fflush(stdout);
  if (!ok) ++failures;
}

std::string fmt(const char* f, auto... a) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, a...);
  return buf;
}

void ac1_gradients() {
  const auto t0 = clk::now();
  double worst = 0.0;
  for (const auto& loss : {testing::loss_a_log(), testing::loss_b_linear()}) {
    worst = std::max(worst, testing::cnn_grad_check(loss).max_rel_error);
    worst = std::max(worst, testing::lstm_grad_check(loss, 4).max_rel_error);
  }
  const double s = since(t0);
  verdict(1, worst < kGradTol && s < kGradBudgetS,
          fmt("gradient check CNN + CIFG(T=4), losses A/B: max rel err %.2e in %.1fs", worst, s));
}

void ac2_losses() {
  std::mt19937_64 rng(5);
  const auto y = testing::random_targets(8, rng), yhat = testing::random_targets(8, rng);
  const std::size_t seg[2] = {4, 4};
  bool ok = true;

  // alpha = 1 with linear rho is exactly the RMSE term
  const auto b = loss_composite<ForceVector>(y, yhat, seg, LossConfig::loss_b());
  ok &= b.total == loss_rmse<ForceVector>(y, yhat, LossConfig::loss_b()).value;
  // composite is the alpha-weighted sum
  const auto a = LossConfig::loss_a();
  const double mix = a.alpha * loss_rmse<ForceVector>(y, yhat, a).value +
                     (1 - a.alpha) * loss_gdl<ForceVector>(y, yhat, seg, a).value;
  ok &= std::abs(loss_composite<ForceVector>(y, yhat, seg, a).total - mix) < kExactTol;
  // toy case: one step of error 1 in both terms
  const std::vector<std::array<double, 1>> ty{{1.0}, {2.0}}, th{{1.0}, {3.0}};
  const std::size_t s2[1] = {2};
  ok &= std::abs(loss_composite<std::array<double, 1>>(ty, th, s2, a).total - 1.0) < kExactTol;
  // gradient difference ignores a common offset, and is zero at a perfect fit
  LossConfig g = a;
  g.alpha = 0.0;
  auto ys = y, hs = yhat;
  for (auto* v : {&ys, &hs})
    for (auto& r : *v)
      for (double& x : r.components) x += 2.5;
  ok &= std::abs(loss_gdl<ForceVector>(ys, hs, seg, g).value - loss_gdl<ForceVector>(y, yhat, seg, g).value) < kExactTol;
  ok &= loss_composite<ForceVector>(y, y, seg, a).total == 0.0;
  verdict(2, ok, "loss identities (alpha=1, weighting, toy value, shift invariance, zero at fit)");
}

void ac3_cifg() {
  ParamStore ps;
  std::mt19937_64 rng(3);
  const auto L = CifgLayer::create(ps, "l", 4, 6, true, rng);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (auto& p : ps)
    for (double& v : p.value) v += 0.5 * u(rng);
  std::vector<double> h(6, 0.0), c(6, 0.0), x(4);
  double gate_err = 0.0;
  for (int t = 0; t < 10000; ++t) {
    for (double& v : x) v = u(rng);
    CifgCache cc;
    const auto s = cifg_step(ps, L, x, h, c, &cc);
    for (std::size_t k = 0; k < 6; ++k)
      if (std::abs(cc.z[k]) > 1e-3) {
        const double i = (s.c[k] - cc.f[k] * c[k]) / cc.z[k];
        gate_err = std::max(gate_err, std::abs(i + cc.f[k] - 1.0));
      }
    h = s.h;
    c = s.c;
  }

  LstmConfig lc;
  lc.input_dim = 3;
  lc.hidden = {5, 4};
  LstmStack net(lc, 9);
  std::vector<std::vector<double>> seq(16, std::vector<double>(3));
  for (auto& s : seq)
    for (double& v : s) v = u(rng);
  const auto y = lstm_forward(net, seq, Mode::eval);
  std::vector<CifgState> st;
  for (int w : lc.hidden) st.push_back({std::vector<double>(w, 0.0), std::vector<double>(w, 0.0)});
  const auto& P = net.params();
  double unroll_err = 0.0;
  for (std::size_t t = 0; t < seq.size(); ++t) {
    std::vector<double> in = seq[t];
    for (std::size_t l = 0; l < st.size(); ++l) {
      st[l] = cifg_step(P, net.layers()[l], in, st[l].h, st[l].c);
      in = st[l].h;
    }
    for (std::size_t j = 0; j < kForceDim; ++j) {
      double s = P[net.head_b()].value[j];
      for (std::size_t k = 0; k < in.size(); ++k) s += P[net.head_w()].value[j * in.size() + k] * in[k];
      unroll_err = std::max(unroll_err, std::abs(y[t][j] - s));
    }
  }
  verdict(3, gate_err < kUnrollTol && unroll_err < kUnrollTol,
          fmt("CIFG coupled gates over 1e4 steps (max |i+f-1| %.1e), unrolled stack err %.1e", gate_err, unroll_err));
}

Frame square(int h, int w, int row, int col, int side) {
  Frame f(h, w, 1, FrameKind::mean_removed);
  for (int r = row - side / 2; r < row - side / 2 + side; ++r)
    for (int q = col - side / 2; q < col - side / 2 + side; ++q)
      if (r >= 0 && r < h && q >= 0 && q < w) f.at(r, q, 0) = 1.0;
  return f;
}

void ac4_video() {
  bool bitwise = true;
  std::vector<Frame> v;
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int k = 0; k < 46; ++k) {
    Frame f(6, 5, 1, FrameKind::grayscale);
    for (double& p : f.pixels) p = u(rng);
    v.push_back(f);
  }
  for (bool causal : {false, true}) {
    const auto st = space_time(v, causal ? 30 : 15, 15, causal);
    for (int c = 0; c < 3; ++c)
      for (int r = 0; r < 6; ++r)
        for (int q = 0; q < 5; ++q) bitwise &= st.pixels.at(r, q, c) == v[st.sources[c]].at(r, q, 0);
    bitwise &= st.sources == (std::array<std::int64_t, 3>{0, 15, 30});
  }

  std::vector<Frame> rgb;
  for (int k = 0; k < 500; ++k) {
    Frame f(8, 8, 3, FrameKind::raw_rgb);
    for (double& p : f.pixels) p = u(rng);
    rgb.push_back(f);
  }
  MeanFrame run;
  for (const auto& f : rgb) run = mean_frame_causal(std::move(run), f);
  const auto off = mean_frame_offline(rgb);
  double mean_err = 0.0;
  for (std::size_t i = 0; i < off.pixels.pixels.size(); ++i)
    mean_err = std::max(mean_err, std::abs(run.pixels.pixels[i] - off.pixels.pixels[i]));

  std::vector<Frame> blobs;
  std::vector<int> cols;
  for (int k = 0; k < 40; ++k) {
    cols.push_back(15 + 2 * k);
    blobs.push_back(square(64, 128, 32, cols.back(), 10));
  }
  const auto res = track_roi(blobs, std::nullopt, TrackerConfig{20, 20, 0.8, 0.05, 0.02});
  double track_err = 0.0;
  for (std::size_t k = 0; k < blobs.size(); ++k)
    track_err = std::max({track_err, std::abs(res[k].box.center_col - (cols[k] - 0.5)),
                          std::abs(res[k].box.center_row - 31.5)});
  verdict(4, bitwise && mean_err < kCausalMeanTol && track_err <= kTrackTolPx,
          fmt("space-time channels bitwise=%s, causal vs offline mean %.1e, blob track err %.2f px",
              bitwise ? "yes" : "no", mean_err, track_err));
}

void ac5_metrics() {
  std::mt19937_64 rng(6);
  auto y = testing::random_targets(40, rng), yhat = testing::random_targets(40, rng);
  for (std::size_t i = 0; i < y.size(); ++i)
    for (std::size_t j = 0; j < kForceDim; ++j) yhat[i][j] = 0.6 * y[i][j] + yhat[i][j];
  auto moved = yhat;
  for (auto& r : moved)
    for (double& x : r.components) x = 3.5 * x - 1.25;
  const auto p0 = pcc(y, yhat), p1 = pcc(y, moved);
  double affine_err = 0.0;
  for (std::size_t j = 0; j < kForceDim; ++j) affine_err = std::max(affine_err, std::abs(*p0[j] - *p1[j]));

  std::vector<ForceVector> z(1), e(1), z2(2), e2(2);
  e[0][0] = 1e-3;
  for (auto& r : e2) r[0] = r[1] = -1e-3;
  const bool mre_ok = mre(z, z, 1e-3) == 0.0 && mre(z, e, 1e-3) == 1.0 && mre(z2, e2, 1e-3) == 2.0;

  const std::array<double, kForceDim> scale{1.3, 0.4, 2.2, 0.03, 0.05, 0.012};
  const auto rep = evaluate_metrics(y, yhat, scale);
  double phys_err = 0.0;
  for (std::size_t j = 0; j < kForceDim; ++j) {
    double ss = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) ss += std::pow((y[i][j] - yhat[i][j]) * scale[j], 2);
    phys_err = std::max(phys_err, std::abs(rep.rmse_physical[j] - std::sqrt(ss / y.size())));
  }
  verdict(5, affine_err < kExactTol && mre_ok && phys_err < kExactTol,
          fmt("PCC affine invariance %.1e, MRE hand cases %s, physical RMSE err %.1e", affine_err,
              mre_ok ? "ok" : "wrong", phys_err));
}

void ac6_armax() {
  const auto t0 = clk::now();
  const auto r = testing::armax_oracle(10000);
  const double s = since(t0);
  verdict(6, r.max_coef_rel_error < kArmaxCoefTol && std::abs(r.rmse_over_sigma - 1.0) < kArmaxRmseTol && s < kArmaxBudgetS,
          fmt("ARMAX(2,2,2) recovery: max coef rel err %.3f, one-step RMSE/sigma %.3f, %.1fs", r.max_coef_rel_error,
              r.rmse_over_sigma, s));
}

double retained(const std::vector<SweepPoint>& pts, double sigma) {
  double base = NAN, at = NAN;
  for (const auto& p : pts) {
    if (p.sigma == 0.0) base = p.metrics.mean_pcc();
    if (p.sigma == sigma) at = p.metrics.mean_pcc();
  }
  return at / base;
}

void end_to_end(const fs::path& work) {
  fs::remove_all(work);
  const auto t0 = clk::now();
  const Layout lay{work};
  ExperimentConfig cfg;
  const ConfigOverrides none;
  auto log = [t0](const std::string& m) { std::fprintf(stderr, "[%6.0fs] %s\n", since(t0), m.c_str()); };

  cmd_synth(cfg, lay.dataset(), std::nullopt, log);
  cmd_preprocess(cfg, lay.dataset(), lay.preprocessed(), log);
  const fs::path cnn_dir = cmd_train(cfg, none, {Stage::cnn, InputCase::III, "A"}, lay, log);
  cmd_extract(cnn_dir / "params.vbfp", lay.preprocessed(), lay.features(), log);

  // Each configuration's score is averaged over several recurrent-stage seeds;
  // the last one trained (the base seed) stays on disk for the later steps.
  auto model = [&](InputCase c, const char* loss) {
    double sum = 0.0;
    fs::path dir;
    TaskMetrics last;
    for (std::size_t k = 1; k <= kSeeds; ++k) {
      ExperimentConfig run = cfg;
      run.seed = cfg.seed + kSeeds - k;
      dir = cmd_train(run, none, {Stage::lstm, c, loss}, lay);
      last = cmd_eval(dir, lay).metrics;
      sum += last.mean_pcc();
      log(case_label(c, loss) + " seed " + std::to_string(run.seed) + " mean PCC " + fmt_double(last.mean_pcc()));
    }
    return std::tuple{dir, last, sum / kSeeds};
  };
  const auto [dir1, m1, p1] = model(InputCase::I, "A");
  const auto [dir2, m2, p2] = model(InputCase::II, "A");
  const auto [dir3, m3, p3] = model(InputCase::III, "A");
  const auto [dir3b, m3b, p3b] = model(InputCase::III, "B");
  const auto arx = cmd_armax(cfg.armax, lay).metrics;
  const std::vector<double> sigmas{0.0, 0.05, 0.1, 0.2};
  const auto sweep3 = cmd_robustness(dir3, sigmas, cfg.seed, lay);
  const auto sweep1 = cmd_robustness(dir1, sigmas, cfg.seed, lay);
  const auto rt = cmd_rt_compare(cfg, dir3, cnn_dir / "params.vbfp", {}, lay);
  cmd_report(lay);
  const double elapsed = since(t0);

  const double push3 = m3.fz_pcc(Task::pushing), pull3 = m3.fz_pcc(Task::pulling);
  verdict(7, elapsed <= kE2eBudgetS && p3 >= p2 && p2 >= p1 + kCaseStep && push3 >= kPushFzMin && push3 >= pull3,
          fmt("pipeline %.0fs; mean PCC (3-seed avg) III-A %.3f, II-A %.3f, I-A %.3f; III-A Fz push %.3f pull %.3f", elapsed, p3,
              p2, p1, push3, pull3));
  verdict(8, p3 >= p3b - kLossSlack, fmt("III-A %.3f vs III-B %.3f", p3, p3b));
  verdict(9, p3 - arx.mean_pcc() >= kArmaxGap, fmt("III-A %.3f vs ARMAX %.3f", p3, arx.mean_pcc()));
  const double keep3 = retained(sweep3, 0.2), keep1 = retained(sweep1, 0.2);
  verdict(10, keep3 >= kNoiseRetain && (1 - keep1) > (1 - keep3),
          fmt("sigma 0.2 keeps %.1f%% of III-A and %.1f%% of I-A", 100 * keep3, 100 * keep1));
  const auto header = read_text(lay.reports() / "rt_compare.csv");
  const bool column = header.substr(0, header.find('\n')).find("(RT/O)x100") != std::string::npos;
  const double po = rt.offline.mean_pcc(), pr = rt.realtime.mean_pcc();
  verdict(11, column && rt.sequences.size() == 2 && std::abs(pr - po) <= kRtRelTol * std::abs(po),
          fmt("rt-compare on %zu sequences: offline %.3f, running mean %.3f, ratio column %s", rt.sequences.size(), po,
              pr, column ? "present" : "missing"));
}

}  // namespace

int main(int argc, char** argv) {
  const fs::path work = argc > 1 ? fs::path(argv[1]) : fs::temp_directory_path() / "vbfs_acceptance";
  ac1_gradients();
  ac2_losses();
  ac3_cifg();
  ac4_video();
  ac5_metrics();
  ac6_armax();
  try {
    end_to_end(work);
  } catch (const std::exception& e) {
    std::printf("pipeline error: %s\n", e.what());
    for (int id = 7; id <= 11; ++id) verdict(id, false, "not evaluated");
  }
  std::printf("%d of 11 criteria failed\n", failures);
  return failures ? 1 : 0;
}
