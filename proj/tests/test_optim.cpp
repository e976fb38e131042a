#include <gtest/gtest.h>

#include <cmath>
#include <limits>

#include "vbfs/optim.hpp"
#include "vbfs/training.hpp"

using namespace vbfs;

TEST(RmsProp, HandEvaluatedStep) {
  double theta = 0.0, s = 0.0;
  rmsprop_update(theta, s, 1.0, RmsPropConfig{0.1, 0.9, 1e-8});
  EXPECT_DOUBLE_EQ(s, 0.1);
  EXPECT_DOUBLE_EQ(theta, -0.1 / std::sqrt(0.1 + 1e-8));
}

TEST(RmsProp, ZeroGradientLeavesParameters) {
  ParamStore ps;
  ps.add("w", {3});
  ps[0].value = {1.0, -2.0, 3.0};
  RmsPropState st;
  EXPECT_TRUE(rmsprop_step(ps, st, {}));
  EXPECT_EQ(ps[0].value, (std::vector<double>{1.0, -2.0, 3.0}));
}

TEST(RmsProp, DeterministicAndStateNonNegative) {
  auto run = [] {
    ParamStore ps;
    ps.add("w", {2});
    RmsPropState st;
    for (int k = 0; k < 5; ++k) {
      ps[0].grad = {std::sin(k), -std::cos(k)};
      rmsprop_step(ps, st, {});
      for (double v : st.s[0]) EXPECT_GE(v, 0.0);
    }
    return ps[0].value;
  };
  EXPECT_EQ(run(), run());
}

TEST(RmsProp, NonFiniteGradientSkipsStep) {
  ParamStore ps;
  ps.add("w", {2});
  ps[0].value = {1.0, 1.0};
  ps[0].grad = {0.5, std::numeric_limits<double>::quiet_NaN()};
  RmsPropState st;
  EXPECT_FALSE(rmsprop_step(ps, st, {}));
  EXPECT_EQ(st.skipped, 1u);
  EXPECT_EQ(ps[0].value, (std::vector<double>{1.0, 1.0}));
}

TEST(ToolNoise, IdentityAtZeroAndGrasperUntouched) {
  std::vector<ToolSample> tool(50);
  for (std::size_t i = 0; i < tool.size(); ++i) {
    tool[i].position = {0.1 * i, -0.2, 0.3};
    tool[i].grasper = i % 2;
  }
  const auto same = add_tool_noise(tool, 0.0, 3);
  for (std::size_t i = 0; i < tool.size(); ++i) EXPECT_EQ(same[i].position, tool[i].position);
  const auto noisy = add_tool_noise(tool, 0.2, 3);
  for (std::size_t i = 0; i < tool.size(); ++i) EXPECT_EQ(noisy[i].grasper, tool[i].grasper);
  const auto again = add_tool_noise(tool, 0.2, 3);
  for (std::size_t i = 0; i < tool.size(); ++i) EXPECT_EQ(noisy[i].position, again[i].position);
  EXPECT_THROW(add_tool_noise(tool, -0.1, 3), Error);
}

TEST(ToolNoise, SampleMeanWithinThreeStandardErrors) {
  const double sigma = 0.1;
  const std::size_t n = 100000;
  std::vector<ToolSample> tool(n / 3 + 1);
  const auto noisy = add_tool_noise(tool, sigma, 17);
  double sum = 0.0;
  std::size_t cnt = 0;
  for (const auto& s : noisy)
    for (double v : s.position)
      if (cnt < n) {
        sum += v;
        ++cnt;
      }
  EXPECT_LE(std::abs(sum / cnt), 3.0 * sigma / std::sqrt(double(n)));
}

namespace {

// Four distinct tiny frames, two pairs of neighbours.
std::vector<StfSequence> four_frames() {
  StfSequence s;
  for (int k = 0; k < 4; ++k) {
    std::vector<float> x(3 * 8 * 8);
    for (std::size_t i = 0; i < x.size(); ++i) x[i] = float(std::sin(0.37 * i * (k + 1)));
    s.inputs.push_back(x);
    ForceVector f;
    for (std::size_t j = 0; j < kForceDim; ++j) f[j] = std::cos(1.1 * k + j);
    s.targets.push_back(f);
  }
  return {s};
}

CnnConfig tiny() {
  CnnConfig c;
  c.input_size = 8;
  c.conv_widths = {4, 8};
  c.fc_widths = {16, 8};
  c.dropout = 0.0;
  return c;
}

TrainConfig cnn_cfg(std::size_t iters) {
  TrainConfig t;
  t.stage = Stage::cnn;
  t.lr = 1e-3;
  t.batch = 4;
  t.iters = iters;
  t.loss = LossConfig::cnn_stage(0.8);
  t.mre_every = 1;
  t.log_every = 1;
  return t;
}

}  // namespace

TEST(TrainCnn, ZeroIterationsKeepsInitialization) {
  const auto r = train_cnn(four_frames(), {}, tiny(), cnn_cfg(0));
  const FeatureCnn init(tiny(), 1);
  for (std::size_t p = 0; p < init.params().count(); ++p) EXPECT_EQ(r.net.params()[p].value, init.params()[p].value);
}

TEST(TrainCnn, MemorizesFourFrames) {
  auto cfg = cnn_cfg(2000);
  cfg.mre_every = 2000;
  cfg.log_every = 2000;
  double first = 0.0;
  const auto data = four_frames();
  {
    const FeatureCnn init(tiny(), cfg.seed);
    std::vector<ForceVector> yhat;
    for (const auto& x : data[0].inputs) yhat.push_back(cnn_forward(init, std::vector<double>(x.begin(), x.end()), Mode::eval));
    first = mre(data[0].targets, yhat, cfg.delta);
  }
  const auto r = train_cnn(data, {}, tiny(), cfg);
  ASSERT_FALSE(r.log.empty());
  EXPECT_LE(r.log.back().mre_train * 10.0, first);
}

TEST(TrainCnn, SameSeedSameBytes) {
  auto a = train_cnn(four_frames(), {}, tiny(), cnn_cfg(20));
  auto b = train_cnn(four_frames(), {}, tiny(), cnn_cfg(20));
  for (std::size_t p = 0; p < a.net.params().count(); ++p) EXPECT_EQ(a.net.params()[p].value, b.net.params()[p].value);
}

TEST(ExtractFeatures, OnePerFrameInsideUnitInterval) {
  const FeatureCnn net(tiny(), 3);
  const auto f = extract_features(net, four_frames()[0]);
  ASSERT_EQ(f.size(), 4u);
  for (const auto& v : f) {
    EXPECT_EQ(v.size(), 8u);
    for (double x : v) EXPECT_TRUE(x > -1.0 && x < 1.0);
  }
  EXPECT_EQ(extract_features(net, four_frames()[0]), f);
}

TEST(TrainLstm, MemorizesSineFromToolInput) {
  FeatureSequence s;
  for (int k = 0; k < 400; ++k) {
    const double ph = 2 * std::numbers::pi * k / 40.0;
    s.inputs.push_back({std::sin(ph), std::cos(ph), 0.0, 1.0});
    ForceVector f;
    f[2] = 3.0 * std::sin(ph + 0.5);
    f[0] = std::cos(ph);
    s.targets.push_back(f);
  }
  LstmConfig lc;
  lc.input_dim = 4;
  lc.hidden = {16, 16};
  TrainConfig t;
  t.iters = 2000;
  t.T = 8;
  t.batch = 8;
  t.dropout = {0.0, 0.0};
  t.loss = LossConfig::loss_b();
  const auto r = train_lstm({s}, {}, lc, t);
  const auto yhat = predict_sequence(r.net, s.inputs, t.T);
  std::vector<double> a, b;
  for (std::size_t i = 0; i < yhat.size(); ++i) {
    a.push_back(s.targets[i][2]);
    b.push_back(yhat[i][2]);
  }
  EXPECT_GT(pearson(a, b).value(), 0.95);
}

TEST(TrainLstm, RejectsShortSequences) {
  FeatureSequence s{{{0, 0, 0, 1}, {0, 0, 0, 1}}, std::vector<ForceVector>(2)};
  LstmConfig lc;
  TrainConfig t;
  t.T = 4;
  EXPECT_THROW(train_lstm({s}, {}, lc, t), Error);
  EXPECT_THROW(train_lstm({}, {}, lc, t), Error);
}
