#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "vbfs/metrics.hpp"

using namespace vbfs;

namespace {

std::vector<ForceVector> wave(std::size_t n, double phase = 0.0) {
  std::vector<ForceVector> v(n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < kForceDim; ++j) v[i][j] = std::sin(0.3 * i + phase + j) + 0.1 * j;
  return v;
}

std::vector<ForceVector> affine(const std::vector<ForceVector>& y, double a, double b) {
  auto out = y;
  for (auto& r : out)
    for (double& x : r.components) x = a * x + b;
  return out;
}

}  // namespace

TEST(Rmse, HandValues) {
  const auto y = wave(10);
  for (double v : rmse_metric(y, y)) EXPECT_EQ(v, 0.0);
  for (double v : rmse_metric(y, affine(y, 1.0, 1.0))) EXPECT_NEAR(v, 1.0, 1e-12);
  std::vector<ForceVector> a(2), b(2);
  b[0][4] = 3.0;
  b[1][4] = 4.0;
  EXPECT_DOUBLE_EQ(rmse_metric(a, b)[4], std::sqrt(12.5));
  EXPECT_THROW(rmse_metric(a, wave(3)), Error);
}

TEST(Rmse, ConstantOffsetGivesItsMagnitude) {
  const auto y = wave(25);
  for (double v : rmse_metric(y, affine(y, 1.0, -0.37))) EXPECT_NEAR(v, 0.37, 1e-12);
}

TEST(Pcc, IdentityNegationAffine) {
  const auto y = wave(50);
  for (const auto& v : pcc(y, y)) EXPECT_NEAR(v.value(), 1.0, 1e-12);
  auto centred = y;
  for (std::size_t j = 0; j < kForceDim; ++j) {
    double m = 0.0;
    for (const auto& r : centred) m += r[j];
    for (auto& r : centred) r[j] -= m / centred.size();
  }
  for (const auto& v : pcc(centred, affine(centred, -1.0, 0.0))) EXPECT_NEAR(v.value(), -1.0, 1e-12);
  for (const auto& v : pcc(y, affine(y, 2.0, 3.0))) EXPECT_NEAR(v.value(), 1.0, 1e-12);
}

TEST(Pcc, InvariantUnderPositiveAffineMaps) {
  std::mt19937_64 rng(1);
  std::normal_distribution<double> g(0.0, 1.0);
  std::vector<ForceVector> y(40), yhat(40);
  for (std::size_t i = 0; i < 40; ++i)
    for (std::size_t j = 0; j < kForceDim; ++j) {
      y[i][j] = g(rng);
      yhat[i][j] = 0.5 * y[i][j] + g(rng);
    }
  const auto base = pcc(y, yhat);
  const auto moved = pcc(affine(y, 7.5, -2.0), affine(yhat, 0.01, 40.0));
  for (std::size_t j = 0; j < kForceDim; ++j) EXPECT_NEAR(base[j].value(), moved[j].value(), 1e-12);
}

TEST(Pcc, ConstantSignalIsUndefined) {
  const auto y = wave(10);
  std::vector<ForceVector> flat(10);
  const auto p = pcc(y, flat);
  for (const auto& v : p) EXPECT_FALSE(v.has_value());
  const auto s = summarize(p);
  EXPECT_EQ(s.undefined, kForceDim);
  EXPECT_TRUE(std::isnan(s.mean));
}

TEST(Mre, HandCases) {
  const double delta = 1e-3;
  std::vector<ForceVector> y(1), yhat(1);
  for (double v : {mre(y, y, delta)}) EXPECT_EQ(v, 0.0);
  yhat[0][0] = 1e-3;
  EXPECT_EQ(mre(y, yhat, delta), 1.0);

  std::vector<ForceVector> y2(2), e2(2);
  for (auto& r : e2) r[0] = r[1] = -1e-3;
  EXPECT_EQ(mre(y2, e2, delta), 2.0);
  EXPECT_THROW(mre(y, yhat, 0.0), Error);
}

TEST(Mre, ScalesWithInverseDelta) {
  const auto y = wave(12), yhat = wave(12, 0.4);
  EXPECT_NEAR(mre(y, yhat, 1e-3), 10.0 * mre(y, yhat, 1e-2), 1e-9);
}

TEST(L2, PerComponent) {
  std::vector<ForceVector> y(1), e(1);
  e[0][0] = 3.0;
  e[0][1] = 4.0;
  const auto l = l2_per_component(y, e);
  EXPECT_EQ(l[0], 3.0);
  EXPECT_EQ(l[1], 4.0);
  EXPECT_EQ(l[2], 0.0);
  std::vector<ForceVector> y2(2), e2(2);
  e2[0][5] = e2[1][5] = 1.0;
  EXPECT_DOUBLE_EQ(l2_per_component(y2, e2)[5], std::sqrt(2.0));
}

TEST(Summary, MaxMinMean) {
  const PerComponent c{0.3, 0.3, 0.3, 0.3, 0.3, 0.3};
  const auto s = summarize(c);
  EXPECT_EQ(s.max, 0.3);
  EXPECT_EQ(s.min, 0.3);
  EXPECT_NEAR(s.mean, 0.3, 1e-15);
  const PerComponent v{0.2674, 0.8957, 0.5, 0.61, 0.44, 0.3};
  const auto t = summarize(v);
  EXPECT_EQ(t.max, 0.8957);
  EXPECT_EQ(t.min, 0.2674);
  EXPECT_NEAR(t.mean, (0.2674 + 0.8957 + 0.5 + 0.61 + 0.44 + 0.3) / 6.0, 1e-15);
}

TEST(Physical, RmseScalesExactly) {
  const auto y = wave(30), yhat = wave(30, 0.2);
  const std::array<double, kForceDim> scale{1.25, 0.5, 0.3, 0.02, 0.07, 0.011};
  const auto r = evaluate_metrics(y, yhat, scale);
  std::vector<ForceVector> yp, yhp;
  for (std::size_t i = 0; i < y.size(); ++i) {
    ForceVector a, b;
    for (std::size_t j = 0; j < kForceDim; ++j) {
      a[j] = y[i][j] * scale[j] + 1.0;
      b[j] = yhat[i][j] * scale[j] + 1.0;
    }
    yp.push_back(a);
    yhp.push_back(b);
  }
  const auto direct = rmse_metric(yp, yhp);
  for (std::size_t j = 0; j < kForceDim; ++j) EXPECT_NEAR(r.rmse_physical[j], direct[j], 1e-12);
}
