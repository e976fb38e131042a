#include <gtest/gtest.h>

#include <cmath>

#include "vbfs/synthgen.hpp"

using namespace vbfs;

namespace {

ToolState resting(double z, double rest = 0.0) {
  ToolState s;
  s.p = {0.0, 0.0, z};
  s.rest_z = rest;
  return s;
}

}  // namespace

TEST(ForceOracle, NoContactIsZero) {
  const SceneConfig sc;
  for (double v : force_oracle(resting(0.005), sc).components) EXPECT_EQ(v, 0.0);
}

TEST(ForceOracle, StaticPush) {
  SceneConfig sc;
  sc.k1 = 500.0;
  sc.k3 = 1e5;
  const auto f = force_oracle(resting(-0.01), sc);
  EXPECT_NEAR(f[2], -5.1, 1e-12);
  EXPECT_EQ(f[0], 0.0);
  EXPECT_EQ(f[1], 0.0);
  const Vec3 tau = cross(sc.lever, {0.0, 0.0, f[2]});
  for (int k = 0; k < 3; ++k) EXPECT_NEAR(f[3 + k], tau[k], 1e-15);
}

TEST(ForceOracle, GraspedDisplacement) {
  SceneConfig sc;
  sc.ks = 800.0;
  ToolState s = resting(0.0);
  s.grasper = 0;
  s.grasp_point = Vec3{0.0, 0.0, 0.0};
  s.p[0] = 0.002;
  const auto f = force_oracle(s, sc);
  EXPECT_NEAR(f[0], -1.6, 1e-12);
  EXPECT_EQ(f[1], 0.0);
  EXPECT_EQ(f[2], 0.0);
  const Vec3 tau = cross(sc.lever, {f[0], 0.0, 0.0});
  for (int k = 0; k < 3; ++k) EXPECT_NEAR(f[3 + k], tau[k], 1e-15);
}

TEST(ForceOracle, FrictionOpposesSliding) {
  const SceneConfig sc;
  ToolState s = resting(-0.005);
  s.v = {0.01, 0.0, 0.0};
  const auto f = force_oracle(s, sc);
  EXPECT_LT(f[0], 0.0);
  EXPECT_LE(std::abs(f[0]), sc.mu * std::abs(f[2]) + 1e-12);
}

TEST(ForceOracle, QuasiStaticCycleIsConservative) {
  SceneConfig sc;
  sc.damping = 0.0;
  const int n = 2000;
  double work = 0.0;
  auto fz = [&](double z) { return force_oracle(resting(z), sc)[2]; };
  for (int pass = 0; pass < 2; ++pass)
    for (int i = 0; i < n; ++i) {
      const double z0 = pass == 0 ? 0.002 - 0.014 * i / n : -0.012 + 0.014 * i / n;
      const double z1 = pass == 0 ? 0.002 - 0.014 * (i + 1) / n : -0.012 + 0.014 * (i + 1) / n;
      work += 0.5 * (fz(z0) + fz(z1)) * (z1 - z0);
    }
  EXPECT_NEAR(work, 0.0, 1e-6);
}

TEST(Render, DeterministicAndShowsIndentation) {
  const SceneConfig sc;
  const MembraneTexture tex(sc);
  const auto a = render_frame(resting(0.0), sc, tex);
  EXPECT_EQ(a.pixels, render_frame(resting(0.0), sc, tex).pixels);
  const auto b = render_frame(resting(-0.01), sc, tex);
  // pixels within the dimple radius of the contact point
  const auto c = project(sc, 0.0, 0.0, 0.0);
  const double radius = 2.0 * sc.dimple_sigma * sc.px_per_m;
  int inside = 0, differ = 0;
  for (int r = 0; r < a.height; ++r)
    for (int q = 0; q < a.width; ++q) {
      if (std::hypot(r - c[0], q - c[1]) > radius) continue;
      ++inside;
      for (int ch = 0; ch < 3; ++ch)
        if (a.at(r, q, ch) != b.at(r, q, ch)) {
          ++differ;
          break;
        }
    }
  ASSERT_GT(inside, 0);
  EXPECT_GE(differ, inside / 100 + 1);
}

TEST(Generate, PushingIsDominatedByFz) {
  const SceneConfig sc;
  const auto ep = generate(make_script(Task::pushing, 20.0, 5), sc, 5, "p", nullptr, false);
  double fx = 0, fy = 0, fz = 0;
  for (const auto& f : ep.record.force) {
    fx += std::abs(f[0]);
    fy += std::abs(f[1]);
    fz += std::abs(f[2]);
  }
  EXPECT_GT(fz, 3.0 * fx);
  EXPECT_GT(fz, 3.0 * fy);
}

TEST(Generate, PullingLoadsAllAxesWhileGrasped) {
  const SceneConfig sc;
  const auto ep = generate(make_script(Task::pulling, 20.0, 6), sc, 6, "q", nullptr, false);
  std::array<double, 3> peak{};
  bool grasped = false;
  for (std::size_t i = 0; i < ep.record.force.size(); ++i)
    if (ep.record.tool[i].grasper == 0) {
      grasped = true;
      for (int k = 0; k < 3; ++k) peak[k] = std::max(peak[k], std::abs(ep.record.force[i][k]));
    }
  EXPECT_TRUE(grasped);
  for (double p : peak) EXPECT_GT(p, 0.05);
}

TEST(Generate, SameSeedSameData) {
  SceneConfig sc;
  sc.height = sc.width = 32;
  const auto s = make_script(Task::pulling, 8.0, 9);
  const auto a = generate(s, sc, 9, "x"), b = generate(s, sc, 9, "x");
  ASSERT_EQ(a.record.frames.size(), b.record.frames.size());
  for (std::size_t i = 0; i < a.record.frames.size(); ++i) EXPECT_EQ(a.record.frames[i].pixels, b.record.frames[i].pixels);
  EXPECT_EQ(a.record.force, b.record.force);
}

TEST(Generate, ForcesStayInsideSensorEnvelope) {
  const SceneConfig sc;
  for (const auto& p : default_plan(1)) {
    const auto ep = generate(make_script(p.task, p.duration, p.seed), sc, p.seed, p.id, nullptr, false);
    for (const auto& f : ep.record.force)
      for (int k = 0; k < 3; ++k) {
        EXPECT_GE(f[k], -10.0) << p.id;
        EXPECT_LE(f[k], 2.5) << p.id;
      }
  }
}

TEST(Plan, FortyFourEpisodesWithSeventySevenPercentTraining) {
  const auto plan = default_plan(1);
  ASSERT_EQ(plan.size(), 44u);
  int test = 0, push = 0;
  double train_s = 0, test_s = 0;
  for (const auto& p : plan) {
    test += p.test;
    push += p.task == Task::pushing;
    (p.test ? test_s : train_s) += p.duration;
  }
  EXPECT_EQ(test, 16);
  EXPECT_EQ(push, 28);
  EXPECT_NEAR(train_s / (train_s + test_s), 0.77, 0.01);
}

TEST(Script, ShortEpisodesStillInteract) {
  const auto s = make_script(Task::pushing, 2.0, 3);
  double deepest = 1.0;
  for (const auto& w : s.waypoints) deepest = std::min(deepest, w.p[2] - s.rest_z);
  EXPECT_LT(deepest, 0.0);
}
