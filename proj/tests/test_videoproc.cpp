#include <gtest/gtest.h>

#include <random>

#include "vbfs/videoproc.hpp"

using namespace vbfs;

namespace {

Frame random_rgb(int h, int w, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Frame f(h, w, 3, FrameKind::raw_rgb);
  for (double& p : f.pixels) p = u(rng);
  return f;
}

Frame gray_ramp(int h, int w, double offset) {
  Frame f(h, w, 1, FrameKind::grayscale);
  for (std::size_t i = 0; i < f.pixels.size(); ++i) f.pixels[i] = offset + 1e-3 * double(i);
  return f;
}

// Bright square of side `side` centred at (row, col) on black.
Frame blob(int h, int w, int row, int col, int side) {
  Frame f(h, w, 1, FrameKind::mean_removed);
  for (int r = row - side / 2; r < row - side / 2 + side; ++r)
    for (int c = col - side / 2; c < col - side / 2 + side; ++c)
      if (r >= 0 && r < h && c >= 0 && c < w) f.at(r, c, 0) = 1.0;
  return f;
}

}  // namespace

TEST(MeanFrame, IdenticalFrames) {
  std::mt19937_64 rng(1);
  const Frame f = random_rgb(4, 5, rng);
  std::vector<Frame> v(3, f);
  const auto m = mean_frame_offline(v);
  for (std::size_t i = 0; i < f.pixels.size(); ++i) EXPECT_DOUBLE_EQ(m.pixels.pixels[i], f.pixels[i]);
}

TEST(MeanFrame, ZeroAndOneGiveHalf) {
  std::vector<Frame> v{Frame(2, 2, 3, FrameKind::raw_rgb, 0.0), Frame(2, 2, 3, FrameKind::raw_rgb, 1.0)};
  for (double p : mean_frame_offline(v).pixels.pixels) EXPECT_EQ(p, 0.5);
}

TEST(MeanFrame, OfflineMatchesBruteForce) {
  std::mt19937_64 rng(2);
  std::vector<Frame> v;
  for (int k = 0; k < 10; ++k) v.push_back(random_rgb(6, 7, rng));
  const auto m = mean_frame_offline(v);
  for (std::size_t i = 0; i < v[0].pixels.size(); ++i) {
    double s = 0.0;
    for (const auto& f : v) s += f.pixels[i];
    EXPECT_NEAR(m.pixels.pixels[i], s / 10.0, 1e-12);
  }
}

TEST(MeanFrame, CausalConvergesToOffline) {
  std::mt19937_64 rng(3);
  std::vector<Frame> v;
  for (int k = 0; k < 300; ++k) v.push_back(random_rgb(8, 8, rng));
  MeanFrame run;
  run = mean_frame_causal(std::move(run), v[0]);
  EXPECT_EQ(run.count, 1u);
  EXPECT_EQ(run.pixels.pixels, v[0].pixels);
  for (std::size_t k = 1; k < v.size(); ++k) run = mean_frame_causal(std::move(run), v[k]);
  const auto off = mean_frame_offline(v);
  for (std::size_t i = 0; i < off.pixels.pixels.size(); ++i) EXPECT_NEAR(run.pixels.pixels[i], off.pixels.pixels[i], 1e-6);
}

TEST(MeanFrame, CausalConstantStream) {
  const Frame f(3, 3, 3, FrameKind::raw_rgb, 0.4);
  MeanFrame run;
  for (int k = 0; k < 20; ++k) {
    run = mean_frame_causal(std::move(run), f);
    for (double p : run.pixels.pixels) EXPECT_DOUBLE_EQ(p, 0.4);
  }
}

TEST(SubtractMean, Elementwise) {
  std::mt19937_64 rng(4);
  const Frame a = random_rgb(5, 5, rng), b = random_rgb(5, 5, rng);
  MeanFrame m{b, 1};
  const Frame d = subtract_mean(a, m);
  for (std::size_t i = 0; i < a.pixels.size(); ++i) EXPECT_EQ(d.pixels[i], a.pixels[i] - b.pixels[i]);
  for (double p : subtract_mean(a, MeanFrame{a, 1}).pixels) EXPECT_EQ(p, 0.0);
  for (double p : subtract_mean(Frame(2, 2, 3, FrameKind::raw_rgb, 1.0), MeanFrame{Frame(2, 2, 3, FrameKind::raw_rgb), 1}).pixels)
    EXPECT_EQ(p, 1.0);
}

TEST(Grayscale, LumaWeights) {
  Frame red(1, 1, 3, FrameKind::raw_rgb);
  red.at(0, 0, 0) = 1.0;
  EXPECT_DOUBLE_EQ(to_grayscale(red).pixels[0], 0.299);
  Frame gray(1, 1, 3, FrameKind::raw_rgb, 0.37);
  EXPECT_NEAR(to_grayscale(gray).pixels[0], 0.37, 1e-15);
  EXPECT_EQ(to_grayscale(Frame(1, 1, 3, FrameKind::raw_rgb)).pixels[0], 0.0);
}

TEST(SpaceTime, SourceIndices) {
  std::vector<Frame> v;
  for (int k = 0; k < 40; ++k) v.push_back(gray_ramp(4, 4, k));
  const auto off = space_time(v, 15, 15, false);
  EXPECT_EQ(off.sources, (std::array<std::int64_t, 3>{0, 15, 30}));
  const auto cau = space_time(v, 30, 15, true);
  EXPECT_EQ(cau.sources, (std::array<std::int64_t, 3>{0, 15, 30}));
  for (int c = 0; c < 3; ++c)
    for (int r = 0; r < 4; ++r)
      for (int q = 0; q < 4; ++q) EXPECT_EQ(off.pixels.at(r, q, c), v[off.sources[c]].at(r, q, 0));
  EXPECT_THROW(space_time(v, 30, 15, false), Error);
}

TEST(SpaceTime, ConstantVideo) {
  std::vector<Frame> v(5, Frame(3, 3, 3, FrameKind::raw_rgb, 0.25));
  const auto st = space_time(v, 2, 1, false);
  for (int c = 1; c < 3; ++c)
    for (int r = 0; r < 3; ++r)
      for (int q = 0; q < 3; ++q) EXPECT_EQ(st.pixels.at(r, q, c), st.pixels.at(r, q, 0));
}

TEST(CropResize, ConstantAndIdentity) {
  const Frame c(40, 60, 3, FrameKind::space_time, 0.3);
  for (double p : crop_resize(c, RoiBox{20, 30, 20, 30}, 8).pixels) EXPECT_NEAR(p, 0.3, 1e-15);

  const Frame g = gray_ramp(20, 30, 0.0);
  const auto out = crop_resize(g, RoiBox{10, 15, 10, 20}, 10);
  for (int r = 0; r < 10; ++r)
    for (int q = 0; q < 10; ++q) EXPECT_EQ(out.at(r, q, 0), g.at(5 + r, 10 + q, 0));
}

TEST(CropResize, CheckerboardHalvesToBlockAverages) {
  Frame f(16, 16, 1, FrameKind::grayscale);
  for (int r = 0; r < 16; ++r)
    for (int q = 0; q < 16; ++q) f.at(r, q, 0) = ((r + q) % 2) ? 1.0 : 0.0;
  const auto out = crop_resize(f, RoiBox{8, 8, 16, 16}, 8);
  for (int r = 0; r < 8; ++r)
    for (int q = 0; q < 8; ++q) {
      double s = 0.0;
      for (int a = 0; a < 2; ++a)
        for (int b = 0; b < 2; ++b) s += f.at(2 * r + a, 2 * q + b, 0);
      EXPECT_NEAR(out.at(r, q, 0), s / 4.0, 1e-9);
    }
}

TEST(Roi, ClampKeepsBoxInside) {
  const auto b = clamp_box(RoiBox{0, 0, 20, 30}, 64, 64);
  EXPECT_TRUE(b.inside(64, 64));
  EXPECT_EQ(b.top(), 0);
  EXPECT_EQ(b.left(), 0);
  const auto e = clamp_box(RoiBox{70, 70, 20, 30}, 64, 64);
  EXPECT_TRUE(e.inside(64, 64));
}

TEST(Roi, StaticSequenceKeepsBox) {
  std::vector<Frame> v(6, Frame(48, 64, 1, FrameKind::mean_removed));
  const RoiBox start{20, 30, 16, 16};
  for (const auto& r : track_roi(v, start, TrackerConfig{16, 16, 0.8, 0.05, 0.02})) {
    EXPECT_TRUE(r.no_motion);
    EXPECT_EQ(r.box, start);
  }
}

TEST(Roi, MovingBlobTrackedWithinTwoPixels) {
  std::vector<Frame> v;
  std::vector<int> cols;
  for (int k = 0; k < 40; ++k) {
    cols.push_back(15 + 2 * k);
    v.push_back(blob(64, 128, 32, cols.back(), 10));
  }
  const auto res = track_roi(v, std::nullopt, TrackerConfig{20, 20, 0.8, 0.05, 0.02});
  for (std::size_t k = 0; k < v.size(); ++k) {
    EXPECT_FALSE(res[k].no_motion);
    // the blob's pixel centre sits half a pixel left/up of the integer index
    EXPECT_LE(std::abs(res[k].box.center_col - (cols[k] - 0.5)), 2.0) << "frame " << k;
    EXPECT_LE(std::abs(res[k].box.center_row - 31.5), 2.0);
  }
}

TEST(Roi, BlobAtCornerClamped) {
  std::vector<Frame> v{blob(48, 48, 2, 2, 6), blob(48, 48, 2, 2, 6)};
  for (const auto& r : track_roi(v, std::nullopt, TrackerConfig{20, 20, 0.8, 0.05, 0.02}))
    EXPECT_TRUE(r.box.inside(48, 48));
}
