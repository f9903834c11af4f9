#include <array>
#include <cmath>

#include <gtest/gtest.h>

#include "ocdepth/depth_io.hpp"
#include "ocdepth/depth_pipeline.hpp"
#include "ocdepth/rng.hpp"

using namespace ocdepth;

namespace {

const CameraIntrinsics kCam{100.0, 100.0, 32.0, 16.0, 64, 32};

PointCloud random_cloud(Rng& rng, int n) {
  PointCloud pc;
  for (int i = 0; i < n; ++i) {
    const double z = uniform(rng, 1.0, 85.0);
    const Vec3 p = unproject(kCam, uniform(rng, 0.0, 64.0), uniform(rng, 0.0, 32.0), z);
    pc.points.push_back(p);
  }
  return pc;
}

}  // namespace

TEST(DepthMap, NearestPointWins) {
  PointCloud pc;
  pc.points = {unproject(kCam, 10.5, 5.5, 20.0), unproject(kCam, 10.2, 5.9, 12.0), unproject(kCam, 10.7, 5.1, 30.0)};
  const auto d = build_depth_map(pc, kCam);
  EXPECT_TRUE(d.valid(10, 5));
  EXPECT_DOUBLE_EQ(d.depth(10, 5), 12.0);
  EXPECT_EQ(d.source(10, 5), 1);
  EXPECT_EQ(d.count(d.valid), 1u);
}

TEST(DepthMap, DropsOutOfRangeAndBehind) {
  PointCloud pc;
  pc.points = {Vec3{0, 0, -5}, unproject(kCam, 5.5, 5.5, 81.0), unproject(kCam, -3, 5.5, 10.0), unproject(kCam, 5.5, 5.5, 80.0)};
  const auto d = build_depth_map(pc, kCam, 80.0);
  EXPECT_EQ(d.count(d.valid), 1u);
  EXPECT_DOUBLE_EQ(d.depth(5, 5), 80.0);
}

TEST(DepthMap, EmptyCloudGivesEmptyImage) {
  const auto d = build_depth_map({}, kCam);
  EXPECT_EQ(d.count(d.valid), 0u);
  EXPECT_EQ(d.width(), 64);
}

TEST(MinPool, BlockMinimumAndMaskFollow) {
  DepthImage d(8, 4);
  d.depth(1, 1) = 30.0;
  d.valid(1, 1) = 1;
  d.depth(2, 3) = 10.0;
  d.valid(2, 3) = 1;
  d.fg(2, 3) = 1;
  d.source(2, 3) = 42;
  d.depth(5, 0) = 7.0;
  d.valid(5, 0) = 1;
  const auto p = minpool_downsample(d, 4);
  ASSERT_EQ(p.width(), 2);
  ASSERT_EQ(p.height(), 1);
  EXPECT_EQ(p.stride, 4);
  EXPECT_DOUBLE_EQ(p.depth(0, 0), 10.0);
  EXPECT_TRUE(p.fg(0, 0));
  EXPECT_EQ(p.source(0, 0), 42);
  EXPECT_DOUBLE_EQ(p.depth(1, 0), 7.0);
  EXPECT_FALSE(p.fg(1, 0));
}

TEST(MinPool, EqualsBruteForceOnRandomImages) {
  Rng rng(4);
  for (int t = 0; t < 20; ++t) {
    const auto d = build_depth_map(random_cloud(rng, 800), kCam);
    const auto p = minpool_downsample(d, 4);
    for (int by = 0; by < p.height(); ++by) {
      for (int bx = 0; bx < p.width(); ++bx) {
        double best = INFINITY;
        for (int y = 4 * by; y < 4 * by + 4; ++y)
          for (int x = 4 * bx; x < 4 * bx + 4; ++x)
            if (d.valid(x, y)) best = std::min(best, d.depth(x, y));
        EXPECT_EQ(p.valid(bx, by) != 0, std::isfinite(best));
        if (std::isfinite(best)) {
          EXPECT_EQ(p.depth(bx, by), best);
        }
      }
    }
  }
}

TEST(MinPool, FactorOneIsIdentityAndNonDivisorThrows) {
  Rng rng(1);
  const auto d = build_depth_map(random_cloud(rng, 100), kCam);
  EXPECT_EQ(minpool_downsample(d, 1), d);
  EXPECT_THROW(minpool_downsample(d, 3), InvalidArgument);
  EXPECT_THROW(minpool_downsample(d, 0), InvalidArgument);
}

TEST(ForegroundMask, PointsInsideBoxes) {
  Box3D box;
  box.center = {0.0, 0.0, 20.0};
  box.size = {2.0, 2.0, 4.0};
  Rng rng(2);
  const auto pc = random_cloud(rng, 3000);
  const auto d = foreground_mask(minpool_downsample(build_depth_map(pc, kCam), 4), pc, {box}, kCam);
  std::size_t fg = 0;
  for (std::size_t i = 0; i < d.depth.size(); ++i) {
    if (!d.valid[i]) {
      EXPECT_FALSE(d.fg[i]);
      continue;
    }
    EXPECT_EQ(d.fg[i] != 0, contains(box, pc.points[d.source[i]]));
    fg += d.fg[i];
  }
  EXPECT_EQ(d.count(d.bg), 0u);
  EXPECT_EQ(fg, d.count(d.fg));
}

TEST(ForegroundMask, NoBoxesNoForeground) {
  Rng rng(2);
  const auto pc = random_cloud(rng, 500);
  const auto d = foreground_mask(build_depth_map(pc, kCam), pc, {}, kCam);
  EXPECT_EQ(d.count(d.fg), 0u);
}

TEST(ForegroundMask, FallsBackToCellCenterWithoutSource) {
  DepthImage d(16, 8, 4);
  d.depth(8, 4) = 20.0;
  d.valid(8, 4) = 1;
  Box3D box;
  box.center = unproject(kCam, 4 * 8.5, 4 * 4.5, 20.0);
  box.size = {1.0, 1.0, 1.0};
  const auto m = foreground_mask(d, {}, {box}, kCam);
  EXPECT_TRUE(m.fg(8, 4));
}

TEST(BackgroundSubsample, FlattensBins) {
  Rng rng(6);
  for (int t = 0; t < 10; ++t) {
    const auto pc = random_cloud(rng, 1500);
    const auto d = background_subsample(build_depth_map(pc, kCam), 100 + t);
    std::array<std::size_t, 8> cand{}, kept{};
    for (std::size_t i = 0; i < d.depth.size(); ++i) {
      if (!d.valid[i]) {
        EXPECT_FALSE(d.bg[i]);
        continue;
      }
      const int b = std::min(7, static_cast<int>(d.depth[i] / 10.0));
      ++cand[b];
      kept[b] += d.bg[i];
    }
    std::size_t smallest = SIZE_MAX;
    for (auto c : cand)
      if (c) smallest = std::min(smallest, c);
    for (int b = 0; b < 8; ++b) EXPECT_EQ(kept[b], cand[b] ? smallest : 0u) << "bin " << b;
  }
}

TEST(BackgroundSubsample, DeterministicAndSeedSensitive) {
  Rng rng(6);
  const auto d = build_depth_map(random_cloud(rng, 1500), kCam);
  const auto a = background_subsample(d, 5), b = background_subsample(d, 5), c = background_subsample(d, 6);
  EXPECT_EQ(a, b);
  EXPECT_NE(a.bg, c.bg);
}

TEST(BackgroundSubsample, ExcludesForeground) {
  DepthImage d(4, 1);
  for (int x = 0; x < 4; ++x) {
    d.depth(x, 0) = 5.0 + 10.0 * x;
    d.valid(x, 0) = 1;
  }
  d.fg(0, 0) = 1;
  const auto out = background_subsample(d, 1);
  EXPECT_FALSE(out.bg(0, 0));
  EXPECT_EQ(out.count(out.bg), 3u);
}

TEST(BackgroundSubsample, NoCandidates) {
  DepthImage d(4, 4);
  EXPECT_EQ(background_subsample(d, 1).count(d.bg), 0u);
}

TEST(Augment, HflipIsInvolution) {
  Rng rng(9);
  AugScene s{kCam, {}, {}, random_cloud(rng, 500)};
  s.cam.cx = 30.3;
  Box3D b;
  b.center = {2.0, 1.0, 15.0};
  b.size = {1.6, 1.5, 3.9};
  b.yaw = 0.4;
  s.boxes.push_back(b);
  s.depth = foreground_mask(build_depth_map(s.points, s.cam), s.points, s.boxes, s.cam);
  const auto twice = hflip(hflip(s));
  EXPECT_DOUBLE_EQ(twice.cam.cx, s.cam.cx);
  EXPECT_EQ(twice.depth, s.depth);
  EXPECT_NEAR(twice.boxes[0].yaw, b.yaw, 1e-12);
  EXPECT_EQ(twice.boxes[0].center, b.center);
}

TEST(Augment, HflipKeepsProjectionsConsistent) {
  Rng rng(10);
  AugScene s{kCam, {}, {}, random_cloud(rng, 400)};
  s.cam.cx = 29.0;
  s.depth = build_depth_map(s.points, s.cam);
  const auto f = hflip(s);
  // the flipped cloud rendered with the flipped camera equals the mirrored grid
  EXPECT_EQ(build_depth_map(f.points, f.cam).depth, f.depth.depth);
  for (std::size_t i = 0; i < s.points.points.size(); ++i) {
    const auto a = project(s.cam, s.points.points[i]);
    const auto b = project(f.cam, f.points.points[i]);
    EXPECT_NEAR(b.u, s.cam.width - a.u, 1e-9);
    EXPECT_NEAR(b.v, a.v, 1e-12);
  }
}

TEST(Augment, HflipMirrorsHeading) {
  AugScene s{kCam, {}, {}, {}};
  s.depth = DepthImage(64, 32);
  Box3D b;
  b.center = {3.0, 1.0, 20.0};
  b.size = {1.6, 1.5, 3.9};
  b.yaw = 0.3;
  s.boxes.push_back(b);
  const auto f = hflip(s);
  const auto c0 = box_corners(b);
  const auto c1 = box_corners(f.boxes[0]);
  // corner sets are mirror images (as sets)
  for (const auto& p : c0) {
    bool found = false;
    for (const auto& q : c1) found = found || (Vec3{-p.x(), p.y(), p.z()} - q).norm() < 1e-9;
    EXPECT_TRUE(found);
  }
}

TEST(Augment, ScaleDividesDepth) {
  Rng rng(12);
  AugScene s{kCam, {}, {}, random_cloud(rng, 2000)};
  s.depth = minpool_downsample(build_depth_map(s.points, s.cam), 4);
  const auto up = scale_augment(s, 2.0);
  for (int y = 0; y < up.depth.height(); ++y)
    for (int x = 0; x < up.depth.width(); ++x)
      if (up.depth.valid(x, y)) {
        EXPECT_NEAR(up.depth.depth(x, y), up.points.points[up.depth.source(x, y)].z(), 1e-12);
      }
  const auto same = scale_augment(s, 1.0);
  EXPECT_EQ(same.depth, s.depth);
  EXPECT_THROW(scale_augment(s, 0.0), InvalidArgument);
  EXPECT_THROW(scale_augment(s, -1.0), InvalidArgument);
}

TEST(Augment, ScaleKeepsBoxProjection) {
  AugScene s{kCam, {}, DepthImage(64, 32), {}};
  Box3D b;
  b.center = {2.0, 1.0, 20.0};
  b.size = {1.6, 1.5, 3.9};
  s.boxes.push_back(b);
  const double s_ = 1.25;
  const auto out = scale_augment(s, s_);
  const auto p0 = project(kCam, b.center), p1 = project(kCam, out.boxes[0].center);
  EXPECT_NEAR(p1.u - kCam.cx, s_ * (p0.u - kCam.cx), 1e-9);
  EXPECT_NEAR(p1.depth, b.center.z() / s_, 1e-12);
}

TEST(DepthIo, RoundTrip) {
  Rng rng(13);
  const auto pc = random_cloud(rng, 2000);
  Box3D box;
  box.center = {0.0, 0.0, 20.0};
  box.size = {4.0, 4.0, 8.0};
  auto d = foreground_mask(minpool_downsample(build_depth_map(pc, kCam), 4), pc, {box}, kCam);
  d = background_subsample(std::move(d), 3);
  const auto bytes = encode_depth_image(d);
  const auto back = decode_depth_image(bytes);
  EXPECT_EQ(back.width(), d.width());
  EXPECT_EQ(back.stride, d.stride);
  EXPECT_EQ(back.valid, d.valid);
  EXPECT_EQ(back.fg, d.fg);
  EXPECT_EQ(back.bg, d.bg);
  for (std::size_t i = 0; i < d.depth.size(); ++i)
    if (d.valid[i]) {
      EXPECT_NEAR(back.depth[i], d.depth[i], 0.5 / 256.0);
    }
  EXPECT_EQ(encode_depth_image(back), bytes);
}

TEST(DepthIo, RejectsCorruptInput) {
  DepthImage d(8, 4, 4);
  auto bytes = encode_depth_image(d);
  auto bad = bytes;
  bad[0] = 'X';
  EXPECT_THROW(decode_depth_image(bad), FormatError);
  bytes.pop_back();
  EXPECT_THROW(decode_depth_image(bytes), FormatError);
  EXPECT_THROW(decode_depth_image({}), FormatError);
}
