#include <cmath>
#include <set>
#include <vector>

#include <gtest/gtest.h>

#include "ocdepth/decode.hpp"
#include "ocdepth/rng.hpp"
#include "ocdepth/synth.hpp"

using namespace ocdepth;

TEST(Keypoints, LocalMaximaAboveThreshold) {
  Heatmap hm(8, 6, 2);
  hm(2, 2, 0) = 0.9;
  hm(3, 2, 0) = 0.8;  // neighbour of a larger peak
  hm(6, 4, 0) = 0.5;
  hm(1, 1, 1) = 0.3;  // below threshold
  hm(5, 1, 1) = 0.7;
  const auto kps = extract_keypoints(hm, 10, 0.4);
  ASSERT_EQ(kps.size(), 3u);
  EXPECT_EQ(kps[0].x, 2);
  EXPECT_DOUBLE_EQ(kps[0].score, 0.9);
  EXPECT_EQ(kps[1].category, 1);
  EXPECT_EQ(kps[2].x, 6);
}

TEST(Keypoints, TiesKeptAndOrdered) {
  Heatmap hm(5, 3, 2);
  hm(1, 1, 1) = 0.6;
  hm(2, 1, 1) = 0.6;  // plateau: both are maxima
  hm(4, 0, 0) = 0.6;
  const auto kps = extract_keypoints(hm, 10, 0.1);
  ASSERT_EQ(kps.size(), 3u);
  EXPECT_EQ(kps[0].category, 0);
  EXPECT_EQ(kps[1].x, 1);
  EXPECT_EQ(kps[2].x, 2);
}

TEST(Keypoints, TopK) {
  Heatmap hm(20, 20, 1);
  Rng rng(5);
  for (int y = 0; y < 20; y += 3)
    for (int x = 0; x < 20; x += 3) hm(x, y) = uniform(rng, 0.2, 1.0);
  const auto all = extract_keypoints(hm, 1000, 0.0);
  const auto top = extract_keypoints(hm, 5, 0.0);
  ASSERT_EQ(top.size(), 5u);
  for (int i = 0; i < 5; ++i) EXPECT_EQ(top[i].score, all[i].score);
  for (std::size_t i = 1; i < all.size(); ++i) EXPECT_GE(all[i - 1].score, all[i].score);
  EXPECT_THROW(extract_keypoints(hm, 0, 0.1), InvalidArgument);
}

TEST(Confidence, MonotoneAndBounded) {
  double prev = 2.0;
  for (double var = 0.0; var < 10.0; var += 0.25) {
    const double p = depth_confidence(var);
    EXPECT_LT(p, prev);
    EXPECT_LE(p, 1.0);
    EXPECT_GT(p, 0.0);
    prev = p;
  }
  EXPECT_DOUBLE_EQ(depth_confidence(0.0), 1.0);
  EXPECT_THROW(depth_confidence(-1.0), InvalidArgument);
  Rng rng(8);
  for (int i = 0; i < 1000; ++i) {
    const double pk = uniform01(rng), pd = uniform01(rng);
    const double p3 = fuse_confidence(pk, pd);
    EXPECT_LE(p3, std::min(pk, pd) + 1e-15);
  }
}

TEST(Decode, AssemblesBoxAtCellCenter) {
  const CameraIntrinsics cam{700.0, 700.0, 320.0, 96.0, 640, 192};
  RegressionMaps maps(160, 48);
  maps.depth_raw(40, 20) = encode_depth(18.0);
  maps.log_var(40, 20) = std::log(0.5);
  maps.d_s2c(40, 20) = 2.0;
  maps.size(40, 20, 0) = 1.6;
  maps.size(40, 20, 1) = 1.5;
  maps.size(40, 20, 2) = 3.9;
  maps.yaw(40, 20) = 4.0;
  const auto d = decode_detection({40, 20, 0, 0.8}, maps, cam);
  EXPECT_DOUBLE_EQ(d.u, 162.0);
  EXPECT_DOUBLE_EQ(d.v, 82.0);
  EXPECT_EQ(d.category, "Car");
  EXPECT_NEAR(d.d_s, 18.0, 1e-12);
  EXPECT_NEAR(d.d_c, 20.0, 1e-12);
  EXPECT_NEAR(d.variance, 0.5, 1e-15);
  EXPECT_NEAR(d.p_dep, std::exp(-0.5), 1e-15);
  EXPECT_NEAR(d.p_3d, 0.8 * std::exp(-0.5), 1e-15);
  EXPECT_NEAR(d.box.center.z(), 20.0, 1e-12);
  EXPECT_NEAR(d.box.yaw, 4.0 - 2.0 * kPi, 1e-12);
  const auto p = project(cam, d.box.center);
  EXPECT_NEAR(p.u, 162.0, 1e-9);
  EXPECT_THROW(decode_detection({160, 0, 0, 0.9}, maps, cam), InvalidArgument);
}

TEST(Decode, SynthTargetsAreFixpoint) {
  synth::SceneConfig cfg;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    const auto s = synth::generate_scene(cfg, seed);
    const auto maps = synth::target_maps(s);
    for (std::size_t i = 0; i < s.targets.size(); ++i) {
      const auto& t = s.targets[i];
      const auto d = decode_detection({t.cell.x, t.cell.y, t.category, 1.0}, maps, s.cam);
      EXPECT_LE((d.box.center - s.boxes[i].center).norm(), 1e-6) << "seed " << seed << " box " << i;
      EXPECT_EQ(d.category, s.boxes[i].category);
      EXPECT_NEAR(d.box.size.l, s.boxes[i].size.l, 1e-12);
    }
  }
}

TEST(Decode, HeatmapPeaksRecoverSynthTargets) {
  synth::SceneConfig cfg;
  const auto s = synth::generate_scene(cfg, 3);
  const auto dets = decode_all(synth::target_heatmap(s), synth::target_maps(s), s.cam);
  std::set<std::pair<int, int>> want, got;
  for (const auto& t : s.targets) want.insert({t.cell.x, t.cell.y});
  for (const auto& d : dets) got.insert({static_cast<int>(d.u / 4), static_cast<int>(d.v / 4)});
  for (const auto& c : want) EXPECT_TRUE(got.count(c));
}

TEST(Filter, ThresholdAndOrder) {
  std::vector<Detection> dets(4);
  const double pk[] = {0.9, 0.3, 0.5, 0.6};
  const double pd[] = {0.2, 0.9, 0.9, 0.5};
  for (int i = 0; i < 4; ++i) {
    dets[i].p_k = pk[i];
    dets[i].p_dep = pd[i];
    dets[i].u = i;
  }
  const auto out = filter_detections(dets, kKittiPreThreshold);
  ASSERT_EQ(out.size(), 3u);
  EXPECT_EQ(out[0].u, 2);  // 0.45
  EXPECT_EQ(out[1].u, 3);  // 0.30
  EXPECT_EQ(out[2].u, 0);  // 0.18
  EXPECT_EQ(filter_detections(dets, kNuScenesPreThreshold).size(), 4u);
}
