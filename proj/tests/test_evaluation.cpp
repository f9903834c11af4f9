#include <cmath>
#include <vector>

#include <gtest/gtest.h>

#include "ocdepth/evaluation.hpp"
#include "ocdepth/rng.hpp"
#include "ocdepth/serialization.hpp"
#include "oracles.hpp"

using namespace ocdepth;

namespace {

Box3D car_at(double x, double z, double yaw = 0.0) {
  Box3D b;
  b.center = {x, 1.0, z};
  b.size = {1.6, 1.5, 3.9};
  b.yaw = yaw;
  b.category = "Car";
  return b;
}

}  // namespace

TEST(Ap40, MatchesBruteForce) {
  Rng rng(31);
  for (int inst = 0; inst < 200; ++inst) {
    const std::size_t gt = 1 + uniform_index(rng, 20);
    const std::size_t n = uniform_index(rng, 41);
    std::vector<ScoredMatch> m;
    std::vector<double> scores;
    std::vector<bool> tp;
    std::size_t n_tp = 0;
    for (std::size_t i = 0; i < n; ++i) {
      // coarse scores create ties
      const double s = std::round(uniform01(rng) * 20.0) / 20.0;
      const bool t = n_tp < gt && uniform01(rng) < 0.6;
      m.push_back({s, t});
      scores.push_back(s);
      tp.push_back(t);
      n_tp += t;
    }
    EXPECT_NEAR(*ap40(m, gt), oracle::brute_force_ap40(scores, tp, gt), 1e-12) << "instance " << inst;
  }
}

TEST(Ap40, NonIncreasingInIouThreshold) {
  Rng rng(17);
  for (int inst = 0; inst < 50; ++inst) {
    EvalFrame f;
    for (int i = 0; i < 6; ++i) {
      Box3D g = car_at(uniform(rng, -10, 10), uniform(rng, 10, 50), uniform(rng, -kPi, kPi));
      f.gts.push_back(g);
      f.gt_difficulty.push_back(kitti::Difficulty::Easy);
      Box3D d = g;
      d.center += Vec3{normal(rng, 0, 0.4), 0.0, normal(rng, 0, 0.8)};
      d.yaw += normal(rng, 0, 0.2);
      f.dets.push_back({d, uniform01(rng)});
    }
    const std::vector<EvalFrame> frames{f};
    double prev = 2.0;
    for (double thr = 0.05; thr < 1.0; thr += 0.05) {
      const double ap = *evaluate_category(frames, "Car", MatchCriterion::Iou3d, thr, std::nullopt, {}).ap40;
      EXPECT_LE(ap, prev + 1e-12);
      prev = ap;
    }
  }
}

TEST(Ap40, HandCases) {
  EXPECT_DOUBLE_EQ(*ap40({{0.9, true}}, 2), 0.5);
  EXPECT_DOUBLE_EQ(*ap40({{0.9, true}, {0.8, true}}, 2), 1.0);
  EXPECT_DOUBLE_EQ(*ap40({{0.9, false}, {0.8, true}}, 1), 0.5);
  EXPECT_DOUBLE_EQ(*ap40({}, 3), 0.0);
  EXPECT_FALSE(ap40({{0.5, false}}, 0).has_value());
  // tied scores form one operating point
  EXPECT_DOUBLE_EQ(*ap40({{0.5, true}, {0.5, false}}, 1), 0.5);
}

TEST(PrCurve, MaxRecallAtPrecisionFloor) {
  std::vector<ScoredMatch> m{{0.9, true}};
  for (int i = 0; i < 20; ++i) m.push_back({0.5 - 0.01 * i, false});
  m.push_back({0.1, true});
  const auto pr = pr_curve(m, 4);
  EXPECT_DOUBLE_EQ(max_recall_at_precision(pr, 0.1), 0.25);
  EXPECT_DOUBLE_EQ(max_recall_at_precision(pr, 0.05), 0.5);
}

TEST(Matching, GreedyByScoreAndCategory) {
  const std::vector<Box3D> gts{car_at(0, 20), car_at(5, 20)};
  std::vector<ScoredBox> dets{{car_at(0.1, 20), 0.9}, {car_at(0.05, 20), 0.8}, {car_at(5, 20.2), 0.7}};
  auto ped = car_at(5, 20);
  ped.category = "Pedestrian";
  dets.push_back({ped, 0.95});
  const auto r = match(gts, dets, MatchCriterion::Iou3d, 0.7);
  EXPECT_EQ(r.matched[0], 0);
  EXPECT_EQ(r.matched[1], -1);  // its gt was taken by a higher score
  EXPECT_EQ(r.matched[2], 1);
  EXPECT_EQ(r.matched[3], -1);
}

TEST(Matching, CenterDistanceCriterion) {
  const std::vector<Box3D> gts{car_at(0, 20)};
  const std::vector<ScoredBox> near{{car_at(1.5, 20, 1.0), 0.5}}, far{{car_at(2.5, 20), 0.5}};
  EXPECT_EQ(match(gts, near, MatchCriterion::CenterDistance, 2.0).matched[0], 0);
  EXPECT_EQ(match(gts, far, MatchCriterion::CenterDistance, 2.0).matched[0], -1);
  EXPECT_EQ(match(gts, near, MatchCriterion::IouBev, 0.1).matched[0], 0);
}

TEST(DepthMetrics, HandCase) {
  const std::vector<double> gt{10.0}, pred{11.0};
  const auto m = depth_metrics(pred, gt);
  EXPECT_NEAR(m.abs_rel, 0.1, 1e-15);
  EXPECT_NEAR(m.sq_rel, 0.1, 1e-15);
  EXPECT_NEAR(m.rmse, 1.0, 1e-15);
  EXPECT_NEAR(m.rmse_log, std::log(1.1), 1e-15);
  EXPECT_DOUBLE_EQ(m.delta_110, 0.0);  // ratio 1.1 is not strictly below
  EXPECT_DOUBLE_EQ(m.delta_125, 1.0);
  // argument order matters: abs rel is relative to the ground truth
  EXPECT_NEAR(depth_metrics(gt, pred).abs_rel, 1.0 / 11.0, 1e-15);
  EXPECT_THROW(depth_metrics(std::vector<double>{}, std::vector<double>{}), InvalidArgument);
  EXPECT_THROW(depth_metrics(std::vector<double>{0.0}, gt), InvalidArgument);
}

TEST(DepthMetrics, ThresholdFractionsMatchOracle) {
  Rng rng(2);
  std::vector<double> p, g;
  for (int i = 0; i < 1000; ++i) {
    g.push_back(uniform(rng, 1, 80));
    p.push_back(g.back() * std::exp(normal(rng, 0.0, 0.2)));
  }
  const auto m = depth_metrics(p, g);
  EXPECT_DOUBLE_EQ(m.delta_110, oracle::delta_ratio(p, g, 1.10));
  EXPECT_DOUBLE_EQ(m.delta_125, oracle::delta_ratio(p, g, 1.25));
  EXPECT_DOUBLE_EQ(m.delta_125_2, oracle::delta_ratio(p, g, 1.5625));
  EXPECT_DOUBLE_EQ(m.delta_125_3, oracle::delta_ratio(p, g, 1.953125));
  EXPECT_LE(m.delta_110, m.delta_125);
  EXPECT_LE(m.delta_125, m.delta_125_2);
}

TEST(Table, MatchesPublishedValues) {
  const auto t = surface_error_iou_table(kTable3Classes, kTable3Errors);
  for (std::size_t c = 0; c < t.cells.size(); ++c)
    for (std::size_t e = 0; e < t.errors.size(); ++e)
      EXPECT_NEAR(t.cells[c][e], kTable3Published[c][e], 0.01) << t.classes[c].category << " " << t.errors[e];
}

TEST(Table, ClosedFormAlongHeading) {
  // shifting by e along the length gives (l - e) / (l + e)
  const std::vector<ClassDims> cls{{"X", 1.0, 1.0, 4.0}};
  const auto t = surface_error_iou_table(cls, {0.0, 1.0, 2.0, 4.0, 5.0});
  EXPECT_NEAR(t.cells[0][0], 1.0, 1e-9);
  EXPECT_NEAR(t.cells[0][1], 3.0 / 5.0, 1e-9);
  EXPECT_NEAR(t.cells[0][2], 1.0 / 3.0, 1e-9);  // e = l / 2
  EXPECT_NEAR(t.cells[0][3], 0.0, 1e-9);
  EXPECT_NEAR(t.cells[0][4], 0.0, 1e-9);
  EXPECT_DOUBLE_EQ(t.half_length[0], 2.0);
}

TEST(Table, CsvRoundTrip) {
  const auto t = surface_error_iou_table(kTable3Classes, kTable3Errors);
  const auto back = io::table_from_csv(io::to_csv(t));
  ASSERT_EQ(back.classes.size(), t.classes.size());
  EXPECT_EQ(back.errors, t.errors);
  EXPECT_EQ(back.cells, t.cells);
  EXPECT_EQ(back.half_length, t.half_length);
  EXPECT_THROW(io::table_from_csv("category,l\nCar"), FormatError);
}

TEST(TpMetrics, HandCase) {
  auto gt = car_at(0, 20), pred = car_at(3, 24, 0.5);
  pred.size = {1.6, 1.5, 1.95};
  const std::vector<MatchedPair> pairs{{gt, pred}};
  const auto m = tp_metrics(pairs);
  ASSERT_TRUE(m);
  EXPECT_NEAR(m->ate, 5.0, 1e-12);
  EXPECT_NEAR(m->ase, 0.5, 1e-12);
  EXPECT_NEAR(m->aoe, 0.5, 1e-12);
  EXPECT_FALSE(tp_metrics({}).has_value());
  const auto polar = radial_tangential_mae(pairs);
  ASSERT_TRUE(polar);
  EXPECT_NEAR(polar->radial, 4.0, 1e-12);
  EXPECT_NEAR(polar->tangential, 3.0, 1e-12);
}

TEST(Evaluate, IgnoredGroundTruthIsDontCare) {
  EvalFrame f;
  f.id = "000000";
  f.gts = {car_at(0, 20), car_at(6, 30)};
  f.gt_difficulty = {kitti::Difficulty::Easy, kitti::Difficulty::Hard};
  f.dets = {{car_at(0, 20), 0.9}, {car_at(6, 30), 0.8}, {car_at(-8, 40), 0.1}};
  const std::vector<EvalFrame> frames{f};
  const auto easy = evaluate_category(frames, "Car", MatchCriterion::Iou3d, 0.7, kitti::Difficulty::Easy, {});
  EXPECT_EQ(easy.num_gt, 1u);
  EXPECT_EQ(easy.num_det, 2u);  // the hard match is neither TP nor FP
  EXPECT_DOUBLE_EQ(*easy.ap40, 1.0);
  const auto hard = evaluate_category(frames, "Car", MatchCriterion::Iou3d, 0.7, kitti::Difficulty::Hard, {});
  EXPECT_EQ(hard.num_gt, 2u);
  EXPECT_EQ(hard.num_det, 3u);
}

TEST(Evaluate, RangeBuckets) {
  EvalFrame f;
  f.gts = {car_at(0, 20), car_at(0, 45)};
  f.gt_difficulty = {kitti::Difficulty::Easy, kitti::Difficulty::Easy};
  f.dets = {{car_at(0, 20), 0.9}, {car_at(10, 60), 0.5}};
  const std::vector<EvalFrame> frames{f};
  const auto near = evaluate_category(frames, "Car", MatchCriterion::Iou3d, 0.7, std::nullopt, {0.0, 30.0});
  EXPECT_EQ(near.num_gt, 1u);
  EXPECT_EQ(near.num_det, 1u);
  const auto far = evaluate_category(frames, "Car", MatchCriterion::Iou3d, 0.7, std::nullopt, {30.0, 1e9});
  EXPECT_EQ(far.num_gt, 1u);
  EXPECT_EQ(far.num_det, 1u);
  EXPECT_DOUBLE_EQ(*far.ap40, 0.0);
}

TEST(Evaluate, ReportLayoutAndSerialization) {
  EvalFrame f;
  f.gts = {car_at(0, 20)};
  f.gt_difficulty = {kitti::Difficulty::Easy};
  f.dets = {{car_at(0, 20), 0.9}};
  const std::vector<EvalFrame> frames{f};
  EvalOptions opt;
  const auto r = evaluate(frames, opt);
  ASSERT_EQ(r.rows.size(), 9u);
  EXPECT_EQ(r.rows[0].category, "Car");
  EXPECT_EQ(r.rows[0].difficulty, "Easy");
  EXPECT_DOUBLE_EQ(r.rows[0].threshold, 0.7);
  EXPECT_DOUBLE_EQ(r.rows[3].threshold, 0.5);
  EXPECT_FALSE(r.rows[3].result.ap40.has_value());
  const auto j = io::to_json(r);
  EXPECT_TRUE(j["rows"][3]["ap40"].is_null());
  EXPECT_DOUBLE_EQ(j["rows"][0]["ap40"].get<double>(), 1.0);
  const auto csv = io::to_csv(r);
  EXPECT_EQ(csv.substr(0, csv.find('\n')), io::kReportCsvHeader);
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 10);
}
