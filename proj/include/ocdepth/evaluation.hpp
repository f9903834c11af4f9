#pragma once

// Detection and depth metrics: greedy matching, AP at 40 recall points,
// maximum recall at a precision floor, radial/tangential MAE, TP errors,
// depth-estimation metrics and the surface-to-center IoU table.

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ocdepth/geometry.hpp"
#include "ocdepth/kitti_io.hpp"

namespace ocdepth {

enum class MatchCriterion { Iou3d, IouBev, CenterDistance };

inline const char* to_string(MatchCriterion c) {
  switch (c) {
    case MatchCriterion::Iou3d: return "iou3d";
    case MatchCriterion::IouBev: return "iou_bev";
    case MatchCriterion::CenterDistance: return "center_distance";
  }
  return "iou3d";
}

struct RangeBucket {
  double min = 0.0;
  double max = std::numeric_limits<double>::infinity();

  bool contains(double r) const { return r >= min && r < max; }
};

struct MatchSpec {
  MatchCriterion criterion = MatchCriterion::Iou3d;
  double threshold = 0.7;  // IoU ratio, or meters for center distance
  std::optional<kitti::Difficulty> difficulty;  // cumulative; empty = all
  std::vector<RangeBucket> buckets{RangeBucket{}};
};

struct ScoredBox {
  Box3D box;
  double score = 0.0;
};

/// Match quality; larger is better. Center distance is negated.
inline double match_quality(MatchCriterion c, const Box3D& gt, const Box3D& det) {
  switch (c) {
    case MatchCriterion::Iou3d: return iou_3d(gt, det);
    case MatchCriterion::IouBev: return bev_iou(gt, det);
    case MatchCriterion::CenterDistance: return -(bev_center(gt) - bev_center(det)).norm();
  }
  return 0.0;
}

inline bool meets_threshold(MatchCriterion c, double quality, double threshold) {
  return c == MatchCriterion::CenterDistance ? -quality <= threshold : quality >= threshold;
}

/// matched[i] is the gt index claimed by det i, or -1.
struct MatchResult {
  std::vector<int> matched;
};

/// Greedy matching: detections in the given order (highest confidence first)
/// each claim the best still-unmatched gt of the same category that meets the
/// threshold. Ties go to the lowest gt index.
inline MatchResult match(std::span<const Box3D> gts, std::span<const ScoredBox> dets, MatchCriterion criterion,
                         double threshold) {
  MatchResult out{std::vector<int>(dets.size(), -1)};
  std::vector<bool> taken(gts.size(), false);
  for (std::size_t d = 0; d < dets.size(); ++d) {
    int best = -1;
    double best_q = -std::numeric_limits<double>::infinity();
    for (std::size_t g = 0; g < gts.size(); ++g) {
      if (taken[g] || gts[g].category != dets[d].box.category) continue;
      const double q = match_quality(criterion, gts[g], dets[d].box);
      if (meets_threshold(criterion, q, threshold) && q > best_q) {
        best = static_cast<int>(g);
        best_q = q;
      }
    }
    if (best >= 0) {
      taken[best] = true;
      out.matched[d] = best;
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Precision / recall

struct ScoredMatch {
  double score = 0.0;
  bool tp = false;
};

struct PrPoint {
  double threshold = 0.0;
  double recall = 0.0;
  double precision = 0.0;
};

/// One operating point per distinct score: all detections scoring at least
/// that value are kept.
inline std::vector<PrPoint> pr_curve(std::vector<ScoredMatch> matches, std::size_t gt_count) {
  std::stable_sort(matches.begin(), matches.end(),
                   [](const ScoredMatch& a, const ScoredMatch& b) { return a.score > b.score; });
  std::vector<PrPoint> out;
  std::size_t tp = 0, fp = 0;
  for (std::size_t i = 0; i < matches.size(); ++i) {
    (matches[i].tp ? tp : fp) += 1;
    if (i + 1 < matches.size() && matches[i + 1].score == matches[i].score) continue;
    const double recall = gt_count ? static_cast<double>(tp) / gt_count : 0.0;
    out.push_back({matches[i].score, recall, static_cast<double>(tp) / (tp + fp)});
  }
  return out;
}

inline constexpr int kRecallPoints = 40;

/// Interpolated AP sampled at recalls 1/40 .. 40/40. Empty if there is no
/// ground truth.
inline std::optional<double> ap40(const std::vector<ScoredMatch>& matches, std::size_t gt_count) {
  if (gt_count == 0) return std::nullopt;
  const auto pr = pr_curve(matches, gt_count);
  // suffix maximum of precision over points with recall >= r
  std::vector<double> best(pr.size() + 1, 0.0);
  for (std::size_t i = pr.size(); i-- > 0;) best[i] = std::max(best[i + 1], pr[i].precision);
  double sum = 0.0;
  std::size_t j = 0;
  for (int k = 1; k <= kRecallPoints; ++k) {
    const double r = static_cast<double>(k) / kRecallPoints;
    // recall is non-decreasing along the curve
    while (j < pr.size() && pr[j].recall < r - 1e-12) ++j;
    sum += best[j];
  }
  return sum / kRecallPoints;
}

inline double max_recall_at_precision(std::span<const PrPoint> pr, double precision_floor = 0.1) {
  double best = 0.0;
  for (const auto& p : pr)
    if (p.precision >= precision_floor) best = std::max(best, p.recall);
  return best;
}

// ---------------------------------------------------------------------------
// Error decomposition

struct MatchedPair {
  Box3D gt;
  Box3D pred;
};

inline std::optional<PolarError> radial_tangential_mae(std::span<const MatchedPair> pairs) {
  if (pairs.empty()) return std::nullopt;
  PolarError sum;
  for (const auto& p : pairs) {
    const auto e = radial_tangential_error(p.gt, p.pred);
    sum.radial += e.radial;
    sum.tangential += e.tangential;
  }
  const double n = static_cast<double>(pairs.size());
  return PolarError{sum.radial / n, sum.tangential / n};
}

struct TpMetrics {
  double ate = 0.0;  // mean BEV center distance, meters
  double ase = 0.0;  // mean 1 - IoU after aligning center and yaw
  double aoe = 0.0;  // mean absolute yaw difference, radians in [0, pi]
};

inline double aligned_iou(const Dimensions& a, const Dimensions& b) {
  const double inter = std::min(a.w, b.w) * std::min(a.h, b.h) * std::min(a.l, b.l);
  return inter / (a.w * a.h * a.l + b.w * b.h * b.l - inter);
}

inline std::optional<TpMetrics> tp_metrics(std::span<const MatchedPair> pairs) {
  if (pairs.empty()) return std::nullopt;
  TpMetrics m;
  for (const auto& p : pairs) {
    m.ate += (bev_center(p.gt) - bev_center(p.pred)).norm();
    m.ase += 1.0 - aligned_iou(p.gt.size, p.pred.size);
    m.aoe += std::abs(normalize_angle(p.pred.yaw - p.gt.yaw));
  }
  const double n = static_cast<double>(pairs.size());
  return TpMetrics{m.ate / n, m.ase / n, m.aoe / n};
}

// ---------------------------------------------------------------------------
// Depth metrics

struct DepthMetrics {
  double abs_rel = 0.0;
  double sq_rel = 0.0;
  double rmse = 0.0;
  double rmse_log = 0.0;
  double delta_110 = 0.0;  // fraction with max(p/g, g/p) < 1.10
  double delta_125 = 0.0;
  double delta_125_2 = 0.0;
  double delta_125_3 = 0.0;
};

inline DepthMetrics depth_metrics(std::span<const double> pred, std::span<const double> gt) {
  if (pred.size() != gt.size() || pred.empty())
    throw InvalidArgument("depth_metrics: need equal, non-empty lists");
  DepthMetrics m;
  double se = 0.0, sle = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double p = pred[i], g = gt[i];
    if (!(p > 0.0 && g > 0.0)) throw InvalidArgument("depth_metrics: depths must be positive");
    const double diff = g - p;
    m.abs_rel += std::abs(diff) / g;
    m.sq_rel += diff * diff / g;
    se += diff * diff;
    const double ld = std::log(g) - std::log(p);
    sle += ld * ld;
    const double ratio = std::max(p / g, g / p);
    m.delta_110 += ratio < 1.10;
    m.delta_125 += ratio < 1.25;
    m.delta_125_2 += ratio < 1.25 * 1.25;
    m.delta_125_3 += ratio < 1.25 * 1.25 * 1.25;
  }
  const double n = static_cast<double>(pred.size());
  m.abs_rel /= n;
  m.sq_rel /= n;
  m.rmse = std::sqrt(se / n);
  m.rmse_log = std::sqrt(sle / n);
  m.delta_110 /= n;
  m.delta_125 /= n;
  m.delta_125_2 /= n;
  m.delta_125_3 /= n;
  return m;
}

// ---------------------------------------------------------------------------
// IoU caused by a surface-to-center (radial) error

struct ClassDims {
  std::string category;
  double w = 0.0;
  double h = 0.0;
  double l = 0.0;
};

/// Average KITTI class sizes. Lengths are the ones the table is defined with;
/// widths and heights do not affect the result.
inline const std::vector<ClassDims> kTable3Classes = {
    {"Car", 1.63, 1.53, 3.9}, {"Pedestrian", 0.66, 1.76, 0.8}, {"Cyclist", 0.60, 1.74, 1.76}};

inline const std::vector<double> kTable3Errors = {0.10, 0.15, 0.20, 0.27, 0.59, 0.70, 1.50, 2.00};

/// Published two-decimal values, rows in kTable3Classes order.
inline const std::vector<std::vector<double>> kTable3Published = {
    {0.95, 0.93, 0.90, 0.87, 0.74, 0.70, 0.44, 0.32},
    {0.78, 0.68, 0.60, 0.50, 0.15, 0.07, 0.00, 0.00},
    {0.89, 0.84, 0.80, 0.73, 0.50, 0.43, 0.08, 0.00}};

struct IouTable {
  std::vector<ClassDims> classes;
  std::vector<double> errors;
  std::vector<double> half_length;          // largest d_s2c along the heading, l / 2
  std::vector<std::vector<double>> cells;   // [class][error]
};

/// cell(c, e) = iou_3d(box, box shifted by e along its heading).
inline IouTable surface_error_iou_table(const std::vector<ClassDims>& classes, const std::vector<double>& errors) {
  IouTable t{classes, errors, {}, {}};
  for (const auto& c : classes) {
    Box3D box;
    box.center = {2.0, 1.0, 20.0};
    box.size = {c.w, c.h, c.l};
    box.yaw = 0.3;
    box.category = c.category;
    const Vec3 heading{std::cos(box.yaw), 0.0, -std::sin(box.yaw)};
    std::vector<double> row;
    for (double e : errors) {
      Box3D moved = box;
      moved.center += e * heading;
      row.push_back(iou_3d(box, moved));
    }
    t.cells.push_back(std::move(row));
    t.half_length.push_back(0.5 * c.l);
  }
  return t;
}

// ---------------------------------------------------------------------------
// Dataset-level evaluation

struct EvalFrame {
  std::string id;
  std::vector<Box3D> gts;
  std::vector<kitti::Difficulty> gt_difficulty;  // same length as gts
  std::vector<ScoredBox> dets;
};

struct CategoryResult {
  std::size_t num_gt = 0;
  std::size_t num_det = 0;
  std::vector<PrPoint> pr;
  std::optional<double> ap40;
  double max_recall = 0.0;
  std::optional<PolarError> polar_mae;
  std::optional<TpMetrics> tp;
};

/// Evaluate one category under one difficulty level and range bucket. Ground
/// truth outside the filter is "don't care": detections matched to it are
/// neither TP nor FP, and unmatched detections outside the bucket are dropped.
inline CategoryResult evaluate_category(std::span<const EvalFrame> frames, const std::string& category,
                                        MatchCriterion criterion, double threshold,
                                        std::optional<kitti::Difficulty> difficulty, const RangeBucket& bucket) {
  CategoryResult res;
  std::vector<ScoredMatch> scored;
  std::vector<MatchedPair> pairs;
  for (const auto& f : frames) {
    std::vector<Box3D> gts;
    std::vector<bool> care;
    for (std::size_t i = 0; i < f.gts.size(); ++i) {
      if (f.gts[i].category != category) continue;
      const auto diff = i < f.gt_difficulty.size() ? f.gt_difficulty[i] : kitti::Difficulty::Easy;
      const bool diff_ok = difficulty ? (diff != kitti::Difficulty::Ignored && diff <= *difficulty) : true;
      gts.push_back(f.gts[i]);
      care.push_back(diff_ok && bucket.contains(bev_center(f.gts[i]).norm()));
    }
    std::vector<ScoredBox> dets;
    for (const auto& d : f.dets)
      if (d.box.category == category) dets.push_back(d);
    std::stable_sort(dets.begin(), dets.end(), [](const ScoredBox& a, const ScoredBox& b) { return a.score > b.score; });
    const auto m = match(gts, dets, criterion, threshold);
    for (std::size_t i = 0; i < care.size(); ++i) res.num_gt += care[i];
    for (std::size_t d = 0; d < dets.size(); ++d) {
      const int g = m.matched[d];
      if (g >= 0) {
        if (!care[g]) continue;
        scored.push_back({dets[d].score, true});
        pairs.push_back({gts[g], dets[d].box});
      } else if (bucket.contains(bev_center(dets[d].box).norm())) {
        scored.push_back({dets[d].score, false});
      }
    }
  }
  res.num_det = scored.size();
  res.pr = pr_curve(scored, res.num_gt);
  res.ap40 = ap40(scored, res.num_gt);
  res.max_recall = max_recall_at_precision(res.pr, 0.1);
  res.polar_mae = radial_tangential_mae(pairs);
  res.tp = tp_metrics(pairs);
  return res;
}

struct ReportRow {
  std::string category;
  std::string difficulty;  // Easy / Moderate / Hard / All
  RangeBucket bucket;
  MatchCriterion criterion = MatchCriterion::Iou3d;
  double threshold = 0.0;
  CategoryResult result;
};

struct EvalReport {
  std::vector<ReportRow> rows;
  std::optional<DepthMetrics> depth;
};

/// Default KITTI IoU thresholds per class.
inline double default_iou_threshold(const std::string& category) {
  return category == "Car" ? 0.7 : 0.5;
}

struct EvalOptions {
  MatchCriterion criterion = MatchCriterion::Iou3d;
  std::map<std::string, double> thresholds;  // per category; missing -> default
  std::vector<std::string> categories{"Car", "Pedestrian", "Cyclist"};
  std::vector<std::optional<kitti::Difficulty>> difficulties{kitti::Difficulty::Easy, kitti::Difficulty::Moderate,
                                                             kitti::Difficulty::Hard};
  std::vector<RangeBucket> buckets{RangeBucket{}};
};

inline EvalReport evaluate(std::span<const EvalFrame> frames, const EvalOptions& opt) {
  EvalReport report;
  for (const auto& cat : opt.categories) {
    double thr = opt.criterion == MatchCriterion::CenterDistance ? 2.0 : default_iou_threshold(cat);
    if (auto it = opt.thresholds.find(cat); it != opt.thresholds.end()) thr = it->second;
    for (const auto& diff : opt.difficulties) {
      for (const auto& bucket : opt.buckets) {
        ReportRow row;
        row.category = cat;
        row.difficulty = diff ? kitti::to_string(*diff) : "All";
        row.bucket = bucket;
        row.criterion = opt.criterion;
        row.threshold = thr;
        row.result = evaluate_category(frames, cat, opt.criterion, thr, diff, bucket);
        report.rows.push_back(std::move(row));
      }
    }
  }
  return report;
}

}  // namespace ocdepth
