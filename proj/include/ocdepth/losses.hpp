#pragma once

// Keypoint heatmap targets, the penalty-reduced focal loss and the
// uncertainty-aware depth losses, all with analytic gradients.

#include <algorithm>
#include <cmath>
#include <span>
#include <vector>

#include "ocdepth/depth_pipeline.hpp"
#include "ocdepth/geometry.hpp"
#include "ocdepth/grid.hpp"

namespace ocdepth {

using Heatmap = Grid<double>;

inline constexpr double kFocalEps = 1e-7;
inline constexpr double kFocalAlpha = 2.0;
inline constexpr double kFocalBeta = 4.0;
inline constexpr double kForegroundWeight = 0.7;

// ---------------------------------------------------------------------------
// Heatmaps

/// CornerNet-style radius: the largest r for which each of the three corner
/// perturbations (translate by r, shrink by r per side, grow by r per side)
/// keeps the 2D IoU with the original box at or above min_overlap. Returns the
/// smallest of the three admissible roots, clamped at 0.
inline double gaussian_radius(double box_w, double box_h, double min_overlap = 0.7) {
  if (!(box_w > 0.0 && box_h > 0.0)) throw InvalidArgument("gaussian_radius: box size must be positive");
  if (!(min_overlap > 0.0 && min_overlap <= 1.0)) throw InvalidArgument("gaussian_radius: overlap must be in (0, 1]");
  const double o = min_overlap;
  const double s = box_w + box_h;
  const double p = box_w * box_h;

  // translated: (w - r)(h - r) / (2wh - (w - r)(h - r)) >= o
  const double c1 = p * (1.0 - o) / (1.0 + o);
  const double r1 = 0.5 * (s - std::sqrt(std::max(0.0, s * s - 4.0 * c1)));
  // shrunk: (w - 2r)(h - 2r) / wh >= o
  const double r2 = (2.0 * s - std::sqrt(std::max(0.0, 4.0 * s * s - 16.0 * (1.0 - o) * p))) / 8.0;
  // grown: wh / ((w + 2r)(h + 2r)) >= o
  const double r3 = (-2.0 * o * s + std::sqrt(4.0 * o * o * s * s + 16.0 * o * (1.0 - o) * p)) / (8.0 * o);
  return std::max(0.0, std::min({r1, r2, r3}));
}

struct HeatmapKeypoint {
  int x = 0;
  int y = 0;
  int category = 0;
  double radius = 0.0;
};

struct RenderedHeatmap {
  Heatmap map;
  int skipped = 0;  // keypoints outside the grid
};

/// Gaussian kernel with std = radius / 3, peak value 1.
inline double splat_value(double dx, double dy, double radius) {
  if (radius <= 0.0) return (dx == 0.0 && dy == 0.0) ? 1.0 : 0.0;
  const double sigma = radius / 3.0;
  return std::exp(-(dx * dx + dy * dy) / (2.0 * sigma * sigma));
}

inline RenderedHeatmap render_heatmap(std::span<const HeatmapKeypoint> keypoints, int width, int height,
                                      int channels) {
  RenderedHeatmap out{Heatmap(width, height, channels), 0};
  for (const auto& kp : keypoints) {
    if (!out.map.in_bounds(kp.x, kp.y) || kp.category < 0 || kp.category >= channels) {
      ++out.skipped;
      continue;
    }
    const int r = static_cast<int>(std::ceil(kp.radius));
    for (int y = std::max(0, kp.y - r); y <= std::min(height - 1, kp.y + r); ++y) {
      for (int x = std::max(0, kp.x - r); x <= std::min(width - 1, kp.x + r); ++x) {
        double& cell = out.map(x, y, kp.category);
        cell = std::max(cell, splat_value(x - kp.x, y - kp.y, kp.radius));
      }
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Focal loss

struct FocalLoss {
  double value = 0.0;
  Heatmap grad;  // d value / d pred
};

/// Penalty-reduced pixel-wise focal loss. Positives are cells where gt == 1.
/// The negative branch uses log(1 - pred). Predictions are clamped into
/// [eps, 1 - eps]; clamped cells get zero gradient.
inline FocalLoss focal_loss(const Heatmap& pred, const Heatmap& gt, double alpha = kFocalAlpha,
                            double beta = kFocalBeta, int num_instances = 1) {
  if (num_instances < 1) throw InvalidArgument("focal_loss: instance count must be at least 1");
  if (!pred.same_shape(gt)) throw InvalidArgument("focal_loss: shape mismatch");
  FocalLoss out{0.0, Heatmap(pred.width(), pred.height(), pred.channels())};
  const double scale = -1.0 / num_instances;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double raw = pred[i];
    const double p = std::clamp(raw, kFocalEps, 1.0 - kFocalEps);
    const bool clamped = p != raw;
    double term, dterm;
    if (gt[i] == 1.0) {
      const double q = std::pow(1.0 - p, alpha);
      term = q * std::log(p);
      dterm = -alpha * std::pow(1.0 - p, alpha - 1.0) * std::log(p) + q / p;
    } else {
      const double neg_w = std::pow(1.0 - gt[i], beta);
      const double pa = std::pow(p, alpha);
      term = neg_w * pa * std::log1p(-p);
      dterm = neg_w * (alpha * std::pow(p, alpha - 1.0) * std::log1p(-p) - pa / (1.0 - p));
    }
    out.value += scale * term;
    out.grad[i] = clamped ? 0.0 : scale * dterm;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Depth parameterization and targets

/// d = 1 / sigmoid(raw) - 1, which equals exp(-raw).
inline double decode_depth(double raw) { return std::exp(-raw); }

/// d decode_depth / d raw.
inline double decode_depth_derivative(double raw) { return -std::exp(-raw); }

inline double encode_depth(double depth) {
  if (!(depth > 0.0)) throw InvalidArgument("encode_depth: depth must be positive");
  return -std::log(depth);
}

struct SurfaceTarget {
  double u = 0.0;  // projected 3D center, image pixels
  double v = 0.0;
  double surface_depth = 0.0;
  double surface_to_center = 0.0;
  double center_depth = 0.0;
};

/// Keypoint and decomposed depth targets of a ground-truth box: the keypoint
/// is the projected 3D center and surface depth = center depth - d_s2c.
inline SurfaceTarget surface_depth_target(const Box3D& box, const CameraIntrinsics& cam) {
  const auto kp = project(cam, box.center);
  const double phi = viewing_angle(cam, kp.u);
  const double s2c = surface_to_center(box.size.w, box.size.l, heading_angle(box.yaw), phi);
  return {kp.u, kp.v, kp.depth - s2c, s2c, kp.depth};
}

// ---------------------------------------------------------------------------
// Uncertainty-aware depth losses

struct InstancePrediction {
  double depth = 0.0;    // decoded, meters
  double log_var = 0.0;  // s = log sigma^2
};

struct InstanceLoss {
  double value = 0.0;
  std::vector<double> grad_depth;
  std::vector<double> grad_log_var;
};

namespace detail {
inline double sign(double x) { return (x > 0.0) - (x < 0.0); }
}  // namespace detail

/// mean_i |d_i* - d_i| * exp(-s_i) + s_i. Empty input gives 0.
inline InstanceLoss instance_depth_loss(std::span<const InstancePrediction> preds, std::span<const double> targets) {
  if (preds.size() != targets.size()) throw InvalidArgument("instance_depth_loss: size mismatch");
  InstanceLoss out{0.0, std::vector<double>(preds.size(), 0.0), std::vector<double>(preds.size(), 0.0)};
  if (preds.empty()) return out;
  const double inv_n = 1.0 / static_cast<double>(preds.size());
  for (std::size_t i = 0; i < preds.size(); ++i) {
    const double r = targets[i] - preds[i].depth;
    const double w = std::exp(-preds[i].log_var);
    out.value += inv_n * (std::abs(r) * w + preds[i].log_var);
    out.grad_depth[i] = -inv_n * detail::sign(r) * w;
    out.grad_log_var[i] = inv_n * (1.0 - std::abs(r) * w);
  }
  return out;
}

/// Dense network output: pre-activation depth and log variance per cell.
struct DepthPrediction {
  Grid<double> depth_raw;
  Grid<double> log_var;
};

/// A depth loss term with gradients w.r.t. the two prediction grids.
struct DepthLossTerm {
  double value = 0.0;
  Grid<double> grad_raw;
  Grid<double> grad_log_var;

  static DepthLossTerm zeros(int w, int h) { return {0.0, Grid<double>(w, h), Grid<double>(w, h)}; }
};

enum class PixelMask { Foreground, Background };

/// Masked mean of |D* - D| * exp(-s) + s over the selected pixels; zero with
/// zero gradients when the mask is empty.
inline DepthLossTerm pixel_depth_loss(const DepthPrediction& pred, const DepthImage& gt, PixelMask which) {
  if (!pred.depth_raw.same_shape(gt.depth) || !pred.log_var.same_shape(gt.depth))
    throw InvalidArgument("pixel_depth_loss: shape mismatch");
  auto out = DepthLossTerm::zeros(gt.width(), gt.height());
  const Mask& m = which == PixelMask::Foreground ? gt.fg : gt.bg;
  std::size_t n = 0;
  for (std::size_t i = 0; i < m.size(); ++i) n += (m[i] && gt.valid[i]) ? 1 : 0;
  if (n == 0) return out;
  const double inv_n = 1.0 / static_cast<double>(n);
  for (std::size_t i = 0; i < m.size(); ++i) {
    if (!m[i] || !gt.valid[i]) continue;
    const double d = decode_depth(pred.depth_raw[i]);
    const double s = pred.log_var[i];
    const double r = gt.depth[i] - d;
    const double w = std::exp(-s);
    out.value += inv_n * (std::abs(r) * w + s);
    out.grad_raw[i] = -inv_n * detail::sign(r) * w * decode_depth_derivative(pred.depth_raw[i]);
    out.grad_log_var[i] = inv_n * (1.0 - std::abs(r) * w);
  }
  return out;
}

struct GridCell {
  int x = 0;
  int y = 0;
};

/// Instance loss gathered from the dense prediction at keypoint cells, with
/// gradients scattered back onto the grids (w.r.t. depth_raw, not depth).
inline DepthLossTerm gathered_instance_loss(const DepthPrediction& pred, std::span<const GridCell> cells,
                                            std::span<const double> targets) {
  auto out = DepthLossTerm::zeros(pred.depth_raw.width(), pred.depth_raw.height());
  std::vector<InstancePrediction> gathered;
  gathered.reserve(cells.size());
  for (const auto& c : cells) {
    if (!pred.depth_raw.in_bounds(c.x, c.y)) throw InvalidArgument("gathered_instance_loss: cell out of bounds");
    gathered.push_back({decode_depth(pred.depth_raw(c.x, c.y)), pred.log_var(c.x, c.y)});
  }
  const auto loss = instance_depth_loss(gathered, targets);
  out.value = loss.value;
  for (std::size_t i = 0; i < cells.size(); ++i) {
    const auto& c = cells[i];
    out.grad_raw(c.x, c.y) += loss.grad_depth[i] * decode_depth_derivative(pred.depth_raw(c.x, c.y));
    out.grad_log_var(c.x, c.y) += loss.grad_log_var[i];
  }
  return out;
}

struct LossBreakdown {
  double l_keypoint = 0.0;
  double l_dep_obj = 0.0;
  double l_dep_fg = 0.0;
  double l_dep_bg = 0.0;
  double l_total = 0.0;
  Grid<double> grad_raw;
  Grid<double> grad_log_var;
};

/// L = L_obj + lambda * L_fg + (1 - lambda) * L_bg (+ keypoint loss if given).
inline LossBreakdown total_depth_loss(const DepthLossTerm& obj, const DepthLossTerm& fg, const DepthLossTerm& bg,
                                      double lambda = kForegroundWeight, double keypoint_loss = 0.0) {
  if (!(lambda >= 0.0 && lambda <= 1.0)) throw InvalidArgument("total_depth_loss: lambda must be in [0, 1]");
  if (!obj.grad_raw.same_shape(fg.grad_raw) || !obj.grad_raw.same_shape(bg.grad_raw))
    throw InvalidArgument("total_depth_loss: shape mismatch");
  LossBreakdown out;
  out.l_keypoint = keypoint_loss;
  out.l_dep_obj = obj.value;
  out.l_dep_fg = fg.value;
  out.l_dep_bg = bg.value;
  out.l_total = keypoint_loss + obj.value + lambda * fg.value + (1.0 - lambda) * bg.value;
  out.grad_raw = obj.grad_raw;
  out.grad_log_var = obj.grad_log_var;
  for (std::size_t i = 0; i < out.grad_raw.size(); ++i) {
    out.grad_raw[i] += lambda * fg.grad_raw[i] + (1.0 - lambda) * bg.grad_raw[i];
    out.grad_log_var[i] += lambda * fg.grad_log_var[i] + (1.0 - lambda) * bg.grad_log_var[i];
  }
  return out;
}

}  // namespace ocdepth
