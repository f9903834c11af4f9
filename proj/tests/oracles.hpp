#pragma once

// Reference implementations used only by tests. They share data types with
// the library but none of its algorithms.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <vector>

#include "ocdepth/geometry.hpp"
#include "ocdepth/rng.hpp"

namespace oracle {

using ocdepth::Box3D;

/// Distance from the center of a w x l rectangle whose length axis points at
/// `heading` to its boundary, along a ray at angle `phi`. Intersects the ray
/// with the four edge segments.
inline double raycast_surface_to_center(double w, double l, double heading, double phi) {
  const double ux = std::cos(heading), uy = std::sin(heading);  // length axis
  const double vx = -uy, vy = ux;                               // width axis
  const double dx = std::cos(phi), dy = std::sin(phi);
  double best = std::numeric_limits<double>::infinity();
  const double hl = 0.5 * l, hw = 0.5 * w;
  // edges as (point a, point b) in world coordinates
  const double cs[4][2] = {{hl, hw}, {hl, -hw}, {-hl, -hw}, {-hl, hw}};
  for (int i = 0; i < 4; ++i) {
    const auto& p = cs[i];
    const auto& q = cs[(i + 1) % 4];
    const double ax = p[0] * ux + p[1] * vx, ay = p[0] * uy + p[1] * vy;
    const double bx = q[0] * ux + q[1] * vx, by = q[0] * uy + q[1] * vy;
    const double ex = bx - ax, ey = by - ay;
    // solve t*d = a + s*e
    const double det = dx * (-ey) - dy * (-ex);
    if (std::abs(det) < 1e-300) continue;
    const double t = (ax * (-ey) - ay * (-ex)) / det;
    const double s = (dx * ay - dy * ax) / det;
    if (t > 0.0 && s >= -1e-12 && s <= 1.0 + 1e-12) best = std::min(best, t);
  }
  return best;
}

/// BEV heading unit vector for a box yaw, (x, z) components.
inline std::pair<double, double> heading_vec(double yaw) { return {std::cos(yaw), -std::sin(yaw)}; }

/// Stratified, jittered Monte-Carlo estimate of BEV IoU with n x n samples
/// over box a's footprint.
inline double monte_carlo_bev_iou(const Box3D& a, const Box3D& b, int n, std::uint64_t seed) {
  ocdepth::Rng rng(seed);
  const auto [hax, haz] = heading_vec(a.yaw);
  const auto [hbx, hbz] = heading_vec(b.yaw);
  std::size_t inside = 0;
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      const double s = ((i + ocdepth::uniform01(rng)) / n - 0.5) * a.size.l;
      const double t = ((j + ocdepth::uniform01(rng)) / n - 0.5) * a.size.w;
      const double x = a.center.x() + s * hax - t * haz;
      const double z = a.center.z() + s * haz + t * hax;
      const double dx = x - b.center.x(), dz = z - b.center.z();
      const double sb = dx * hbx + dz * hbz;
      const double tb = -dx * hbz + dz * hbx;
      if (std::abs(sb) <= 0.5 * b.size.l && std::abs(tb) <= 0.5 * b.size.w) ++inside;
    }
  }
  const double area_a = a.size.w * a.size.l, area_b = b.size.w * b.size.l;
  const double inter = area_a * static_cast<double>(inside) / (static_cast<double>(n) * n);
  return inter / (area_a + area_b - inter);
}

/// AP over 40 recall points by enumerating every score threshold. A
/// threshold qualifies for recall k/40 when tp * 40 >= k * gt (integers).
inline double brute_force_ap40(const std::vector<double>& scores, const std::vector<bool>& tp, std::size_t gt) {
  std::vector<double> thresholds = scores;
  std::sort(thresholds.begin(), thresholds.end());
  thresholds.erase(std::unique(thresholds.begin(), thresholds.end()), thresholds.end());
  double sum = 0.0;
  for (int k = 1; k <= 40; ++k) {
    double best = 0.0;
    for (double tau : thresholds) {
      std::size_t n_tp = 0, n = 0;
      for (std::size_t i = 0; i < scores.size(); ++i)
        if (scores[i] >= tau) {
          ++n;
          n_tp += tp[i];
        }
      if (n_tp * 40 >= static_cast<std::size_t>(k) * gt) best = std::max(best, static_cast<double>(n_tp) / n);
    }
    sum += best;
  }
  return sum / 40.0;
}

/// IoU of two axis-aligned rectangles given as (x0, y0, x1, y1).
inline double rect_iou(const double a[4], const double b[4]) {
  const double iw = std::max(0.0, std::min(a[2], b[2]) - std::max(a[0], b[0]));
  const double ih = std::max(0.0, std::min(a[3], b[3]) - std::max(a[1], b[1]));
  const double inter = iw * ih;
  const double ua = (a[2] - a[0]) * (a[3] - a[1]) + (b[2] - b[0]) * (b[3] - b[1]) - inter;
  return inter / ua;
}

/// Largest corner perturbation radius keeping IoU >= o for each of the three
/// perturbations (shift both corners by (r, r); move both inward by r; move
/// both outward by r), found by bisection on the actual rectangles.
inline double bisection_gaussian_radius(double w, double h, double o) {
  auto iou_at = [&](int mode, double r) {
    const double g[4] = {0.0, 0.0, w, h};
    double p[4];
    if (mode == 0) {
      p[0] = r, p[1] = r, p[2] = w + r, p[3] = h + r;
    } else if (mode == 1) {
      if (2.0 * r >= std::min(w, h)) return 0.0;
      p[0] = r, p[1] = r, p[2] = w - r, p[3] = h - r;
    } else {
      p[0] = -r, p[1] = -r, p[2] = w + r, p[3] = h + r;
    }
    return rect_iou(g, p);
  };
  double best = std::numeric_limits<double>::infinity();
  for (int mode = 0; mode < 3; ++mode) {
    double lo = 0.0, hi = w + h;
    for (int it = 0; it < 200; ++it) {
      const double mid = 0.5 * (lo + hi);
      (iou_at(mode, mid) >= o ? lo : hi) = mid;
    }
    best = std::min(best, lo);
  }
  return best;
}

/// Fraction of pairs with max(p/g, g/p) below the bound.
inline double delta_ratio(const std::vector<double>& pred, const std::vector<double>& gt, double bound) {
  std::size_t hits = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) hits += std::max(pred[i] / gt[i], gt[i] / pred[i]) < bound;
  return static_cast<double>(hits) / pred.size();
}

}  // namespace oracle
