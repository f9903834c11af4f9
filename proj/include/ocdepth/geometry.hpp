#pragma once

// Camera and box geometry. Camera frame: x right, y down, z forward.
// Bird's-eye view (BEV) is the (x, z) plane.

#include <Eigen/Core>

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <string>
#include <vector>

#include "ocdepth/errors.hpp"

namespace ocdepth {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;

inline constexpr double kPi = std::numbers::pi;

/// Wrap an angle into (-pi, pi].
inline double normalize_angle(double a) {
  a = std::remainder(a, 2.0 * kPi);
  if (a <= -kPi) a += 2.0 * kPi;
  return a;
}

struct CameraIntrinsics {
  double fu = 0.0;
  double fv = 0.0;
  double cx = 0.0;
  double cy = 0.0;
  int width = 0;
  int height = 0;

  bool valid() const {
    return fu > 0.0 && fv > 0.0 && cx >= 0.0 && cx < width && cy >= 0.0 && cy < height;
  }
};

struct Dimensions {
  double w = 0.0;  // width, across the heading
  double h = 0.0;  // height, along y
  double l = 0.0;  // length, along the heading
};

/// Oriented box. `center` is the geometric cuboid center. `yaw` follows the
/// KITTI rotation_y convention: the heading vector in BEV is (cos yaw, -sin yaw).
struct Box3D {
  Vec3 center = Vec3::Zero();
  Dimensions size;
  double yaw = 0.0;
  std::string category = "Car";
};

struct PolarError {
  double radial = 0.0;
  double tangential = 0.0;
};

struct Projection {
  double u = 0.0;
  double v = 0.0;
  double depth = 0.0;
};

inline Vec3 unproject(const CameraIntrinsics& cam, double u, double v, double d) {
  if (!(d > 0.0)) throw InvalidArgument("unproject: depth must be positive");
  return {(u - cam.cx) * d / cam.fu, (v - cam.cy) * d / cam.fv, d};
}

inline Projection project(const CameraIntrinsics& cam, const Vec3& p) {
  if (!(p.z() > 0.0)) throw BehindCamera("project: point is not in front of the camera");
  return {cam.fu * p.x() / p.z() + cam.cx, cam.fv * p.y() / p.z() + cam.cy, p.z()};
}

/// Azimuth of the ray through image column u, measured from +x toward +z
/// (atan(z/x) of any point on that ray). Independent of depth.
inline double viewing_angle(const CameraIntrinsics& cam, double u) {
  return std::atan2(cam.fu, u - cam.cx);
}

/// BEV heading angle of a box, measured from +x toward +z like viewing_angle.
inline double heading_angle(double yaw) { return normalize_angle(-yaw); }

/// Distance from the footprint center to its boundary along a ray whose
/// direction makes angle |heading - phi| with the length axis. Both angles
/// must be measured in the same frame (see heading_angle).
inline double surface_to_center(double w, double l, double heading, double phi) {
  double theta = std::fmod(std::abs(heading - phi), kPi);
  theta = std::min(theta, kPi - theta);
  const double alpha = std::atan2(w, l);
  if (theta <= alpha) return 0.5 * l / std::cos(theta);
  return 0.5 * w / std::sin(theta);
}

inline double compose_center_depth(double surface_depth, double surface_to_center) {
  return surface_depth + surface_to_center;
}

/// Rotate a box-frame offset into the camera frame.
inline Vec3 box_to_camera(const Box3D& box, const Vec3& local) {
  const double c = std::cos(box.yaw), s = std::sin(box.yaw);
  return box.center + Vec3{c * local.x() + s * local.z(), local.y(), -s * local.x() + c * local.z()};
}

inline Vec3 camera_to_box(const Box3D& box, const Vec3& p) {
  const Vec3 d = p - box.center;
  const double c = std::cos(box.yaw), s = std::sin(box.yaw);
  return {c * d.x() - s * d.z(), d.y(), s * d.x() + c * d.z()};
}

/// Corner order (box frame, x along length, z along width, y down):
/// 0..3 bottom face (y = +h/2), 4..7 top face (y = -h/2), each face ordered
/// (+l,+w), (+l,-w), (-l,-w), (-l,+w).
inline std::array<Vec3, 8> box_corners(const Box3D& box) {
  const double hl = 0.5 * box.size.l, hw = 0.5 * box.size.w, hh = 0.5 * box.size.h;
  static constexpr std::array<double, 4> sx{1, 1, -1, -1};
  static constexpr std::array<double, 4> sz{1, -1, -1, 1};
  std::array<Vec3, 8> out;
  for (int face = 0; face < 2; ++face) {
    const double y = face == 0 ? hh : -hh;
    for (int i = 0; i < 4; ++i) out[face * 4 + i] = box_to_camera(box, {sx[i] * hl, y, sz[i] * hw});
  }
  return out;
}

inline bool contains(const Box3D& box, const Vec3& p, double tol = 1e-6) {
  const Vec3 q = camera_to_box(box, p);
  return std::abs(q.x()) <= 0.5 * box.size.l + tol && std::abs(q.y()) <= 0.5 * box.size.h + tol &&
         std::abs(q.z()) <= 0.5 * box.size.w + tol;
}

inline Vec2 bev_center(const Box3D& box) { return {box.center.x(), box.center.z()}; }

/// Footprint polygon in BEV (x, z), counter-clockwise in that plane.
inline std::vector<Vec2> bev_footprint(const Box3D& box) {
  const auto corners = box_corners(box);
  std::vector<Vec2> poly;
  for (int i = 0; i < 4; ++i) poly.emplace_back(corners[i].x(), corners[i].z());
  double area2 = 0.0;
  for (int i = 0; i < 4; ++i) {
    const Vec2& a = poly[i];
    const Vec2& b = poly[(i + 1) % 4];
    area2 += a.x() * b.y() - b.x() * a.y();
  }
  if (area2 < 0.0) std::reverse(poly.begin(), poly.end());
  return poly;
}

namespace detail {

inline double cross(const Vec2& a, const Vec2& b) { return a.x() * b.y() - a.y() * b.x(); }

inline double polygon_area(const std::vector<Vec2>& poly) {
  double a = 0.0;
  for (std::size_t i = 0; i < poly.size(); ++i) a += cross(poly[i], poly[(i + 1) % poly.size()]);
  return 0.5 * std::abs(a);
}

/// Sutherland-Hodgman: clip `subject` by the convex CCW polygon `clip`.
inline std::vector<Vec2> clip_convex(std::vector<Vec2> subject, const std::vector<Vec2>& clip) {
  for (std::size_t e = 0; e < clip.size() && !subject.empty(); ++e) {
    const Vec2& a = clip[e];
    const Vec2& b = clip[(e + 1) % clip.size()];
    const Vec2 edge = b - a;
    auto side = [&](const Vec2& p) { return cross(edge, p - a); };
    std::vector<Vec2> out;
    out.reserve(subject.size() + 2);
    for (std::size_t i = 0; i < subject.size(); ++i) {
      const Vec2& p = subject[i];
      const Vec2& q = subject[(i + 1) % subject.size()];
      const double sp = side(p), sq = side(q);
      if (sp >= 0.0) out.push_back(p);
      if ((sp >= 0.0) != (sq >= 0.0)) {
        const double t = sp / (sp - sq);
        out.push_back(p + t * (q - p));
      }
    }
    subject = std::move(out);
  }
  return subject;
}

}  // namespace detail

inline constexpr double kMinArea = 1e-12;

inline double bev_intersection_area(const Box3D& a, const Box3D& b) {
  const auto inter = detail::clip_convex(bev_footprint(a), bev_footprint(b));
  if (inter.size() < 3) return 0.0;
  const double area = detail::polygon_area(inter);
  return area < kMinArea ? 0.0 : area;
}

inline double bev_iou(const Box3D& a, const Box3D& b) {
  const double area_a = a.size.w * a.size.l;
  const double area_b = b.size.w * b.size.l;
  if (area_a < kMinArea || area_b < kMinArea) return 0.0;
  const double inter = bev_intersection_area(a, b);
  return std::clamp(inter / (area_a + area_b - inter), 0.0, 1.0);
}

inline double iou_3d(const Box3D& a, const Box3D& b) {
  const double vol_a = a.size.w * a.size.l * a.size.h;
  const double vol_b = b.size.w * b.size.l * b.size.h;
  if (a.size.w * a.size.l < kMinArea || b.size.w * b.size.l < kMinArea) return 0.0;
  const double top = std::max(a.center.y() - 0.5 * a.size.h, b.center.y() - 0.5 * b.size.h);
  const double bottom = std::min(a.center.y() + 0.5 * a.size.h, b.center.y() + 0.5 * b.size.h);
  const double overlap_y = std::max(0.0, bottom - top);
  if (overlap_y <= 0.0) return 0.0;
  const double inter = bev_intersection_area(a, b) * overlap_y;
  return std::clamp(inter / (vol_a + vol_b - inter), 0.0, 1.0);
}

/// Split the BEV center error into components along and across the ray to
/// the ground-truth center (orthogonal projection).
inline PolarError radial_tangential_error(const Box3D& gt, const Box3D& pred) {
  const Vec2 g = bev_center(gt);
  const double range = g.norm();
  if (!(range > 0.0)) throw UndefinedDirection("radial_tangential_error: ground truth at the BEV origin");
  const Vec2 r_hat = g / range;
  const Vec2 e = bev_center(pred) - g;
  const double along = e.dot(r_hat);
  return {std::abs(along), (e - along * r_hat).norm()};
}

}  // namespace ocdepth
