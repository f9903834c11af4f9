#pragma once

// Sparse depth images from 3D points, min-pool downsampling, object-centric
// foreground/background masks and the geometric augmentations.
//
// Pixel convention: column i covers continuous image coordinates [i, i+1).
// A cell of a stride-s grid covers [s*c, s*c + s) and has center s*(c + 0.5).

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <vector>

#include "ocdepth/geometry.hpp"
#include "ocdepth/grid.hpp"
#include "ocdepth/rng.hpp"

namespace ocdepth {

using Mask = Grid<std::uint8_t>;

struct PointCloud {
  std::vector<Vec3> points;
};

struct DepthImage {
  Grid<double> depth;
  Mask valid;
  Mask fg;
  Mask bg;
  Grid<int> source;  // index of the point that produced the pixel, -1 if unknown
  int stride = 1;
  double d_max = 80.0;

  DepthImage() = default;
  DepthImage(int width, int height, int stride_ = 1, double d_max_ = 80.0)
      : depth(width, height), valid(width, height), fg(width, height), bg(width, height),
        source(width, height, 1, -1), stride(stride_), d_max(d_max_) {}

  int width() const { return depth.width(); }
  int height() const { return depth.height(); }

  std::size_t count(const Mask& m) const {
    return static_cast<std::size_t>(std::count(m.values().begin(), m.values().end(), std::uint8_t{1}));
  }

  friend bool operator==(const DepthImage&, const DepthImage&) = default;
};

/// Project points into a full-resolution depth image. When several points hit
/// one pixel the nearest one wins. Points beyond d_max are dropped.
inline DepthImage build_depth_map(const PointCloud& pc, const CameraIntrinsics& cam, double d_max = 80.0) {
  DepthImage img(cam.width, cam.height, 1, d_max);
  for (std::size_t i = 0; i < pc.points.size(); ++i) {
    const Vec3& p = pc.points[i];
    if (!p.allFinite() || !(p.z() > 0.0) || p.z() > d_max) continue;
    const auto pr = project(cam, p);
    const double fu = std::floor(pr.u), fv = std::floor(pr.v);
    if (fu < 0.0 || fv < 0.0 || fu >= cam.width || fv >= cam.height) continue;
    const int u = static_cast<int>(fu), v = static_cast<int>(fv);
    if (!img.valid(u, v) || p.z() < img.depth(u, v)) {
      img.depth(u, v) = p.z();
      img.valid(u, v) = 1;
      img.source(u, v) = static_cast<int>(i);
    }
  }
  return img;
}

/// Block-minimum reduction. Masks and the source index follow the selected
/// (nearest) pixel of each block.
inline DepthImage minpool_downsample(const DepthImage& d, int factor = 4) {
  if (factor < 1 || d.width() % factor != 0 || d.height() % factor != 0)
    throw InvalidArgument("minpool_downsample: factor must divide width and height");
  DepthImage out(d.width() / factor, d.height() / factor, d.stride * factor, d.d_max);
  for (int by = 0; by < out.height(); ++by) {
    for (int bx = 0; bx < out.width(); ++bx) {
      int best_x = -1, best_y = -1;
      for (int y = by * factor; y < (by + 1) * factor; ++y) {
        for (int x = bx * factor; x < (bx + 1) * factor; ++x) {
          if (!d.valid(x, y)) continue;
          if (best_x < 0 || d.depth(x, y) < d.depth(best_x, best_y)) {
            best_x = x;
            best_y = y;
          }
        }
      }
      if (best_x < 0) continue;
      out.depth(bx, by) = d.depth(best_x, best_y);
      out.valid(bx, by) = 1;
      out.fg(bx, by) = d.fg(best_x, best_y);
      out.bg(bx, by) = d.bg(best_x, best_y);
      out.source(bx, by) = d.source(best_x, best_y);
    }
  }
  return out;
}

/// Mark valid pixels whose point lies inside any box (boundary inclusive) as
/// foreground. Pixels without a recorded source point are tested by
/// unprojecting the cell center at the stored depth. Clears bg.
inline DepthImage foreground_mask(DepthImage d, const PointCloud& pc, const std::vector<Box3D>& boxes,
                                  const CameraIntrinsics& cam) {
  for (int y = 0; y < d.height(); ++y) {
    for (int x = 0; x < d.width(); ++x) {
      d.fg(x, y) = 0;
      d.bg(x, y) = 0;
      if (!d.valid(x, y)) continue;
      const int src = d.source(x, y);
      const Vec3 p = (src >= 0 && static_cast<std::size_t>(src) < pc.points.size())
                         ? pc.points[src]
                         : unproject(cam, d.stride * (x + 0.5), d.stride * (y + 0.5), d.depth(x, y));
      for (const Box3D& b : boxes) {
        if (contains(b, p)) {
          d.fg(x, y) = 1;
          break;
        }
      }
    }
  }
  return d;
}

inline constexpr double kBackgroundBinWidth = 10.0;

inline int background_bin(double depth, int bins) {
  return std::min(static_cast<int>(depth / kBackgroundBinWidth), bins - 1);
}

/// Flatten the background depth histogram: split candidates (valid, not fg)
/// into 10 m bins and keep, per bin, a seeded random subset whose size is the
/// smallest non-empty bin count.
inline DepthImage background_subsample(DepthImage d, std::uint64_t seed) {
  const int bins = std::max(1, static_cast<int>(std::ceil(d.d_max / kBackgroundBinWidth)));
  std::vector<std::vector<std::size_t>> members(bins);
  for (std::size_t i = 0; i < d.depth.size(); ++i) {
    d.bg[i] = 0;
    if (d.valid[i] && !d.fg[i]) members[background_bin(d.depth[i], bins)].push_back(i);
  }
  std::size_t cap = std::numeric_limits<std::size_t>::max();
  for (const auto& m : members)
    if (!m.empty()) cap = std::min(cap, m.size());
  Rng rng(seed);
  for (auto& m : members) {
    if (m.empty()) continue;
    shuffle(m, rng);
    for (std::size_t k = 0; k < cap; ++k) d.bg[m[k]] = 1;
  }
  return d;
}

/// Boxes, depth image and camera that travel together through augmentation.
struct AugScene {
  CameraIntrinsics cam;
  std::vector<Box3D> boxes;
  DepthImage depth;
  PointCloud points;
};

/// Mirror the scene about the image's vertical center line. Continuous image
/// coordinates map u -> width - u, grid columns c -> w - 1 - c.
inline AugScene hflip(const AugScene& in) {
  AugScene out = in;
  out.cam.cx = in.cam.width - in.cam.cx;
  for (Box3D& b : out.boxes) {
    b.center.x() = -b.center.x();
    b.yaw = normalize_angle(kPi - b.yaw);
  }
  for (Vec3& p : out.points.points) p.x() = -p.x();
  const int w = in.depth.width();
  for (int y = 0; y < in.depth.height(); ++y) {
    for (int x = 0; x < w; ++x) {
      const int fx = w - 1 - x;
      out.depth.depth(fx, y) = in.depth.depth(x, y);
      out.depth.valid(fx, y) = in.depth.valid(x, y);
      out.depth.fg(fx, y) = in.depth.fg(x, y);
      out.depth.bg(fx, y) = in.depth.bg(x, y);
      out.depth.source(fx, y) = in.depth.source(x, y);
    }
  }
  return out;
}

/// Zoom the image by s about the principal point with intrinsics fixed. The
/// grid keeps its shape (nearest-neighbour resampling); depths become d / s
/// and 3D content moves to z / s so projections stay consistent.
inline AugScene scale_augment(const AugScene& in, double s) {
  if (!(s > 0.0)) throw InvalidArgument("scale_augment: scale must be positive");
  AugScene out = in;
  for (Box3D& b : out.boxes) b.center.z() /= s;
  for (Vec3& p : out.points.points) p.z() /= s;

  const DepthImage& src = in.depth;
  DepthImage& dst = out.depth;
  dst = DepthImage(src.width(), src.height(), src.stride, src.d_max);
  const double st = src.stride;
  for (int y = 0; y < dst.height(); ++y) {
    for (int x = 0; x < dst.width(); ++x) {
      const double su = in.cam.cx + (st * (x + 0.5) - in.cam.cx) / s;
      const double sv = in.cam.cy + (st * (y + 0.5) - in.cam.cy) / s;
      const double gx = std::floor(su / st), gy = std::floor(sv / st);
      if (gx < 0 || gy < 0 || gx >= src.width() || gy >= src.height()) continue;
      const int ix = static_cast<int>(gx), iy = static_cast<int>(gy);
      if (!src.valid(ix, iy)) continue;
      const double dd = src.depth(ix, iy) / s;
      if (dd > src.d_max) continue;
      dst.depth(x, y) = dd;
      dst.valid(x, y) = 1;
      dst.fg(x, y) = src.fg(ix, iy);
      dst.bg(x, y) = src.bg(ix, iy);
      dst.source(x, y) = src.source(ix, iy);
    }
  }
  return out;
}

}  // namespace ocdepth
