#pragma once

// Synthetic camera + LiDAR scenes and a small per-cell perceptron trained
// with the object-centric depth loss. This stands in for a real image
// backbone so the loss behaviour can be studied end to end on a desktop.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <thread>
#include <tuple>
#include <vector>

#include "ocdepth/decode.hpp"
#include "ocdepth/depth_pipeline.hpp"
#include "ocdepth/evaluation.hpp"
#include "ocdepth/geometry.hpp"
#include "ocdepth/kitti_io.hpp"
#include "ocdepth/losses.hpp"
#include "ocdepth/rng.hpp"

namespace ocdepth::synth {

// ---------------------------------------------------------------------------
// Scenes

struct SizePrior {
  double mean_w, sd_w;
  double mean_h, sd_h;
  double mean_l, sd_l;
};

inline SizePrior default_size_prior(const std::string& category) {
  if (category == "Pedestrian") return {0.66, 0.06, 1.76, 0.08, 0.80, 0.08};
  if (category == "Cyclist") return {0.60, 0.05, 1.74, 0.08, 1.76, 0.15};
  return {1.63, 0.10, 1.53, 0.10, 3.90, 0.30};
}

struct LidarConfig {
  int beams = 64;
  double elevation_min = -3.0 * kPi / 180.0;  // negative looks up (y is down)
  double elevation_max = 20.0 * kPi / 180.0;
  double azimuth_step = 0.2 * kPi / 180.0;
  double azimuth_half_fov = 42.0 * kPi / 180.0;
  double max_range = 120.0;
};

struct SceneConfig {
  CameraIntrinsics cam{240.0, 240.0, 192.0, 48.0, 384, 128};
  std::vector<std::pair<std::string, int>> counts{{"Car", 4}, {"Pedestrian", 1}, {"Cyclist", 1}};
  double min_depth = 5.0;
  double max_depth = 60.0;
  double ground_height = 1.65;  // ground plane y, meters below the camera
  double d_max = 80.0;
  int stride = kFeatureStride;
  int max_retries = 200;
  // Unannotated background walls, spread evenly in depth so every range bin
  // of the background subsample has returns.
  int walls = 12;
  double wall_min_depth = 20.0;
  double wall_max_depth = 78.0;
  double wall_height = 3.0;
  LidarConfig lidar;
};

inline constexpr int kFeatureChannels = 5;

/// Per-box training targets on the stride-4 grid.
struct BoxTarget {
  GridCell cell;
  int category = 0;
  double u = 0.0, v = 0.0;  // projected center, image pixels
  double surface_depth = 0.0;
  double surface_to_center = 0.0;
  double center_depth = 0.0;
  Dimensions size;
  double yaw = 0.0;
};

struct SceneSample {
  CameraIntrinsics cam;
  std::vector<Box3D> boxes;
  PointCloud points;
  std::vector<Box3D> walls;  // unannotated background structures
  DepthImage depth;        // stride 4, fg/bg masks set
  Grid<double> features;   // kFeatureChannels channels on the depth grid
  std::vector<BoxTarget> targets;
};

/// Ray-box intersection in the box frame (slab test). Returns the entry
/// distance if the ray enters the box ahead of the origin.
inline std::optional<double> ray_box(const Vec3& origin, const Vec3& dir, const Box3D& box) {
  const Vec3 o = camera_to_box(box, origin);
  const double c = std::cos(box.yaw), s = std::sin(box.yaw);
  const Vec3 d{c * dir.x() - s * dir.z(), dir.y(), s * dir.x() + c * dir.z()};
  const Vec3 half{0.5 * box.size.l, 0.5 * box.size.h, 0.5 * box.size.w};
  double t_near = -std::numeric_limits<double>::infinity();
  double t_far = std::numeric_limits<double>::infinity();
  for (int i = 0; i < 3; ++i) {
    if (std::abs(d[i]) < 1e-15) {
      if (std::abs(o[i]) > half[i]) return std::nullopt;
      continue;
    }
    double t1 = (-half[i] - o[i]) / d[i];
    double t2 = (half[i] - o[i]) / d[i];
    if (t1 > t2) std::swap(t1, t2);
    t_near = std::max(t_near, t1);
    t_far = std::min(t_far, t2);
  }
  if (t_near > t_far || t_near <= 0.0) return std::nullopt;
  return t_near;
}

/// Cast an elevation fan x azimuth sweep of rays from the camera origin; each
/// ray returns its first hit on a box or the ground plane.
inline PointCloud simulate_lidar(const std::vector<Box3D>& boxes, double ground_height, const LidarConfig& cfg) {
  if (cfg.beams < 1) throw InvalidArgument("simulate_lidar: need at least one beam");
  if (!(cfg.azimuth_step > 0.0)) throw InvalidArgument("simulate_lidar: azimuth step must be positive");
  PointCloud pc;
  const Vec3 origin = Vec3::Zero();
  const int n_az = static_cast<int>(std::floor(2.0 * cfg.azimuth_half_fov / cfg.azimuth_step)) + 1;
  for (int b = 0; b < cfg.beams; ++b) {
    const double el = cfg.beams == 1 ? 0.5 * (cfg.elevation_min + cfg.elevation_max)
                                     : cfg.elevation_min + (cfg.elevation_max - cfg.elevation_min) * b / (cfg.beams - 1);
    for (int a = 0; a < n_az; ++a) {
      const double az = -cfg.azimuth_half_fov + a * cfg.azimuth_step;
      const Vec3 dir{std::cos(el) * std::sin(az), std::sin(el), std::cos(el) * std::cos(az)};
      double best = cfg.max_range;
      bool hit = false;
      for (const auto& box : boxes) {
        if (auto t = ray_box(origin, dir, box); t && *t < best) {
          best = *t;
          hit = true;
        }
      }
      if (dir.y() > 1e-12) {
        const double t = ground_height / dir.y();
        if (t < best) {
          best = t;
          hit = true;
        }
      }
      if (hit) pc.points.push_back(best * dir);
    }
  }
  return pc;
}

inline PointCloud simulate_lidar(const SceneSample& scene, const SceneConfig& cfg) {
  std::vector<Box3D> all = scene.boxes;
  all.insert(all.end(), scene.walls.begin(), scene.walls.end());
  return simulate_lidar(all, cfg.ground_height, cfg.lidar);
}

inline double shading_code(const std::string& category) {
  if (category == "Car") return 1.0;
  if (category == "Pedestrian") return 0.6;
  if (category == "Cyclist") return 0.3;
  return 0.1;
}

/// Input features on the depth grid, channel by channel:
///   0  horizontal ray slope (u - cx) / fu
///   1  vertical ray slope, 3 (v - cy) / fv
///   2  silhouette: projected 2D box height / image height * 4 inside the box's 2D extent
///   3  shading proxy: a per-category constant inside the 2D extent
///   4  noise, uniform in [-0.5, 0.5]
/// Where 2D extents overlap the nearest box wins.
inline Grid<double> render_features(const CameraIntrinsics& cam, const std::vector<Box3D>& boxes, int stride,
                                    std::uint64_t seed) {
  const int w = cam.width / stride, h = cam.height / stride;
  Grid<double> f(w, h, kFeatureChannels);
  Grid<double> nearest(w, h, 1, std::numeric_limits<double>::infinity());
  Rng rng(seed);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      f(x, y, 0) = (stride * (x + 0.5) - cam.cx) / cam.fu;
      f(x, y, 1) = 3.0 * (stride * (y + 0.5) - cam.cy) / cam.fv;
      f(x, y, 4) = uniform(rng, -0.5, 0.5);
    }
  }
  for (const auto& box : boxes) {
    const auto bb = kitti::project_bbox(box, cam);
    if (bb.right <= bb.left) continue;
    const double sil = 4.0 * bb.height() / cam.height;
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        const double u = stride * (x + 0.5), v = stride * (y + 0.5);
        if (u < bb.left || u > bb.right || v < bb.top || v > bb.bottom) continue;
        if (box.center.z() >= nearest(x, y)) continue;
        nearest(x, y) = box.center.z();
        f(x, y, 2) = sil;
        f(x, y, 3) = shading_code(box.category);
      }
    }
  }
  return f;
}

inline BoxTarget make_target(const Box3D& box, const CameraIntrinsics& cam, int stride) {
  const auto t = surface_depth_target(box, cam);
  BoxTarget out;
  out.cell = {static_cast<int>(std::floor(t.u / stride)), static_cast<int>(std::floor(t.v / stride))};
  out.category = class_index(box.category);
  out.u = t.u;
  out.v = t.v;
  out.surface_depth = t.surface_depth;
  out.surface_to_center = t.surface_to_center;
  out.center_depth = t.center_depth;
  out.size = box.size;
  out.yaw = box.yaw;
  return out;
}

/// Place boxes on the ground with centers projecting exactly onto feature
/// cell centers, then simulate LiDAR and build the supervised depth grid.
/// Deterministic for a seed; no two boxes overlap in BEV.
inline SceneSample generate_scene(const SceneConfig& cfg, std::uint64_t seed) {
  const CameraIntrinsics& cam = cfg.cam;
  if (!cam.valid() || cam.width % cfg.stride || cam.height % cfg.stride)
    throw InvalidArgument("generate_scene: camera size must be a multiple of the stride");
  Rng rng(derive_seed(seed, 1));
  SceneSample s;
  s.cam = cam;
  const int gw = cam.width / cfg.stride, gh = cam.height / cfg.stride;
  std::vector<GridCell> used_cells;

  for (const auto& [category, count] : cfg.counts) {
    const SizePrior prior = default_size_prior(category);
    for (int n = 0; n < count; ++n) {
      bool placed = false;
      for (int attempt = 0; attempt < cfg.max_retries && !placed; ++attempt) {
        Box3D box;
        box.category = category;
        box.size = {std::max(0.3, normal(rng, prior.mean_w, prior.sd_w)),
                    std::max(0.5, normal(rng, prior.mean_h, prior.sd_h)),
                    std::max(0.3, normal(rng, prior.mean_l, prior.sd_l))};
        box.yaw = normalize_angle(uniform(rng, -kPi, kPi));
        const double z = uniform(rng, cfg.min_depth, cfg.max_depth);
        const int gx = 2 + static_cast<int>(uniform_index(rng, static_cast<std::uint64_t>(gw - 4)));
        const double u = cfg.stride * (gx + 0.5);
        const double y_rest = cfg.ground_height - 0.5 * box.size.h;
        const double v_rest = cam.fv * y_rest / z + cam.cy;
        const int gy = static_cast<int>(std::floor(v_rest / cfg.stride));
        if (gy < 0 || gy >= gh) continue;
        const double v = cfg.stride * (gy + 0.5);
        box.center = unproject(cam, u, v, z);
        // must not sink into the ground by more than a few centimeters
        if (box.center.y() + 0.5 * box.size.h > cfg.ground_height + 0.05) continue;
        bool ok = true;
        for (const auto& c : box_corners(box)) ok = ok && c.z() > 1.0;
        // one object per keypoint cell, otherwise regression targets collide
        for (const auto& c : used_cells) ok = ok && !(c.x == gx && c.y == gy);
        for (const auto& other : s.boxes) ok = ok && bev_iou(box, other) == 0.0;
        // keep boxes apart so footprints never touch
        for (const auto& other : s.boxes)
          ok = ok && (bev_center(box) - bev_center(other)).norm() >
                         0.5 * (std::hypot(box.size.w, box.size.l) + std::hypot(other.size.w, other.size.l));
        if (!ok) continue;
        s.boxes.push_back(box);
        used_cells.push_back({gx, gy});
        placed = true;
      }
      if (!placed) throw std::runtime_error("generate_scene: could not place a " + category + " box");
    }
  }

  auto apart = [](const Box3D& a, const Box3D& b) {
    return (bev_center(a) - bev_center(b)).norm() >
           0.5 * (std::hypot(a.size.w, a.size.l) + std::hypot(b.size.w, b.size.l));
  };
  auto overlaps_2d = [](const kitti::BBox2D& a, const kitti::BBox2D& b) {
    return a.left < b.right && b.left < a.right && a.top < b.bottom && b.top < a.bottom;
  };
  for (int n = 0; n < cfg.walls; ++n) {
    bool placed = false;
    for (int attempt = 0; attempt < cfg.max_retries && !placed; ++attempt) {
      Box3D wall;
      wall.category = "Wall";
      wall.size = {0.4, cfg.wall_height, uniform(rng, 3.0, 8.0)};
      wall.yaw = uniform(rng, -0.3, 0.3);
      const double z =
          cfg.wall_min_depth + (n + uniform01(rng)) / cfg.walls * (cfg.wall_max_depth - cfg.wall_min_depth);
      const double u = uniform(rng, 0.0, cam.width);
      wall.center = {(u - cam.cx) * z / cam.fu, cfg.ground_height - 0.5 * wall.size.h, z};
      bool ok = true;
      for (const auto& c : box_corners(wall)) ok = ok && c.z() > 1.0;
      for (const auto& other : s.boxes) ok = ok && apart(wall, other);
      for (const auto& other : s.walls) ok = ok && apart(wall, other);
      if (!ok) continue;
      // never hide an annotated object behind a nearer wall
      const auto wb = kitti::project_bbox(wall, cam);
      for (const auto& obj : s.boxes)
        ok = ok && !(obj.center.z() > wall.center.z() && overlaps_2d(wb, kitti::project_bbox(obj, cam)));
      if (!ok) continue;
      s.walls.push_back(wall);
      placed = true;
    }
    if (!placed) throw std::runtime_error("generate_scene: could not place a background wall");
  }

  std::vector<Box3D> surfaces = s.boxes;
  surfaces.insert(surfaces.end(), s.walls.begin(), s.walls.end());
  s.points = simulate_lidar(surfaces, cfg.ground_height, cfg.lidar);
  DepthImage full = build_depth_map(s.points, cam, cfg.d_max);
  DepthImage pooled = minpool_downsample(full, cfg.stride);
  pooled = foreground_mask(std::move(pooled), s.points, s.boxes, cam);
  s.depth = background_subsample(std::move(pooled), derive_seed(seed, 2));
  s.features = render_features(cam, surfaces, cfg.stride, derive_seed(seed, 3));
  for (const auto& box : s.boxes) s.targets.push_back(make_target(box, cam, cfg.stride));
  return s;
}

/// Regression maps holding a scene's exact targets at the keypoint cells.
inline RegressionMaps target_maps(const SceneSample& s, int stride = kFeatureStride) {
  RegressionMaps m(s.depth.width(), s.depth.height(), stride);
  for (const auto& t : s.targets) {
    const int x = t.cell.x, y = t.cell.y;
    m.depth_raw(x, y) = encode_depth(t.surface_depth);
    m.log_var(x, y) = 0.0;
    m.d_s2c(x, y) = t.surface_to_center;
    m.size(x, y, 0) = t.size.w;
    m.size(x, y, 1) = t.size.h;
    m.size(x, y, 2) = t.size.l;
    m.yaw(x, y) = t.yaw;
  }
  return m;
}

inline Heatmap target_heatmap(const SceneSample& s) {
  std::vector<HeatmapKeypoint> kps;
  for (std::size_t i = 0; i < s.targets.size(); ++i) {
    const auto& t = s.targets[i];
    const auto bb = kitti::project_bbox(s.boxes[i], s.cam);
    const double stride = static_cast<double>(s.depth.stride);
    const double r = gaussian_radius(std::max(1.0, bb.right - bb.left) / stride,
                                     std::max(1.0, bb.bottom - bb.top) / stride);
    kps.push_back({t.cell.x, t.cell.y, t.category, r});
  }
  return render_heatmap(kps, s.depth.width(), s.depth.height(), static_cast<int>(kClassNames.size())).map;
}

// ---------------------------------------------------------------------------
// Toy model: F -> H (tanh) -> 2 perceptron shared across cells

class ToyModel {
 public:
  ToyModel() = default;
  ToyModel(int inputs, int hidden) : inputs_(inputs), hidden_(hidden), params_(count(inputs, hidden), 0.0) {}

  static std::size_t count(int inputs, int hidden) {
    return static_cast<std::size_t>(hidden) * inputs + hidden + 2 * static_cast<std::size_t>(hidden) + 2;
  }

  /// Scaled normal weights, zero hidden bias; the depth output bias starts
  /// at a 20 m prior. The log-variance head starts at zero everywhere: a
  /// random start can put s far below zero, and exp(-s) then blows up the
  /// first steps.
  static ToyModel initialized(int inputs, int hidden, std::uint64_t seed) {
    ToyModel m(inputs, hidden);
    Rng rng(seed);
    for (int j = 0; j < hidden; ++j)
      for (int i = 0; i < inputs; ++i) m.w1(j, i) = normal(rng) / std::sqrt(static_cast<double>(inputs));
    for (int j = 0; j < hidden; ++j) m.w2(0, j) = normal(rng) / std::sqrt(static_cast<double>(hidden));
    m.b2(0) = encode_depth(20.0);
    m.b2(1) = 0.0;
    return m;
  }

  int inputs() const { return inputs_; }
  int hidden() const { return hidden_; }
  std::uint64_t generation() const { return generation_; }

  std::span<const double> params() const { return params_; }

  /// Mutable parameter access bumps the generation, invalidating caches.
  std::span<double> mutable_params() {
    ++generation_;
    return params_;
  }

  double& w1(int j, int i) { return params_[static_cast<std::size_t>(j) * inputs_ + i]; }
  double w1(int j, int i) const { return params_[static_cast<std::size_t>(j) * inputs_ + i]; }
  double& b1(int j) { return params_[offset_b1() + j]; }
  double b1(int j) const { return params_[offset_b1() + j]; }
  double& w2(int k, int j) { return params_[offset_w2() + static_cast<std::size_t>(k) * hidden_ + j]; }
  double w2(int k, int j) const { return params_[offset_w2() + static_cast<std::size_t>(k) * hidden_ + j]; }
  double& b2(int k) { return params_[offset_b2() + k]; }
  double b2(int k) const { return params_[offset_b2() + k]; }

  std::size_t offset_b1() const { return static_cast<std::size_t>(hidden_) * inputs_; }
  std::size_t offset_w2() const { return offset_b1() + hidden_; }
  std::size_t offset_b2() const { return offset_w2() + 2 * static_cast<std::size_t>(hidden_); }

 private:
  int inputs_ = 0;
  int hidden_ = 0;
  std::vector<double> params_;
  std::uint64_t generation_ = 0;
};

struct ForwardCache {
  const ToyModel* model = nullptr;
  std::uint64_t generation = 0;
  const Grid<double>* features = nullptr;
  std::vector<std::size_t> cells;  // plane indices evaluated
  std::vector<double> hidden;      // tanh activations, cells x H
};

struct ForwardResult {
  DepthPrediction pred;
  ForwardCache cache;
};

namespace detail {

inline std::vector<std::size_t> all_cells(const Grid<double>& features) {
  std::vector<std::size_t> c(features.plane_size());
  for (std::size_t i = 0; i < c.size(); ++i) c[i] = i;
  return c;
}

}  // namespace detail

/// Evaluate the model on the listed cells only (others stay zero).
inline ForwardResult model_forward(const ToyModel& model, const Grid<double>& features,
                                   std::vector<std::size_t> cells) {
  if (features.channels() != model.inputs()) throw InvalidArgument("model_forward: feature channel mismatch");
  const int w = features.width(), h = features.height(), H = model.hidden(), F = model.inputs();
  const std::size_t plane = features.plane_size();
  ForwardResult r{{Grid<double>(w, h), Grid<double>(w, h)}, {&model, model.generation(), &features, {}, {}}};
  r.cache.hidden.resize(cells.size() * H);
  for (std::size_t n = 0; n < cells.size(); ++n) {
    const std::size_t c = cells[n];
    if (c >= plane) throw InvalidArgument("model_forward: cell index out of range");
    double out0 = model.b2(0), out1 = model.b2(1);
    for (int j = 0; j < H; ++j) {
      double a = model.b1(j);
      for (int i = 0; i < F; ++i) a += model.w1(j, i) * features[i * plane + c];
      a = std::tanh(a);
      r.cache.hidden[n * H + j] = a;
      out0 += model.w2(0, j) * a;
      out1 += model.w2(1, j) * a;
    }
    r.pred.depth_raw[c] = out0;
    r.pred.log_var[c] = out1;
  }
  r.cache.cells = std::move(cells);
  return r;
}

inline ForwardResult model_forward(const ToyModel& model, const Grid<double>& features) {
  return model_forward(model, features, detail::all_cells(features));
}

/// Chain rule from output-grid gradients to parameter gradients. Only cells
/// evaluated in the forward pass contribute.
inline std::vector<double> model_backward(const ToyModel& model, const ForwardCache& cache,
                                          const Grid<double>& grad_raw, const Grid<double>& grad_log_var) {
  if (cache.model != &model || cache.generation != model.generation())
    throw std::logic_error("model_backward: stale forward cache");
  const Grid<double>& features = *cache.features;
  if (!grad_raw.same_shape(Grid<double>(features.width(), features.height())) || !grad_raw.same_shape(grad_log_var))
    throw InvalidArgument("model_backward: gradient shape mismatch");
  const int H = model.hidden(), F = model.inputs();
  const std::size_t plane = features.plane_size();
  ToyModel g(F, H);
  std::vector<double> dh(H);
  for (std::size_t n = 0; n < cache.cells.size(); ++n) {
    const std::size_t c = cache.cells[n];
    const double g0 = grad_raw[c], g1 = grad_log_var[c];
    if (g0 == 0.0 && g1 == 0.0) continue;
    g.b2(0) += g0;
    g.b2(1) += g1;
    for (int j = 0; j < H; ++j) {
      const double a = cache.hidden[n * H + j];
      g.w2(0, j) += g0 * a;
      g.w2(1, j) += g1 * a;
      dh[j] = (g0 * model.w2(0, j) + g1 * model.w2(1, j)) * (1.0 - a * a);
      g.b1(j) += dh[j];
      for (int i = 0; i < F; ++i) g.w1(j, i) += dh[j] * features[i * plane + c];
    }
  }
  return {g.params().begin(), g.params().end()};
}

// ---------------------------------------------------------------------------
// Training

struct TrainConfig {
  double lambda = kForegroundWeight;
  int steps = 2000;
  double learning_rate = 1e-2;
  std::uint64_t seed = 0;
  int train_scenes = 8;
  int test_scenes = 4;
  int hidden = 16;
  SceneConfig scene;
};

/// Loss and gradient of one scene under the object-centric depth objective.
struct SceneLoss {
  LossBreakdown breakdown;
  std::vector<double> grad;
};

inline std::vector<GridCell> keypoint_cells(const SceneSample& s) {
  std::vector<GridCell> cells;
  for (const auto& t : s.targets) cells.push_back(t.cell);
  return cells;
}

inline std::vector<double> keypoint_targets(const SceneSample& s) {
  std::vector<double> d;
  for (const auto& t : s.targets) d.push_back(t.surface_depth);
  return d;
}

/// Cells that receive any supervision: keypoints, fg and bg pixels.
inline std::vector<std::size_t> supervised_cells(const SceneSample& s) {
  std::vector<std::uint8_t> used(s.depth.depth.size(), 0);
  for (std::size_t i = 0; i < used.size(); ++i) used[i] = s.depth.fg[i] || s.depth.bg[i];
  for (const auto& t : s.targets) used[s.depth.depth.index(t.cell.x, t.cell.y)] = 1;
  std::vector<std::size_t> cells;
  for (std::size_t i = 0; i < used.size(); ++i)
    if (used[i]) cells.push_back(i);
  return cells;
}

inline SceneLoss scene_loss(const ToyModel& model, const SceneSample& s, double lambda,
                            const std::vector<std::size_t>& cells) {
  const auto fwd = model_forward(model, s.features, cells);
  const auto kp_cells = keypoint_cells(s);
  const auto kp_targets = keypoint_targets(s);
  const auto obj = gathered_instance_loss(fwd.pred, kp_cells, kp_targets);
  const auto fg = pixel_depth_loss(fwd.pred, s.depth, PixelMask::Foreground);
  const auto bg = pixel_depth_loss(fwd.pred, s.depth, PixelMask::Background);
  SceneLoss out{total_depth_loss(obj, fg, bg, lambda), {}};
  out.grad = model_backward(model, fwd.cache, out.breakdown.grad_raw, out.breakdown.grad_log_var);
  return out;
}

struct TrainMetrics {
  double initial_loss = 0.0;
  double final_loss = 0.0;
  DepthMetrics foreground;
  DepthMetrics raw;
  double ap40 = 0.0;
};

struct TrainResult {
  ToyModel model;
  TrainMetrics metrics;
};

/// Depth predictions of the model at fg / all valid cells of held-out scenes.
inline std::pair<DepthMetrics, DepthMetrics> depth_performance(const ToyModel& model,
                                                               std::span<const SceneSample> scenes) {
  std::vector<double> fg_pred, fg_gt, raw_pred, raw_gt;
  for (const auto& s : scenes) {
    const auto pred = model_forward(model, s.features).pred;
    for (std::size_t i = 0; i < s.depth.depth.size(); ++i) {
      if (!s.depth.valid[i]) continue;
      const double p = decode_depth(pred.depth_raw[i]);
      raw_pred.push_back(p);
      raw_gt.push_back(s.depth.depth[i]);
      if (s.depth.fg[i]) {
        fg_pred.push_back(p);
        fg_gt.push_back(s.depth.depth[i]);
      }
    }
  }
  if (fg_pred.empty() || raw_pred.empty()) throw std::runtime_error("depth_performance: no valid pixels");
  return {depth_metrics(fg_pred, fg_gt), depth_metrics(raw_pred, raw_gt)};
}

/// Decode detections at the ground-truth keypoints using the model's depth and
/// uncertainty and ground-truth size/yaw/d_s2c, then AP40 (3D IoU, default
/// class thresholds) averaged over classes present.
inline double detection_ap40(const ToyModel& model, std::span<const SceneSample> scenes) {
  std::vector<EvalFrame> frames;
  for (const auto& s : scenes) {
    auto maps = target_maps(s);
    const auto pred = model_forward(model, s.features).pred;
    EvalFrame f;
    for (std::size_t i = 0; i < s.targets.size(); ++i) {
      const auto& t = s.targets[i];
      maps.depth_raw(t.cell.x, t.cell.y) = pred.depth_raw(t.cell.x, t.cell.y);
      maps.log_var(t.cell.x, t.cell.y) = pred.log_var(t.cell.x, t.cell.y);
      const auto det = decode_detection({t.cell.x, t.cell.y, t.category, 1.0}, maps, s.cam);
      f.dets.push_back({det.box, det.p_3d});
      f.gts.push_back(s.boxes[i]);
      f.gt_difficulty.push_back(kitti::Difficulty::Easy);
    }
    frames.push_back(std::move(f));
  }
  double sum = 0.0;
  int n = 0;
  for (const auto& cat : kClassNames) {
    const auto r = evaluate_category(frames, cat, MatchCriterion::Iou3d, default_iou_threshold(cat), std::nullopt,
                                     RangeBucket{});
    if (r.ap40) {
      sum += *r.ap40;
      ++n;
    }
  }
  return n ? sum / n : 0.0;
}

inline std::vector<SceneSample> make_scenes(const SceneConfig& cfg, std::uint64_t seed, int count,
                                            std::uint64_t stream) {
  std::vector<SceneSample> scenes;
  for (int i = 0; i < count; ++i) scenes.push_back(generate_scene(cfg, derive_seed(seed, stream, i)));
  return scenes;
}

/// Mean loss and gradient over a scene set.
inline std::pair<double, std::vector<double>> batch_loss(const ToyModel& model, std::span<const SceneSample> scenes,
                                                         double lambda,
                                                         const std::vector<std::vector<std::size_t>>& cells) {
  std::vector<double> grad(model.params().size(), 0.0);
  double loss = 0.0;
  const double inv = 1.0 / static_cast<double>(scenes.size());
  for (std::size_t k = 0; k < scenes.size(); ++k) {
    const auto sl = scene_loss(model, scenes[k], lambda, cells[k]);
    loss += inv * sl.breakdown.l_total;
    for (std::size_t i = 0; i < grad.size(); ++i) grad[i] += inv * sl.grad[i];
  }
  return {loss, grad};
}

/// Fixed-step gradient descent on the object-centric depth loss over a fixed
/// set of generated scenes; metrics on held-out scenes.
inline TrainResult train_toy(const TrainConfig& cfg) {
  if (!(cfg.lambda >= 0.0 && cfg.lambda <= 1.0)) throw InvalidArgument("train_toy: lambda must be in [0, 1]");
  if (cfg.train_scenes < 1 || cfg.test_scenes < 1 || cfg.steps < 0)
    throw InvalidArgument("train_toy: need scenes and a non-negative step count");
  const auto train = make_scenes(cfg.scene, cfg.seed, cfg.train_scenes, 10);
  const auto test = make_scenes(cfg.scene, cfg.seed, cfg.test_scenes, 11);
  std::vector<std::vector<std::size_t>> cells;
  for (const auto& s : train) cells.push_back(supervised_cells(s));

  TrainResult res{ToyModel::initialized(kFeatureChannels, cfg.hidden, derive_seed(cfg.seed, 12)), {}};
  for (int step = 0; step <= cfg.steps; ++step) {
    auto [loss, grad] = batch_loss(res.model, train, cfg.lambda, cells);
    if (!std::isfinite(loss)) throw DivergenceError(step);
    if (step == 0) res.metrics.initial_loss = loss;
    res.metrics.final_loss = loss;
    if (step == cfg.steps) break;
    auto p = res.model.mutable_params();
    for (std::size_t i = 0; i < p.size(); ++i) p[i] -= cfg.learning_rate * grad[i];
  }
  std::tie(res.metrics.foreground, res.metrics.raw) = depth_performance(res.model, test);
  res.metrics.ap40 = detection_ap40(res.model, test);
  return res;
}

// ---------------------------------------------------------------------------
// Foreground-weight sweep

struct SweepRow {
  double lambda = 0.0;
  std::uint64_t seed = 0;
  TrainMetrics metrics;
};

struct SweepReport {
  std::vector<SweepRow> rows;

  /// Seed-mean of a metric for one lambda.
  template <typename F>
  double mean(double lambda, F&& metric) const {
    double sum = 0.0;
    int n = 0;
    for (const auto& r : rows)
      if (r.lambda == lambda) {
        sum += metric(r.metrics);
        ++n;
      }
    return n ? sum / n : std::numeric_limits<double>::quiet_NaN();
  }
};

class SweepError : public std::runtime_error {
 public:
  SweepError(double lambda, std::uint64_t seed, const std::string& what)
      : std::runtime_error("lambda " + std::to_string(lambda) + ", seed " + std::to_string(seed) + ": " + what) {}
};

/// Train one model per (lambda, seed). Runs sharing a seed share scenes and
/// initialization, so lambdas are compared on paired data. `jobs` caps the
/// worker threads; results do not depend on it.
inline SweepReport lambda_sweep(const std::vector<double>& lambdas, const std::vector<std::uint64_t>& seeds,
                                const TrainConfig& base, int jobs = 1) {
  if (lambdas.size() < 2) throw InvalidArgument("lambda_sweep: need at least two lambda values");
  if (seeds.size() < 3) throw InvalidArgument("lambda_sweep: need at least three seeds");
  SweepReport report;
  for (double l : lambdas)
    for (auto s : seeds) report.rows.push_back({l, s, {}});
  std::vector<std::string> errors(report.rows.size());
  auto run = [&](std::size_t i) {
    auto& row = report.rows[i];
    TrainConfig cfg = base;
    cfg.lambda = row.lambda;
    cfg.seed = row.seed;
    try {
      row.metrics = train_toy(cfg).metrics;
    } catch (const std::exception& e) {
      errors[i] = e.what();
    }
  };
  const std::size_t n_jobs = std::max<std::size_t>(1, std::min<std::size_t>(jobs, report.rows.size()));
  if (n_jobs == 1) {
    for (std::size_t i = 0; i < report.rows.size(); ++i) run(i);
  } else {
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < n_jobs; ++w)
      pool.emplace_back([&, w] {
        for (std::size_t i = w; i < report.rows.size(); i += n_jobs) run(i);
      });
    for (auto& t : pool) t.join();
  }
  for (std::size_t i = 0; i < errors.size(); ++i)
    if (!errors[i].empty()) throw SweepError(report.rows[i].lambda, report.rows[i].seed, errors[i]);
  return report;
}

}  // namespace ocdepth::synth
