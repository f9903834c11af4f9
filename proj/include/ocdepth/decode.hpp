#pragma once

// Keypoint extraction and detection decoding with depth-uncertainty-aware
// 3D confidence.

#include <algorithm>
#include <cmath>
#include <span>
#include <vector>

#include "ocdepth/detection.hpp"
#include "ocdepth/geometry.hpp"
#include "ocdepth/grid.hpp"
#include "ocdepth/losses.hpp"

namespace ocdepth {

inline constexpr int kFeatureStride = 4;
inline constexpr double kKittiPreThreshold = 0.4;
inline constexpr double kNuScenesPreThreshold = 0.1;

struct Keypoint {
  int x = 0;  // feature-map cell
  int y = 0;
  int category = 0;
  double score = 0.0;  // p_k
};

/// Cells that are maxima of their 3x3 neighbourhood within their channel
/// (ties kept), scoring at least `thresh`; the top k by score. Equal scores
/// are ordered by (category, y, x).
inline std::vector<Keypoint> extract_keypoints(const Heatmap& hm, int k, double thresh) {
  if (k < 1) throw InvalidArgument("extract_keypoints: k must be at least 1");
  std::vector<Keypoint> peaks;
  for (int c = 0; c < hm.channels(); ++c) {
    for (int y = 0; y < hm.height(); ++y) {
      for (int x = 0; x < hm.width(); ++x) {
        const double v = hm(x, y, c);
        if (!(v >= thresh)) continue;
        bool is_max = true;
        for (int dy = -1; dy <= 1 && is_max; ++dy)
          for (int dx = -1; dx <= 1; ++dx)
            if (hm.in_bounds(x + dx, y + dy) && hm(x + dx, y + dy, c) > v) {
              is_max = false;
              break;
            }
        if (is_max) peaks.push_back({x, y, c, v});
      }
    }
  }
  std::stable_sort(peaks.begin(), peaks.end(), [](const Keypoint& a, const Keypoint& b) {
    if (a.score != b.score) return a.score > b.score;
    if (a.category != b.category) return a.category < b.category;
    if (a.y != b.y) return a.y < b.y;
    return a.x < b.x;
  });
  if (peaks.size() > static_cast<std::size_t>(k)) peaks.resize(k);
  return peaks;
}

/// Per-cell regression outputs of the detection head.
struct RegressionMaps {
  Grid<double> depth_raw;
  Grid<double> log_var;
  Grid<double> d_s2c;
  Grid<double> size;  // channels: w, h, l
  Grid<double> yaw;
  int stride = kFeatureStride;

  RegressionMaps() = default;
  RegressionMaps(int w, int h, int stride_ = kFeatureStride)
      : depth_raw(w, h), log_var(w, h), d_s2c(w, h), size(w, h, 3), yaw(w, h), stride(stride_) {}
};

inline double depth_confidence(double variance) {
  if (!(variance >= 0.0)) throw InvalidArgument("depth_confidence: variance must be non-negative");
  return std::exp(-variance);
}

inline double fuse_confidence(double p_k, double p_dep) { return p_k * p_dep; }

/// Gather every map at the keypoint cell and assemble the 3D box. The cell
/// center (x + 0.5) * stride is used as the image keypoint.
inline Detection decode_detection(const Keypoint& kp, const RegressionMaps& maps, const CameraIntrinsics& cam) {
  if (!maps.depth_raw.in_bounds(kp.x, kp.y)) throw InvalidArgument("decode_detection: keypoint outside the maps");
  Detection det;
  det.u = (kp.x + 0.5) * maps.stride;
  det.v = (kp.y + 0.5) * maps.stride;
  det.category = (kp.category >= 0 && kp.category < static_cast<int>(kClassNames.size())) ? kClassNames[kp.category]
                                                                                          : std::to_string(kp.category);
  det.d_s = decode_depth(maps.depth_raw(kp.x, kp.y));
  det.d_s2c = maps.d_s2c(kp.x, kp.y);
  det.d_c = compose_center_depth(det.d_s, det.d_s2c);
  det.variance = std::exp(maps.log_var(kp.x, kp.y));
  det.p_k = kp.score;
  det.p_dep = depth_confidence(det.variance);
  det.p_3d = fuse_confidence(det.p_k, det.p_dep);
  det.box.center = unproject(cam, det.u, det.v, det.d_c);
  det.box.size = {maps.size(kp.x, kp.y, 0), maps.size(kp.x, kp.y, 1), maps.size(kp.x, kp.y, 2)};
  det.box.yaw = normalize_angle(maps.yaw(kp.x, kp.y));
  det.box.category = det.category;
  return det;
}

/// Drop detections whose keypoint score is below the threshold, refresh p_3d
/// and order by p_3d, highest first. No NMS.
inline std::vector<Detection> filter_detections(std::vector<Detection> dets, double pre_thresh) {
  std::erase_if(dets, [&](const Detection& d) { return d.p_k < pre_thresh; });
  for (auto& d : dets) d.p_3d = fuse_confidence(d.p_k, d.p_dep);
  std::stable_sort(dets.begin(), dets.end(), [](const Detection& a, const Detection& b) { return a.p_3d > b.p_3d; });
  return dets;
}

inline std::vector<Detection> decode_all(const Heatmap& hm, const RegressionMaps& maps, const CameraIntrinsics& cam,
                                         int k = 100, double pre_thresh = kKittiPreThreshold) {
  std::vector<Detection> dets;
  for (const auto& kp : extract_keypoints(hm, k, pre_thresh)) dets.push_back(decode_detection(kp, maps, cam));
  return filter_detections(std::move(dets), pre_thresh);
}

}  // namespace ocdepth
