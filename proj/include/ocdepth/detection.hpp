#pragma once

#include <array>
#include <string>

#include "ocdepth/geometry.hpp"

namespace ocdepth {

/// Classes rendered as heatmap channels, in channel order.
inline const std::array<std::string, 3> kClassNames = {"Car", "Pedestrian", "Cyclist"};

inline int class_index(const std::string& name) {
  for (std::size_t i = 0; i < kClassNames.size(); ++i)
    if (kClassNames[i] == name) return static_cast<int>(i);
  return -1;
}

/// A decoded object. Invariants: d_c = d_s + d_s2c, p_dep = exp(-variance),
/// p_3d = p_k * p_dep.
struct Detection {
  double u = 0.0;  // keypoint, image pixels
  double v = 0.0;
  std::string category;
  double d_s = 0.0;
  double d_s2c = 0.0;
  double d_c = 0.0;
  double variance = 0.0;
  double p_k = 0.0;
  double p_dep = 0.0;
  double p_3d = 0.0;
  Box3D box;
};

}  // namespace ocdepth
