#pragma once

// KITTI object label, calibration and detection-result text formats.
//
// Label line, whitespace separated:
//   type truncated occluded alpha left top right bottom h w l x y z rotation_y [score]
// (x, y, z) is the bottom-face center in camera coordinates. Internally boxes
// use the geometric center, so y_center = y_kitti - h / 2.

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "ocdepth/detection.hpp"
#include "ocdepth/errors.hpp"
#include "ocdepth/geometry.hpp"

namespace ocdepth::kitti {

struct BBox2D {
  double left = 0.0;
  double top = 0.0;
  double right = 0.0;
  double bottom = 0.0;

  double height() const { return bottom - top; }
};

struct Annotation {
  std::string category;
  double truncated = 0.0;
  int occluded = 0;
  double alpha = 0.0;
  BBox2D bbox;
  double h = 0.0, w = 0.0, l = 0.0;
  Vec3 location = Vec3::Zero();  // bottom-face center
  double rotation_y = 0.0;
  std::optional<double> score;

  bool dont_care() const { return category == "DontCare"; }
};

enum class Difficulty { Easy = 0, Moderate = 1, Hard = 2, Ignored = 3 };

inline const char* to_string(Difficulty d) {
  switch (d) {
    case Difficulty::Easy: return "Easy";
    case Difficulty::Moderate: return "Moderate";
    case Difficulty::Hard: return "Hard";
    case Difficulty::Ignored: return "Ignored";
  }
  return "Ignored";
}

namespace detail {

inline constexpr std::string_view kFieldNames[16] = {
    "type",   "truncated", "occluded", "alpha", "left", "top", "right",      "bottom",
    "height", "width",     "length",   "x",     "y",    "z",   "rotation_y", "score"};

inline std::vector<std::string_view> split_ws(std::string_view s) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  auto is_ws = [](char c) { return c == ' ' || c == '\t' || c == '\r' || c == '\n' || c == '\v' || c == '\f'; };
  while (i < s.size()) {
    while (i < s.size() && is_ws(s[i])) ++i;
    std::size_t j = i;
    while (j < s.size() && !is_ws(s[j])) ++j;
    if (j > i) out.push_back(s.substr(i, j - i));
    i = j;
  }
  return out;
}

inline double to_double(std::string_view tok, std::string_view field, std::size_t line) {
  double v = 0.0;
  const char* first = tok.data();
  if (!tok.empty() && tok.front() == '+') ++first;
  auto [ptr, ec] = std::from_chars(first, tok.data() + tok.size(), v);
  if (ec != std::errc{} || ptr != tok.data() + tok.size() || !std::isfinite(v))
    throw ParseError(std::string(field), line, std::string(tok));
  return v;
}

inline int to_int(std::string_view tok, std::string_view field, std::size_t line) {
  int v = 0;
  auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
  if (ec != std::errc{} || ptr != tok.data() + tok.size()) throw ParseError(std::string(field), line, std::string(tok));
  return v;
}

inline std::string fixed(double v, int decimals) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", decimals, v);
  std::string s(buf);
  // avoid "-0.00"
  if (s.find_first_not_of("-0.") == std::string::npos && s.front() == '-') s.erase(0, 1);
  return s;
}

inline bool printable_token(std::string_view tok) {
  return std::all_of(tok.begin(), tok.end(), [](unsigned char c) { return c > 0x20 && c < 0x7f; });
}

}  // namespace detail

inline Annotation parse_label_line(std::string_view line, std::size_t line_no = 1) {
  using namespace detail;
  const auto tok = split_ws(line);
  if (tok.size() != 15 && tok.size() != 16)
    throw FormatError("expected 15 or 16 fields, got " + std::to_string(tok.size()), line_no);
  if (!printable_token(tok[0])) throw ParseError("type", line_no, std::string(tok[0]));

  Annotation a;
  a.category = std::string(tok[0]);
  a.truncated = to_double(tok[1], kFieldNames[1], line_no);
  a.occluded = to_int(tok[2], kFieldNames[2], line_no);
  a.alpha = to_double(tok[3], kFieldNames[3], line_no);
  a.bbox = {to_double(tok[4], kFieldNames[4], line_no), to_double(tok[5], kFieldNames[5], line_no),
            to_double(tok[6], kFieldNames[6], line_no), to_double(tok[7], kFieldNames[7], line_no)};
  a.h = to_double(tok[8], kFieldNames[8], line_no);
  a.w = to_double(tok[9], kFieldNames[9], line_no);
  a.l = to_double(tok[10], kFieldNames[10], line_no);
  a.location = {to_double(tok[11], kFieldNames[11], line_no), to_double(tok[12], kFieldNames[12], line_no),
                to_double(tok[13], kFieldNames[13], line_no)};
  a.rotation_y = to_double(tok[14], kFieldNames[14], line_no);
  if (tok.size() == 16) a.score = to_double(tok[15], kFieldNames[15], line_no);

  if (a.bbox.right < a.bbox.left || a.bbox.bottom < a.bbox.top)
    throw FormatError("2D box has right < left or bottom < top", line_no);
  if (!a.dont_care()) {
    if (!(a.h > 0.0 && a.w > 0.0 && a.l > 0.0)) throw FormatError("non-positive dimensions", line_no);
    if (a.occluded < 0 || a.occluded > 3) throw FormatError("occluded must be in {0,1,2,3}", line_no);
  }
  return a;
}

/// Parse a whole label file; blank lines are skipped, line numbers are 1-based.
inline std::vector<Annotation> parse_label_file(std::string_view text) {
  std::vector<Annotation> out;
  std::size_t line_no = 0, start = 0;
  while (start <= text.size()) {
    std::size_t end = text.find('\n', start);
    if (end == std::string_view::npos) end = text.size();
    ++line_no;
    const auto line = text.substr(start, end - start);
    if (!detail::split_ws(line).empty()) out.push_back(parse_label_line(line, line_no));
    start = end + 1;
  }
  return out;
}

inline std::string serialize(const Annotation& a) {
  using detail::fixed;
  std::string s = a.category;
  for (const std::string& f :
       {fixed(a.truncated, 2), std::to_string(a.occluded), fixed(a.alpha, 2), fixed(a.bbox.left, 2),
        fixed(a.bbox.top, 2), fixed(a.bbox.right, 2), fixed(a.bbox.bottom, 2), fixed(a.h, 2), fixed(a.w, 2),
        fixed(a.l, 2), fixed(a.location.x(), 2), fixed(a.location.y(), 2), fixed(a.location.z(), 2),
        fixed(a.rotation_y, 2)}) {
    s += ' ';
    s += f;
  }
  if (a.score) s += ' ' + fixed(*a.score, 4);
  return s;
}

inline std::string serialize(const std::vector<Annotation>& anns) {
  std::string out;
  for (const auto& a : anns) out += serialize(a) + '\n';
  return out;
}

/// Reads the P2 row; translation terms (P2[0][3], P2[1][3], P2[2][3]) are ignored.
/// Image size is not stored in calib files and is taken from the arguments.
inline CameraIntrinsics parse_calib(std::string_view text, int width = 1242, int height = 375) {
  std::size_t line_no = 0, start = 0;
  while (start <= text.size()) {
    std::size_t end = text.find('\n', start);
    if (end == std::string_view::npos) end = text.size();
    ++line_no;
    const auto tok = detail::split_ws(text.substr(start, end - start));
    if (!tok.empty() && tok[0] == "P2:") {
      if (tok.size() != 13) throw FormatError("P2 row needs 12 numbers", line_no);
      double p[12];
      for (int i = 0; i < 12; ++i) p[i] = detail::to_double(tok[i + 1], "P2[" + std::to_string(i) + "]", line_no);
      CameraIntrinsics cam{p[0], p[5], p[2], p[6], width, height};
      if (!(cam.fu > 0.0 && cam.fv > 0.0)) throw FormatError("P2 focal lengths must be positive", line_no);
      return cam;
    }
    start = end + 1;
  }
  throw FormatError("missing P2 row", line_no);
}

/// Writes P0..P3 (all equal to the intrinsics, zero translation) plus
/// identity R0_rect and zero Tr rows, full double precision.
inline std::string write_calib(const CameraIntrinsics& cam) {
  char buf[512];
  std::snprintf(buf, sizeof buf, "%.17g 0 %.17g 0 0 %.17g %.17g 0 0 0 1 0", cam.fu, cam.cx, cam.fv, cam.cy);
  std::string p(buf);
  std::string out;
  for (int i = 0; i < 4; ++i) out += "P" + std::to_string(i) + ": " + p + "\n";
  out += "R0_rect: 1 0 0 0 1 0 0 0 1\n";
  out += "Tr_velo_to_cam: 1 0 0 0 0 1 0 0 0 0 1 0\n";
  out += "Tr_imu_to_velo: 1 0 0 0 0 1 0 0 0 0 1 0\n";
  return out;
}

/// Easy: height >= 40, occluded <= 0, truncated <= 0.15.
/// Moderate: height >= 25, occluded <= 1, truncated <= 0.30.
/// Hard: height >= 25, occluded <= 2, truncated <= 0.50.
inline Difficulty assign_difficulty(const Annotation& a) {
  static constexpr double kMinHeight[3] = {40.0, 25.0, 25.0};
  static constexpr int kMaxOcclusion[3] = {0, 1, 2};
  static constexpr double kMaxTruncation[3] = {0.15, 0.30, 0.50};
  if (a.dont_care()) return Difficulty::Ignored;
  const double height = a.bbox.height();
  for (int i = 0; i < 3; ++i) {
    if (height >= kMinHeight[i] && a.occluded <= kMaxOcclusion[i] && a.truncated <= kMaxTruncation[i])
      return static_cast<Difficulty>(i);
  }
  return Difficulty::Ignored;
}

inline Box3D to_box(const Annotation& a) {
  Box3D b;
  b.center = {a.location.x(), a.location.y() - 0.5 * a.h, a.location.z()};
  b.size = {a.w, a.h, a.l};
  b.yaw = normalize_angle(a.rotation_y);
  b.category = a.category;
  return b;
}

/// 2D box of the projected corners, clipped to the image.
inline BBox2D project_bbox(const Box3D& box, const CameraIntrinsics& cam) {
  BBox2D bb{1e300, 1e300, -1e300, -1e300};
  for (const Vec3& c : box_corners(box)) {
    if (c.z() <= 1e-6) continue;
    const auto p = project(cam, c);
    bb.left = std::min(bb.left, p.u);
    bb.top = std::min(bb.top, p.v);
    bb.right = std::max(bb.right, p.u);
    bb.bottom = std::max(bb.bottom, p.v);
  }
  if (bb.left > bb.right) return {};
  bb.left = std::clamp(bb.left, 0.0, cam.width - 1.0);
  bb.right = std::clamp(bb.right, 0.0, cam.width - 1.0);
  bb.top = std::clamp(bb.top, 0.0, cam.height - 1.0);
  bb.bottom = std::clamp(bb.bottom, 0.0, cam.height - 1.0);
  return bb;
}

/// Observation angle: rotation_y minus the azimuth of the center, KITTI style.
inline double observation_angle(const Box3D& box) {
  return normalize_angle(box.yaw - std::atan2(box.center.x(), box.center.z()));
}

inline Annotation from_box(const Box3D& box, const CameraIntrinsics& cam, std::optional<double> score = {}) {
  Annotation a;
  a.category = box.category;
  a.alpha = observation_angle(box);
  a.bbox = project_bbox(box, cam);
  a.h = box.size.h;
  a.w = box.size.w;
  a.l = box.size.l;
  a.location = {box.center.x(), box.center.y() + 0.5 * box.size.h, box.center.z()};
  a.rotation_y = box.yaw;
  a.score = score;
  return a;
}

/// One 16-field result line; the score column carries p_3d.
inline std::string write_detection(const Detection& det, const CameraIntrinsics& cam) {
  return serialize(from_box(det.box, cam, det.p_3d));
}

}  // namespace ocdepth::kitti
