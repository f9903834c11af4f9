#pragma once

// JSON and CSV output for scenes, detections, evaluation reports, sweeps and
// the surface-error IoU table.

#include <cmath>
#include <cstdio>
#include <limits>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "ocdepth/detection.hpp"
#include "ocdepth/errors.hpp"
#include "ocdepth/evaluation.hpp"
#include "ocdepth/synth.hpp"

namespace ocdepth::io {

using Json = nlohmann::ordered_json;

/// Shortest text that parses back to the same double.
inline std::string exact(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline std::string fixed(double v, int decimals = 6) {
  if (!std::isfinite(v)) return "";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", decimals, v);
  std::string s = buf;
  if (s.find_first_not_of("-0.") == std::string::npos && s.front() == '-') s.erase(0, 1);
  return s;
}

inline Json optional_number(std::optional<double> v) {
  return v && std::isfinite(*v) ? Json(*v) : Json(nullptr);
}

// ---------------------------------------------------------------------------
// Geometry and scenes

inline Json to_json(const CameraIntrinsics& c) {
  return {{"fu", c.fu}, {"fv", c.fv}, {"cx", c.cx}, {"cy", c.cy}, {"width", c.width}, {"height", c.height}};
}

inline CameraIntrinsics camera_from_json(const Json& j) {
  return {j.at("fu").get<double>(), j.at("fv").get<double>(), j.at("cx").get<double>(),
          j.at("cy").get<double>(), j.at("width").get<int>(),  j.at("height").get<int>()};
}

inline Json to_json(const Box3D& b) {
  return {{"category", b.category},
          {"center", {b.center.x(), b.center.y(), b.center.z()}},
          {"size", {{"w", b.size.w}, {"h", b.size.h}, {"l", b.size.l}}},
          {"yaw", b.yaw}};
}

inline Box3D box_from_json(const Json& j) {
  Box3D b;
  b.category = j.at("category").get<std::string>();
  const auto& c = j.at("center");
  b.center = {c.at(0).get<double>(), c.at(1).get<double>(), c.at(2).get<double>()};
  const auto& s = j.at("size");
  b.size = {s.at("w").get<double>(), s.at("h").get<double>(), s.at("l").get<double>()};
  b.yaw = j.at("yaw").get<double>();
  return b;
}

/// Scene JSON. The depth grid is stored separately in the binary depth format
/// and referenced by file name.
inline Json to_json(const synth::SceneSample& s, const std::string& depth_file) {
  Json boxes = Json::array(), walls = Json::array(), points = Json::array(), targets = Json::array();
  for (const auto& b : s.boxes) boxes.push_back(to_json(b));
  for (const auto& b : s.walls) walls.push_back(to_json(b));
  for (const auto& p : s.points.points) points.push_back({p.x(), p.y(), p.z()});
  for (const auto& t : s.targets)
    targets.push_back({{"cell", {t.cell.x, t.cell.y}},
                       {"category", kClassNames.at(static_cast<std::size_t>(t.category))},
                       {"u", t.u},
                       {"v", t.v},
                       {"surface_depth", t.surface_depth},
                       {"surface_to_center", t.surface_to_center},
                       {"center_depth", t.center_depth}});
  return {{"camera", to_json(s.cam)}, {"boxes", boxes},       {"walls", walls},
          {"targets", targets},       {"depth_file", depth_file}, {"points", points}};
}

inline Json to_json(const Detection& d) {
  return {{"u", d.u},       {"v", d.v},         {"category", d.category}, {"d_s", d.d_s},
          {"d_s2c", d.d_s2c}, {"d_c", d.d_c},     {"variance", d.variance}, {"p_k", d.p_k},
          {"p_dep", d.p_dep}, {"p_3d", d.p_3d}, {"box", to_json(d.box)}};
}

// ---------------------------------------------------------------------------
// Evaluation reports

inline const char* kReportCsvHeader =
    "category,difficulty,range_min,range_max,criterion,threshold,num_gt,num_det,ap40,max_recall,"
    "radial_mae,tangential_mae,ate,ase,aoe";

inline Json to_json(const DepthMetrics& m) {
  return {{"abs_rel", m.abs_rel},         {"sq_rel", m.sq_rel},       {"rmse", m.rmse},
          {"rmse_log", m.rmse_log},       {"delta_110", m.delta_110}, {"delta_125", m.delta_125},
          {"delta_125_2", m.delta_125_2}, {"delta_125_3", m.delta_125_3}};
}

inline Json to_json(const EvalReport& r) {
  Json rows = Json::array();
  for (const auto& row : r.rows) {
    const auto& res = row.result;
    Json pr = Json::array();
    for (const auto& p : res.pr) pr.push_back({{"threshold", p.threshold}, {"recall", p.recall}, {"precision", p.precision}});
    rows.push_back(
        {{"category", row.category},
         {"difficulty", row.difficulty},
         {"range", {row.bucket.min, optional_number(std::isfinite(row.bucket.max) ? std::optional(row.bucket.max)
                                                                                   : std::nullopt)}},
         {"criterion", to_string(row.criterion)},
         {"threshold", row.threshold},
         {"num_gt", res.num_gt},
         {"num_det", res.num_det},
         {"ap40", optional_number(res.ap40)},
         {"max_recall_at_precision_0.1", res.max_recall},
         {"radial_mae", optional_number(res.polar_mae ? std::optional(res.polar_mae->radial) : std::nullopt)},
         {"tangential_mae", optional_number(res.polar_mae ? std::optional(res.polar_mae->tangential) : std::nullopt)},
         {"ate", optional_number(res.tp ? std::optional(res.tp->ate) : std::nullopt)},
         {"ase", optional_number(res.tp ? std::optional(res.tp->ase) : std::nullopt)},
         {"aoe", optional_number(res.tp ? std::optional(res.tp->aoe) : std::nullopt)},
         {"pr", pr}});
  }
  return {{"rows", rows}, {"depth", r.depth ? to_json(*r.depth) : Json(nullptr)}};
}

inline std::string to_csv(const EvalReport& r) {
  std::ostringstream os;
  os << kReportCsvHeader << '\n';
  auto opt = [](std::optional<double> v) { return v ? fixed(*v) : std::string(); };
  for (const auto& row : r.rows) {
    const auto& res = row.result;
    os << row.category << ',' << row.difficulty << ',' << fixed(row.bucket.min, 2) << ','
       << (std::isfinite(row.bucket.max) ? fixed(row.bucket.max, 2) : "inf") << ',' << to_string(row.criterion) << ','
       << fixed(row.threshold, 2) << ',' << res.num_gt << ',' << res.num_det << ',' << opt(res.ap40) << ','
       << fixed(res.max_recall) << ',' << opt(res.polar_mae ? std::optional(res.polar_mae->radial) : std::nullopt)
       << ',' << opt(res.polar_mae ? std::optional(res.polar_mae->tangential) : std::nullopt) << ','
       << opt(res.tp ? std::optional(res.tp->ate) : std::nullopt) << ','
       << opt(res.tp ? std::optional(res.tp->ase) : std::nullopt) << ','
       << opt(res.tp ? std::optional(res.tp->aoe) : std::nullopt) << '\n';
  }
  return os.str();
}

// ---------------------------------------------------------------------------
// Sweep and table

inline const char* kSweepCsvHeader = "lambda,seed,fg_abs_rel,fg_sq_rel,fg_rmse,raw_abs_rel,raw_sq_rel,raw_rmse,ap40";

inline std::string to_csv(const synth::SweepReport& r) {
  std::ostringstream os;
  os << kSweepCsvHeader << '\n';
  for (const auto& row : r.rows) {
    const auto& m = row.metrics;
    os << fixed(row.lambda, 2) << ',' << row.seed << ',' << fixed(m.foreground.abs_rel) << ','
       << fixed(m.foreground.sq_rel) << ',' << fixed(m.foreground.rmse) << ',' << fixed(m.raw.abs_rel) << ','
       << fixed(m.raw.sq_rel) << ',' << fixed(m.raw.rmse) << ',' << fixed(m.ap40) << '\n';
  }
  return os.str();
}

/// Header "category,l,d_s2c,<errors...>"; values round-trip exactly.
inline std::string to_csv(const IouTable& t) {
  std::ostringstream os;
  os << "category,l,d_s2c";
  for (double e : t.errors) os << ',' << exact(e);
  os << '\n';
  for (std::size_t c = 0; c < t.classes.size(); ++c) {
    os << t.classes[c].category << ',' << exact(t.classes[c].l) << ',' << exact(t.half_length[c]);
    for (double v : t.cells[c]) os << ',' << exact(v);
    os << '\n';
  }
  return os.str();
}

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream is(line);
  while (std::getline(is, cur, ',')) out.push_back(cur);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

/// Parse a table written by to_csv back into errors and cells.
inline IouTable table_from_csv(const std::string& text) {
  std::istringstream is(text);
  std::string line;
  IouTable t;
  std::size_t line_no = 0;
  auto number = [&](const std::string& tok) {
    try {
      std::size_t used = 0;
      const double v = std::stod(tok, &used);
      if (used != tok.size()) throw std::invalid_argument(tok);
      return v;
    } catch (const std::exception&) {
      throw FormatError("bad number '" + tok + "'", line_no);
    }
  };
  while (std::getline(is, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto f = split_csv_line(line);
    if (line_no == 1) {
      if (f.size() < 3 || f[0] != "category") throw FormatError("missing table header", line_no);
      for (std::size_t i = 3; i < f.size(); ++i) t.errors.push_back(number(f[i]));
      continue;
    }
    if (f.size() != 3 + t.errors.size()) throw FormatError("wrong column count", line_no);
    ClassDims c{f[0], 0.0, 0.0, number(f[1])};
    t.classes.push_back(c);
    t.half_length.push_back(number(f[2]));
    std::vector<double> row;
    for (std::size_t i = 3; i < f.size(); ++i) row.push_back(number(f[i]));
    t.cells.push_back(std::move(row));
  }
  return t;
}

}  // namespace ocdepth::io
