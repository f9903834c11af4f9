#pragma once

// Central-difference checks of every analytic gradient in the training path.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "ocdepth/losses.hpp"
#include "ocdepth/rng.hpp"
#include "ocdepth/synth.hpp"

namespace ocdepth::gradcheck {

inline constexpr double kStep = 1e-5;
inline constexpr double kRelTol = 1e-4;
inline constexpr double kAbsTol = 1e-6;

struct SuiteResult {
  std::string name;
  int instances = 0;
  std::size_t coordinates = 0;
  std::size_t failures = 0;
  double max_abs_error = 0.0;
  double max_rel_error = 0.0;  // over coordinates above the absolute floor

  bool passed() const { return instances > 0 && failures == 0; }
};

/// Compare `analytic` with central differences of `f` around `x`, one
/// coordinate at a time.
inline void compare(const std::function<double(const std::vector<double>&)>& f, std::vector<double> x,
                    const std::vector<double>& analytic, SuiteResult& out) {
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double x0 = x[i];
    x[i] = x0 + kStep;
    const double fp = f(x);
    x[i] = x0 - kStep;
    const double fm = f(x);
    x[i] = x0;
    const double numeric = (fp - fm) / (2.0 * kStep);
    const double abs_err = std::abs(analytic[i] - numeric);
    const double scale = std::max(std::abs(analytic[i]), std::abs(numeric));
    const double rel_err = scale > 0.0 ? abs_err / scale : 0.0;
    ++out.coordinates;
    out.max_abs_error = std::max(out.max_abs_error, abs_err);
    if (abs_err > kAbsTol) out.max_rel_error = std::max(out.max_rel_error, rel_err);
    if (abs_err > kAbsTol && rel_err > kRelTol) ++out.failures;
  }
}

namespace detail {

// A target at a relative offset of 10-50% from the prediction, keeping the
// absolute-value kink out of reach of the difference step.
inline double offset_target(Rng& rng, double pred) {
  const double sgn = uniform01(rng) < 0.5 ? -1.0 : 1.0;
  return pred * (1.0 + sgn * uniform(rng, 0.1, 0.5));
}

inline std::vector<double> concat(const Grid<double>& a, const Grid<double>& b) {
  std::vector<double> v(a.values().begin(), a.values().end());
  v.insert(v.end(), b.values().begin(), b.values().end());
  return v;
}

inline DepthPrediction split(const std::vector<double>& x, int w, int h) {
  DepthPrediction p{Grid<double>(w, h), Grid<double>(w, h)};
  const std::size_t n = p.depth_raw.size();
  for (std::size_t i = 0; i < n; ++i) {
    p.depth_raw[i] = x[i];
    p.log_var[i] = x[n + i];
  }
  return p;
}

inline DepthPrediction random_prediction(Rng& rng, int w, int h) {
  DepthPrediction p{Grid<double>(w, h), Grid<double>(w, h)};
  for (std::size_t i = 0; i < p.depth_raw.size(); ++i) {
    p.depth_raw[i] = encode_depth(uniform(rng, 5.0, 60.0));
    p.log_var[i] = uniform(rng, -2.0, 3.0);
  }
  return p;
}

// Depth image whose valid pixels sit away from the prediction; fg and bg are
// random disjoint subsets.
inline DepthImage random_depth_image(Rng& rng, const DepthPrediction& pred) {
  const int w = pred.depth_raw.width(), h = pred.depth_raw.height();
  DepthImage img(w, h, kFeatureStride);
  for (std::size_t i = 0; i < img.depth.size(); ++i) {
    if (uniform01(rng) < 0.15) continue;
    img.valid[i] = 1;
    img.depth[i] = offset_target(rng, decode_depth(pred.depth_raw[i]));
    const double u = uniform01(rng);
    if (u < 0.4) img.fg[i] = 1;
    else if (u < 0.8) img.bg[i] = 1;
  }
  return img;
}

}  // namespace detail

/// Keypoint focal loss w.r.t. the heatmap prediction.
inline SuiteResult check_focal(std::uint64_t seed, int instances) {
  SuiteResult out{"focal_loss", instances};
  Rng rng(seed);
  for (int k = 0; k < instances; ++k) {
    const int w = 4 + static_cast<int>(uniform_index(rng, 3)), h = 4, c = 2;
    Heatmap gt(w, h, c);
    for (std::size_t i = 0; i < gt.size(); ++i) gt[i] = uniform01(rng) < 0.15 ? 1.0 : uniform(rng, 0.0, 0.95);
    Heatmap pred(w, h, c);
    for (std::size_t i = 0; i < pred.size(); ++i) pred[i] = uniform(rng, 0.02, 0.98);
    const int n = 1 + static_cast<int>(uniform_index(rng, 4));
    const auto loss = focal_loss(pred, gt, kFocalAlpha, kFocalBeta, n);
    auto f = [&](const std::vector<double>& x) {
      Heatmap p(w, h, c);
      std::copy(x.begin(), x.end(), p.values().begin());
      return focal_loss(p, gt, kFocalAlpha, kFocalBeta, n).value;
    };
    compare(f, {pred.values().begin(), pred.values().end()}, {loss.grad.values().begin(), loss.grad.values().end()},
            out);
  }
  return out;
}

/// Instance depth loss w.r.t. decoded depth and log variance.
inline SuiteResult check_instance(std::uint64_t seed, int instances) {
  SuiteResult out{"instance_depth_loss", instances};
  Rng rng(seed);
  for (int k = 0; k < instances; ++k) {
    const std::size_t n = 1 + uniform_index(rng, 8);
    std::vector<InstancePrediction> preds(n);
    std::vector<double> targets(n);
    for (std::size_t i = 0; i < n; ++i) {
      preds[i] = {uniform(rng, 5.0, 60.0), uniform(rng, -2.0, 3.0)};
      targets[i] = detail::offset_target(rng, preds[i].depth);
    }
    const auto loss = instance_depth_loss(preds, targets);
    auto f = [&](const std::vector<double>& x) {
      std::vector<InstancePrediction> p(n);
      for (std::size_t i = 0; i < n; ++i) p[i] = {x[i], x[n + i]};
      return instance_depth_loss(p, targets).value;
    };
    std::vector<double> x, g = loss.grad_depth;
    for (const auto& p : preds) x.push_back(p.depth);
    for (const auto& p : preds) x.push_back(p.log_var);
    g.insert(g.end(), loss.grad_log_var.begin(), loss.grad_log_var.end());
    compare(f, x, g, out);
  }
  return out;
}

/// Masked pixel depth loss (both masks) w.r.t. raw depth and log variance.
inline SuiteResult check_pixel(std::uint64_t seed, int instances) {
  SuiteResult out{"pixel_depth_loss", instances};
  Rng rng(seed);
  for (int k = 0; k < instances; ++k) {
    const int w = 4, h = 4;
    const auto pred = detail::random_prediction(rng, w, h);
    const auto gt = detail::random_depth_image(rng, pred);
    const auto which = k % 2 ? PixelMask::Background : PixelMask::Foreground;
    const auto loss = pixel_depth_loss(pred, gt, which);
    auto f = [&](const std::vector<double>& x) { return pixel_depth_loss(detail::split(x, w, h), gt, which).value; };
    compare(f, detail::concat(pred.depth_raw, pred.log_var), detail::concat(loss.grad_raw, loss.grad_log_var), out);
  }
  return out;
}

/// Instance + weighted fg/bg pixel terms w.r.t. the dense prediction.
inline SuiteResult check_total(std::uint64_t seed, int instances) {
  SuiteResult out{"total_depth_loss", instances};
  Rng rng(seed);
  for (int k = 0; k < instances; ++k) {
    const int w = 4, h = 4;
    const auto pred = detail::random_prediction(rng, w, h);
    const auto gt = detail::random_depth_image(rng, pred);
    std::vector<GridCell> cells;
    std::vector<double> targets;
    const std::size_t n = 1 + uniform_index(rng, 3);
    for (std::size_t i = 0; i < n; ++i) {
      GridCell c{static_cast<int>(uniform_index(rng, w)), static_cast<int>(uniform_index(rng, h))};
      cells.push_back(c);
      targets.push_back(detail::offset_target(rng, decode_depth(pred.depth_raw(c.x, c.y))));
    }
    const double lambda = uniform01(rng);
    auto total = [&](const DepthPrediction& p) {
      return total_depth_loss(gathered_instance_loss(p, cells, targets), pixel_depth_loss(p, gt, PixelMask::Foreground),
                              pixel_depth_loss(p, gt, PixelMask::Background), lambda);
    };
    const auto loss = total(pred);
    auto f = [&](const std::vector<double>& x) { return total(detail::split(x, w, h)).l_total; };
    compare(f, detail::concat(pred.depth_raw, pred.log_var), detail::concat(loss.grad_raw, loss.grad_log_var), out);
  }
  return out;
}

/// Total loss through the toy perceptron w.r.t. its parameters.
inline SuiteResult check_toy_chain(std::uint64_t seed, int instances) {
  SuiteResult out{"toy_model_chain", instances};
  Rng rng(seed);
  for (int k = 0; k < instances; ++k) {
    const int w = 4, h = 4, hidden = 4;
    const synth::ToyModel model = synth::ToyModel::initialized(synth::kFeatureChannels, hidden, rng());
    synth::SceneSample s;
    s.features = Grid<double>(w, h, synth::kFeatureChannels);
    for (auto& v : s.features.values()) v = uniform(rng, -1.0, 1.0);
    const auto pred = synth::model_forward(model, s.features).pred;
    s.depth = detail::random_depth_image(rng, pred);
    const std::size_t n = 1 + uniform_index(rng, 3);
    for (std::size_t i = 0; i < n; ++i) {
      synth::BoxTarget t;
      t.cell = {static_cast<int>(uniform_index(rng, w)), static_cast<int>(uniform_index(rng, h))};
      t.surface_depth = detail::offset_target(rng, decode_depth(pred.depth_raw(t.cell.x, t.cell.y)));
      s.targets.push_back(t);
    }
    const double lambda = uniform01(rng);
    const auto cells = synth::supervised_cells(s);
    const auto loss = synth::scene_loss(model, s, lambda, cells);
    auto f = [&](const std::vector<double>& x) {
      synth::ToyModel m(model.inputs(), model.hidden());
      auto p = m.mutable_params();
      std::copy(x.begin(), x.end(), p.begin());
      return synth::scene_loss(m, s, lambda, cells).breakdown.l_total;
    };
    compare(f, {model.params().begin(), model.params().end()}, loss.grad, out);
  }
  return out;
}

/// Every suite with at least `instances` random instances each.
inline std::vector<SuiteResult> run_all(std::uint64_t seed = 0, int instances = 100) {
  return {check_focal(derive_seed(seed, 1), instances), check_instance(derive_seed(seed, 2), instances),
          check_pixel(derive_seed(seed, 3), instances), check_total(derive_seed(seed, 4), instances),
          check_toy_chain(derive_seed(seed, 5), instances)};
}

}  // namespace ocdepth::gradcheck
