#pragma once

// Finite-difference verification of analytic gradients. A coordinate whose
// central difference straddles a ReLU or max-pool kink is nudged and
// retried; if every retry still crosses a kink it is skipped and counted.

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "rmen/error.hpp"
#include "rmen/model/config.hpp"
#include "rmen/model/network.hpp"
#include "rmen/rng.hpp"

namespace rmen::model {

struct GradcheckOptions {
  double step = 1e-5;
  double tolerance = 1e-4;
  double nudge = 1e-3;             // size of the resampling move away from a kink
  std::size_t retries = 4;
  std::string negate_gradient;     // fault injection: flip this group's analytic gradient
};

struct GradcheckGroup {
  std::string name;
  std::size_t checked = 0;
  std::size_t skipped = 0;
  double max_error = 0.0;
  double max_abs_gradient = 0.0;  // shows the check is not vacuous
};

struct GradcheckReport {
  std::vector<GradcheckGroup> groups;
  double tolerance = 1e-4;

  double max_error() const {
    double m = 0.0;
    for (const auto& g : groups) m = std::max(m, g.max_error);
    return m;
  }
  bool passed() const { return max_error() < tolerance; }
};

/// A scalar function of several tensors with its analytic gradient.
struct GradProblem {
  std::vector<std::pair<std::string, Tensor*>> variables;
  /// Loss at the current variable values; fills `pattern` with the kink signature.
  std::function<double(std::vector<std::size_t>* pattern)> loss;
  /// Gradients aligned with `variables`.
  std::function<std::vector<Tensor>()> gradient;
};

inline double relative_error(double analytic, double numeric) {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-6});
  return std::abs(analytic - numeric) / denom;
}

inline GradcheckReport check_gradients(const GradProblem& problem, const GradcheckOptions& opt, Rng& rng) {
  GradcheckReport report;
  report.tolerance = opt.tolerance;
  auto analytic_now = [&] {
    auto g = problem.gradient();
    if (g.size() != problem.variables.size()) throw ShapeError("gradcheck: gradient count mismatch");
    for (std::size_t v = 0; v < g.size(); ++v) {
      if (problem.variables[v].first == opt.negate_gradient) g[v] *= -1.0;
    }
    return g;
  };
  std::vector<Tensor> analytic = analytic_now();
  bool stale = false;  // analytic gradients no longer match the (nudged) point

  for (std::size_t v = 0; v < problem.variables.size(); ++v) {
    auto& [name, x] = problem.variables[v];
    GradcheckGroup group{name};
    for (std::size_t i = 0; i < x->size(); ++i) {
      bool done = false;
      for (std::size_t attempt = 0; attempt <= opt.retries && !done; ++attempt) {
        if (stale) {
          analytic = analytic_now();
          stale = false;
        }
        std::vector<std::size_t> base, up_pattern, down_pattern;
        problem.loss(&base);
        const double saved = (*x)[i];
        (*x)[i] = saved + opt.step;
        const double up = problem.loss(&up_pattern);
        (*x)[i] = saved - opt.step;
        const double down = problem.loss(&down_pattern);
        (*x)[i] = saved;
        if (up_pattern == base && down_pattern == base) {
          const double numeric = (up - down) / (2.0 * opt.step);
          group.max_error = std::max(group.max_error, relative_error(analytic[v][i], numeric));
          group.max_abs_gradient = std::max(group.max_abs_gradient, std::abs(analytic[v][i]));
          ++group.checked;
          done = true;
        } else if (attempt < opt.retries) {
          (*x)[i] = saved + rng.uniform(-opt.nudge, opt.nudge);
          stale = true;
        }
      }
      if (!done) ++group.skipped;
    }
    report.groups.push_back(std::move(group));
  }
  return report;
}

/// True when every analytic gradient tensor has a nonzero entry, i.e. no
/// parameter group is cut off by dead ReLUs or an all-zero dropout mask.
inline bool all_groups_live(const std::vector<Tensor>& grads) {
  return std::all_of(grads.begin(), grads.end(), [](const Tensor& g) {
    return std::any_of(g.data().begin(), g.data().end(), [](double v) { return std::abs(v) > 1e-12; });
  });
}

/// Full-model check on a miniature network: random parameters (biases
/// included), a random window, and the probe loss sum_t w_t * y_t.
/// Dropout runs in training mode with a fixed mask. Base points where some
/// group receives no gradient at all are redrawn so the check is never vacuous.
inline GradcheckReport gradcheck(const RmenConfig& cfg, Rng& rng, const GradcheckOptions& opt = {}) {
  cfg.validate();
  constexpr std::size_t kMaxDraws = 200;
  ParameterSet params;
  Tensor window({cfg.window_len, 1, cfg.frame_height, cfg.frame_width});
  Tensor probe({cfg.window_len});
  Rng mask_base(0);

  auto run = [&](ForwardCache* cache) {
    Rng mask_rng = mask_base;
    return forward(params, cfg, window, true, mask_rng, cache);
  };
  GradProblem problem;
  problem.loss = [&](std::vector<std::size_t>* pattern) {
    ForwardCache cache;
    const Tensor y = run(&cache);
    if (pattern) *pattern = activation_pattern(cache);
    double s = 0.0;
    for (std::size_t t = 0; t < y.size(); ++t) s += probe[t] * y[t];
    return s;
  };
  problem.gradient = [&] {
    ForwardCache cache;
    run(&cache);
    ParameterSet grads = params.zeros_like();
    Tensor gin = backward(params, cfg, cache, probe, grads);
    std::vector<Tensor> out;
    for (auto& e : grads.entries()) out.push_back(std::move(e.value));
    out.push_back(std::move(gin));
    return out;
  };

  for (std::size_t draw = 0;; ++draw) {
    if (draw == kMaxDraws) throw NumericError("gradcheck: no base point reaches every parameter group");
    params = init_parameters(cfg, rng);
    for (auto& e : params.entries()) {
      if (e.value.rank() == 1) {
        for (std::size_t i = 0; i < e.value.size(); ++i) e.value[i] += rng.uniform(-0.1, 0.1);
      }
    }
    for (std::size_t i = 0; i < window.size(); ++i) window[i] = rng.uniform(-1.0, 1.0);
    for (std::size_t i = 0; i < probe.size(); ++i) probe[i] = rng.uniform(-1.0, 1.0);
    mask_base = rng.derive(draw);
    if (all_groups_live(problem.gradient())) break;
  }
  problem.variables.clear();
  for (auto& e : params.entries()) problem.variables.emplace_back(e.name, &e.value);
  problem.variables.emplace_back("input", &window);
  return check_gradients(problem, opt, rng);
}

}  // namespace rmen::model
