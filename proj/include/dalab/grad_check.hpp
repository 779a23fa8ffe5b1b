#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>

#include "dalab/net.hpp"

namespace dalab {

struct GradCheckResult {
  double max_rel_err = 0.0;
  std::string worst_param;
  std::size_t worst_index = 0;
  double analytic_at_worst = 0.0;
  double numeric_at_worst = 0.0;
};

/// Central-difference audit of an analytic gradient. loss_fn must be a
/// deterministic function of the current parameter values. Errors are
/// normalized by the largest gradient magnitude seen on either side, so
/// exact zeros (dead relu units, detached paths) do not produce spurious
/// blowups.
inline GradCheckResult grad_check(const std::function<double()>& loss_fn, ParamSet& params,
                                  const GradSet& analytic, double eps = 1e-5) {
  check_arg(analytic.g.size() == params.size(), "grad_check: gradient not congruent");
  GradSet numeric;
  numeric.g.reserve(params.size());
  for (std::size_t pi = 0; pi < params.size(); ++pi) {
    Matrix& p = *params[pi].value;
    Matrix n(p.rows(), p.cols());
    for (std::size_t k = 0; k < p.size(); ++k) {
      const double saved = p.data()[k];
      p.data()[k] = saved + eps;
      const double f_plus = loss_fn();
      p.data()[k] = saved - eps;
      const double f_minus = loss_fn();
      p.data()[k] = saved;
      n.data()[k] = (f_plus - f_minus) / (2.0 * eps);
    }
    numeric.g.push_back(std::move(n));
  }

  double scale = 1e-6;
  for (std::size_t pi = 0; pi < params.size(); ++pi)
    for (std::size_t k = 0; k < numeric.g[pi].size(); ++k)
      scale = std::max({scale, std::abs(analytic.g[pi].data()[k]), std::abs(numeric.g[pi].data()[k])});

  GradCheckResult res;
  for (std::size_t pi = 0; pi < params.size(); ++pi) {
    for (std::size_t k = 0; k < numeric.g[pi].size(); ++k) {
      const double err = std::abs(analytic.g[pi].data()[k] - numeric.g[pi].data()[k]) / scale;
      if (err > res.max_rel_err) {
        res.max_rel_err = err;
        res.worst_param = params[pi].name;
        res.worst_index = k;
        res.analytic_at_worst = analytic.g[pi].data()[k];
        res.numeric_at_worst = numeric.g[pi].data()[k];
      }
    }
  }
  return res;
}

}  // namespace dalab
