#pragma once

#include <cmath>
#include <optional>
#include <span>
#include <stdexcept>
#include <string_view>
#include <vector>

#include "dalab/net.hpp"

namespace dalab {

/// SGD momentum buffers, one per ParamSet entry.
struct OptimizerState {
  double momentum = 0.9;
  double weight_decay = 1e-4;
  std::vector<Matrix> velocity;

  void init_like(const ParamSet& ps) {
    check_arg(momentum >= 0.0 && momentum < 1.0, "OptimizerState: momentum outside [0,1)");
    check_arg(weight_decay >= 0.0 && weight_decay < 1.0, "OptimizerState: weight decay outside [0,1)");
    velocity.clear();
    for (const auto& r : ps) velocity.emplace_back(r.value->rows(), r.value->cols());
  }
};

struct GroupRates {
  double extractor = 0.0;
  double classifier = 0.0;

  double for_group(Group g) const { return g == Group::extractor ? extractor : classifier; }
};

/// v <- m*v + grad + wd*param;  param <- param - lr*v  (coupled weight decay).
/// When only_group is set, parameters of the other group (their momentum
/// buffers included) are untouched.
inline void sgd_step(ParamSet& params, const GradSet& grads, OptimizerState& state,
                     const GroupRates& rates, std::optional<Group> only_group = std::nullopt) {
  check_arg(grads.g.size() == params.size() && state.velocity.size() == params.size(),
            "sgd_step: grads/state not congruent with params");
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (only_group && params[i].group != *only_group) continue;
    Matrix& p = *params[i].value;
    const Matrix& g = grads.g[i];
    Matrix& v = state.velocity[i];
    check_arg(p.same_shape(g) && p.same_shape(v), "sgd_step: shape mismatch at " + params[i].name);
    if (!all_finite(g))
      throw std::runtime_error("sgd_step: non-finite gradient for parameter " + params[i].name);
    const double lr = rates.for_group(params[i].group);
    for (std::size_t k = 0; k < p.size(); ++k) {
      double& vel = v.data()[k];
      vel = state.momentum * vel + g.data()[k] + state.weight_decay * p.data()[k];
      p.data()[k] -= lr * vel;
    }
  }
}

inline void sgd_step(ParamSet& params, const GradSet& grads, OptimizerState& state, double lr,
                     std::optional<Group> only_group = std::nullopt) {
  sgd_step(params, grads, state, GroupRates{lr, lr}, only_group);
}

/// Per-parameter variant for models whose sub-steps do not align with the
/// two groups (e.g. MADA's per-category heads vs its task classifier).
inline void sgd_step_masked(ParamSet& params, const GradSet& grads, OptimizerState& state,
                            const GroupRates& rates, std::span<const char> mask) {
  check_arg(mask.size() == params.size(), "sgd_step_masked: mask size mismatch");
  check_arg(grads.g.size() == params.size() && state.velocity.size() == params.size(),
            "sgd_step_masked: grads/state not congruent with params");
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (!mask[i]) continue;
    Matrix& p = *params[i].value;
    const Matrix& g = grads.g[i];
    Matrix& v = state.velocity[i];
    if (!all_finite(g))
      throw std::runtime_error("sgd_step_masked: non-finite gradient for parameter " + params[i].name);
    const double lr = rates.for_group(params[i].group);
    for (std::size_t k = 0; k < p.size(); ++k) {
      double& vel = v.data()[k];
      vel = state.momentum * vel + g.data()[k] + state.weight_decay * p.data()[k];
      p.data()[k] -= lr * vel;
    }
  }
}

inline std::vector<char> mask_by_prefix(const ParamSet& params,
                                        std::initializer_list<std::string_view> prefixes) {
  std::vector<char> mask(params.size(), 0);
  for (std::size_t i = 0; i < params.size(); ++i)
    for (auto pre : prefixes)
      if (params[i].name.rfind(pre, 0) == 0) mask[i] = 1;
  return mask;
}

/// Learning-rate and penalty schedules over normalized epoch progress p in [0,1].
/// eta_at returns the classifier-group rate; the extractor runs at
/// eta / lr_ratio_f_over_g.
struct Schedule {
  double eta0 = 0.01;
  double alpha_sched = 10.0;  // rate-decay coefficient
  double beta_sched = 0.75;   // rate-decay exponent
  double gamma = 10.0;        // lambda ramp coefficient
  double lr_ratio_f_over_g = 10.0;

  void validate() const {
    check_arg(eta0 > 0 && alpha_sched > 0 && beta_sched > 0 && gamma > 0 && lr_ratio_f_over_g > 0,
              "Schedule: all fields must be positive");
  }
};

inline void check_progress(double p) {
  if (!(p >= 0.0 && p <= 1.0)) throw std::domain_error("schedule progress outside [0,1]");
}

inline double eta_at(const Schedule& s, double p) {
  check_progress(p);
  return s.eta0 / std::pow(1.0 + s.alpha_sched * p, s.beta_sched);
}

inline double lambda_at(const Schedule& s, double p) {
  check_progress(p);
  return 2.0 / (1.0 + std::exp(-s.gamma * p)) - 1.0;
}

inline GroupRates rates_at(const Schedule& s, double p) {
  const double eta = eta_at(s, p);
  return GroupRates{eta / s.lr_ratio_f_over_g, eta};
}

}  // namespace dalab
