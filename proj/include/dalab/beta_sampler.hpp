#pragma once

#include <cstdint>

#include "dalab/matrix.hpp"
#include "dalab/rng.hpp"

namespace dalab {

/// Draws mixing coefficients alpha ~ Beta(beta, beta) via the ratio of two
/// Gamma(beta) variates, resampling until the ratio lands strictly inside
/// (0,1). A forced-constant mode exists for collapse tests and degenerate
/// ablations.
class BetaSampler {
 public:
  BetaSampler(double beta_param, std::uint64_t seed) : beta_(beta_param), rng_(seed) {
    check_arg(beta_param > 0.0, "BetaSampler: beta parameter must be positive");
  }

  static BetaSampler forced(double value) {
    check_arg(value >= 0.0 && value <= 1.0, "BetaSampler::forced: value outside [0,1]");
    BetaSampler s(1.0, 0);
    s.forced_ = true;
    s.forced_value_ = value;
    return s;
  }

  double sample() {
    if (forced_) return forced_value_;
    for (;;) {
      const double x = rng_.gamma(beta_);
      const double y = rng_.gamma(beta_);
      const double s = x + y;
      if (s <= 0.0) continue;
      const double a = x / s;
      if (a > 0.0 && a < 1.0) return a;
    }
  }

  double param() const { return beta_; }
  bool is_forced() const { return forced_; }

 private:
  double beta_;
  Rng rng_;
  bool forced_ = false;
  double forced_value_ = 0.0;
};

}  // namespace dalab
