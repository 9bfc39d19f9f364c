#pragma once

#include "stcluster/types.hpp"

#include <cmath>
#include <limits>

namespace stcluster {

inline constexpr double kInf = std::numeric_limits<double>::infinity();

double uniform01(Rng& rng);
double std_normal(Rng& rng);

/// Standard normal CDF, accurate in the lower tail.
double normal_cdf(double x);
double normal_quantile(double p);

/// log(Phi(b) - Phi(a)) for a < b, either bound may be infinite.
double log_normal_mass(double a, double b);

/// Draw from N(mean, sd^2) restricted to the open interval (lo, hi).
/// Inverse-CDF on the truncated interval, with an exponential-rejection
/// fallback when the whole interval sits beyond ~37 standard deviations.
double truncated_normal(Rng& rng, double mean, double sd, double lo, double hi);

/// Inverse-Gamma(shape, rate) draw, i.e. 1 / Gamma(shape, scale = 1 / rate).
double inverse_gamma(Rng& rng, double shape, double rate);

/// Random-walk proposal scale with an acceptance counter.
///
/// During burn-in `adapt` moves the scale by a factor of 1.1 toward the
/// target acceptance rate once per adaptation window. After burn-in the
/// scale is frozen and only the counters move.
struct Proposal {
  double sd = 0.1;
  long window_accepted = 0;
  long window_attempted = 0;
  long accepted = 0;
  long attempted = 0;

  static constexpr double kMinSd = 1e-4;
  static constexpr double kMaxSd = 10.0;

  void record(bool accept) {
    window_attempted += 1;
    attempted += 1;
    if (accept) {
      window_accepted += 1;
      accepted += 1;
    }
  }

  void adapt(double target);
  void reset_counts() { window_accepted = window_attempted = accepted = attempted = 0; }
  double rate() const { return attempted > 0 ? double(accepted) / double(attempted) : 0.0; }
};

/// Metropolis accept step on a log acceptance ratio.
inline bool metropolis_accept(Rng& rng, double log_ratio) {
  if (log_ratio >= 0.0) return true;
  return std::log(uniform01(rng)) < log_ratio;
}

/// Index in [0, probs.size()) drawn from normalized probabilities.
int draw_categorical(Rng& rng, const VectorXd& probs);

}  // namespace stcluster
