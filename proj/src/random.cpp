#include "stcluster/random.hpp"

#include <unsupported/Eigen/SpecialFunctions>

#include <algorithm>
#include <cmath>

namespace stcluster {

namespace {

constexpr double kSqrt1_2 = 0.70710678118654752440;

// Right-tail draw from N(0,1) restricted to (lo, hi) with lo > 0 (Robert 1995).
double right_tail_normal(Rng& rng, double lo, double hi) {
  const double rate = 0.5 * (lo + std::sqrt(lo * lo + 4.0));
  std::exponential_distribution<double> expo(rate);
  for (;;) {
    const double z = lo + expo(rng);
    if (z >= hi) continue;
    if (std::log(uniform01(rng)) <= -0.5 * (z - rate) * (z - rate)) return z;
  }
}

}  // namespace

double uniform01(Rng& rng) {
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  return unif(rng);
}

double std_normal(Rng& rng) {
  std::normal_distribution<double> norm(0.0, 1.0);
  return norm(rng);
}

double normal_cdf(double x) { return 0.5 * std::erfc(-x * kSqrt1_2); }

double normal_quantile(double p) { return Eigen::numext::ndtri(p); }

double log_normal_mass(double a, double b) {
  if (a > 0.0) {
    const double na = -b;
    b = -a;
    a = na;
  }
  const double pa = normal_cdf(a);
  const double pb = normal_cdf(b);
  if (pb - pa > 0.0 && pb > 1e-300) return std::log(pb - pa);
  // Both bounds deep in the lower tail: log Phi(b) via the Mills ratio.
  const double log_pb = -0.5 * b * b - std::log(-b) - 0.5 * std::log(2.0 * M_PI);
  if (std::isinf(a)) return log_pb;
  const double log_pa = -0.5 * a * a - std::log(-a) - 0.5 * std::log(2.0 * M_PI);
  return log_pb + std::log1p(-std::exp(log_pa - log_pb));
}

double truncated_normal(Rng& rng, double mean, double sd, double lo, double hi) {
  double a = (lo - mean) / sd;
  double b = (hi - mean) / sd;
  bool flipped = false;
  if (a > 0.0) {
    const double na = -b;
    b = -a;
    a = na;
    flipped = true;
  }
  const double pa = normal_cdf(a);
  const double pb = normal_cdf(b);
  double z;
  if (pb > 1e-300 && pb - pa > 0.0) {
    double u = 0.0;
    while (u <= 0.0 || u >= 1.0) u = pa + (pb - pa) * uniform01(rng);
    z = normal_quantile(u);
    // Rounding at the quantile can land a hair outside the open interval.
    if (!(z > a)) z = std::nextafter(a, b);
    if (!(z < b)) z = std::nextafter(b, a);
  } else if (pb <= 1e-300) {
    z = -right_tail_normal(rng, -b, -a);
  } else {
    // Interval too narrow to resolve in CDF space; the density is flat on it.
    z = a + (b - a) * uniform01(rng);
  }
  if (flipped) z = -z;
  return mean + sd * z;
}

double inverse_gamma(Rng& rng, double shape, double rate) {
  std::gamma_distribution<double> gamma(shape, 1.0 / rate);
  return 1.0 / gamma(rng);
}

void Proposal::adapt(double target) {
  if (window_attempted == 0) return;
  const double rate = double(window_accepted) / double(window_attempted);
  sd = rate > target ? sd * 1.1 : sd / 1.1;
  sd = std::clamp(sd, kMinSd, kMaxSd);
  window_accepted = 0;
  window_attempted = 0;
}

int draw_categorical(Rng& rng, const VectorXd& probs) {
  const double u = uniform01(rng);
  double acc = 0.0;
  const int n = int(probs.size());
  for (int k = 0; k < n - 1; ++k) {
    acc += probs[k];
    if (u < acc) return k;
  }
  return n - 1;
}

}  // namespace stcluster
