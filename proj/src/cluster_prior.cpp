#include "stcluster/cluster_prior.hpp"

#include <algorithm>
#include <cmath>

namespace stcluster {

namespace {

double log_sum_exp(const VectorXd& v) {
  const double m = v.maxCoeff();
  if (!std::isfinite(m)) return m;
  return m + std::log((v.array() - m).exp().sum());
}

// Log-prior pieces of the label field for fixed (alpha, delta). Row q of
// `trans` and `next` is the neighbouring label q + 1, column k is class k + 1.
struct LabelTables {
  VectorXd first;  // log f(Z_i1 = k+1), unnormalised
  MatrixXd trans;  // -alpha (r - q)^2 - delta (r - G*)^2
  VectorXd log_norm;  // normaliser of f(. | current = k+1)
  MatrixXd next;   // log f(Z_{i,t+1} = q+1 | Z_it = k+1) up to a constant in k

  LabelTables(double alpha, double delta, int G) : first(G), trans(G, G), log_norm(G), next(G, G) {
    const double g_star = 0.5 * (G + 1);
    for (int k = 0; k < G; ++k) {
      const double r = k + 1;
      first[k] = -delta * (r - g_star) * (r - g_star);
    }
    for (int q = 0; q < G; ++q)
      for (int k = 0; k < G; ++k) {
        const double d = double(k - q);
        trans(q, k) = -alpha * d * d + first[k];
      }
    for (int k = 0; k < G; ++k) log_norm[k] = log_sum_exp(trans.row(k).transpose());
    for (int q = 0; q < G; ++q)
      for (int k = 0; k < G; ++k) {
        const double d = double(q - k);
        next(q, k) = -alpha * d * d - log_norm[k];
      }
  }
};

struct LabelCounts {
  VectorXd first;
  MatrixXd trans;  // (previous, current)

  LabelCounts(const MatrixXi& Z, int G) : first(VectorXd::Zero(G)), trans(MatrixXd::Zero(G, G)) {
    for (Index i = 0; i < Z.rows(); ++i) {
      first[Z(i, 0) - 1] += 1.0;
      for (Index t = 1; t < Z.cols(); ++t) trans(Z(i, t - 1) - 1, Z(i, t) - 1) += 1.0;
    }
  }
};

double label_log_prior_counts(const LabelCounts& counts, double alpha, double delta, int G) {
  const LabelTables tables(alpha, delta, G);
  const double first_norm = log_sum_exp(tables.first);
  double lp = counts.first.dot(tables.first) - counts.first.sum() * first_norm;
  for (int q = 0; q < G; ++q) {
    const double row_total = counts.trans.row(q).sum();
    if (row_total == 0.0) continue;
    lp += counts.trans.row(q).dot(tables.trans.row(q)) - row_total * tables.log_norm[q];
  }
  return lp;
}

// Unnormalised log full conditional of Z_it into `out`.
void z_log_weights(Index i, Index t, const ClusterState& s, const STDataset& data, double rate_scale,
                   const LabelTables& tables, const VectorXd& exp_lambda_t, VectorXd& out) {
  const Index T = data.n_periods();
  const double y = data.y(i, t);
  for (int k = 0; k < s.G; ++k) {
    double w = y * s.lambda(t, k) - rate_scale * exp_lambda_t[k];
    w += (t == 0) ? tables.first[k] : tables.trans(s.Z(i, t - 1) - 1, k);
    if (t + 1 < T) w += tables.next(s.Z(i, t + 1) - 1, k);
    out[k] = w;
  }
}

void normalize_log_weights(VectorXd& w) {
  const double m = w.maxCoeff();
  w = (w.array() - m).exp();
  w /= w.sum();
}

}  // namespace

VectorXd z_transition_probs(std::optional<int> z_prev, double alpha, double delta, int G) {
  if (G < 1) throw Error(ErrorCode::InvalidArgument, "G must be at least 1");
  if (!(alpha >= 0.0) || !(delta >= 0.0))
    throw Error(ErrorCode::InvalidArgument, "alpha and delta must be non-negative");
  if (z_prev && (*z_prev < 1 || *z_prev > G))
    throw Error(ErrorCode::InvalidArgument, "previous label outside 1..G");
  const LabelTables tables(alpha, delta, G);
  VectorXd w = z_prev ? VectorXd(tables.trans.row(*z_prev - 1).transpose()) : tables.first;
  normalize_log_weights(w);
  return w;
}

double label_log_prior(const MatrixXi& Z, double alpha, double delta, int G) {
  return label_log_prior_counts(LabelCounts(Z, G), alpha, delta, G);
}

VectorXd z_full_conditional(Index i, Index t, const ClusterState& state, const STDataset& data,
                            const MatrixXd& phi) {
  if (state.G == 1) return VectorXd::Ones(1);
  const LabelTables tables(state.alpha, state.delta, state.G);
  const VectorXd exp_lambda = state.lambda.row(t).transpose().array().exp();
  VectorXd w(state.G);
  z_log_weights(i, t, state, data, data.e(i, t) * std::exp(phi(i, t)), tables, exp_lambda, w);
  normalize_log_weights(w);
  return w;
}

void sample_Z(ClusterState& state, const STDataset& data, const MatrixXd& phi, Rng& rng) {
  if (state.G == 1) return;
  const Index N = data.n_areas();
  const Index T = data.n_periods();
  const LabelTables tables(state.alpha, state.delta, state.G);
  const MatrixXd exp_lambda = state.lambda.array().exp().transpose();  // G x T
  const MatrixXd rate = data.e.array() * phi.array().exp();
  VectorXd w(state.G);
  for (Index i = 0; i < N; ++i) {
    for (Index t = 0; t < T; ++t) {
      z_log_weights(i, t, state, data, rate(i, t), tables, exp_lambda.col(t), w);
      normalize_log_weights(w);
      state.Z(i, t) = draw_categorical(rng, w) + 1;
    }
  }
}

void sample_Z_paths(ClusterState& state, const STDataset& data, const MatrixXd& phi, Rng& rng) {
  if (state.G == 1) return;
  const int G = state.G;
  const Index N = data.n_areas();
  const Index T = data.n_periods();
  const LabelTables tables(state.alpha, state.delta, G);
  VectorXd first = tables.first;
  normalize_log_weights(first);
  // trans(q, k) = f(current = k+1 | previous = q+1)
  MatrixXd trans(G, G);
  for (int q = 0; q < G; ++q) trans.row(q) = (tables.trans.row(q).array() - tables.log_norm[q]).exp();
  const MatrixXd exp_lambda = state.lambda.array().exp();  // T x G
  const MatrixXd rate = data.e.array() * phi.array().exp();
  MatrixXd filt(G, T);  // normalised forward probabilities
  VectorXd lik(G), w(G);
  for (Index i = 0; i < N; ++i) {
    for (Index t = 0; t < T; ++t) {
      for (int k = 0; k < G; ++k) lik[k] = data.y(i, t) * state.lambda(t, k) - rate(i, t) * exp_lambda(t, k);
      lik = (lik.array() - lik.maxCoeff()).exp();
      if (t == 0)
        w = first;
      else
        w.noalias() = trans.transpose() * filt.col(t - 1);
      filt.col(t) = w.cwiseProduct(lik);
      filt.col(t) /= filt.col(t).sum();
    }
    int next = draw_categorical(rng, filt.col(T - 1));
    state.Z(i, T - 1) = next + 1;
    for (Index t = T - 2; t >= 0; --t) {
      w = filt.col(t).cwiseProduct(trans.col(next));
      const double total = w.sum();
      // only reachable when both factors underflow; fall back to the filter
      if (!(total > 0.0)) w = filt.col(t);
      w /= w.sum();
      next = draw_categorical(rng, w);
      state.Z(i, t) = next + 1;
    }
  }
}

double lambda_log_target(const ClusterState& state, Index t, int j, double value, double sum_y,
                         double sum_rate) {
  const Index T = state.lambda.rows();
  double lp = sum_y * value - sum_rate * std::exp(value);
  const double inv2s = 0.5 / state.sigma2;
  if (t > 0) {
    const double d = value - state.lambda(t - 1, j);
    lp -= inv2s * d * d;
  }
  if (t + 1 < T) {
    const double d = state.lambda(t + 1, j) - value;
    lp -= inv2s * d * d;
  }
  return lp;
}

void sample_lambda(ClusterState& state, const STDataset& data, const MatrixXd& phi, Rng& rng,
                   std::vector<Proposal>& proposals) {
  const Index N = data.n_areas();
  const Index T = data.n_periods();
  const int G = state.G;
  if (proposals.size() != std::size_t(T * G))
    throw Error(ErrorCode::InvalidArgument, "lambda proposals must have T * G entries");
  VectorXd sum_y(G), sum_rate(G);
  for (Index t = 0; t < T; ++t) {
    sum_y.setZero();
    sum_rate.setZero();
    for (Index i = 0; i < N; ++i) {
      const int k = state.Z(i, t) - 1;
      sum_y[k] += data.y(i, t);
      sum_rate[k] += data.e(i, t) * std::exp(phi(i, t));
    }
    for (int j = 0; j < G; ++j) {
      Proposal& prop = proposals[std::size_t(t * G + j)];
      const double lo = j > 0 ? state.lambda(t, j - 1) : -kInf;
      const double hi = j + 1 < G ? state.lambda(t, j + 1) : kInf;
      const double current = state.lambda(t, j);
      const double sd = prop.sd;
      const double candidate = truncated_normal(rng, current, sd, lo, hi);
      // q(current | candidate) / q(candidate | current) reduces to the ratio
      // of truncation masses.
      const double log_q = log_normal_mass((lo - current) / sd, (hi - current) / sd) -
                           log_normal_mass((lo - candidate) / sd, (hi - candidate) / sd);
      const double log_ratio = lambda_log_target(state, t, j, candidate, sum_y[j], sum_rate[j]) -
                               lambda_log_target(state, t, j, current, sum_y[j], sum_rate[j]) + log_q;
      const bool accept = metropolis_accept(rng, log_ratio);
      prop.record(accept);
      if (accept) state.lambda(t, j) = candidate;
    }
    for (int j = 1; j < G; ++j)
      if (!(state.lambda(t, j - 1) < state.lambda(t, j)))
        throw Error(ErrorCode::OrderingViolated, "lambda ordering broken at period " + std::to_string(t));
  }
}

std::pair<double, double> sigma2_posterior(const MatrixXd& lambda, double a, double b) {
  const Index T = lambda.rows();
  const Index G = lambda.cols();
  double ss = 0.0;
  for (Index t = 1; t < T; ++t) ss += (lambda.row(t) - lambda.row(t - 1)).squaredNorm();
  return {a + 0.5 * double(G * (T - 1)), b + 0.5 * ss};
}

double sample_sigma2(ClusterState& state, Rng& rng, double a, double b) {
  if (state.lambda.rows() < 2)
    throw Error(ErrorCode::DegenerateT, "sigma2 has no likelihood information when T = 1");
  const auto [shape, rate] = sigma2_posterior(state.lambda, a, b);
  state.sigma2 = inverse_gamma(rng, shape, rate);
  return state.sigma2;
}

void sample_alpha_delta(ClusterState& state, Rng& rng, Proposal& alpha_prop, Proposal& delta_prop) {
  if (!(state.alpha > 0.0 && state.alpha < state.M && state.delta > 0.0 && state.delta < state.M))
    throw Error(ErrorCode::InvalidArgument, "alpha and delta must lie strictly inside (0, M)");
  const LabelCounts counts(state.Z, state.G);
  double current = label_log_prior_counts(counts, state.alpha, state.delta, state.G);

  // Random walk on u = logit(x / M); the Uniform(0, M) prior contributes the
  // Jacobian x (M - x).
  const double M = state.M;
  const auto log_jacobian = [M](double x) { return std::log(x) + std::log(M - x); };
  const auto step = [&](double& param, Proposal& prop, bool is_alpha) {
    const double u = std::log(param) - std::log(M - param) + prop.sd * std_normal(rng);
    const double candidate = M / (1.0 + std::exp(-u));
    if (!(candidate > 0.0 && candidate < M)) {
      prop.record(false);
      return;
    }
    const double lp = is_alpha ? label_log_prior_counts(counts, candidate, state.delta, state.G)
                               : label_log_prior_counts(counts, state.alpha, candidate, state.G);
    const bool accept =
        metropolis_accept(rng, lp - current + log_jacobian(candidate) - log_jacobian(param));
    prop.record(accept);
    if (accept) {
      param = candidate;
      current = lp;
    }
  };
  step(state.alpha, alpha_prop, true);
  step(state.delta, delta_prop, false);
}

MatrixXi extract_partition(const MatrixXi& z_samples, Index n_areas, Index n_periods) {
  if (z_samples.cols() < 1) throw Error(ErrorCode::InvalidArgument, "need at least one retained sample");
  if (z_samples.rows() != n_areas * n_periods)
    throw Error(ErrorCode::ShapeMismatch, "label samples must have N * T rows");
  const Index S = z_samples.cols();
  MatrixXi out(n_areas, n_periods);
  std::vector<int> buf(static_cast<std::size_t>(S));
  for (Index c = 0; c < z_samples.rows(); ++c) {
    for (Index s = 0; s < S; ++s) buf[std::size_t(s)] = z_samples(c, s);
    const auto mid = buf.begin() + S / 2;
    std::nth_element(buf.begin(), mid, buf.end());
    int med = *mid;
    if (S % 2 == 0) {
      const int lower = *std::max_element(buf.begin(), mid);
      med = (lower + med) / 2;
    }
    out(c % n_areas, c / n_areas) = med;
  }
  return out;
}

ClusterState init_cluster_state(const STDataset& data, int G, double M) {
  if (G < 1) throw Error(ErrorCode::InvalidArgument, "G must be at least 1");
  if (!(M > 0.0)) throw Error(ErrorCode::InvalidArgument, "M must be positive");
  const Index N = data.n_areas();
  const Index T = data.n_periods();
  const MatrixXd log_sir = ((data.y.cast<double>().array() + 0.5) / (data.e.array() + 0.5)).log();

  std::vector<double> sorted(log_sir.data(), log_sir.data() + log_sir.size());
  std::sort(sorted.begin(), sorted.end());
  const double n1 = double(sorted.size() - 1);
  VectorXd levels(G);
  for (int j = 0; j < G; ++j) {
    const double h = n1 * double(j + 1) / double(G + 1);
    const auto lo = std::size_t(std::floor(h));
    const auto hi = std::min(lo + 1, sorted.size() - 1);
    levels[j] = sorted[lo] + (h - double(lo)) * (sorted[hi] - sorted[lo]);
  }
  constexpr double kMinGap = 1e-3;
  for (int j = 1; j < G; ++j) levels[j] = std::max(levels[j], levels[j - 1] + kMinGap);

  ClusterState s;
  s.G = G;
  s.M = M;
  s.alpha = std::min(1.0, 0.5 * M);
  s.delta = std::min(1.0, 0.5 * M);
  s.lambda = levels.transpose().replicate(T, 1);
  s.Z.resize(N, T);
  for (Index t = 0; t < T; ++t)
    for (Index i = 0; i < N; ++i) {
      Index best = 0;
      (levels.array() - log_sir(i, t)).abs().minCoeff(&best);
      s.Z(i, t) = int(best) + 1;
    }
  return s;
}

bool lambda_strictly_ordered(const MatrixXd& lambda) {
  for (Index t = 0; t < lambda.rows(); ++t)
    for (Index j = 1; j < lambda.cols(); ++j)
      if (!(lambda(t, j - 1) < lambda(t, j))) return false;
  return true;
}

}  // namespace stcluster
