#include "stcluster/smoothing.hpp"

#include <cmath>

namespace stcluster {

namespace {

constexpr double kLog2Pi = 1.8378770664093454836;

double effective_gamma(const SmoothState& s) {
  return s.variant == SmoothingVariant::Ar1Leroux ? s.gamma : 0.0;
}

// a' Q(W, rho) b
double q_inner(const ArealGraph& graph, double rho, const VectorXd& a, const VectorXd& b) {
  double acc = 0.0;
  for (Index i = 0; i < graph.n_areas(); ++i)
    acc += (rho * graph.neighbor_counts()[i] + 1.0 - rho) * a[i] * b[i];
  double off = 0.0;
  for (const auto& [i, j] : graph.edges()) off += a[i] * b[j] + a[j] * b[i];
  return acc - rho * off;
}

// Splits sum_t u_t' Q(rho) u_t into rho * laplacian_part + (1 - rho) * identity_part.
std::pair<double, double> quadratic_parts(const SmoothState& s, const ArealGraph& graph) {
  const double g = effective_gamma(s);
  double lap = 0.0, ident = 0.0;
  VectorXd u(s.phi.rows());
  for (Index t = 0; t < s.phi.cols(); ++t) {
    u = s.phi.col(t);
    if (t > 0) u -= g * s.phi.col(t - 1);
    ident += u.squaredNorm();
    for (const auto& [i, j] : graph.edges()) {
      const double d = u[i] - u[j];
      lap += d * d;
    }
  }
  return {lap, ident};
}

void require_smoothing(const SmoothState& s, const char* what) {
  if (s.variant == SmoothingVariant::None)
    throw Error(ErrorCode::VariantMismatch, std::string(what) + " is undefined without a smoothing component");
}

void center_periods(SmoothState& s) {
  for (Index t = 0; t < s.phi.cols(); ++t) {
    const double m = s.phi.col(t).mean();
    s.phi.col(t).array() -= m;
    if (s.variant == SmoothingVariant::Convolution) s.X.col(t).array() -= m;
  }
}

void sweep_leroux(SmoothState& s, const STDataset& data, const MatrixXd& rate, const ArealGraph& graph,
                  Rng& rng, Proposal& proposal) {
  const Index N = s.phi.rows();
  const Index T = s.phi.cols();
  for (Index t = 0; t < T; ++t) {
    for (Index i = 0; i < N; ++i) {
      const ConditionalMoments prior = phi_prior_conditional(s, graph, i, t);
      const double current = s.phi(i, t);
      const double candidate = current + proposal.sd * std::sqrt(prior.variance) * std_normal(rng);
      const double y = data.y(i, t);
      const double r = rate(i, t);
      const double dc = current - prior.mean;
      const double dn = candidate - prior.mean;
      const double log_ratio = y * (candidate - current) - r * (std::exp(candidate) - std::exp(current)) -
                               0.5 * (dn * dn - dc * dc) / prior.variance;
      const bool accept = metropolis_accept(rng, log_ratio);
      proposal.record(accept);
      if (accept) s.phi(i, t) = candidate;
    }
  }
}

void sweep_convolution(SmoothState& s, const STDataset& data, const MatrixXd& rate, Rng& rng,
                       Proposal& proposal) {
  const Index N = s.X.rows();
  const Index T = s.X.cols();
  const double sd = proposal.sd * std::sqrt(s.tau2);
  for (Index t = 0; t < T; ++t) {
    for (Index j = 0; j < N; ++j) {
      const double current = s.X(j, t);
      const double step = sd * std_normal(rng);
      const double candidate = current + step;
      double log_ratio = -0.5 * (candidate * candidate - current * current) / s.tau2;
      for (Eigen::SparseMatrix<double>::InnerIterator it(s.kernel, j); it; ++it) {
        const Index i = it.row();
        const double shift = it.value() * step;
        log_ratio += data.y(i, t) * shift - rate(i, t) * std::exp(s.phi(i, t)) * std::expm1(shift);
      }
      const bool accept = metropolis_accept(rng, log_ratio);
      proposal.record(accept);
      if (accept) {
        s.X(j, t) = candidate;
        for (Eigen::SparseMatrix<double>::InnerIterator it(s.kernel, j); it; ++it)
          s.phi(it.row(), t) += it.value() * step;
      }
    }
  }
}

}  // namespace

const char* to_string(SmoothingVariant v) {
  switch (v) {
    case SmoothingVariant::None: return "none";
    case SmoothingVariant::Ar1Leroux: return "ar1_leroux";
    case SmoothingVariant::CarPerPeriod: return "car_per_period";
    case SmoothingVariant::Convolution: return "convolution";
  }
  return "unknown";
}

SmoothingContext::SmoothingContext(const ArealGraph& graph, SmoothingVariant variant) : graph_(&graph) {
  if (variant == SmoothingVariant::Ar1Leroux || variant == SmoothingVariant::CarPerPeriod)
    spectrum_ = LerouxSpectrum(graph);
  if (variant == SmoothingVariant::Convolution) distances_ = pairwise_distances(graph.centroids());
}

double SmoothingContext::default_bandwidth_bound() const {
  if (distances_.size() == 0) throw Error(ErrorCode::MissingCentroids, "bandwidth bound needs centroids");
  const double dmax = distances_.maxCoeff();
  return dmax > 0.0 ? dmax * dmax : 1.0;
}

SmoothState init_smooth_state(SmoothingVariant variant, Index n_areas, Index n_periods,
                              const SmoothingContext& ctx, double bandwidth_bound) {
  SmoothState s;
  s.variant = variant;
  s.phi = MatrixXd::Zero(n_areas, n_periods);
  switch (variant) {
    case SmoothingVariant::None:
      break;
    case SmoothingVariant::Ar1Leroux:
      s.rho = 0.5;
      s.gamma = 0.5;
      break;
    case SmoothingVariant::CarPerPeriod:
      s.rho = 0.5;
      s.gamma = 0.0;
      break;
    case SmoothingVariant::Convolution:
      s.P = bandwidth_bound > 0.0 ? bandwidth_bound : ctx.default_bandwidth_bound();
      s.rho = s.P / 100.0;
      s.X = MatrixXd::Zero(n_areas, n_periods);
      refresh_convolution(s, ctx);
      break;
  }
  return s;
}

void refresh_convolution(SmoothState& state, const SmoothingContext& ctx) {
  state.kernel = sparse_kernel(ctx.distances(), state.rho);
  state.phi = state.kernel * state.X;
}

ConditionalMoments phi_prior_conditional(const SmoothState& s, const ArealGraph& graph, Index i, Index t) {
  const Index T = s.phi.cols();
  const double g = effective_gamma(s);
  const double rho = s.rho;
  const double d = rho * graph.neighbor_counts()[i] + 1.0 - rho;
  const bool has_next = t + 1 < T;
  const bool has_prev = t > 0;
  const double own = has_next ? 1.0 + g * g : 1.0;
  const double precision = d * own;
  if (precision <= 0.0) return {0.0, s.tau2};
  double temporal = 0.0;
  if (has_prev) temporal += s.phi(i, t - 1);
  if (has_next) temporal += s.phi(i, t + 1);
  double spatial = 0.0;
  for (int j : graph.neighbors(i)) {
    double v = own * s.phi(j, t);
    if (has_prev) v -= g * s.phi(j, t - 1);
    if (has_next) v -= g * s.phi(j, t + 1);
    spatial += v;
  }
  const double b = d * g * temporal + rho * spatial;
  return {b / precision, s.tau2 / precision};
}

double leroux_quadratic_form(const SmoothState& state, const ArealGraph& graph, double rho) {
  const auto [lap, ident] = quadratic_parts(state, graph);
  return rho * lap + (1.0 - rho) * ident;
}

double phi_log_prior(const SmoothState& s, const SmoothingContext& ctx) {
  const double N = double(s.phi.rows());
  const double T = double(s.phi.cols());
  switch (s.variant) {
    case SmoothingVariant::None:
      return 0.0;
    case SmoothingVariant::Ar1Leroux:
    case SmoothingVariant::CarPerPeriod: {
      const double quad = leroux_quadratic_form(s, ctx.graph(), s.rho);
      return 0.5 * T * ctx.spectrum().log_det(s.rho) - 0.5 * N * T * (kLog2Pi + std::log(s.tau2)) -
             0.5 * quad / s.tau2;
    }
    case SmoothingVariant::Convolution:
      return -0.5 * N * T * (kLog2Pi + std::log(s.tau2)) - 0.5 * s.X.squaredNorm() / s.tau2;
  }
  return 0.0;
}

void sample_phi(SmoothState& state, const STDataset& data, const MatrixXd& offset, const SmoothingContext& ctx,
                Rng& rng, Proposal& proposal, bool center_per_period) {
  if (state.variant == SmoothingVariant::None) return;
  const MatrixXd rate = data.e.array() * offset.array().exp();
  if (state.is_leroux()) {
    sweep_leroux(state, data, rate, ctx.graph(), rng, proposal);
  } else {
    sweep_convolution(state, data, rate, rng, proposal);
    state.phi = state.kernel * state.X;
  }
  if (center_per_period) center_periods(state);
}

std::pair<double, double> tau2_posterior(const SmoothState& state, const SmoothingContext& ctx, double a,
                                         double b) {
  require_smoothing(state, "tau2");
  const double n = double(state.phi.size());
  const double ss = state.variant == SmoothingVariant::Convolution
                        ? state.X.squaredNorm()
                        : leroux_quadratic_form(state, ctx.graph(), state.rho);
  return {a + 0.5 * n, b + 0.5 * ss};
}

double sample_tau2(SmoothState& state, const SmoothingContext& ctx, Rng& rng, double a, double b) {
  const auto [shape, rate] = tau2_posterior(state, ctx, a, b);
  state.tau2 = inverse_gamma(rng, shape, rate);
  return state.tau2;
}

ConditionalMoments gamma_conditional(const SmoothState& state, const ArealGraph& graph) {
  double num = 0.0, den = 0.0;
  for (Index t = 1; t < state.phi.cols(); ++t) {
    const VectorXd prev = state.phi.col(t - 1);
    const VectorXd cur = state.phi.col(t);
    num += q_inner(graph, state.rho, prev, cur);
    den += q_inner(graph, state.rho, prev, prev);
  }
  if (!(den > 0.0)) return {0.5, kInf};
  return {num / den, state.tau2 / den};
}

void sample_rho_gamma(SmoothState& state, const SmoothingContext& ctx, Rng& rng, Proposal& rho_prop,
                      const STDataset* data, const MatrixXd* offset) {
  require_smoothing(state, "rho");
  if (state.variant == SmoothingVariant::Ar1Leroux) {
    const ConditionalMoments g = gamma_conditional(state, ctx.graph());
    state.gamma = std::isfinite(g.variance) ? truncated_normal(rng, g.mean, std::sqrt(g.variance), 0.0, 1.0)
                                            : uniform01(rng);
  }

  if (state.is_leroux()) {
    const auto [lap, ident] = quadratic_parts(state, ctx.graph());
    const double candidate = state.rho + rho_prop.sd * std_normal(rng);
    if (candidate <= 0.0 || candidate >= 1.0) {
      rho_prop.record(false);
      return;
    }
    const double T = double(state.phi.cols());
    const auto log_target = [&](double r) {
      return 0.5 * T * ctx.spectrum().log_det(r) - 0.5 * (r * lap + (1.0 - r) * ident) / state.tau2;
    };
    const bool accept = metropolis_accept(rng, log_target(candidate) - log_target(state.rho));
    rho_prop.record(accept);
    if (accept) state.rho = candidate;
    return;
  }

  // Convolution bandwidth: random walk on log(rho), Jacobian term included.
  if (data == nullptr || offset == nullptr)
    throw Error(ErrorCode::InvalidArgument, "convolution bandwidth update needs the likelihood context");
  const double candidate = state.rho * std::exp(rho_prop.sd * std_normal(rng));
  if (!(candidate > 0.0) || candidate > state.P) {
    rho_prop.record(false);
    return;
  }
  const Eigen::SparseMatrix<double> kernel = sparse_kernel(ctx.distances(), candidate);
  const MatrixXd phi_new = kernel * state.X;
  const MatrixXd rate = data->e.array() * offset->array().exp();
  const double dll = (data->y.cast<double>().array() * (phi_new - state.phi).array() -
                      rate.array() * (phi_new.array().exp() - state.phi.array().exp()))
                         .sum();
  const bool accept = metropolis_accept(rng, dll + std::log(candidate) - std::log(state.rho));
  rho_prop.record(accept);
  if (accept) {
    state.rho = candidate;
    state.kernel = kernel;
    state.phi = phi_new;
  }
}

}  // namespace stcluster
