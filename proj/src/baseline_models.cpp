#include "stcluster/baseline_models.hpp"

#include <algorithm>
#include <cmath>

namespace stcluster {

namespace {

constexpr double kPriorA = 0.001;
constexpr double kPriorB = 0.001;

// Log-likelihood change when every cell in `cells` has its log-risk shifted by `shift`.
template <typename CellRange>
double shift_loglik(const STDataset& data, const MatrixXd& eta, const CellRange& cells, double shift) {
  double acc = 0.0;
  const double growth = std::expm1(shift);
  for (const auto& [i, t] : cells) acc += data.y(i, t) * shift - data.e(i, t) * std::exp(eta(i, t)) * growth;
  return acc;
}

struct RowCells {
  Index i, T;
  struct It {
    Index i, t;
    std::pair<Index, Index> operator*() const { return {i, t}; }
    It& operator++() { ++t; return *this; }
    bool operator!=(const It& o) const { return t != o.t; }
  };
  It begin() const { return {i, 0}; }
  It end() const { return {i, T}; }
};

struct ColCells {
  Index t, N;
  struct It {
    Index i, t;
    std::pair<Index, Index> operator*() const { return {i, t}; }
    It& operator++() { ++i; return *this; }
    bool operator!=(const It& o) const { return i != o.i; }
  };
  It begin() const { return {0, t}; }
  It end() const { return {N, t}; }
};

// Single-site Metropolis against a Gaussian prior conditional.
template <typename CellRange>
bool gaussian_site_step(double& value, const ConditionalMoments& prior, const STDataset& data, MatrixXd& eta,
                        const CellRange& cells, Rng& rng, Proposal& prop) {
  const double step = prop.sd * std::sqrt(prior.variance) * std_normal(rng);
  const double candidate = value + step;
  const double dc = value - prior.mean;
  const double dn = candidate - prior.mean;
  const double log_ratio = shift_loglik(data, eta, cells, step) - 0.5 * (dn * dn - dc * dc) / prior.variance;
  const bool accept = metropolis_accept(rng, log_ratio);
  prop.record(accept);
  if (accept) {
    value = candidate;
    for (const auto& [i, t] : cells) eta(i, t) += step;
  }
  return accept;
}

void adapt_all(std::initializer_list<Proposal*> props, double target) {
  for (Proposal* p : props) p->adapt(target);
}

}  // namespace

MatrixXd KHState::log_risk() const {
  const Index N = phi.size();
  const Index T = alpha.size();
  MatrixXd eta = gamma;
  for (Index t = 0; t < T; ++t)
    for (Index i = 0; i < N; ++i) eta(i, t) += beta + phi[i] + theta[i] + alpha[t] + delta[t];
  return eta;
}

ConditionalMoments icar_conditional(const ArealGraph& graph, const VectorXd& phi, double tau2, Index i) {
  const auto nb = graph.neighbors(i);
  if (nb.empty()) return {0.0, tau2};
  double sum = 0.0;
  for (int j : nb) sum += phi[j];
  const double n = double(nb.size());
  return {sum / n, tau2 / n};
}

ConditionalMoments rw1_conditional(const VectorXd& alpha, double tau2, Index t) {
  const Index T = alpha.size();
  if (T == 1) return {0.0, tau2};
  if (t == 0) return {alpha[1], tau2};
  if (t == T - 1) return {alpha[T - 2], tau2};
  return {0.5 * (alpha[t - 1] + alpha[t + 1]), 0.5 * tau2};
}

std::pair<double, double> icar_tau2_posterior(const ArealGraph& graph, const VectorXd& phi, double a, double b) {
  double ss = 0.0;
  for (const auto& [i, j] : graph.edges()) ss += (phi[i] - phi[j]) * (phi[i] - phi[j]);
  std::vector<bool> has_edge(std::size_t(graph.n_components()), false);
  for (Index i = 0; i < graph.n_areas(); ++i) {
    if (graph.neighbor_counts()[i] == 0)
      ss += phi[i] * phi[i];
    else
      has_edge[std::size_t(graph.component()[i])] = true;
  }
  const double deficit = double(std::count(has_edge.begin(), has_edge.end(), true));
  return {a + 0.5 * (double(graph.n_areas()) - deficit), b + 0.5 * ss};
}

bool intercept_step(double& beta, MatrixXd& eta, const STDataset& data, Rng& rng, Proposal& prop) {
  const double step = prop.sd * std_normal(rng);
  const double candidate = beta + step;
  const double growth = std::expm1(step);
  double dll = 0.0;
  for (Index t = 0; t < eta.cols(); ++t)
    for (Index i = 0; i < eta.rows(); ++i)
      dll += data.y(i, t) * step - data.e(i, t) * std::exp(eta(i, t)) * growth;
  const double dprior = -0.5 * (candidate * candidate - beta * beta) / kInterceptPriorVariance;
  const bool accept = metropolis_accept(rng, dll + dprior);
  prop.record(accept);
  if (accept) {
    beta = candidate;
    eta.array() += step;
  }
  return accept;
}

// ---------------------------------------------------------------- KH

KnorrHeldSampler::KnorrHeldSampler(const STDataset& data, const ArealGraph& graph)
    : data_(&data), graph_(&graph) {
  if (graph.n_areas() != data.n_areas())
    throw Error(ErrorCode::ShapeMismatch, "graph and dataset disagree on the number of areas");
  const Index N = data.n_areas();
  const Index T = data.n_periods();
  state_.beta = std::log(double(data.y.sum()) + 0.5) - std::log(data.e.sum());
  state_.phi = VectorXd::Zero(N);
  state_.theta = VectorXd::Zero(N);
  state_.alpha = VectorXd::Zero(T);
  state_.delta = VectorXd::Zero(T);
  state_.gamma = MatrixXd::Zero(N, T);
  eta_ = state_.log_risk();
}

void KnorrHeldSampler::update_beta(Rng& rng) { intercept_step(state_.beta, eta_, *data_, rng, beta_prop_); }

void KnorrHeldSampler::update_phi(Rng& rng) {
  const Index T = data_->n_periods();
  for (Index i = 0; i < state_.phi.size(); ++i) {
    const auto prior = icar_conditional(*graph_, state_.phi, state_.tau2_phi, i);
    gaussian_site_step(state_.phi[i], prior, *data_, eta_, RowCells{i, T}, rng, phi_prop_);
  }
}

void KnorrHeldSampler::update_theta(Rng& rng) {
  const Index T = data_->n_periods();
  for (Index i = 0; i < state_.theta.size(); ++i)
    gaussian_site_step(state_.theta[i], {0.0, state_.tau2_theta}, *data_, eta_, RowCells{i, T}, rng,
                       theta_prop_);
}

void KnorrHeldSampler::update_alpha(Rng& rng) {
  const Index N = data_->n_areas();
  for (Index t = 0; t < state_.alpha.size(); ++t) {
    const auto prior = rw1_conditional(state_.alpha, state_.tau2_alpha, t);
    gaussian_site_step(state_.alpha[t], prior, *data_, eta_, ColCells{t, N}, rng, alpha_prop_);
  }
}

void KnorrHeldSampler::update_delta(Rng& rng) {
  const Index N = data_->n_areas();
  for (Index t = 0; t < state_.delta.size(); ++t)
    gaussian_site_step(state_.delta[t], {0.0, state_.tau2_delta}, *data_, eta_, ColCells{t, N}, rng,
                       delta_prop_);
}

void KnorrHeldSampler::update_gamma(Rng& rng) {
  for (Index t = 0; t < state_.gamma.cols(); ++t)
    for (Index i = 0; i < state_.gamma.rows(); ++i) {
      const std::pair<Index, Index> cell[1] = {{i, t}};
      gaussian_site_step(state_.gamma(i, t), {0.0, state_.tau2_gamma}, *data_, eta_, cell, rng, gamma_prop_);
    }
}

void KnorrHeldSampler::center() {
  // Shifting each main effect's mean into the intercept leaves eta unchanged.
  for (VectorXd* v : {&state_.phi, &state_.theta, &state_.alpha, &state_.delta}) {
    const double m = v->mean();
    v->array() -= m;
    state_.beta += m;
  }
  eta_ = state_.log_risk();
}

KHVariancePosteriors kh_variance_posteriors(const KHState& state, const ArealGraph& graph, double a, double b) {
  const Index N = state.phi.size();
  const Index T = state.alpha.size();
  KHVariancePosteriors out;
  out.phi = icar_tau2_posterior(graph, state.phi, a, b);
  out.theta = {a + 0.5 * double(N), b + 0.5 * state.theta.squaredNorm()};
  double ss_alpha = 0.0;
  for (Index t = 1; t < T; ++t) ss_alpha += std::pow(state.alpha[t] - state.alpha[t - 1], 2);
  if (T == 1) ss_alpha = state.alpha.squaredNorm();
  out.alpha = {a + 0.5 * (T > 1 ? double(T - 1) : 1.0), b + 0.5 * ss_alpha};
  out.delta = {a + 0.5 * double(T), b + 0.5 * state.delta.squaredNorm()};
  out.gamma = {a + 0.5 * double(N * T), b + 0.5 * state.gamma.squaredNorm()};
  return out;
}

void KnorrHeldSampler::update_variances(Rng& rng) {
  const KHVariancePosteriors post = kh_variance_posteriors(state_, *graph_, kPriorA, kPriorB);
  state_.tau2_phi = inverse_gamma(rng, post.phi.first, post.phi.second);
  state_.tau2_theta = inverse_gamma(rng, post.theta.first, post.theta.second);
  state_.tau2_alpha = inverse_gamma(rng, post.alpha.first, post.alpha.second);
  state_.tau2_delta = inverse_gamma(rng, post.delta.first, post.delta.second);
  state_.tau2_gamma = inverse_gamma(rng, post.gamma.first, post.gamma.second);
}

void KnorrHeldSampler::sweep(Rng& rng) {
  update_beta(rng);
  update_phi(rng);
  update_theta(rng);
  update_alpha(rng);
  update_delta(rng);
  update_gamma(rng);
  center();
  update_variances(rng);
}

void KnorrHeldSampler::adapt(double scalar_target, double vector_target) {
  beta_prop_.adapt(scalar_target);
  adapt_all({&phi_prop_, &theta_prop_, &alpha_prop_, &delta_prop_, &gamma_prop_}, vector_target);
}

void KnorrHeldSampler::reset_acceptance() {
  for (Proposal* p : {&beta_prop_, &phi_prop_, &theta_prop_, &alpha_prop_, &delta_prop_, &gamma_prop_})
    p->reset_counts();
}

std::vector<AcceptanceReport> KnorrHeldSampler::acceptance() const {
  return {{"beta", beta_prop_.rate(), beta_prop_.sd},    {"phi", phi_prop_.rate(), phi_prop_.sd},
          {"theta", theta_prop_.rate(), theta_prop_.sd}, {"alpha", alpha_prop_.rate(), alpha_prop_.sd},
          {"delta", delta_prop_.rate(), delta_prop_.sd}, {"gamma", gamma_prop_.rate(), gamma_prop_.sd}};
}

std::vector<std::string> KnorrHeldSampler::scalar_names() const {
  return {"beta", "tau2_phi", "tau2_theta", "tau2_alpha", "tau2_delta", "tau2_gamma"};
}

std::vector<double> KnorrHeldSampler::scalar_values() const {
  return {state_.beta,       state_.tau2_phi,   state_.tau2_theta,
          state_.tau2_alpha, state_.tau2_delta, state_.tau2_gamma};
}

std::vector<std::string> KnorrHeldSampler::check_invariants() const {
  std::vector<std::string> out;
  const std::pair<const char*, const VectorXd*> parts[] = {
      {"phi", &state_.phi}, {"theta", &state_.theta}, {"alpha", &state_.alpha}, {"delta", &state_.delta}};
  for (const auto& [name, v] : parts)
    if (std::abs(v->sum()) > 1e-12) out.push_back(std::string(name) + " does not sum to zero");
  return out;
}

// ---------------------------------------------------------------- RLM

RlmSampler::RlmSampler(const STDataset& data, const ArealGraph& graph)
    : data_(&data), ctx_(graph, SmoothingVariant::Ar1Leroux) {
  if (graph.n_areas() != data.n_areas())
    throw Error(ErrorCode::ShapeMismatch, "graph and dataset disagree on the number of areas");
  state_.beta = std::log(double(data.y.sum()) + 0.5) - std::log(data.e.sum());
  state_.smooth = init_smooth_state(SmoothingVariant::Ar1Leroux, data.n_areas(), data.n_periods(), ctx_);
}

MatrixXd RlmSampler::log_risk() const { return state_.smooth.phi.array() + state_.beta; }

void RlmSampler::sweep(Rng& rng) {
  MatrixXd eta = log_risk();
  intercept_step(state_.beta, eta, *data_, rng, beta_prop_);
  const MatrixXd offset = MatrixXd::Constant(data_->n_areas(), data_->n_periods(), state_.beta);
  sample_phi(state_.smooth, *data_, offset, ctx_, rng, smooth_prop_.phi, false);
  const double m = state_.smooth.phi.mean();
  state_.smooth.phi.array() -= m;
  state_.beta += m;
  if (!fixed_hyper_) {
    sample_tau2(state_.smooth, ctx_, rng);
    sample_rho_gamma(state_.smooth, ctx_, rng, smooth_prop_.rho);
  }
}

void RlmSampler::adapt(double scalar_target, double vector_target) {
  beta_prop_.adapt(scalar_target);
  smooth_prop_.rho.adapt(scalar_target);
  smooth_prop_.phi.adapt(vector_target);
}

void RlmSampler::reset_acceptance() {
  beta_prop_.reset_counts();
  smooth_prop_.rho.reset_counts();
  smooth_prop_.phi.reset_counts();
}

std::vector<AcceptanceReport> RlmSampler::acceptance() const {
  std::vector<AcceptanceReport> out{{"beta", beta_prop_.rate(), beta_prop_.sd},
                                    {"phi", smooth_prop_.phi.rate(), smooth_prop_.phi.sd}};
  if (!fixed_hyper_) out.push_back({"rho", smooth_prop_.rho.rate(), smooth_prop_.rho.sd});
  return out;
}

std::vector<std::string> RlmSampler::scalar_names() const { return {"beta", "tau2", "rho", "gamma"}; }

std::vector<double> RlmSampler::scalar_values() const {
  return {state_.beta, state_.smooth.tau2, state_.smooth.rho, state_.smooth.gamma};
}

std::vector<std::string> RlmSampler::check_invariants() const {
  std::vector<std::string> out;
  if (std::abs(state_.smooth.phi.mean()) > 1e-12) out.push_back("phi not centred");
  return out;
}

FitResult fit_kh(const STDataset& data, const ArealGraph& graph, const McmcConfig& config) {
  return run_multichain(ModelKind::KnorrHeld, data, graph, config).pooled;
}

FitResult fit_rlm(const STDataset& data, const ArealGraph& graph, const McmcConfig& config) {
  return run_multichain(ModelKind::Rlm, data, graph, config).pooled;
}

}  // namespace stcluster
