#pragma once

#include "stcluster/engine.hpp"
#include "stcluster/smoothing.hpp"

#include <optional>

namespace stcluster {

/// Main effects plus independent interactions:
/// log theta_it = beta + phi_i + theta_i + alpha_t + delta_t + gamma_it,
/// with an intrinsic CAR phi, iid theta, RW(1) alpha, iid delta, iid gamma.
struct KHState {
  double beta = 0.0;
  VectorXd phi;
  VectorXd theta;
  VectorXd alpha;
  VectorXd delta;
  MatrixXd gamma;
  double tau2_phi = 0.01;
  double tau2_theta = 0.01;
  double tau2_alpha = 0.01;
  double tau2_delta = 0.01;
  double tau2_gamma = 0.01;

  MatrixXd log_risk() const;
};

/// Intrinsic CAR conditional of phi_i: neighbour mean and tau2 / n_i.
/// An area without neighbours is N(0, tau2).
ConditionalMoments icar_conditional(const ArealGraph& graph, const VectorXd& phi, double tau2, Index i);

/// RW(1) conditional of alpha_t given its temporal neighbours.
ConditionalMoments rw1_conditional(const VectorXd& alpha, double tau2, Index t);

/// Shape and rate of the intrinsic CAR variance update; the rank deficit
/// is one per connected component with at least one edge.
std::pair<double, double> icar_tau2_posterior(const ArealGraph& graph, const VectorXd& phi, double a = 0.001,
                                              double b = 0.001);

/// (shape, rate) of the five conjugate variance updates. The RW(1) rank is
/// T - 1.
struct KHVariancePosteriors {
  std::pair<double, double> phi, theta, alpha, delta, gamma;
};

KHVariancePosteriors kh_variance_posteriors(const KHState& state, const ArealGraph& graph, double a = 0.001,
                                            double b = 0.001);

class KnorrHeldSampler final : public ChainSampler {
 public:
  KnorrHeldSampler(const STDataset& data, const ArealGraph& graph);

  KHState& state() { return state_; }
  const KHState& state() const { return state_; }

  void sweep(Rng& rng) override;
  void adapt(double scalar_target, double vector_target) override;
  void reset_acceptance() override;
  std::vector<AcceptanceReport> acceptance() const override;
  MatrixXd log_risk() const override { return state_.log_risk(); }
  std::vector<std::string> scalar_names() const override;
  std::vector<double> scalar_values() const override;
  std::vector<std::string> check_invariants() const override;

 private:
  void update_beta(Rng& rng);
  void update_phi(Rng& rng);
  void update_theta(Rng& rng);
  void update_alpha(Rng& rng);
  void update_delta(Rng& rng);
  void update_gamma(Rng& rng);
  void center();
  void update_variances(Rng& rng);

  const STDataset* data_;
  const ArealGraph* graph_;
  KHState state_;
  MatrixXd eta_;  // current log theta
  Proposal beta_prop_{0.01};
  Proposal phi_prop_{1.0}, theta_prop_{1.0}, alpha_prop_{1.0}, delta_prop_{1.0}, gamma_prop_{1.0};
};

/// Autoregressive Leroux model: log theta_it = beta + phi_it.
struct RLMState {
  double beta = 0.0;
  SmoothState smooth;
};

class RlmSampler final : public ChainSampler {
 public:
  RlmSampler(const STDataset& data, const ArealGraph& graph);

  RLMState& state() { return state_; }
  const RLMState& state() const { return state_; }
  /// Freeze (tau2, rho, gamma) at the current state values.
  void fix_hyperparameters(bool fixed) { fixed_hyper_ = fixed; }

  void sweep(Rng& rng) override;
  void adapt(double scalar_target, double vector_target) override;
  void reset_acceptance() override;
  std::vector<AcceptanceReport> acceptance() const override;
  MatrixXd log_risk() const override;
  std::vector<std::string> scalar_names() const override;
  std::vector<double> scalar_values() const override;
  std::vector<std::string> check_invariants() const override;

 private:
  const STDataset* data_;
  SmoothingContext ctx_;
  RLMState state_;
  Proposal beta_prop_{0.01};
  SmoothProposals smooth_prop_;
  bool fixed_hyper_ = false;
};

inline constexpr double kInterceptPriorVariance = 1e5;

/// Random-walk Metropolis step on an intercept shared by every cell, with a
/// N(0, kInterceptPriorVariance) prior. `eta` is the current log theta.
bool intercept_step(double& beta, MatrixXd& eta, const STDataset& data, Rng& rng, Proposal& prop);

FitResult fit_kh(const STDataset& data, const ArealGraph& graph, const McmcConfig& config);
FitResult fit_rlm(const STDataset& data, const ArealGraph& graph, const McmcConfig& config);

}  // namespace stcluster
