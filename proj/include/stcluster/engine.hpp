#pragma once

#include "stcluster/areal_graph.hpp"
#include "stcluster/cluster_prior.hpp"
#include "stcluster/dataset.hpp"
#include "stcluster/random.hpp"
#include "stcluster/smoothing.hpp"

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace stcluster {

enum class ModelKind { Cluster1, Cluster2, Cluster3, Cluster4, KnorrHeld, Rlm };

const char* to_string(ModelKind kind);
/// Accepts the CLI spellings cluster1..cluster4, kh, rlm.
ModelKind parse_model_kind(const std::string& name);
bool is_cluster_model(ModelKind kind);
bool needs_centroids(ModelKind kind);

struct McmcConfig {
  long n_burnin = 2000;
  long n_keep = 2000;
  long thin = 1;
  int n_chains = 1;
  std::uint64_t seed = 1;
  int G = 5;
  double M = 10.0;
  double P = 0.0;  // <= 0: squared maximum centroid distance
  long adapt_interval = 50;
  double scalar_target = 0.4;
  double vector_target = 0.3;

  void validate() const;
  long samples_per_chain() const { return n_keep / thin; }
};

struct AcceptanceReport {
  std::string block;
  double rate;
  double proposal_sd;
};

/// One chain's sweep kernel. Implementations own the full model state.
class ChainSampler {
 public:
  virtual ~ChainSampler() = default;

  virtual void sweep(Rng& rng) = 0;
  /// Adjust proposal scales from the acceptance seen since the last call.
  virtual void adapt(double scalar_target, double vector_target) = 0;
  virtual void reset_acceptance() = 0;
  virtual std::vector<AcceptanceReport> acceptance() const = 0;

  /// log theta_it, N x T.
  virtual MatrixXd log_risk() const = 0;
  virtual std::vector<std::string> scalar_names() const = 0;
  virtual std::vector<double> scalar_values() const = 0;

  /// Class labels and class means for the clustering models.
  virtual const MatrixXi* labels() const { return nullptr; }
  virtual const MatrixXd* class_means() const { return nullptr; }

  /// Structural invariant violations of the current state, empty when sound.
  virtual std::vector<std::string> check_invariants() const { return {}; }
};

SmoothingVariant smoothing_variant(ModelKind kind);

/// Clustering component plus one of the four smoothing variants. Sweep
/// order: labels, class means, sigma2, (alpha, delta), then tau2, the
/// dependence parameters and finally phi with per-period centring.
class ClusterModelSampler final : public ChainSampler {
 public:
  ClusterModelSampler(ModelKind kind, const STDataset& data, const ArealGraph& graph, const McmcConfig& config);

  ClusterState& cluster() { return cluster_; }
  const ClusterState& cluster() const { return cluster_; }
  SmoothState& smooth() { return smooth_; }
  const SmoothState& smooth() const { return smooth_; }
  const SmoothingContext& context() const { return ctx_; }

  void sweep(Rng& rng) override;
  void adapt(double scalar_target, double vector_target) override;
  void reset_acceptance() override;
  std::vector<AcceptanceReport> acceptance() const override;
  MatrixXd log_risk() const override;
  std::vector<std::string> scalar_names() const override;
  std::vector<double> scalar_values() const override;
  const MatrixXi* labels() const override { return &cluster_.Z; }
  const MatrixXd* class_means() const override { return &cluster_.lambda; }
  std::vector<std::string> check_invariants() const override;

 private:
  MatrixXd class_offset() const;

  const STDataset* data_;
  SmoothingContext ctx_;
  ClusterState cluster_;
  SmoothState smooth_;
  ClusterProposals cluster_prop_;
  SmoothProposals smooth_prop_;
};

std::unique_ptr<ChainSampler> make_sampler(ModelKind kind, const STDataset& data, const ArealGraph& graph,
                                           const McmcConfig& config);

/// Retained output of one or more chains. Cell c = i + N t indexes rows of
/// the per-cell sample matrices; columns are retained sweeps.
struct FitResult {
  ModelKind model = ModelKind::Cluster1;
  Index n_areas = 0;
  Index n_periods = 0;
  int G = 0;  // 0 for models without a clustering component
  int n_chains = 1;

  MatrixXd theta;   // cells x samples
  MatrixXi z;       // cells x samples, cluster models only
  MatrixXd lambda;  // (T * G) x samples, row t + T j
  std::vector<std::string> scalar_names;
  MatrixXd scalars;  // samples x names
  VectorXd deviance;
  std::vector<AcceptanceReport> acceptance;
  long invariant_violations = 0;
  std::vector<std::string> violation_examples;

  Index n_samples() const { return theta.cols(); }
  MatrixXd theta_median() const;
  MatrixXd theta_quantile(double p) const;
  MatrixXi z_median() const;
  /// Column of one scalar trace; throws when the name is unknown.
  VectorXd scalar_trace(const std::string& name) const;
};

/// -2 sum log Poisson(y | e theta).
double poisson_deviance(const STDataset& data, const MatrixXd& theta);

/// Derive the per-chain engine from (seed, chain_index).
Rng chain_rng(std::uint64_t seed, int chain_index);

/// Burn-in with adaptive proposals, then frozen proposals and retention of
/// every thin-th sweep. Deterministic in (inputs, config, chain_index).
FitResult run_chain(ModelKind kind, const STDataset& data, const ArealGraph& graph, const McmcConfig& config,
                    int chain_index);

struct MultiChainResult {
  std::vector<FitResult> chains;
  FitResult pooled;
};

/// Independent chains run concurrently (capped by STCLUSTER_THREADS);
/// the pooled result concatenates their retained samples in chain order.
MultiChainResult run_multichain(ModelKind kind, const STDataset& data, const ArealGraph& graph,
                                const McmcConfig& config);

FitResult pool_chains(const std::vector<FitResult>& chains);

/// Worker count from STCLUSTER_THREADS, else hardware concurrency.
unsigned worker_threads();

}  // namespace stcluster
