#pragma once

#include "stcluster/areal_graph.hpp"
#include "stcluster/dataset.hpp"
#include "stcluster/engine.hpp"

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

namespace stcluster {

/// Rook-adjacency grid with unit-spaced centroids; area r * cols + c sits
/// at (c, r).
ArealGraph lattice(int rows, int cols);

struct SimLattice {
  ArealGraph graph;
  int rows = 0;
  int cols = 0;
  VectorXi cluster_template;  // 1 for areas inside a high-risk cluster
};

/// Lattice carrying four fixed cluster shapes (0-based row, col):
///   singleton  (1, 1)
///   block      rows 1-3, cols 4-6
///   ring       rows 5-8, cols 8-11 without rows 6-7, cols 9-10
///   thin line  row 10, cols 1-8
/// Needs at least 12 rows and 13 columns.
SimLattice default_lattice(int rows = 12, int cols = 13);

struct Scenario {
  int id = 1;
  double risk = 1.0;
  std::vector<int> active_periods;  // 1-based
  double e_low = 190.0;
  double e_high = 210.0;
  double correlation_range = 3.0;
  double gaussian_sd = 0.04;
};

/// Scenarios 1-5: none, r = 2 always, r = 3 always, r = 2 in periods 4-7,
/// r = 3 in periods 4-7.
Scenario make_scenario(int id, double e_low, double e_high, int n_periods = 10);

struct SimTruth {
  MatrixXd theta_true;
  MatrixXi partition_true;  // 1 background, 2 cluster
  STDataset dataset;
};

/// log theta_t = mu_t + eps_t with eps_t ~ N(0, sd^2 exp(-d / range)).
/// Noise, expected counts and Poisson draws use separate streams derived
/// from `seed`, so scenarios sharing a seed share eps and e.
SimTruth generate(const Scenario& scenario, const Centroids& centroids, const VectorXi& cluster_template,
                  int n_periods, std::uint64_t seed);

struct StudyConfig {
  std::vector<int> scenarios{1, 2, 3, 4, 5};
  std::vector<std::pair<double, double>> e_ranges{{10, 30}, {90, 110}, {190, 210}};
  std::vector<ModelKind> models{ModelKind::Cluster1, ModelKind::Cluster2, ModelKind::Cluster3,
                                ModelKind::Cluster4, ModelKind::KnorrHeld, ModelKind::Rlm};
  int n_replicates = 10;
  int n_periods = 10;
  int rows = 12;
  int cols = 13;
  double gaussian_sd = 0.04;
  double correlation_range = 3.0;
  McmcConfig mcmc;
  std::uint64_t seed = 1;
};

struct StudyRow {
  int scenario = 0;
  double e_low = 0.0;
  double e_high = 0.0;
  ModelKind model = ModelKind::Cluster1;
  int replicate = 0;
  double rmse = 0.0;
  double rand = 0.0;
  double runtime_s = 0.0;
  long invariant_violations = 0;
  std::string error;  // empty when the replicate succeeded

  bool ok() const { return error.empty(); }
};

/// Seed of replicate r's data, shared by every scenario and e-range.
std::uint64_t replicate_seed(std::uint64_t seed, int replicate);

/// Fits one model to one dataset and scores it.
StudyRow score_replicate(ModelKind model, const SimTruth& truth, const ArealGraph& graph,
                         const McmcConfig& mcmc);

/// Every (scenario, e-range, replicate, model) cell, in that nesting order.
/// A failing fit is recorded in its row and the study continues.
std::vector<StudyRow> run_study(const StudyConfig& config);

struct StudyMean {
  int scenario = 0;
  double e_low = 0.0;
  double e_high = 0.0;
  ModelKind model = ModelKind::Cluster1;
  double rmse = 0.0;
  double rand = 0.0;
  int n_ok = 0;
  int n_failed = 0;
};

std::vector<StudyMean> study_means(const std::vector<StudyRow>& rows);

/// Results CSV; runtime_s is written as NA unless `with_timing`.
std::string format_study_rows(const std::vector<StudyRow>& rows, bool with_timing);
std::string format_study_means(const std::vector<StudyMean>& means);

}  // namespace stcluster
