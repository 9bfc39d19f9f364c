#pragma once

#include "stcluster/types.hpp"

#include <Eigen/Sparse>

#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace stcluster {

using Edge = std::pair<Index, Index>;
using Centroids = Eigen::Matrix<double, Eigen::Dynamic, 2>;

template <typename Scalar>
using SparsePrecision = Eigen::SparseMatrix<Scalar>;

/// Binary symmetric neighbourhood structure over N areal units.
///
/// Neighbour lists are held in compressed-row form so single-site
/// conditionals cost O(degree). Immutable once built.
class ArealGraph {
 public:
  ArealGraph() = default;

  Index n_areas() const { return n_areas_; }
  const std::vector<Edge>& edges() const { return edges_; }
  const VectorXi& neighbor_counts() const { return counts_; }
  std::span<const int> neighbors(Index i) const {
    return {adjacency_.data() + offsets_[i], adjacency_.data() + offsets_[i + 1]};
  }

  int n_components() const { return n_components_; }
  /// Component index per area, in [0, n_components).
  const VectorXi& component() const { return component_; }
  bool connected() const { return n_components_ <= 1; }
  /// Human-readable warnings raised while building (e.g. disconnected graph).
  const std::vector<std::string>& diagnostics() const { return diagnostics_; }

  bool has_centroids() const { return centroids_.has_value(); }
  const Centroids& centroids() const;
  ArealGraph with_centroids(Centroids centroids) const;

  /// diag(W1) - W.
  Eigen::SparseMatrix<double> laplacian() const;

  friend ArealGraph build_graph(Index n_areas, const std::vector<Edge>& edges);

 private:
  Index n_areas_ = 0;
  std::vector<Edge> edges_;
  VectorXi counts_;
  std::vector<int> offsets_;
  std::vector<int> adjacency_;
  VectorXi component_;
  int n_components_ = 0;
  std::vector<std::string> diagnostics_;
  std::optional<Centroids> centroids_;
};

/// Validate the edge list and build the graph. Throws InvalidEdge on
/// self-loops, out-of-range indices or duplicate edges (in either order).
ArealGraph build_graph(Index n_areas, const std::vector<Edge>& edges);

/// Q(W, rho) = rho (diag(W1) - W) + (1 - rho) I.
template <typename Scalar = double>
SparsePrecision<Scalar> leroux_precision(const ArealGraph& graph, Scalar rho) {
  if (!(rho >= Scalar(0) && rho <= Scalar(1)))
    throw Error(ErrorCode::RhoOutOfRange, "leroux rho must lie in [0, 1]");
  const Index n = graph.n_areas();
  std::vector<Eigen::Triplet<Scalar>> triplets;
  triplets.reserve(std::size_t(n + 2 * Index(graph.edges().size())));
  for (Index i = 0; i < n; ++i)
    triplets.emplace_back(i, i, rho * Scalar(graph.neighbor_counts()[i]) + (Scalar(1) - rho));
  for (const auto& [i, j] : graph.edges()) {
    triplets.emplace_back(i, j, -rho);
    triplets.emplace_back(j, i, -rho);
  }
  SparsePrecision<Scalar> q(n, n);
  q.setFromTriplets(triplets.begin(), triplets.end());
  return q;
}

struct ConditionalMoments {
  double mean;
  double variance;
};

/// Leroux CAR full conditional of phi_i given the rest. An island under
/// rho = 1 (zero denominator) falls back to N(0, tau2).
template <typename Derived>
ConditionalMoments full_conditional_params(const ArealGraph& graph, double rho, double tau2,
                                           const Eigen::MatrixBase<Derived>& phi, Index i) {
  if (phi.size() != graph.n_areas())
    throw Error(ErrorCode::ShapeMismatch, "phi length must equal the number of areas");
  if (i < 0 || i >= graph.n_areas()) throw Error(ErrorCode::InvalidArgument, "area index out of range");
  double sum = 0.0;
  for (int j : graph.neighbors(i)) sum += phi(j);
  const double denom = rho * graph.neighbor_counts()[i] + 1.0 - rho;
  if (denom <= 0.0) return {0.0, tau2};
  return {rho * sum / denom, tau2 / denom};
}

MatrixXd pairwise_distances(const Centroids& centroids);

/// Row-normalised Gaussian kernel of centroid distance with zero diagonal.
/// Each row is shifted by its nearest-neighbour distance before
/// exponentiation so tiny bandwidths do not underflow to 0/0.
MatrixXd kernel_weights(const Centroids& centroids, double rho);
MatrixXd kernel_weights_from_distances(const MatrixXd& distances, double rho);

/// Sparse kernel: entries below `threshold` are dropped and rows renormalised.
Eigen::SparseMatrix<double> sparse_kernel(const MatrixXd& distances, double rho,
                                          double threshold = 1e-12);

/// Eigenvalues of diag(W1) - W, computed once per graph so that
/// log det Q(W, rho) = sum_k log(rho nu_k + 1 - rho) is O(N) per rho.
class LerouxSpectrum {
 public:
  LerouxSpectrum() = default;
  explicit LerouxSpectrum(const ArealGraph& graph);

  double log_det(double rho) const;
  const VectorXd& laplacian_eigenvalues() const { return eigenvalues_; }

 private:
  VectorXd eigenvalues_;
};

}  // namespace stcluster
