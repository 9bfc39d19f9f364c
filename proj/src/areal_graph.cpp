#include "stcluster/areal_graph.hpp"

#include "stcluster/random.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <set>

namespace stcluster {

ArealGraph build_graph(Index n_areas, const std::vector<Edge>& edges) {
  if (n_areas <= 0) throw Error(ErrorCode::InvalidArgument, "graph needs at least one area");
  ArealGraph g;
  g.n_areas_ = n_areas;
  g.counts_ = VectorXi::Zero(n_areas);

  std::set<Edge> seen;
  g.edges_.reserve(edges.size());
  for (const auto& [a, b] : edges) {
    if (a < 0 || b < 0 || a >= n_areas || b >= n_areas)
      throw Error(ErrorCode::InvalidEdge, "edge (" + std::to_string(a) + "," + std::to_string(b) +
                                              ") references an area outside [0," +
                                              std::to_string(n_areas) + ")");
    if (a == b) throw Error(ErrorCode::InvalidEdge, "self-loop on area " + std::to_string(a));
    const Edge key{std::min(a, b), std::max(a, b)};
    if (!seen.insert(key).second)
      throw Error(ErrorCode::InvalidEdge, "duplicate edge (" + std::to_string(key.first) + "," +
                                              std::to_string(key.second) + ")");
    g.edges_.push_back(key);
    g.counts_[a] += 1;
    g.counts_[b] += 1;
  }

  g.offsets_.assign(std::size_t(n_areas + 1), 0);
  for (Index i = 0; i < n_areas; ++i) g.offsets_[i + 1] = g.offsets_[i] + g.counts_[i];
  g.adjacency_.assign(std::size_t(g.offsets_.back()), 0);
  std::vector<int> fill(g.offsets_.begin(), g.offsets_.end() - 1);
  for (const auto& [a, b] : g.edges_) {
    g.adjacency_[fill[a]++] = int(b);
    g.adjacency_[fill[b]++] = int(a);
  }
  for (Index i = 0; i < n_areas; ++i)
    std::sort(g.adjacency_.begin() + g.offsets_[i], g.adjacency_.begin() + g.offsets_[i + 1]);

  // connected components, iterative DFS
  g.component_ = VectorXi::Constant(n_areas, -1);
  std::vector<int> stack;
  for (Index s = 0; s < n_areas; ++s) {
    if (g.component_[s] >= 0) continue;
    const int c = g.n_components_++;
    g.component_[s] = c;
    stack.push_back(int(s));
    while (!stack.empty()) {
      const int v = stack.back();
      stack.pop_back();
      for (int w : g.neighbors(v)) {
        if (g.component_[w] < 0) {
          g.component_[w] = c;
          stack.push_back(w);
        }
      }
    }
  }
  if (g.n_components_ > 1)
    g.diagnostics_.push_back("graph has " + std::to_string(g.n_components_) +
                             " connected components; the intrinsic CAR prior is improper on each");
  return g;
}

const Centroids& ArealGraph::centroids() const {
  if (!centroids_) throw Error(ErrorCode::MissingCentroids, "graph carries no centroids");
  return *centroids_;
}

ArealGraph ArealGraph::with_centroids(Centroids centroids) const {
  if (centroids.rows() != n_areas_)
    throw Error(ErrorCode::ShapeMismatch, "centroid count must equal the number of areas");
  if (!centroids.allFinite()) throw Error(ErrorCode::InvalidArgument, "centroids must be finite");
  ArealGraph g = *this;
  g.centroids_ = std::move(centroids);
  return g;
}

Eigen::SparseMatrix<double> ArealGraph::laplacian() const { return leroux_precision(*this, 1.0); }

MatrixXd pairwise_distances(const Centroids& centroids) {
  const Index n = centroids.rows();
  MatrixXd d(n, n);
  for (Index i = 0; i < n; ++i)
    for (Index j = 0; j < n; ++j) d(i, j) = (centroids.row(i) - centroids.row(j)).norm();
  return d;
}

MatrixXd kernel_weights_from_distances(const MatrixXd& distances, double rho) {
  if (!(rho > 0.0) || !std::isfinite(rho))
    throw Error(ErrorCode::InvalidArgument, "kernel bandwidth must be positive and finite");
  const Index n = distances.rows();
  if (n < 2) throw Error(ErrorCode::InvalidArgument, "kernel weights need at least two areas");
  MatrixXd k = MatrixXd::Zero(n, n);
  for (Index i = 0; i < n; ++i) {
    double nearest = kInf;
    for (Index j = 0; j < n; ++j)
      if (j != i) nearest = std::min(nearest, distances(i, j) * distances(i, j));
    double total = 0.0;
    for (Index j = 0; j < n; ++j) {
      if (j == i) continue;
      k(i, j) = std::exp(-(distances(i, j) * distances(i, j) - nearest) / (2.0 * rho));
      total += k(i, j);
    }
    k.row(i) /= total;
  }
  return k;
}

MatrixXd kernel_weights(const Centroids& centroids, double rho) {
  if (!centroids.allFinite()) throw Error(ErrorCode::InvalidArgument, "centroids must be finite");
  return kernel_weights_from_distances(pairwise_distances(centroids), rho);
}

Eigen::SparseMatrix<double> sparse_kernel(const MatrixXd& distances, double rho, double threshold) {
  const MatrixXd dense = kernel_weights_from_distances(distances, rho);
  const Index n = dense.rows();
  std::vector<Eigen::Triplet<double>> triplets;
  for (Index i = 0; i < n; ++i) {
    double kept = 0.0;
    for (Index j = 0; j < n; ++j)
      if (dense(i, j) >= threshold) kept += dense(i, j);
    for (Index j = 0; j < n; ++j)
      if (dense(i, j) >= threshold) triplets.emplace_back(i, j, dense(i, j) / kept);
  }
  Eigen::SparseMatrix<double> k(n, n);
  k.setFromTriplets(triplets.begin(), triplets.end());
  return k;
}

LerouxSpectrum::LerouxSpectrum(const ArealGraph& graph) {
  const MatrixXd lap = MatrixXd(graph.laplacian());
  Eigen::SelfAdjointEigenSolver<MatrixXd> solver(lap, Eigen::EigenvaluesOnly);
  eigenvalues_ = solver.eigenvalues().cwiseMax(0.0);
}

double LerouxSpectrum::log_det(double rho) const {
  return (rho * eigenvalues_.array() + (1.0 - rho)).log().sum();
}

}  // namespace stcluster
