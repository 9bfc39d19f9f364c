#pragma once

#include "stcluster/dataset.hpp"
#include "stcluster/types.hpp"

#include <cmath>
#include <cstdint>
#include <vector>

namespace stcluster {

struct ModelFitStats {
  double dic = 0.0;
  double pd = 0.0;
  double mean_deviance = 0.0;
  double lmpl = 0.0;
  long floored_cells = 0;  // cells whose CPO hit the 1e-300 floor
};

/// pd = mean deviance - D(posterior mean theta), DIC = mean deviance + pd.
/// `theta` holds risk samples as cells x samples with cell i + N t.
ModelFitStats compute_dic(const VectorXd& deviance, const MatrixXd& theta, const STDataset& data);

struct LmplResult {
  double lmpl = 0.0;
  long floored_cells = 0;
};

/// Sum over cells of log CPO, with CPO the harmonic mean of the Poisson
/// likelihood over samples. Computed in log space; CPO floored at 1e-300.
LmplResult compute_lmpl(const MatrixXd& theta, const STDataset& data);

/// Fills in DIC, pd, mean deviance and LMPL together.
ModelFitStats compute_fit_stats(const VectorXd& deviance, const MatrixXd& theta, const STDataset& data);

template <typename A, typename B>
double rmse(const Eigen::MatrixBase<A>& estimate, const Eigen::MatrixBase<B>& truth) {
  if (estimate.rows() != truth.rows() || estimate.cols() != truth.cols())
    throw Error(ErrorCode::ShapeMismatch, "rmse needs matching shapes");
  if (estimate.size() == 0) throw Error(ErrorCode::ShapeMismatch, "rmse of an empty array");
  return std::sqrt((estimate.template cast<double>() - truth.template cast<double>()).squaredNorm() /
                   double(estimate.size()));
}

/// Rand index from the label contingency table.
double rand_index(const MatrixXi& a, const MatrixXi& b);

struct MixtureFit {
  int k = 0;
  VectorXd weights, means, variances;
  double log_likelihood = 0.0;
  int iterations = 0;
  bool converged = false;
};

/// One-dimensional Gaussian mixture with k components fitted by EM from
/// k-means++ seeding. Components come back sorted by mean.
MixtureFit fit_gaussian_mixture(const VectorXd& x, int k, Rng& rng);

struct PosthocResult {
  MatrixXi labels;  // 1-based, ordered by component mean
  int k = 0;
  std::vector<double> bic;  // index k - 1
};

/// Mixture classification of log(theta_hat) with k in 1..max_components
/// chosen by BIC.
PosthocResult posthoc_classify(const MatrixXd& theta_hat, int max_components, std::uint64_t seed = 1);

}  // namespace stcluster
