#pragma once

#include "stcluster/dataset.hpp"
#include "stcluster/random.hpp"
#include "stcluster/types.hpp"

#include <optional>
#include <vector>

namespace stcluster {

/// Piecewise-constant clustering component: G ordered log-risk classes per
/// period and a class label for every area-period.
///
/// `lambda` is T x G with each row strictly increasing. `Z` is N x T with
/// 1-based class labels. `alpha` drives temporal persistence of labels and
/// `delta` penalises labels away from the middle class (G + 1) / 2.
struct ClusterState {
  int G = 5;
  MatrixXd lambda;
  MatrixXi Z;
  double sigma2 = 0.01;
  double alpha = 1.0;
  double delta = 1.0;
  double M = 10.0;

  double g_star() const { return 0.5 * (G + 1); }
};

/// Per-(t, j) proposal scales for the class means plus the two label
/// prior hyperparameters.
struct ClusterProposals {
  std::vector<Proposal> lambda;  // index t * G + j
  Proposal alpha{0.5};
  Proposal delta{0.5};

  ClusterProposals() = default;
  ClusterProposals(Index n_periods, int G) : lambda(std::size_t(n_periods * G), Proposal{0.05}) {}
};

/// Label prior f(r | z_prev) over r = 1..G; the first-period form when
/// `z_prev` is empty.
VectorXd z_transition_probs(std::optional<int> z_prev, double alpha, double delta, int G);

/// log f(Z) summed over areas and periods for the Markov-plus-penalty prior.
double label_log_prior(const MatrixXi& Z, double alpha, double delta, int G);

/// Exact full conditional of Z_it (length G, entry k is class k + 1).
VectorXd z_full_conditional(Index i, Index t, const ClusterState& state, const STDataset& data,
                            const MatrixXd& phi);

/// One Gibbs sweep over all (i, t), area-major.
void sample_Z(ClusterState& state, const STDataset& data, const MatrixXd& phi, Rng& rng);

/// Block Gibbs update of each area's whole label path Z_i. by forward
/// filtering, backward sampling. Same stationary distribution as sample_Z
/// but moves persistent label paths that single-site updates cannot.
void sample_Z_paths(ClusterState& state, const STDataset& data, const MatrixXd& phi, Rng& rng);

/// Metropolis update of every lambda_tj with a normal proposal truncated to
/// the open interval between the neighbouring class means, so the ordering
/// holds by construction.
void sample_lambda(ClusterState& state, const STDataset& data, const MatrixXd& phi, Rng& rng,
                   std::vector<Proposal>& proposals);

/// Log target of lambda_tj at `value` (Poisson terms of the cells currently
/// in class j at period t plus the random-walk factors). Exposed for tests.
double lambda_log_target(const ClusterState& state, Index t, int j, double value, double sum_y,
                         double sum_rate);

/// Conjugate Inverse-Gamma draw of the random-walk variance. Throws
/// DegenerateT when T = 1 since sigma2 is then unidentified.
double sample_sigma2(ClusterState& state, Rng& rng, double a = 0.001, double b = 0.001);

/// Shape and rate of the sigma2 full conditional.
std::pair<double, double> sigma2_posterior(const MatrixXd& lambda, double a = 0.001, double b = 0.001);

/// Random-walk Metropolis on alpha then delta under Uniform(0, M) priors,
/// stepping on logit(x / M) so the scale suits both tight and flat
/// posteriors. Both must start strictly inside (0, M).
void sample_alpha_delta(ClusterState& state, Rng& rng, Proposal& alpha_prop, Proposal& delta_prop);

/// Elementwise median over retained label samples (cells x samples, cell
/// index i + N t); an even-count median halfway between classes rounds down.
MatrixXi extract_partition(const MatrixXi& z_samples, Index n_areas, Index n_periods);

/// Quantile-based starting state: lambda at empirical quantiles j / (G + 1)
/// of log((y + 0.5) / (e + 0.5)), constant over t; labels at the nearest class.
ClusterState init_cluster_state(const STDataset& data, int G, double M);

bool lambda_strictly_ordered(const MatrixXd& lambda);

}  // namespace stcluster
