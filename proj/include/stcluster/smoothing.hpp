#pragma once

#include "stcluster/areal_graph.hpp"
#include "stcluster/dataset.hpp"
#include "stcluster/random.hpp"

#include <memory>

namespace stcluster {

enum class SmoothingVariant {
  None,          // phi == 0
  Ar1Leroux,     // phi_t | phi_{t-1} ~ N(gamma phi_{t-1}, tau2 Q(W, rho)^-1)
  CarPerPeriod,  // as above with gamma fixed at 0
  Convolution,   // phi_t = K(rho) X_t, X_jt ~ N(0, tau2)
};

const char* to_string(SmoothingVariant v);

/// Graph-derived quantities shared by every sweep of one chain.
class SmoothingContext {
 public:
  SmoothingContext(const ArealGraph& graph, SmoothingVariant variant);

  const ArealGraph& graph() const { return *graph_; }
  const LerouxSpectrum& spectrum() const { return spectrum_; }
  /// Centroid distances; only populated for the convolution variant.
  const MatrixXd& distances() const { return distances_; }
  /// Default bandwidth bound: squared maximum centroid distance.
  double default_bandwidth_bound() const;

 private:
  const ArealGraph* graph_;
  LerouxSpectrum spectrum_;
  MatrixXd distances_;
};

struct SmoothState {
  SmoothingVariant variant = SmoothingVariant::None;
  MatrixXd phi;  // N x T
  double tau2 = 0.01;
  double rho = 0.5;   // Leroux weight in [0,1], or kernel bandwidth in (0, P]
  double gamma = 0.0; // AR(1) coefficient, Ar1Leroux only
  MatrixXd X;         // Convolution amplitudes, N x T
  double P = 1.0;     // bandwidth prior bound
  Eigen::SparseMatrix<double> kernel;  // Convolution kernel at the current rho

  bool is_leroux() const {
    return variant == SmoothingVariant::Ar1Leroux || variant == SmoothingVariant::CarPerPeriod;
  }
};

struct SmoothProposals {
  Proposal phi{1.0};  // relative to the prior conditional sd
  Proposal rho{0.1};
};

/// Zero-valued starting state. `bandwidth_bound` <= 0 picks the default P.
SmoothState init_smooth_state(SmoothingVariant variant, Index n_areas, Index n_periods,
                              const SmoothingContext& ctx, double bandwidth_bound = 0.0);

/// Joint log density of phi (Leroux variants, with log det Q from the
/// Laplacian spectrum) or of X (convolution); 0 for None.
double phi_log_prior(const SmoothState& state, const SmoothingContext& ctx);

/// Prior full conditional of phi_it given every other phi, Leroux variants.
ConditionalMoments phi_prior_conditional(const SmoothState& state, const ArealGraph& graph, Index i,
                                         Index t);

/// sum_t u_t' Q u_t with u_1 = phi_1 and u_t = phi_t - gamma phi_{t-1}.
double leroux_quadratic_form(const SmoothState& state, const ArealGraph& graph, double rho);

/// Single-site random-walk Metropolis sweep of phi (or X for the
/// convolution variant). The Poisson mean of cell (i, t) is
/// e_it exp(offset_it + phi_it). When `center_per_period` is set, phi is
/// shifted to zero mean in every period after the sweep (X is shifted by
/// the same amount, which moves phi identically because kernel rows sum to 1).
void sample_phi(SmoothState& state, const STDataset& data, const MatrixXd& offset,
                const SmoothingContext& ctx, Rng& rng, Proposal& proposal, bool center_per_period);

/// Shape and rate of the conjugate tau2 full conditional.
std::pair<double, double> tau2_posterior(const SmoothState& state, const SmoothingContext& ctx,
                                         double a = 0.001, double b = 0.001);
double sample_tau2(SmoothState& state, const SmoothingContext& ctx, Rng& rng, double a = 0.001,
                   double b = 0.001);

/// Mean and variance of the untruncated Gaussian full conditional of gamma.
ConditionalMoments gamma_conditional(const SmoothState& state, const ArealGraph& graph);

/// Updates gamma by an exact truncated-normal draw on [0, 1] (Ar1Leroux),
/// then rho by random-walk Metropolis. For the convolution bandwidth the
/// target is the Poisson likelihood, so `data` and `offset` are required.
void sample_rho_gamma(SmoothState& state, const SmoothingContext& ctx, Rng& rng, Proposal& rho_prop,
                      const STDataset* data = nullptr, const MatrixXd* offset = nullptr);

/// Rebuild kernel(rho) and phi = kernel * X.
void refresh_convolution(SmoothState& state, const SmoothingContext& ctx);

}  // namespace stcluster
