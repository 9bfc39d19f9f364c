#include "stcluster/engine.hpp"
#include "stcluster/simulation.hpp"

#include "test_support.hpp"

#include <algorithm>
#include <cstdlib>

using namespace stcluster;
using stcluster::testing::check_error;

namespace {

struct Fixture {
  SimLattice lat = default_lattice();
  SimTruth truth;

  explicit Fixture(int scenario = 3, std::uint64_t seed = 5) {
    Scenario sc = make_scenario(scenario, 90, 110, 6);
    truth = generate(sc, lat.graph.centroids(), lat.cluster_template, 6, seed);
  }
};

McmcConfig tiny_config() {
  McmcConfig cfg;
  cfg.n_burnin = 100;
  cfg.n_keep = 60;
  cfg.thin = 2;
  cfg.adapt_interval = 25;
  cfg.seed = 99;
  return cfg;
}

const ModelKind kAllModels[] = {ModelKind::Cluster1, ModelKind::Cluster2, ModelKind::Cluster3,
                                ModelKind::Cluster4, ModelKind::KnorrHeld, ModelKind::Rlm};

}  // namespace

TEST_CASE("model names round-trip") {
  for (ModelKind m : kAllModels) CHECK(parse_model_kind(to_string(m)) == m);
  check_error(ErrorCode::InvalidArgument, [] { parse_model_kind("cluster9"); });
  CHECK(is_cluster_model(ModelKind::Cluster4));
  CHECK_FALSE(is_cluster_model(ModelKind::Rlm));
  CHECK(needs_centroids(ModelKind::Cluster4));
  CHECK_FALSE(needs_centroids(ModelKind::Cluster2));
  CHECK(smoothing_variant(ModelKind::Cluster1) == SmoothingVariant::None);
  CHECK(smoothing_variant(ModelKind::Cluster2) == SmoothingVariant::Ar1Leroux);
  CHECK(smoothing_variant(ModelKind::Cluster3) == SmoothingVariant::CarPerPeriod);
  CHECK(smoothing_variant(ModelKind::Cluster4) == SmoothingVariant::Convolution);
}

TEST_CASE("McmcConfig validation") {
  McmcConfig cfg;
  CHECK_NOTHROW(cfg.validate());
  cfg.n_keep = 0;
  check_error(ErrorCode::InvalidArgument, [&] { cfg.validate(); });
  cfg = McmcConfig{};
  cfg.thin = 3;
  check_error(ErrorCode::InvalidArgument, [&] { cfg.validate(); });
  cfg = McmcConfig{};
  cfg.n_chains = 0;
  check_error(ErrorCode::InvalidArgument, [&] { cfg.validate(); });
  cfg = McmcConfig{};
  cfg.scalar_target = 1.0;
  check_error(ErrorCode::InvalidArgument, [&] { cfg.validate(); });

  Fixture f;
  McmcConfig bad = tiny_config();
  bad.n_keep = 0;
  check_error(ErrorCode::InvalidArgument,
              [&] { run_chain(ModelKind::Cluster1, f.truth.dataset, f.lat.graph, bad, 0); });
}

TEST_CASE("run_chain is deterministic and stores n_keep / thin samples") {
  Fixture f;
  const McmcConfig cfg = tiny_config();
  for (ModelKind m : kAllModels) {
    CAPTURE(to_string(m));
    const FitResult a = run_chain(m, f.truth.dataset, f.lat.graph, cfg, 0);
    const FitResult b = run_chain(m, f.truth.dataset, f.lat.graph, cfg, 0);
    CHECK(a.n_samples() == 30);
    CHECK(a.theta.rows() == f.truth.dataset.n_cells());
    CHECK(a.theta == b.theta);
    CHECK(a.scalars == b.scalars);
    CHECK(a.deviance == b.deviance);
    CHECK(a.z == b.z);
    CHECK(a.lambda == b.lambda);
    CHECK(a.invariant_violations == 0);
    CHECK((a.theta_median().array() > 0.0).all());
    CHECK(a.scalars.rows() == 30);
    CHECK(a.scalar_names.size() == std::size_t(a.scalars.cols()));
    if (is_cluster_model(m)) {
      CHECK(a.z.cols() == 30);
      CHECK(a.lambda.rows() == 6 * cfg.G);
      CHECK(a.z_median() == extract_partition(a.z, a.n_areas, a.n_periods));
    }
    const FitResult other = run_chain(m, f.truth.dataset, f.lat.graph, cfg, 1);
    CHECK(other.theta != a.theta);
  }
}

TEST_CASE("deviance samples equal the Poisson deviance of the stored risks") {
  Fixture f;
  const FitResult fit = run_chain(ModelKind::Cluster2, f.truth.dataset, f.lat.graph, tiny_config(), 0);
  const STDataset& d = f.truth.dataset;
  for (Index s = 0; s < fit.n_samples(); s += 7) {
    double dev = 0.0;
    for (Index t = 0; t < d.n_periods(); ++t)
      for (Index i = 0; i < d.n_areas(); ++i) {
        const double mu = d.e(i, t) * fit.theta(i + d.n_areas() * t, s);
        dev += -2.0 * (d.y(i, t) * std::log(mu) - mu - std::lgamma(d.y(i, t) + 1.0));
      }
    CHECK(std::abs(fit.deviance[s] - dev) < 1e-8 * std::abs(dev));
  }
}

TEST_CASE("proposals are frozen after burn-in") {
  Fixture f;
  McmcConfig a = tiny_config(), b = tiny_config();
  b.n_keep = 200;
  const FitResult fa = run_chain(ModelKind::Cluster3, f.truth.dataset, f.lat.graph, a, 0);
  const FitResult fb = run_chain(ModelKind::Cluster3, f.truth.dataset, f.lat.graph, b, 0);
  REQUIRE(fa.acceptance.size() == fb.acceptance.size());
  for (std::size_t k = 0; k < fa.acceptance.size(); ++k) {
    CHECK(fa.acceptance[k].block == fb.acceptance[k].block);
    CHECK(fa.acceptance[k].proposal_sd == fb.acceptance[k].proposal_sd);
  }
}

TEST_CASE("cluster4 needs centroids") {
  Fixture f;
  std::vector<Edge> edges = f.lat.graph.edges();
  const ArealGraph bare = build_graph(f.lat.graph.n_areas(), edges);
  check_error(ErrorCode::MissingCentroids,
              [&] { run_chain(ModelKind::Cluster4, f.truth.dataset, bare, tiny_config(), 0); });
}

TEST_CASE("multichain runs") {
  Fixture f;
  McmcConfig cfg = tiny_config();
  const FitResult single = run_chain(ModelKind::Cluster2, f.truth.dataset, f.lat.graph, cfg, 0);
  const MultiChainResult one = run_multichain(ModelKind::Cluster2, f.truth.dataset, f.lat.graph, cfg);
  CHECK(one.chains.size() == 1);
  CHECK(one.pooled.theta == single.theta);
  CHECK(one.pooled.z == single.z);

  cfg.n_chains = 3;
  setenv("STCLUSTER_THREADS", "3", 1);
  CHECK(worker_threads() == 3);
  const MultiChainResult a = run_multichain(ModelKind::Cluster2, f.truth.dataset, f.lat.graph, cfg);
  setenv("STCLUSTER_THREADS", "1", 1);
  const MultiChainResult b = run_multichain(ModelKind::Cluster2, f.truth.dataset, f.lat.graph, cfg);
  unsetenv("STCLUSTER_THREADS");
  CHECK(a.pooled.theta == b.pooled.theta);
  CHECK(a.pooled.scalars == b.pooled.scalars);
  CHECK(a.pooled.n_chains == 3);
  CHECK(a.pooled.n_samples() == 90);
  CHECK(a.chains[0].theta == single.theta);
  CHECK(a.chains[1].theta != a.chains[2].theta);
  CHECK(a.pooled.theta.middleCols(30, 30) == a.chains[1].theta);

  // pooled median is the median of the concatenated samples
  const MatrixXd med = a.pooled.theta_median();
  for (Index c = 0; c < a.pooled.theta.rows(); c += 37) {
    std::vector<double> all;
    for (const FitResult& ch : a.chains)
      for (Index s = 0; s < ch.n_samples(); ++s) all.push_back(ch.theta(c, s));
    std::sort(all.begin(), all.end());
    const double expected = 0.5 * (all[44] + all[45]);
    CHECK(med(c % f.truth.dataset.n_areas(), c / f.truth.dataset.n_areas()) == doctest::Approx(expected).epsilon(1e-14));
  }
}

TEST_CASE("chain errors propagate out of run_multichain") {
  Fixture f;
  McmcConfig cfg = tiny_config();
  cfg.n_chains = 2;
  const ArealGraph bare = build_graph(f.lat.graph.n_areas(), f.lat.graph.edges());
  check_error(ErrorCode::MissingCentroids,
              [&] { run_multichain(ModelKind::Cluster4, f.truth.dataset, bare, cfg); });
}

TEST_CASE("poisson_deviance matches a hand computation") {
  MatrixXi y(1, 2);
  y << 3, 0;
  MatrixXd e(1, 2);
  e << 2.0, 1.5;
  const STDataset d = make_dataset(y, e);
  MatrixXd theta(1, 2);
  theta << 1.5, 0.4;
  const double expected = -2.0 * ((3 * std::log(3.0) - 3.0 - std::log(6.0)) + (-0.6));
  CHECK(std::abs(poisson_deviance(d, theta) - expected) < 1e-12);
}

TEST_CASE("scalar traces are looked up by name") {
  Fixture f;
  const FitResult fit = run_chain(ModelKind::Cluster2, f.truth.dataset, f.lat.graph, tiny_config(), 0);
  const auto& names = fit.scalar_names;
  for (const char* n : {"sigma2", "alpha", "delta", "tau2", "rho", "gamma"})
    CHECK(std::find(names.begin(), names.end(), n) != names.end());
  CHECK(fit.scalar_trace("alpha").size() == fit.n_samples());
  check_error(ErrorCode::InvalidArgument, [&] { fit.scalar_trace("nope"); });
  const VectorXd rho = fit.scalar_trace("rho");
  CHECK((rho.array() > 0.0).all());
  CHECK((rho.array() < 1.0).all());
}

TEST_CASE("tuned acceptance rates fall in [0.2, 0.6] on null data") {
  // The null label posterior is bimodal and chains can switch modes late, so
  // burn-in is long enough for the alpha/delta proposals to settle.
  const SimLattice lat = default_lattice();
  const SimTruth truth = generate(make_scenario(1, 190, 210, 10), lat.graph.centroids(), lat.cluster_template, 10, 1);
  McmcConfig cfg;
  cfg.n_burnin = 5000;
  cfg.n_keep = 2000;
  cfg.seed = 1;
  for (ModelKind m : {ModelKind::Cluster1, ModelKind::Cluster2, ModelKind::Cluster3, ModelKind::Cluster4,
                      ModelKind::KnorrHeld, ModelKind::Rlm}) {
    const FitResult fit = run_chain(m, truth.dataset, lat.graph, cfg, 0);
    REQUIRE_FALSE(fit.acceptance.empty());
    for (const auto& a : fit.acceptance) {
      CAPTURE(to_string(m));
      CAPTURE(a.block);
      CHECK(a.rate >= 0.2);
      CHECK(a.rate <= 0.6);
    }
  }
}
