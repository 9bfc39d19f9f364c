#include "stcluster/baseline_models.hpp"
#include "stcluster/simulation.hpp"

#include "test_support.hpp"

#include <Eigen/LU>

using namespace stcluster;
using stcluster::testing::mean_se;

TEST_CASE("ICAR and RW(1) conditionals") {
  const ArealGraph g = build_graph(4, {{0, 1}, {0, 2}});
  VectorXd phi(4);
  phi << 9.0, 0.2, 0.6, -3.0;
  const auto c = icar_conditional(g, phi, 0.8, 0);
  CHECK(c.mean == doctest::Approx(0.4));
  CHECK(c.variance == doctest::Approx(0.4));
  const auto island = icar_conditional(g, phi, 0.8, 3);
  CHECK(island.mean == 0.0);
  CHECK(island.variance == 0.8);

  VectorXd a(4);
  a << 1.0, 2.0, 4.0, 8.0;
  CHECK(rw1_conditional(a, 1.0, 0).mean == 2.0);
  CHECK(rw1_conditional(a, 1.0, 0).variance == 1.0);
  CHECK(rw1_conditional(a, 1.0, 2).mean == 5.0);
  CHECK(rw1_conditional(a, 1.0, 2).variance == 0.5);
  CHECK(rw1_conditional(a, 1.0, 3).mean == 4.0);
}

TEST_CASE("KH conjugate variance parameters match plug-in formulas") {
  // components {0,1,2} and {3,4} plus island 5
  const ArealGraph g = build_graph(6, {{0, 1}, {1, 2}, {3, 4}});
  KHState s;
  s.phi.resize(6);
  s.phi << 0.1, -0.3, 0.5, 0.2, -0.2, 0.4;
  s.theta = (VectorXd(6) << 1, 2, 3, 4, 5, 6).finished() * 0.1;
  s.alpha = (VectorXd(3) << 0.2, -0.1, 0.4).finished();
  s.delta = (VectorXd(3) << 0.3, 0.0, -0.3).finished();
  s.gamma = MatrixXd::Constant(6, 3, 0.5);
  const KHVariancePosteriors p = kh_variance_posteriors(s, g);

  const double ss_phi = 0.16 + 0.64 + 0.16 + 0.16;
  CHECK(p.phi.first == doctest::Approx(0.001 + 0.5 * (6 - 2)));
  CHECK(p.phi.second == doctest::Approx(0.001 + 0.5 * ss_phi));
  CHECK(p.theta.first == doctest::Approx(0.001 + 3.0));
  CHECK(p.theta.second == doctest::Approx(0.001 + 0.5 * 0.91));
  CHECK(p.alpha.first == doctest::Approx(0.001 + 1.0));
  CHECK(p.alpha.second == doctest::Approx(0.001 + 0.5 * (0.09 + 0.25)));
  CHECK(p.delta.first == doctest::Approx(0.001 + 1.5));
  CHECK(p.delta.second == doctest::Approx(0.001 + 0.5 * 0.18));
  CHECK(p.gamma.first == doctest::Approx(0.001 + 9.0));
  CHECK(p.gamma.second == doctest::Approx(0.001 + 0.5 * 18 * 0.25));
}

TEST_CASE("KH sweeps keep the main effects summing to zero and eta consistent") {
  const SimLattice lat = default_lattice();
  Scenario sc = make_scenario(3, 20, 40, 5);
  const SimTruth truth = generate(sc, lat.graph.centroids(), lat.cluster_template, 5, 3);
  KnorrHeldSampler kh(truth.dataset, lat.graph);
  Rng rng(2);
  for (int k = 0; k < 100; ++k) {
    kh.sweep(rng);
    CHECK(kh.check_invariants().empty());
    const KHState& s = kh.state();
    CHECK(std::abs(s.phi.sum()) < 1e-12);
    CHECK(std::abs(s.theta.sum()) < 1e-12);
    CHECK(std::abs(s.alpha.sum()) < 1e-12);
    CHECK(std::abs(s.delta.sum()) < 1e-12);
  }
  CHECK(kh.log_risk().allFinite());
}

TEST_CASE("KH recovers a flat risk surface") {
  const ArealGraph g = lattice(5, 5);
  Rng gen(4);
  MatrixXi y(25, 4);
  const MatrixXd e = MatrixXd::Constant(25, 4, 1000.0);
  for (Index k = 0; k < y.size(); ++k) y(k) = std::poisson_distribution<int>(1000.0)(gen);
  const STDataset data = make_dataset(y, e);
  McmcConfig cfg;
  cfg.n_burnin = 1000;
  cfg.n_keep = 1000;
  const FitResult fit = fit_kh(data, g, cfg);
  const MatrixXd med = fit.theta_median();
  CHECK(med.minCoeff() >= 0.9);
  CHECK(med.maxCoeff() <= 1.1);
  CHECK(fit.invariant_violations == 0);
}

TEST_CASE("RLM intercept matches the saturated estimate on flat data") {
  const ArealGraph g = lattice(4, 4);
  Rng gen(5);
  MatrixXi y(16, 3);
  MatrixXd e(16, 3);
  for (Index k = 0; k < y.size(); ++k) {
    e(k) = 150.0 + 10.0 * double(k % 5);
    y(k) = std::poisson_distribution<int>(1.3 * e(k))(gen);
  }
  const STDataset data = make_dataset(y, e);
  McmcConfig cfg;
  cfg.n_burnin = 1000;
  cfg.n_keep = 1000;
  const FitResult fit = fit_rlm(data, g, cfg);
  const VectorXd beta = fit.scalar_trace("beta");
  const double target = std::log(double(y.sum()) / e.sum());
  CHECK(std::abs(beta.mean() - target) < 0.02);
  CHECK(fit.invariant_violations == 0);
}

TEST_CASE("RLM gamma is high on temporally persistent risks") {
  const ArealGraph g = lattice(6, 6);
  Rng gen(6);
  std::normal_distribution<double> z(0.0, 0.03);
  const Index N = 36, T = 10;
  MatrixXd eta(N, T);
  for (Index i = 0; i < N; ++i) eta(i, 0) = 0.4 * std::sin(0.5 * double(i % 6)) * std::cos(0.4 * double(i / 6));
  for (Index t = 1; t < T; ++t)
    for (Index i = 0; i < N; ++i) eta(i, t) = 0.95 * eta(i, t - 1) + z(gen);
  MatrixXi y(N, T);
  const MatrixXd e = MatrixXd::Constant(N, T, 200.0);
  for (Index k = 0; k < y.size(); ++k) y(k) = std::poisson_distribution<int>(200.0 * std::exp(eta(k)))(gen);
  McmcConfig cfg;
  cfg.n_burnin = 2000;
  cfg.n_keep = 1000;
  const FitResult fit = fit_rlm(make_dataset(y, e), g, cfg);
  VectorXd gamma = fit.scalar_trace("gamma");
  std::sort(gamma.data(), gamma.data() + gamma.size());
  CHECK(gamma[gamma.size() / 2] > 0.7);
}

TEST_CASE("RLM with rho = gamma = 0 fixed is the iid random-effects model") {
  // log theta = beta + phi, phi iid N(0, tau2), beta ~ N(0, V): the risks
  // are jointly N(0, tau2 I + V J) a priori. Posterior means by quadrature.
  const ArealGraph g = build_graph(2, {{0, 1}});
  MatrixXi y(2, 1);
  y << 5, 15;
  MatrixXd e(2, 1);
  e << 8.0, 8.0;
  const STDataset data = make_dataset(y, e);
  const double tau2 = 0.25;

  Eigen::Matrix2d cov = tau2 * Eigen::Matrix2d::Identity();
  cov.array() += kInterceptPriorVariance;
  const Eigen::Matrix2d prec = cov.inverse();
  double z = 0.0, m0 = 0.0, m1 = 0.0, lmax = -kInf;
  const int n = 801;
  const double lo = -3.0, hi = 2.5, h = (hi - lo) / (n - 1);
  std::vector<double> logs(std::size_t(n * n));
  for (int a = 0; a < n; ++a)
    for (int b = 0; b < n; ++b) {
      const Eigen::Vector2d v(lo + a * h, lo + b * h);
      double l = -0.5 * v.dot(prec * v);
      for (int i = 0; i < 2; ++i) l += y(i, 0) * v[i] - e(i, 0) * std::exp(v[i]);
      logs[std::size_t(a * n + b)] = l;
      lmax = std::max(lmax, l);
    }
  for (int a = 0; a < n; ++a)
    for (int b = 0; b < n; ++b) {
      const double w = std::exp(logs[std::size_t(a * n + b)] - lmax);
      z += w;
      m0 += w * std::exp(lo + a * h);
      m1 += w * std::exp(lo + b * h);
    }
  m0 /= z;
  m1 /= z;

  RlmSampler rlm(data, g);
  rlm.fix_hyperparameters(true);
  rlm.state().smooth.rho = 0.0;
  rlm.state().smooth.gamma = 0.0;
  rlm.state().smooth.tau2 = tau2;
  Rng rng(7);
  for (int k = 0; k < 2000; ++k) {
    rlm.sweep(rng);
    if ((k + 1) % 50 == 0) rlm.adapt(0.4, 0.3);
  }
  std::vector<double> b0, b1;
  double s0 = 0.0, s1 = 0.0;
  for (int k = 1; k <= 300000; ++k) {
    rlm.sweep(rng);
    const MatrixXd lr = rlm.log_risk();
    s0 += std::exp(lr(0, 0));
    s1 += std::exp(lr(1, 0));
    if (k % 3000 == 0) {
      b0.push_back(s0 / 3000.0);
      b1.push_back(s1 / 3000.0);
      s0 = s1 = 0.0;
    }
  }
  const auto r0 = mean_se(b0), r1 = mean_se(b1);
  CHECK(std::abs(r0.mean - m0) < 3.0 * r0.se);
  CHECK(std::abs(r1.mean - m1) < 3.0 * r1.se);
}

TEST_CASE("samplers reject graphs that do not match the data") {
  const STDataset data = make_dataset(MatrixXi::Ones(3, 2), MatrixXd::Ones(3, 2));
  const ArealGraph g = build_graph(2, {{0, 1}});
  stcluster::testing::check_error(ErrorCode::ShapeMismatch, [&] { KnorrHeldSampler kh(data, g); });
  stcluster::testing::check_error(ErrorCode::ShapeMismatch, [&] { RlmSampler rlm(data, g); });
}
