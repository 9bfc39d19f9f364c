#include "stcluster/smoothing.hpp"

#include "test_support.hpp"

#include <Eigen/Cholesky>
#include <Eigen/LU>

using namespace stcluster;
using stcluster::testing::check_error;
using stcluster::testing::mean_se;

namespace {

// Dense joint precision of vec(phi) (area fastest) for the AR(1) Leroux prior.
MatrixXd dense_joint_precision(const ArealGraph& g, Index T, double rho, double gamma, double tau2) {
  const Index N = g.n_areas();
  const MatrixXd q = MatrixXd(leroux_precision(g, rho));
  MatrixXd a = MatrixXd::Identity(N * T, N * T);
  for (Index t = 1; t < T; ++t) a.block(t * N, (t - 1) * N, N, N) = -gamma * MatrixXd::Identity(N, N);
  MatrixXd big = MatrixXd::Zero(N * T, N * T);
  for (Index t = 0; t < T; ++t) big.block(t * N, t * N, N, N) = q;
  return a.transpose() * big * a / tau2;
}

double dense_log_density(const MatrixXd& precision, const VectorXd& x) {
  const double n = double(x.size());
  return 0.5 * std::log(precision.determinant()) - 0.5 * n * std::log(2 * M_PI) - 0.5 * x.dot(precision * x);
}

VectorXd vec(const MatrixXd& m) { return Eigen::Map<const VectorXd>(m.data(), m.size()); }

struct TruncMoments {
  double mean, var;
};

TruncMoments truncated_moments(double mu, double sd, double lo, double hi) {
  const double a = (lo - mu) / sd, b = (hi - mu) / sd;
  const double pa = std::exp(-0.5 * a * a) / std::sqrt(2 * M_PI), pb = std::exp(-0.5 * b * b) / std::sqrt(2 * M_PI);
  const double z = normal_cdf(b) - normal_cdf(a);
  const double m = (pa - pb) / z;
  return {mu + sd * m, sd * sd * (1.0 + (a * pa - b * pb) / z - m * m)};
}

}  // namespace

TEST_CASE("phi_log_prior examples") {
  const ArealGraph g = build_graph(2, {{0, 1}});
  SmoothingContext none_ctx(g, SmoothingVariant::None);
  SmoothState none = init_smooth_state(SmoothingVariant::None, 2, 2, none_ctx);
  CHECK(phi_log_prior(none, none_ctx) == 0.0);

  SmoothingContext ctx(g, SmoothingVariant::Ar1Leroux);
  SmoothState s = init_smooth_state(SmoothingVariant::Ar1Leroux, 2, 2, ctx);
  s.rho = 0.0;
  s.gamma = 0.0;
  s.tau2 = 0.7;
  s.phi << 0.3, -1.2, 0.8, 0.1;
  double iid = 0.0;
  for (Index k = 0; k < 4; ++k)
    iid += -0.5 * std::log(2 * M_PI * s.tau2) - 0.5 * s.phi(k) * s.phi(k) / s.tau2;
  CHECK(std::abs(phi_log_prior(s, ctx) - iid) < 1e-12);

  s.rho = 0.5;
  s.gamma = 0.5;
  s.tau2 = 1.0;
  s.phi.setOnes();
  const double dense = dense_log_density(dense_joint_precision(g, 2, 0.5, 0.5, 1.0), vec(s.phi));
  CHECK(std::abs(phi_log_prior(s, ctx) - dense) < 1e-12);
}

TEST_CASE("phi_log_prior matches the dense Gaussian on random graphs") {
  std::mt19937_64 rng(12);
  std::uniform_real_distribution<double> u(0.0, 0.99);
  std::normal_distribution<double> z;
  for (int rep = 0; rep < 10; ++rep) {
    const ArealGraph g = stcluster::testing::random_graph(6, 0.4, rng);
    SmoothingContext ctx(g, SmoothingVariant::Ar1Leroux);
    SmoothState s = init_smooth_state(SmoothingVariant::Ar1Leroux, 6, 3, ctx);
    s.rho = u(rng);
    s.gamma = u(rng);
    s.tau2 = 0.2 + u(rng);
    for (Index k = 0; k < s.phi.size(); ++k) s.phi(k) = z(rng);
    const MatrixXd p = dense_joint_precision(g, 3, s.rho, s.gamma, s.tau2);
    CHECK(std::abs(phi_log_prior(s, ctx) - dense_log_density(p, vec(s.phi))) < 1e-9);

    // single-site conditionals from the dense precision
    const VectorXd x = vec(s.phi);
    for (Index t = 0; t < 3; ++t)
      for (Index i = 0; i < 6; ++i) {
        const Index c = i + 6 * t;
        const double mean = -(p.row(c).dot(x) - p(c, c) * x[c]) / p(c, c);
        const auto m = phi_prior_conditional(s, g, i, t);
        CHECK(std::abs(m.mean - mean) < 1e-10);
        CHECK(std::abs(m.variance - 1.0 / p(c, c)) < 1e-10);
      }
  }
}

TEST_CASE("AR(1) prior with gamma 0 is the sum of per-period CAR densities") {
  std::mt19937_64 rng(6);
  const ArealGraph g = stcluster::testing::random_graph(7, 0.3, rng);
  SmoothingContext ctx(g, SmoothingVariant::Ar1Leroux);
  SmoothState ar = init_smooth_state(SmoothingVariant::Ar1Leroux, 7, 4, ctx);
  std::normal_distribution<double> z;
  for (Index k = 0; k < ar.phi.size(); ++k) ar.phi(k) = z(rng);
  ar.gamma = 0.0;
  ar.rho = 0.37;
  ar.tau2 = 0.4;
  double sum = 0.0;
  for (Index t = 0; t < 4; ++t) {
    SmoothState one = init_smooth_state(SmoothingVariant::CarPerPeriod, 7, 1, ctx);
    one.phi = ar.phi.col(t);
    one.rho = ar.rho;
    one.tau2 = ar.tau2;
    sum += phi_log_prior(one, ctx);
  }
  CHECK(phi_log_prior(ar, ctx) == doctest::Approx(sum).epsilon(1e-14));
}

TEST_CASE("sample_phi without likelihood information draws from the prior") {
  const ArealGraph g = build_graph(2, {{0, 1}});
  SmoothingContext ctx(g, SmoothingVariant::Ar1Leroux);
  SmoothState s = init_smooth_state(SmoothingVariant::Ar1Leroux, 2, 2, ctx);
  s.rho = 0.6;
  s.gamma = 0.4;
  s.tau2 = 0.5;
  const STDataset data = make_dataset(MatrixXi::Zero(2, 2), MatrixXd::Constant(2, 2, 1e-300));
  const MatrixXd offset = MatrixXd::Zero(2, 2);
  const MatrixXd cov = dense_joint_precision(g, 2, s.rho, s.gamma, s.tau2).inverse();

  Rng rng(3);
  Proposal prop{1.5};
  std::vector<double> a, b;
  for (int k = 0; k < 200000; ++k) {
    sample_phi(s, data, offset, ctx, rng, prop, false);
    if (k % 20 == 0) {
      a.push_back(s.phi(0, 0) * s.phi(0, 0));
      b.push_back(s.phi(1, 1) * s.phi(0, 0));
    }
  }
  const auto va = mean_se(a), vb = mean_se(b);
  CHECK(std::abs(va.mean - cov(0, 0)) < 3.0 * va.se);
  CHECK(std::abs(vb.mean - cov(3, 0)) < 3.0 * vb.se);
}

TEST_CASE("sample_phi is a no-op without smoothing") {
  const ArealGraph g = build_graph(2, {{0, 1}});
  SmoothingContext ctx(g, SmoothingVariant::None);
  SmoothState s = init_smooth_state(SmoothingVariant::None, 2, 3, ctx);
  const STDataset data = make_dataset(MatrixXi::Constant(2, 3, 4), MatrixXd::Ones(2, 3));
  Rng rng(1);
  Proposal prop;
  sample_phi(s, data, MatrixXd::Zero(2, 3), ctx, rng, prop, true);
  CHECK(s.phi.isZero(0.0));
  CHECK(prop.attempted == 0);
  check_error(ErrorCode::VariantMismatch, [&] { tau2_posterior(s, ctx); });
  check_error(ErrorCode::VariantMismatch, [&] { sample_rho_gamma(s, ctx, rng, prop); });
}

TEST_CASE("convolution kernel collapses onto the nearest centroid as the bandwidth shrinks") {
  const ArealGraph g = build_graph(4, {{0, 1}, {1, 2}, {2, 3}});
  Centroids xy(4, 2);
  xy << 0, 0, 1, 0, 3, 0, 6, 0;
  const ArealGraph gc = g.with_centroids(xy);
  SmoothingContext ctx(gc, SmoothingVariant::Convolution);
  SmoothState s = init_smooth_state(SmoothingVariant::Convolution, 4, 1, ctx);
  CHECK(s.P == doctest::Approx(36.0));
  s.X << 1.0, 2.0, 3.0, 4.0;
  s.rho = 1e-4;
  refresh_convolution(s, ctx);
  CHECK(s.phi(0, 0) == doctest::Approx(2.0));
  CHECK(s.phi(1, 0) == doctest::Approx(1.0));
  CHECK(s.phi(2, 0) == doctest::Approx(2.0));
  CHECK(s.phi(3, 0) == doctest::Approx(3.0));
}

TEST_CASE("convolution phi stays equal to K X and centred through sweeps") {
  std::mt19937_64 gen(2);
  std::uniform_real_distribution<double> u(0.0, 5.0);
  const ArealGraph g0 = stcluster::testing::random_graph(12, 0.3, gen);
  Centroids xy(12, 2);
  for (Index i = 0; i < 12; ++i) xy.row(i) << u(gen), u(gen);
  const ArealGraph g = g0.with_centroids(xy);
  SmoothingContext ctx(g, SmoothingVariant::Convolution);
  SmoothState s = init_smooth_state(SmoothingVariant::Convolution, 12, 3, ctx);
  MatrixXi y(12, 3);
  for (Index k = 0; k < y.size(); ++k) y(k) = int(gen() % 20);
  const STDataset data = make_dataset(y, MatrixXd::Constant(12, 3, 8.0));
  const MatrixXd offset = MatrixXd::Constant(12, 3, 0.1);
  Rng rng(4);
  SmoothProposals props;
  for (int k = 0; k < 300; ++k) {
    sample_tau2(s, ctx, rng);
    sample_rho_gamma(s, ctx, rng, props.rho, &data, &offset);
    sample_phi(s, data, offset, ctx, rng, props.phi, true);
    CHECK(s.rho > 0.0);
    CHECK(s.rho <= s.P);
    const MatrixXd again = MatrixXd(sparse_kernel(ctx.distances(), s.rho)) * s.X;
    CHECK((again - s.phi).cwiseAbs().maxCoeff() < 1e-10);
    for (Index t = 0; t < 3; ++t) CHECK(std::abs(s.phi.col(t).mean()) < 1e-12);
  }
  check_error(ErrorCode::InvalidArgument, [&] { sample_rho_gamma(s, ctx, rng, props.rho); });
}

TEST_CASE("Leroux phi sweeps keep every period centred") {
  std::mt19937_64 gen(8);
  const ArealGraph g = stcluster::testing::random_graph(15, 0.25, gen);
  SmoothingContext ctx(g, SmoothingVariant::Ar1Leroux);
  SmoothState s = init_smooth_state(SmoothingVariant::Ar1Leroux, 15, 4, ctx);
  MatrixXi y(15, 4);
  for (Index k = 0; k < y.size(); ++k) y(k) = int(gen() % 30);
  const STDataset data = make_dataset(y, MatrixXd::Constant(15, 4, 12.0));
  Rng rng(9);
  Proposal prop{1.0};
  for (int k = 0; k < 200; ++k) {
    sample_phi(s, data, MatrixXd::Zero(15, 4), ctx, rng, prop, true);
    for (Index t = 0; t < 4; ++t) CHECK(std::abs(s.phi.col(t).mean()) < 1e-12);
  }
  CHECK(prop.accepted > 0);
}

TEST_CASE("tau2 conjugate parameters") {
  const ArealGraph g = build_graph(2, {{0, 1}});
  SmoothingContext lctx(g, SmoothingVariant::CarPerPeriod);
  SmoothState zero = init_smooth_state(SmoothingVariant::CarPerPeriod, 2, 3, lctx);
  auto [shape, rate] = tau2_posterior(zero, lctx);
  CHECK(shape == doctest::Approx(0.001 + 3.0));
  CHECK(rate == doctest::Approx(0.001));

  Centroids xy(2, 2);
  xy << 0, 0, 1, 1;
  const ArealGraph gc = g.with_centroids(xy);
  SmoothingContext cctx(gc, SmoothingVariant::Convolution);
  SmoothState conv = init_smooth_state(SmoothingVariant::Convolution, 2, 2, cctx);
  conv.X << 1, -1, -1, 1;
  std::tie(shape, rate) = tau2_posterior(conv, cctx);
  CHECK(shape == doctest::Approx(2.001).epsilon(1e-15));
  CHECK(rate == doctest::Approx(2.001).epsilon(1e-15));

  SmoothingContext actx(g, SmoothingVariant::Ar1Leroux);
  SmoothState ar = init_smooth_state(SmoothingVariant::Ar1Leroux, 2, 3, actx);
  ar.phi << 0.2, -0.4, 0.9, 0.3, 0.1, -0.6;
  ar.rho = 0.3;
  ar.gamma = 0.6;
  const MatrixXd p = dense_joint_precision(g, 3, ar.rho, ar.gamma, 1.0);
  std::tie(shape, rate) = tau2_posterior(ar, actx);
  CHECK(std::abs(rate - (0.001 + 0.5 * vec(ar.phi).dot(p * vec(ar.phi)))) < 1e-12);
}

TEST_CASE("tau2 draws match the inverse-gamma mean") {
  Centroids xy(2, 2);
  xy << 0, 0, 1, 1;
  const ArealGraph g = build_graph(2, {{0, 1}}).with_centroids(xy);
  SmoothingContext ctx(g, SmoothingVariant::Convolution);
  SmoothState s = init_smooth_state(SmoothingVariant::Convolution, 2, 4, ctx);
  s.X << 1, -1, 0.5, 2, -0.3, 0.7, 1.2, -0.8;
  const auto [shape, rate] = tau2_posterior(s, ctx);
  Rng rng(10);
  std::vector<double> draws;
  for (int k = 0; k < 100000; ++k) draws.push_back(sample_tau2(s, ctx, rng));
  const auto m = mean_se(draws);
  CHECK(std::abs(m.mean - rate / (shape - 1.0)) < 3.0 * m.se);
}

TEST_CASE("gamma exact draw is the truncated conjugate normal") {
  const ArealGraph g = build_graph(3, {{0, 1}, {1, 2}});
  SmoothingContext ctx(g, SmoothingVariant::Ar1Leroux);
  SmoothState s = init_smooth_state(SmoothingVariant::Ar1Leroux, 3, 2, ctx);
  s.phi << 1.0, 1.0, 1.0, 1.0, -1.0, -1.0;  // phi_1 = phi_2, squared norm 3
  s.tau2 = 1.0;
  s.rho = 0.0;
  const auto c = gamma_conditional(s, g);
  CHECK(c.mean == doctest::Approx(1.0));
  CHECK(c.variance == doctest::Approx(1.0 / 3.0));

  const TruncMoments target = truncated_moments(1.0, std::sqrt(1.0 / 3.0), 0.0, 1.0);
  Rng rng(14);
  Proposal frozen{1e-12};
  std::vector<double> draws, squares;
  std::vector<int> hist(10, 0);
  for (int k = 0; k < 100000; ++k) {
    s.rho = 0.0;
    sample_rho_gamma(s, ctx, rng, frozen);
    draws.push_back(s.gamma);
    squares.push_back((s.gamma - target.mean) * (s.gamma - target.mean));
    ++hist[std::size_t(std::min(9, int(s.gamma * 10)))];
  }
  const auto m = mean_se(draws);
  CHECK(std::abs(m.mean - target.mean) < 3.0 * m.se);
  const auto v = mean_se(squares);
  CHECK(std::abs(v.mean - target.var) < 3.0 * v.se);

  const double sd = std::sqrt(1.0 / 3.0);
  const double z = normal_cdf((1.0 - 1.0) / sd) - normal_cdf((0.0 - 1.0) / sd);
  for (int b = 0; b < 10; ++b) {
    const double p = (normal_cdf((0.1 * (b + 1) - 1.0) / sd) - normal_cdf((0.1 * b - 1.0) / sd)) / z;
    const double se = std::sqrt(p * (1 - p) / 100000.0);
    CHECK(std::abs(hist[std::size_t(b)] / 100000.0 - p) < 3.0 * se);
  }
}

TEST_CASE("rho Metropolis update targets its full conditional") {
  const ArealGraph g = build_graph(4, {{0, 1}, {1, 2}, {2, 3}, {0, 3}});
  SmoothingContext ctx(g, SmoothingVariant::CarPerPeriod);
  SmoothState s = init_smooth_state(SmoothingVariant::CarPerPeriod, 4, 3, ctx);
  s.phi << 0.5, 0.4, 0.6, 0.3, 0.1, 0.2, -0.4, -0.5, -0.3, -0.2, 0.1, 0.0;
  s.tau2 = 0.3;

  // posterior mean of rho by quadrature on (0, 1)
  const int n = 20000;
  double num = 0.0, den = 0.0, lmax = -kInf;
  std::vector<double> logs(n);
  for (int k = 0; k < n; ++k) {
    const double r = (k + 0.5) / n;
    logs[std::size_t(k)] = 1.5 * ctx.spectrum().log_det(r) - 0.5 * leroux_quadratic_form(s, g, r) / s.tau2;
    lmax = std::max(lmax, logs[std::size_t(k)]);
  }
  for (int k = 0; k < n; ++k) {
    const double w = std::exp(logs[std::size_t(k)] - lmax);
    num += w * (k + 0.5) / n;
    den += w;
  }
  const double mean = num / den;

  Rng rng(21);
  Proposal prop{0.3};
  std::vector<double> batch;
  double acc = 0.0;
  for (int k = 1; k <= 200000; ++k) {
    sample_rho_gamma(s, ctx, rng, prop);
    CHECK(s.rho > 0.0);
    CHECK(s.rho < 1.0);
    acc += s.rho;
    if (k % 1000 == 0) {
      batch.push_back(acc / 1000.0);
      acc = 0.0;
    }
  }
  const auto m = mean_se(batch);
  CHECK(std::abs(m.mean - mean) < 3.0 * m.se);

  Proposal wide{1e6};
  const double before = s.rho;
  for (int k = 0; k < 20; ++k) sample_rho_gamma(s, ctx, rng, wide);
  CHECK(s.rho == before);
  CHECK(wide.accepted == 0);
}
