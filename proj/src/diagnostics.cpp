#include "stcluster/diagnostics.hpp"

#include "stcluster/engine.hpp"

#include <algorithm>
#include <map>
#include <numeric>
#include <random>

namespace stcluster {

namespace {

constexpr double kLogCpoFloor = -690.7755278982137;  // log(1e-300)
constexpr double kLog2Pi = 1.8378770664093454836;

double poisson_logpmf(double y, double mu) {
  if (mu <= 0.0) return y > 0.0 ? -kInf : 0.0;
  return y * std::log(mu) - mu - std::lgamma(y + 1.0);
}

void check_theta_shape(const MatrixXd& theta, const STDataset& data) {
  if (theta.rows() != data.n_cells())
    throw Error(ErrorCode::ShapeMismatch, "theta samples must have one row per cell");
  if (theta.cols() < 1) throw Error(ErrorCode::InvalidArgument, "no samples");
}

}  // namespace

ModelFitStats compute_dic(const VectorXd& deviance, const MatrixXd& theta, const STDataset& data) {
  check_theta_shape(theta, data);
  if (deviance.size() < 2) throw Error(ErrorCode::InvalidArgument, "DIC needs at least two samples");
  if (deviance.size() != theta.cols())
    throw Error(ErrorCode::ShapeMismatch, "deviance and theta sample counts differ");
  const VectorXd mean_theta = theta.rowwise().mean();
  const MatrixXd at_mean = mean_theta.reshaped(data.n_areas(), data.n_periods());
  ModelFitStats s;
  s.mean_deviance = deviance.mean();
  s.pd = s.mean_deviance - poisson_deviance(data, at_mean);
  s.dic = s.mean_deviance + s.pd;
  return s;
}

LmplResult compute_lmpl(const MatrixXd& theta, const STDataset& data) {
  check_theta_shape(theta, data);
  const Index N = data.n_areas();
  const Index S = theta.cols();
  const double log_s = std::log(double(S));
  LmplResult out;
  std::vector<double> neg_ll(static_cast<std::size_t>(S));
  for (Index c = 0; c < theta.rows(); ++c) {
    const double y = data.y(c % N, c / N);
    const double e = data.e(c % N, c / N);
    double top = -kInf;
    for (Index s = 0; s < S; ++s) {
      neg_ll[std::size_t(s)] = -poisson_logpmf(y, e * theta(c, s));
      top = std::max(top, neg_ll[std::size_t(s)]);
    }
    double log_cpo = -kInf;
    if (std::isfinite(top)) {
      double acc = 0.0;
      for (double v : neg_ll) acc += std::exp(v - top);
      log_cpo = -(top + std::log(acc) - log_s);
    }
    if (!(log_cpo >= kLogCpoFloor)) {
      log_cpo = kLogCpoFloor;
      ++out.floored_cells;
    }
    out.lmpl += log_cpo;
  }
  return out;
}

ModelFitStats compute_fit_stats(const VectorXd& deviance, const MatrixXd& theta, const STDataset& data) {
  ModelFitStats s = compute_dic(deviance, theta, data);
  const LmplResult l = compute_lmpl(theta, data);
  s.lmpl = l.lmpl;
  s.floored_cells = l.floored_cells;
  return s;
}

double rand_index(const MatrixXi& a, const MatrixXi& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols())
    throw Error(ErrorCode::ShapeMismatch, "partitions must have the same shape");
  const std::int64_t n = a.size();
  if (n < 2) return 1.0;
  std::map<std::pair<int, int>, std::int64_t> joint;
  std::map<int, std::int64_t> rows, cols;
  for (Index c = 0; c < n; ++c) {
    ++joint[{a(c), b(c)}];
    ++rows[a(c)];
    ++cols[b(c)];
  }
  auto pairs = [](std::int64_t m) { return m * (m - 1) / 2; };
  std::int64_t both = 0, in_a = 0, in_b = 0;
  for (const auto& [key, m] : joint) both += pairs(m);
  for (const auto& [key, m] : rows) in_a += pairs(m);
  for (const auto& [key, m] : cols) in_b += pairs(m);
  const std::int64_t total = pairs(n);
  // same in both + different in both
  const std::int64_t agree = both + (total - in_a - in_b + both);
  return double(agree) / double(total);
}

// ---------------------------------------------------------------- mixtures

namespace {

constexpr double kEmTolerance = 1e-8;
constexpr int kEmMaxIter = 500;
constexpr int kEmRestarts = 5;

double variance_floor(const VectorXd& x) {
  const double var = (x.array() - x.mean()).square().mean();
  return std::max(1e-10, 1e-6 * var);
}

VectorXd kmeanspp_centres(const VectorXd& x, int k, Rng& rng) {
  const Index n = x.size();
  VectorXd centres(k);
  std::uniform_int_distribution<Index> pick(0, n - 1);
  centres[0] = x[pick(rng)];
  VectorXd d2(n);
  for (int c = 1; c < k; ++c) {
    for (Index i = 0; i < n; ++i) {
      double best = kInf;
      for (int j = 0; j < c; ++j) best = std::min(best, (x[i] - centres[j]) * (x[i] - centres[j]));
      d2[i] = best;
    }
    const double total = d2.sum();
    if (!(total > 0.0)) {
      centres[c] = x[pick(rng)];
      continue;
    }
    centres[c] = x[draw_categorical(rng, d2 / total)];
  }
  return centres;
}

// Fills responsibilities and returns the mixture log-likelihood.
double e_step(const VectorXd& x, const MixtureFit& m, MatrixXd& resp) {
  const Index n = x.size();
  double ll = 0.0;
  for (Index i = 0; i < n; ++i) {
    double top = -kInf;
    for (int j = 0; j < m.k; ++j) {
      const double lw = m.weights[j] > 0.0 ? std::log(m.weights[j]) : -kInf;
      const double d = x[i] - m.means[j];
      resp(i, j) = lw - 0.5 * (kLog2Pi + std::log(m.variances[j]) + d * d / m.variances[j]);
      top = std::max(top, resp(i, j));
    }
    double acc = 0.0;
    for (int j = 0; j < m.k; ++j) {
      resp(i, j) = std::exp(resp(i, j) - top);
      acc += resp(i, j);
    }
    resp.row(i) /= acc;
    ll += top + std::log(acc);
  }
  return ll;
}

void m_step(const VectorXd& x, const MatrixXd& resp, double floor, MixtureFit& m) {
  const double n = double(x.size());
  for (int j = 0; j < m.k; ++j) {
    const double nj = resp.col(j).sum();
    if (nj < 1e-12) {
      m.weights[j] = 0.0;
      continue;
    }
    m.weights[j] = nj / n;
    m.means[j] = resp.col(j).dot(x) / nj;
    m.variances[j] =
        std::max(floor, (resp.col(j).array() * (x.array() - m.means[j]).square()).sum() / nj);
  }
}

MixtureFit em_once(const VectorXd& x, int k, Rng& rng, double floor, double jitter) {
  MixtureFit m;
  m.k = k;
  m.means = kmeanspp_centres(x, k, rng);
  const double var = std::max(floor, (x.array() - x.mean()).square().mean());
  if (jitter > 0.0)
    for (int j = 0; j < k; ++j) m.means[j] += jitter * std::sqrt(var) * std_normal(rng);
  m.variances = VectorXd::Constant(k, var);
  m.weights = VectorXd::Constant(k, 1.0 / k);
  MatrixXd resp(x.size(), k);
  double prev = -kInf;
  for (m.iterations = 1; m.iterations <= kEmMaxIter; ++m.iterations) {
    const double ll = e_step(x, m, resp);
    m_step(x, resp, floor, m);
    m.log_likelihood = ll;
    if (std::abs(ll - prev) < kEmTolerance) {
      m.converged = true;
      break;
    }
    prev = ll;
  }
  m.log_likelihood = e_step(x, m, resp);
  return m;
}

void sort_components(MixtureFit& m) {
  std::vector<int> order(std::size_t(m.k));
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return m.means[a] < m.means[b]; });
  MixtureFit s = m;
  for (int j = 0; j < m.k; ++j) {
    s.weights[j] = m.weights[order[std::size_t(j)]];
    s.means[j] = m.means[order[std::size_t(j)]];
    s.variances[j] = m.variances[order[std::size_t(j)]];
  }
  m = s;
}

}  // namespace

MixtureFit fit_gaussian_mixture(const VectorXd& x, int k, Rng& rng) {
  if (k < 1 || x.size() < k) throw Error(ErrorCode::InvalidArgument, "need at least k points for k components");
  const double floor = variance_floor(x);
  MixtureFit best = em_once(x, k, rng, floor, 0.0);
  for (int r = 0; r < kEmRestarts && !best.converged; ++r) {
    MixtureFit trial = em_once(x, k, rng, floor, 0.1);
    if (trial.converged || trial.log_likelihood > best.log_likelihood) best = trial;
  }
  sort_components(best);
  return best;
}

PosthocResult posthoc_classify(const MatrixXd& theta_hat, int max_components, std::uint64_t seed) {
  if (max_components < 1) throw Error(ErrorCode::InvalidArgument, "max_components must be at least 1");
  if (theta_hat.size() == 0) throw Error(ErrorCode::ShapeMismatch, "empty risk surface");
  if (!(theta_hat.minCoeff() > 0.0)) throw Error(ErrorCode::InvalidArgument, "risk surface must be positive");
  const VectorXd x = theta_hat.array().log().reshaped();
  const double n = double(x.size());
  Rng rng(seed);
  PosthocResult out;
  MixtureFit chosen;
  double best_bic = kInf;
  for (int k = 1; k <= max_components && k <= x.size(); ++k) {
    MixtureFit fit = fit_gaussian_mixture(x, k, rng);
    const double bic = -2.0 * fit.log_likelihood + double(3 * k - 1) * std::log(n);
    out.bic.push_back(bic);
    if (bic < best_bic) {
      best_bic = bic;
      chosen = fit;
    }
  }
  out.k = chosen.k;
  out.labels.resize(theta_hat.rows(), theta_hat.cols());
  MatrixXd resp(x.size(), chosen.k);
  e_step(x, chosen, resp);
  for (Index c = 0; c < x.size(); ++c) {
    Index j = 0;
    resp.row(c).maxCoeff(&j);
    out.labels(c) = int(j) + 1;
  }
  return out;
}

}  // namespace stcluster
