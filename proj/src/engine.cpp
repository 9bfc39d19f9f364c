#include "stcluster/engine.hpp"

#include "stcluster/baseline_models.hpp"
#include "stcluster/io.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdlib>
#include <exception>
#include <map>
#include <sstream>
#include <thread>

namespace stcluster {

const char* to_string(ModelKind kind) {
  switch (kind) {
    case ModelKind::Cluster1: return "cluster1";
    case ModelKind::Cluster2: return "cluster2";
    case ModelKind::Cluster3: return "cluster3";
    case ModelKind::Cluster4: return "cluster4";
    case ModelKind::KnorrHeld: return "kh";
    case ModelKind::Rlm: return "rlm";
  }
  return "unknown";
}

ModelKind parse_model_kind(const std::string& name) {
  for (ModelKind k : {ModelKind::Cluster1, ModelKind::Cluster2, ModelKind::Cluster3, ModelKind::Cluster4,
                      ModelKind::KnorrHeld, ModelKind::Rlm})
    if (name == to_string(k)) return k;
  throw Error(ErrorCode::InvalidArgument, "unknown model '" + name + "'");
}

bool is_cluster_model(ModelKind kind) { return kind != ModelKind::KnorrHeld && kind != ModelKind::Rlm; }

bool needs_centroids(ModelKind kind) { return kind == ModelKind::Cluster4; }

SmoothingVariant smoothing_variant(ModelKind kind) {
  switch (kind) {
    case ModelKind::Cluster2: return SmoothingVariant::Ar1Leroux;
    case ModelKind::Cluster3: return SmoothingVariant::CarPerPeriod;
    case ModelKind::Cluster4: return SmoothingVariant::Convolution;
    case ModelKind::Rlm: return SmoothingVariant::Ar1Leroux;
    default: return SmoothingVariant::None;
  }
}

void McmcConfig::validate() const {
  auto fail = [](const std::string& msg) { throw Error(ErrorCode::InvalidArgument, msg); };
  if (n_burnin < 0) fail("n_burnin must be non-negative");
  if (n_keep <= 0) fail("n_keep must be positive");
  if (thin < 1) fail("thin must be at least 1");
  if (n_keep % thin != 0) fail("thin must divide n_keep");
  if (n_chains < 1) fail("n_chains must be at least 1");
  if (G < 1) fail("G must be at least 1");
  if (!(M > 0.0)) fail("M must be positive");
  if (adapt_interval < 1) fail("adapt_interval must be positive");
  if (!(scalar_target > 0.0 && scalar_target < 1.0) || !(vector_target > 0.0 && vector_target < 1.0))
    fail("target acceptance must lie in (0, 1)");
}

// ---------------------------------------------------------------- cluster models

ClusterModelSampler::ClusterModelSampler(ModelKind kind, const STDataset& data, const ArealGraph& graph,
                                         const McmcConfig& config)
    : data_(&data), ctx_(graph, smoothing_variant(kind)) {
  if (!is_cluster_model(kind)) throw Error(ErrorCode::InvalidArgument, "not a clustering model");
  if (graph.n_areas() != data.n_areas())
    throw Error(ErrorCode::ShapeMismatch, "graph and dataset disagree on the number of areas");
  cluster_ = init_cluster_state(data, config.G, config.M);
  cluster_prop_ = ClusterProposals(data.n_periods(), config.G);
  smooth_ = init_smooth_state(smoothing_variant(kind), data.n_areas(), data.n_periods(), ctx_, config.P);
}

MatrixXd ClusterModelSampler::class_offset() const {
  MatrixXd out(cluster_.Z.rows(), cluster_.Z.cols());
  for (Index t = 0; t < out.cols(); ++t)
    for (Index i = 0; i < out.rows(); ++i) out(i, t) = cluster_.lambda(t, cluster_.Z(i, t) - 1);
  return out;
}

MatrixXd ClusterModelSampler::log_risk() const { return class_offset() + smooth_.phi; }

void ClusterModelSampler::sweep(Rng& rng) {
  sample_Z_paths(cluster_, *data_, smooth_.phi, rng);
  sample_lambda(cluster_, *data_, smooth_.phi, rng, cluster_prop_.lambda);
  if (data_->n_periods() > 1) sample_sigma2(cluster_, rng);
  sample_alpha_delta(cluster_, rng, cluster_prop_.alpha, cluster_prop_.delta);
  if (smooth_.variant == SmoothingVariant::None) return;
  const MatrixXd offset = class_offset();
  sample_tau2(smooth_, ctx_, rng);
  sample_rho_gamma(smooth_, ctx_, rng, smooth_prop_.rho, data_, &offset);
  sample_phi(smooth_, *data_, offset, ctx_, rng, smooth_prop_.phi, true);
}

void ClusterModelSampler::adapt(double scalar_target, double vector_target) {
  for (Proposal& p : cluster_prop_.lambda) p.adapt(scalar_target);
  cluster_prop_.alpha.adapt(scalar_target);
  cluster_prop_.delta.adapt(scalar_target);
  if (smooth_.variant != SmoothingVariant::None) {
    smooth_prop_.rho.adapt(scalar_target);
    smooth_prop_.phi.adapt(vector_target);
  }
}

void ClusterModelSampler::reset_acceptance() {
  for (Proposal& p : cluster_prop_.lambda) p.reset_counts();
  cluster_prop_.alpha.reset_counts();
  cluster_prop_.delta.reset_counts();
  smooth_prop_.rho.reset_counts();
  smooth_prop_.phi.reset_counts();
}

std::vector<AcceptanceReport> ClusterModelSampler::acceptance() const {
  long acc = 0, att = 0;
  double sd = 0.0;
  for (const Proposal& p : cluster_prop_.lambda) {
    acc += p.accepted;
    att += p.attempted;
    sd += p.sd;
  }
  std::vector<AcceptanceReport> out{
      {"lambda", att > 0 ? double(acc) / double(att) : 0.0, sd / double(cluster_prop_.lambda.size())},
      {"alpha", cluster_prop_.alpha.rate(), cluster_prop_.alpha.sd},
      {"delta", cluster_prop_.delta.rate(), cluster_prop_.delta.sd}};
  if (smooth_.variant != SmoothingVariant::None) {
    out.push_back({"rho", smooth_prop_.rho.rate(), smooth_prop_.rho.sd});
    out.push_back({smooth_.variant == SmoothingVariant::Convolution ? "X" : "phi", smooth_prop_.phi.rate(),
                   smooth_prop_.phi.sd});
  }
  return out;
}

std::vector<std::string> ClusterModelSampler::scalar_names() const {
  std::vector<std::string> names{"sigma2", "alpha", "delta"};
  if (smooth_.variant != SmoothingVariant::None) {
    names.push_back("tau2");
    names.push_back("rho");
  }
  if (smooth_.variant == SmoothingVariant::Ar1Leroux) names.push_back("gamma");
  return names;
}

std::vector<double> ClusterModelSampler::scalar_values() const {
  std::vector<double> v{cluster_.sigma2, cluster_.alpha, cluster_.delta};
  if (smooth_.variant != SmoothingVariant::None) {
    v.push_back(smooth_.tau2);
    v.push_back(smooth_.rho);
  }
  if (smooth_.variant == SmoothingVariant::Ar1Leroux) v.push_back(smooth_.gamma);
  return v;
}

std::vector<std::string> ClusterModelSampler::check_invariants() const {
  std::vector<std::string> out;
  const int G = cluster_.G;
  if (!lambda_strictly_ordered(cluster_.lambda)) out.push_back("class means not strictly ordered");
  if (cluster_.Z.minCoeff() < 1 || cluster_.Z.maxCoeff() > G) out.push_back("label outside 1..G");
  for (int prev = 0; prev <= G; ++prev) {
    const VectorXd p = z_transition_probs(prev == 0 ? std::nullopt : std::optional<int>(prev), cluster_.alpha,
                                          cluster_.delta, G);
    if (std::abs(p.sum() - 1.0) > 1e-12) out.push_back("label prior does not sum to one");
  }
  if (smooth_.variant != SmoothingVariant::None) {
    for (Index t = 0; t < smooth_.phi.cols(); ++t)
      if (std::abs(smooth_.phi.col(t).mean()) > 1e-12) {
        out.push_back("phi not centred in period " + std::to_string(t));
        break;
      }
  }
  if (smooth_.variant == SmoothingVariant::Convolution) {
    const MatrixXd kx = smooth_.kernel * smooth_.X;
    if ((kx - smooth_.phi).norm() > 1e-10) out.push_back("phi differs from kernel * X");
  }
  return out;
}

std::unique_ptr<ChainSampler> make_sampler(ModelKind kind, const STDataset& data, const ArealGraph& graph,
                                           const McmcConfig& config) {
  switch (kind) {
    case ModelKind::KnorrHeld: return std::make_unique<KnorrHeldSampler>(data, graph);
    case ModelKind::Rlm: return std::make_unique<RlmSampler>(data, graph);
    default: return std::make_unique<ClusterModelSampler>(kind, data, graph, config);
  }
}

// ---------------------------------------------------------------- results

namespace {

double sorted_quantile(std::vector<double>& v, double p) {
  std::sort(v.begin(), v.end());
  const double h = p * double(v.size() - 1);
  const std::size_t lo = std::size_t(std::floor(h));
  const std::size_t hi = std::min(lo + 1, v.size() - 1);
  return v[lo] + (h - double(lo)) * (v[hi] - v[lo]);
}

MatrixXd row_quantile(const MatrixXd& samples, Index N, Index T, double p) {
  if (samples.cols() == 0) throw Error(ErrorCode::InvalidArgument, "no retained samples");
  MatrixXd out(N, T);
  std::vector<double> buf(std::size_t(samples.cols()));
  for (Index c = 0; c < samples.rows(); ++c) {
    for (Index s = 0; s < samples.cols(); ++s) buf[std::size_t(s)] = samples(c, s);
    out(c % N, c / N) = sorted_quantile(buf, p);
  }
  return out;
}

bool all_finite(const MatrixXd& m) { return m.allFinite(); }

std::string state_dump(const ChainSampler& sampler, long sweep) {
  std::ostringstream os;
  os << "non-finite state at sweep " << sweep << ":";
  const auto names = sampler.scalar_names();
  const auto values = sampler.scalar_values();
  for (std::size_t k = 0; k < names.size(); ++k) os << ' ' << names[k] << '=' << io::format_double(values[k]);
  const MatrixXd eta = sampler.log_risk();
  Index bad = 0;
  for (Index c = 0; c < eta.size(); ++c)
    if (!std::isfinite(eta(c))) ++bad;
  os << " non-finite log-risk cells=" << bad;
  return os.str();
}

void check_finite(const ChainSampler& sampler, long sweep) {
  bool ok = all_finite(sampler.log_risk());
  for (double v : sampler.scalar_values()) ok = ok && std::isfinite(v);
  if (!ok) throw Error(ErrorCode::NonFiniteLogPosterior, state_dump(sampler, sweep));
}

}  // namespace

MatrixXd FitResult::theta_median() const { return row_quantile(theta, n_areas, n_periods, 0.5); }

MatrixXd FitResult::theta_quantile(double p) const { return row_quantile(theta, n_areas, n_periods, p); }

MatrixXi FitResult::z_median() const {
  if (z.size() == 0) throw Error(ErrorCode::InvalidArgument, "model has no class labels");
  return extract_partition(z, n_areas, n_periods);
}

VectorXd FitResult::scalar_trace(const std::string& name) const {
  for (std::size_t k = 0; k < scalar_names.size(); ++k)
    if (scalar_names[k] == name) return scalars.col(Index(k));
  throw Error(ErrorCode::InvalidArgument, "no scalar named '" + name + "'");
}

double poisson_deviance(const STDataset& data, const MatrixXd& theta) {
  if (theta.rows() != data.n_areas() || theta.cols() != data.n_periods())
    throw Error(ErrorCode::ShapeMismatch, "theta shape does not match the dataset");
  double ll = 0.0;
  for (Index t = 0; t < theta.cols(); ++t)
    for (Index i = 0; i < theta.rows(); ++i) {
      const double mu = data.e(i, t) * theta(i, t);
      const double y = data.y(i, t);
      ll += (y > 0 ? y * std::log(mu) : 0.0) - mu - std::lgamma(y + 1.0);
    }
  return -2.0 * ll;
}

Rng chain_rng(std::uint64_t seed, int chain_index) {
  std::seed_seq seq{std::uint32_t(seed & 0xffffffffu), std::uint32_t(seed >> 32), std::uint32_t(chain_index)};
  return Rng(seq);
}

FitResult run_chain(ModelKind kind, const STDataset& data, const ArealGraph& graph, const McmcConfig& config,
                    int chain_index) {
  config.validate();
  if (needs_centroids(kind) && !graph.has_centroids())
    throw Error(ErrorCode::MissingCentroids, std::string(to_string(kind)) + " requires area centroids");
  auto sampler = make_sampler(kind, data, graph, config);
  Rng rng = chain_rng(config.seed, chain_index);

  for (long b = 0; b < config.n_burnin; ++b) {
    sampler->sweep(rng);
    check_finite(*sampler, b);
    if ((b + 1) % config.adapt_interval == 0) sampler->adapt(config.scalar_target, config.vector_target);
  }
  sampler->reset_acceptance();

  const Index N = data.n_areas();
  const Index T = data.n_periods();
  const Index S = config.samples_per_chain();
  FitResult res;
  res.model = kind;
  res.n_areas = N;
  res.n_periods = T;
  res.G = is_cluster_model(kind) ? config.G : 0;
  res.scalar_names = sampler->scalar_names();
  res.theta.resize(N * T, S);
  res.scalars.resize(S, Index(res.scalar_names.size()));
  res.deviance.resize(S);
  if (is_cluster_model(kind)) {
    res.z.resize(N * T, S);
    res.lambda.resize(T * config.G, S);
  }

  Index s = 0;
  for (long k = 0; k < config.n_keep; ++k) {
    sampler->sweep(rng);
    check_finite(*sampler, config.n_burnin + k);
    if ((k + 1) % config.thin != 0) continue;
    const MatrixXd theta = sampler->log_risk().array().exp();
    res.theta.col(s) = theta.reshaped();
    res.deviance[s] = poisson_deviance(data, theta);
    const auto values = sampler->scalar_values();
    for (std::size_t j = 0; j < values.size(); ++j) res.scalars(s, Index(j)) = values[j];
    if (const MatrixXi* z = sampler->labels()) res.z.col(s) = z->reshaped();
    if (const MatrixXd* lambda = sampler->class_means()) res.lambda.col(s) = lambda->reshaped();
    const auto violations = sampler->check_invariants();
    if (!violations.empty()) {
      ++res.invariant_violations;
      if (res.violation_examples.size() < 10) res.violation_examples.push_back(violations.front());
    }
    ++s;
  }
  res.acceptance = sampler->acceptance();
  return res;
}

unsigned worker_threads() {
  if (const char* env = std::getenv("STCLUSTER_THREADS")) {
    char* end = nullptr;
    const long n = std::strtol(env, &end, 10);
    if (end != env && n >= 1) return unsigned(n);
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

FitResult pool_chains(const std::vector<FitResult>& chains) {
  if (chains.empty()) throw Error(ErrorCode::InvalidArgument, "no chains to pool");
  if (chains.size() == 1) return chains.front();
  FitResult out = chains.front();
  Index total = 0;
  for (const auto& c : chains) total += c.n_samples();
  out.n_chains = int(chains.size());
  out.theta.resize(out.theta.rows(), total);
  out.z.resize(out.z.rows(), out.z.size() ? total : 0);
  out.lambda.resize(out.lambda.rows(), out.lambda.size() ? total : 0);
  out.scalars.resize(total, out.scalars.cols());
  out.deviance.resize(total);
  out.invariant_violations = 0;
  out.violation_examples.clear();
  Index at = 0;
  for (const auto& c : chains) {
    const Index n = c.n_samples();
    out.theta.middleCols(at, n) = c.theta;
    if (c.z.size()) out.z.middleCols(at, n) = c.z;
    if (c.lambda.size()) out.lambda.middleCols(at, n) = c.lambda;
    out.scalars.middleRows(at, n) = c.scalars;
    out.deviance.segment(at, n) = c.deviance;
    out.invariant_violations += c.invariant_violations;
    for (const auto& v : c.violation_examples)
      if (out.violation_examples.size() < 10) out.violation_examples.push_back(v);
    at += n;
  }
  for (std::size_t b = 0; b < out.acceptance.size(); ++b) {
    double rate = 0.0, sd = 0.0;
    for (const auto& c : chains) {
      rate += c.acceptance[b].rate;
      sd += c.acceptance[b].proposal_sd;
    }
    out.acceptance[b].rate = rate / double(chains.size());
    out.acceptance[b].proposal_sd = sd / double(chains.size());
  }
  return out;
}

MultiChainResult run_multichain(ModelKind kind, const STDataset& data, const ArealGraph& graph,
                                const McmcConfig& config) {
  config.validate();
  const auto n = std::size_t(config.n_chains);
  MultiChainResult out;
  out.chains.resize(n);
  std::vector<std::exception_ptr> errors(n);
  std::atomic<std::size_t> next{0};
  auto work = [&] {
    for (std::size_t c = next++; c < n; c = next++) {
      try {
        out.chains[c] = run_chain(kind, data, graph, config, int(c));
      } catch (...) {
        errors[c] = std::current_exception();
      }
    }
  };
  const std::size_t workers = std::min<std::size_t>(n, worker_threads());
  if (workers <= 1) {
    work();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(work);
    for (auto& th : pool) th.join();
  }
  for (const auto& e : errors)
    if (e) std::rethrow_exception(e);
  out.pooled = pool_chains(out.chains);
  return out;
}

}  // namespace stcluster
