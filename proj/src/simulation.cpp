#include "stcluster/simulation.hpp"

#include "stcluster/diagnostics.hpp"
#include "stcluster/io.hpp"

#include <Eigen/Cholesky>

#include <atomic>
#include <chrono>
#include <map>
#include <random>
#include <sstream>
#include <thread>

namespace stcluster {

ArealGraph lattice(int rows, int cols) {
  if (rows < 1 || cols < 1) throw Error(ErrorCode::InvalidArgument, "lattice needs positive dimensions");
  std::vector<Edge> edges;
  Centroids xy(Index(rows) * cols, 2);
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c) {
      const Index a = Index(r) * cols + c;
      xy(a, 0) = c;
      xy(a, 1) = r;
      if (c + 1 < cols) edges.emplace_back(a, a + 1);
      if (r + 1 < rows) edges.emplace_back(a, a + cols);
    }
  return build_graph(Index(rows) * cols, edges).with_centroids(xy);
}

SimLattice default_lattice(int rows, int cols) {
  if (rows < 12 || cols < 13)
    throw Error(ErrorCode::InvalidArgument, "the cluster template needs at least 12 rows and 13 columns");
  SimLattice out{lattice(rows, cols), rows, cols, VectorXi::Zero(Index(rows) * cols)};
  auto mark = [&](int r, int c) { out.cluster_template[Index(r) * cols + c] = 1; };
  mark(1, 1);
  for (int r = 1; r <= 3; ++r)
    for (int c = 4; c <= 6; ++c) mark(r, c);
  for (int r = 5; r <= 8; ++r)
    for (int c = 8; c <= 11; ++c)
      if (!(r >= 6 && r <= 7 && c >= 9 && c <= 10)) mark(r, c);
  for (int c = 1; c <= 8; ++c) mark(10, c);
  return out;
}

Scenario make_scenario(int id, double e_low, double e_high, int n_periods) {
  if (id < 1 || id > 5) throw Error(ErrorCode::InvalidArgument, "scenario must be 1..5");
  if (!(e_low > 0.0) || e_high < e_low) throw Error(ErrorCode::InvalidArgument, "invalid expected-count range");
  Scenario s;
  s.id = id;
  s.e_low = e_low;
  s.e_high = e_high;
  s.risk = id == 1 ? 1.0 : (id == 2 || id == 4 ? 2.0 : 3.0);
  if (id == 2 || id == 3)
    for (int t = 1; t <= n_periods; ++t) s.active_periods.push_back(t);
  if (id == 4 || id == 5)
    for (int t = 4; t <= std::min(7, n_periods); ++t) s.active_periods.push_back(t);
  return s;
}

namespace {

Rng substream(std::uint64_t seed, std::uint32_t stream) {
  std::seed_seq seq{std::uint32_t(seed & 0xffffffffu), std::uint32_t(seed >> 32), stream, 0x5eedu};
  return Rng(seq);
}

}  // namespace

SimTruth generate(const Scenario& scenario, const Centroids& centroids, const VectorXi& cluster_template,
                  int n_periods, std::uint64_t seed) {
  const Index N = centroids.rows();
  const Index T = n_periods;
  if (T < 1) throw Error(ErrorCode::InvalidArgument, "need at least one period");
  if (cluster_template.size() != N) throw Error(ErrorCode::ShapeMismatch, "template length differs from N");
  if (!(scenario.correlation_range > 0.0) || scenario.gaussian_sd < 0.0)
    throw Error(ErrorCode::InvalidArgument, "invalid Gaussian field parameters");

  MatrixXd eps = MatrixXd::Zero(N, T);
  Rng noise = substream(seed, 1);
  if (scenario.gaussian_sd > 0.0) {
    const MatrixXd d = pairwise_distances(centroids);
    const MatrixXd sigma =
        scenario.gaussian_sd * scenario.gaussian_sd * (-d.array() / scenario.correlation_range).exp();
    Eigen::LLT<MatrixXd> llt(sigma);
    if (llt.info() != Eigen::Success)
      throw Error(ErrorCode::InvalidArgument, "field covariance is not positive definite");
    VectorXd z(N);
    for (Index t = 0; t < T; ++t) {
      for (Index i = 0; i < N; ++i) z[i] = std_normal(noise);
      eps.col(t) = llt.matrixL() * z;
    }
  }

  std::vector<bool> active(std::size_t(T), false);
  for (int p : scenario.active_periods)
    if (p >= 1 && p <= T) active[std::size_t(p - 1)] = true;

  SimTruth out;
  out.theta_true.resize(N, T);
  out.partition_true = MatrixXi::Ones(N, T);
  const double log_r = std::log(scenario.risk);
  for (Index t = 0; t < T; ++t)
    for (Index i = 0; i < N; ++i) {
      const bool in = active[std::size_t(t)] && cluster_template[i] != 0 && scenario.risk != 1.0;
      out.theta_true(i, t) = std::exp((in ? log_r : 0.0) + eps(i, t));
      if (in) out.partition_true(i, t) = 2;
    }

  Rng e_rng = substream(seed, 2);
  MatrixXd e(N, T);
  for (Index t = 0; t < T; ++t)
    for (Index i = 0; i < N; ++i) e(i, t) = scenario.e_low + (scenario.e_high - scenario.e_low) * uniform01(e_rng);

  Rng y_rng = substream(seed, 3);
  MatrixXi y(N, T);
  for (Index t = 0; t < T; ++t)
    for (Index i = 0; i < N; ++i) {
      std::poisson_distribution<int> pois(e(i, t) * out.theta_true(i, t));
      y(i, t) = pois(y_rng);
    }
  out.dataset = make_dataset(std::move(y), std::move(e));
  return out;
}

std::uint64_t replicate_seed(std::uint64_t seed, int replicate) {
  std::seed_seq seq{std::uint32_t(seed & 0xffffffffu), std::uint32_t(seed >> 32), std::uint32_t(replicate)};
  std::uint32_t words[2];
  seq.generate(words, words + 2);
  return (std::uint64_t(words[0]) << 32) | words[1];
}

StudyRow score_replicate(ModelKind model, const SimTruth& truth, const ArealGraph& graph,
                         const McmcConfig& mcmc) {
  StudyRow row;
  row.model = model;
  const auto start = std::chrono::steady_clock::now();
  try {
    std::vector<FitResult> chains;
    for (int c = 0; c < mcmc.n_chains; ++c) chains.push_back(run_chain(model, truth.dataset, graph, mcmc, c));
    const FitResult fit = pool_chains(chains);
    row.rmse = rmse(fit.theta_median(), truth.theta_true);
    const MatrixXi labels =
        is_cluster_model(model) ? fit.z_median() : posthoc_classify(fit.theta_median(), mcmc.G).labels;
    row.rand = rand_index(labels, truth.partition_true);
    row.invariant_violations = fit.invariant_violations;
  } catch (const std::exception& ex) {
    row.error = ex.what();
    row.rmse = row.rand = std::numeric_limits<double>::quiet_NaN();
  }
  row.runtime_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return row;
}

std::vector<StudyRow> run_study(const StudyConfig& config) {
  config.mcmc.validate();
  if (config.n_replicates < 1) throw Error(ErrorCode::InvalidArgument, "need at least one replicate");
  const SimLattice lat = default_lattice(config.rows, config.cols);

  struct Task {
    int scenario;
    std::pair<double, double> e_range;
    int replicate;
    ModelKind model;
  };
  std::vector<Task> tasks;
  for (int s : config.scenarios)
    for (const auto& er : config.e_ranges)
      for (int r = 0; r < config.n_replicates; ++r)
        for (ModelKind m : config.models) tasks.push_back({s, er, r, m});

  std::vector<StudyRow> rows(tasks.size());
  std::atomic<std::size_t> next{0};
  auto work = [&] {
    for (std::size_t k = next++; k < tasks.size(); k = next++) {
      const Task& task = tasks[k];
      StudyRow row;
      try {
        Scenario sc = make_scenario(task.scenario, task.e_range.first, task.e_range.second, config.n_periods);
        sc.gaussian_sd = config.gaussian_sd;
        sc.correlation_range = config.correlation_range;
        const std::uint64_t seed = replicate_seed(config.seed, task.replicate);
        const SimTruth truth =
            generate(sc, lat.graph.centroids(), lat.cluster_template, config.n_periods, seed);
        McmcConfig mcmc = config.mcmc;
        mcmc.seed = seed;
        row = score_replicate(task.model, truth, lat.graph, mcmc);
      } catch (const std::exception& ex) {
        row.error = ex.what();
        row.rmse = row.rand = std::numeric_limits<double>::quiet_NaN();
      }
      row.scenario = task.scenario;
      row.e_low = task.e_range.first;
      row.e_high = task.e_range.second;
      row.model = task.model;
      row.replicate = task.replicate + 1;
      rows[k] = row;
    }
  };
  const std::size_t workers = std::min<std::size_t>(tasks.size(), worker_threads());
  if (workers <= 1) {
    work();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(work);
    for (auto& th : pool) th.join();
  }
  return rows;
}

std::vector<StudyMean> study_means(const std::vector<StudyRow>& rows) {
  std::vector<StudyMean> out;
  std::map<std::tuple<int, double, double, int>, std::size_t> where;
  for (const StudyRow& r : rows) {
    const auto key = std::make_tuple(r.scenario, r.e_low, r.e_high, int(r.model));
    auto it = where.find(key);
    if (it == where.end()) {
      it = where.emplace(key, out.size()).first;
      out.push_back({r.scenario, r.e_low, r.e_high, r.model, 0.0, 0.0, 0, 0});
    }
    StudyMean& m = out[it->second];
    if (!r.ok()) {
      ++m.n_failed;
      continue;
    }
    m.rmse += r.rmse;
    m.rand += r.rand;
    ++m.n_ok;
  }
  for (StudyMean& m : out) {
    const double nan = std::numeric_limits<double>::quiet_NaN();
    m.rmse = m.n_ok > 0 ? m.rmse / m.n_ok : nan;
    m.rand = m.n_ok > 0 ? m.rand / m.n_ok : nan;
  }
  return out;
}

namespace {

std::string num_or_na(double v) { return std::isfinite(v) ? io::format_double(v) : "NA"; }

// The CSV reader does not handle quoting, so separators are replaced instead.
std::string sanitize_field(std::string s) {
  for (char& c : s)
    if (c == ',' || c == '"' || c == '\n' || c == '\r') c = c == ',' ? ';' : ' ';
  return s;
}

}  // namespace

std::string format_study_rows(const std::vector<StudyRow>& rows, bool with_timing) {
  std::ostringstream os;
  os << "scenario,e_low,e_high,model,replicate,rmse,rand,runtime_s,status\n";
  for (const StudyRow& r : rows) {
    os << r.scenario << ',' << io::format_double(r.e_low) << ',' << io::format_double(r.e_high) << ','
       << to_string(r.model) << ',' << r.replicate << ',' << num_or_na(r.rmse) << ',' << num_or_na(r.rand) << ','
       << (with_timing ? io::format_double(r.runtime_s) : std::string("NA")) << ','
       << (r.ok() ? std::string("ok") : sanitize_field("failed: " + r.error)) << '\n';
  }
  return os.str();
}

std::string format_study_means(const std::vector<StudyMean>& means) {
  std::ostringstream os;
  os << "scenario,e_low,e_high,model,mean_rmse,mean_rand,n_ok,n_failed\n";
  for (const StudyMean& m : means)
    os << m.scenario << ',' << io::format_double(m.e_low) << ',' << io::format_double(m.e_high) << ','
       << to_string(m.model) << ',' << num_or_na(m.rmse) << ',' << num_or_na(m.rand) << ',' << m.n_ok << ','
       << m.n_failed << '\n';
  return os.str();
}

}  // namespace stcluster
