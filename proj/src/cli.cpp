#include "stcluster/cli.hpp"

#include "stcluster/diagnostics.hpp"
#include "stcluster/engine.hpp"
#include "stcluster/io.hpp"
#include "stcluster/simulation.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <filesystem>
#include <map>
#include <ostream>
#include <sstream>

namespace stcluster {

namespace fs = std::filesystem;
using io::format_double;

namespace {

int exit_code_for(ErrorCode code) {
  switch (code) {
    case ErrorCode::InvalidArgument:
    case ErrorCode::VariantMismatch:
      return kExitUsage;
    case ErrorCode::NonFiniteLogPosterior:
    case ErrorCode::OrderingViolated:
    case ErrorCode::RhoOutOfRange:
      return kExitNumerical;
    default:
      return kExitData;
  }
}

struct FitOptions {
  std::string model;
  std::string counts, adjacency, centroids, out;
  McmcConfig mcmc;
};

struct SimulateOptions {
  std::vector<int> scenarios{1, 2, 3, 4, 5};
  std::vector<std::string> e_ranges{"10:30", "90:110", "190:210"};
  std::vector<std::string> models{"cluster1", "cluster2", "cluster3", "cluster4", "kh", "rlm"};
  int replicates = 10;
  double gaussian_sd = 0.04;
  double correlation_range = 3.0;
  bool timing = false;
  std::string out;
  McmcConfig mcmc;
};

struct GenerateOptions {
  int scenario = 1;
  std::string e_range = "190:210";
  int periods = 10;
  double gaussian_sd = 0.04;
  double correlation_range = 3.0;
  std::uint64_t seed = 1;
  std::string out;
};

struct SummarizeOptions {
  std::string in;
  bool class_trend = false;
};

std::pair<double, double> parse_range(const std::string& text) {
  const auto colon = text.find(':');
  if (colon == std::string::npos) throw Error(ErrorCode::InvalidArgument, "expected LOW:HIGH, got '" + text + "'");
  const double lo = io::parse_double(text.substr(0, colon), "e-range");
  const double hi = io::parse_double(text.substr(colon + 1), "e-range");
  if (!(lo > 0.0) || hi < lo) throw Error(ErrorCode::InvalidArgument, "invalid e-range '" + text + "'");
  return {lo, hi};
}

void add_mcmc_options(CLI::App* app, McmcConfig& c) {
  app->add_option("--burnin", c.n_burnin, "Burn-in sweeps")->capture_default_str();
  app->add_option("--keep", c.n_keep, "Sweeps after burn-in")->capture_default_str();
  app->add_option("--thin", c.thin, "Keep every n-th sweep")->capture_default_str();
  app->add_option("--chains", c.n_chains, "Independent chains")->capture_default_str();
  app->add_option("--seed", c.seed, "Random seed")->capture_default_str();
  app->add_option("--G", c.G, "Number of risk classes")->capture_default_str();
  app->add_option("--M", c.M, "Upper bound of the alpha, delta priors")->capture_default_str();
  app->add_option("--adapt-interval", c.adapt_interval, "Sweeps between proposal adjustments")
      ->capture_default_str();
}

// ---------------------------------------------------------------- fit

// Order statistic floor(p (S - 1)) of each cell's label samples.
MatrixXi label_quantile(const FitResult& fit, double p) {
  MatrixXi out(fit.n_areas, fit.n_periods);
  std::vector<int> buf(static_cast<std::size_t>(fit.z.cols()));
  const auto k = std::size_t(std::floor(p * double(buf.size() - 1)));
  for (Index c = 0; c < fit.z.rows(); ++c) {
    for (Index s = 0; s < fit.z.cols(); ++s) buf[std::size_t(s)] = fit.z(c, s);
    std::nth_element(buf.begin(), buf.begin() + std::ptrdiff_t(k), buf.end());
    out(c % fit.n_areas, c / fit.n_areas) = buf[k];
  }
  return out;
}

std::string summary_csv(const STDataset& data, const FitResult& fit) {
  const MatrixXd med = fit.theta_median();
  const MatrixXd lo = fit.theta_quantile(0.025);
  const MatrixXd hi = fit.theta_quantile(0.975);
  const bool labelled = fit.z.size() > 0;
  MatrixXi zmed, zlo, zhi;
  if (labelled) {
    zmed = fit.z_median();
    zlo = label_quantile(fit, 0.025);
    zhi = label_quantile(fit, 0.975);
  }
  std::ostringstream os;
  os << "area_id,period,y,e,theta_median,theta_lo,theta_hi,z_median,z_lo,z_hi\n";
  for (Index t = 0; t < data.n_periods(); ++t)
    for (Index i = 0; i < data.n_areas(); ++i) {
      os << data.area_ids[std::size_t(i)] << ',' << data.period_labels[std::size_t(t)] << ',' << data.y(i, t)
         << ',' << format_double(data.e(i, t)) << ',' << format_double(med(i, t)) << ','
         << format_double(lo(i, t)) << ',' << format_double(hi(i, t)) << ',';
      if (labelled)
        os << zmed(i, t) << ',' << zlo(i, t) << ',' << zhi(i, t) << '\n';
      else
        os << "NA,NA,NA\n";
    }
  return os.str();
}

std::string trace_csv(const FitResult& fit, const VectorXd& values) {
  std::ostringstream os;
  os << "chain,sample,value\n";
  const Index per_chain = fit.n_samples() / fit.n_chains;
  for (Index s = 0; s < values.size(); ++s)
    os << (s / per_chain + 1) << ',' << (s % per_chain + 1) << ',' << format_double(values[s]) << '\n';
  return os.str();
}

std::string lambda_trace_csv(const FitResult& fit) {
  std::ostringstream os;
  os << "chain,sample";
  const Index T = fit.n_periods;
  for (int j = 0; j < fit.G; ++j)
    for (Index t = 0; t < T; ++t) os << ",lambda_" << (t + 1) << '_' << (j + 1);
  os << '\n';
  const Index per_chain = fit.n_samples() / fit.n_chains;
  for (Index s = 0; s < fit.lambda.cols(); ++s) {
    os << (s / per_chain + 1) << ',' << (s % per_chain + 1);
    for (Index r = 0; r < fit.lambda.rows(); ++r) os << ',' << format_double(fit.lambda(r, s));
    os << '\n';
  }
  return os.str();
}

double rounded(double v) { return std::stod(format_double(v)); }

std::string risk_geojson(const STDataset& data, const ArealGraph& graph, const FitResult& fit) {
  const MatrixXd med = fit.theta_median();
  const MatrixXd lo = fit.theta_quantile(0.025);
  const MatrixXd hi = fit.theta_quantile(0.975);
  const MatrixXi zmed = fit.z.size() ? fit.z_median() : MatrixXi();
  nlohmann::ordered_json features = nlohmann::ordered_json::array();
  const Centroids& xy = graph.centroids();
  for (Index t = 0; t < data.n_periods(); ++t)
    for (Index i = 0; i < data.n_areas(); ++i) {
      nlohmann::ordered_json props;
      props["area_id"] = data.area_ids[std::size_t(i)];
      props["period"] = data.period_labels[std::size_t(t)];
      props["theta_median"] = rounded(med(i, t));
      props["theta_lo"] = rounded(lo(i, t));
      props["theta_hi"] = rounded(hi(i, t));
      props["z_median"] = zmed.size() ? nlohmann::ordered_json(zmed(i, t)) : nlohmann::ordered_json(nullptr);
      nlohmann::ordered_json f;
      f["type"] = "Feature";
      f["geometry"] = {{"type", "Point"}, {"coordinates", {rounded(xy(i, 0)), rounded(xy(i, 1))}}};
      f["properties"] = props;
      features.push_back(f);
    }
  nlohmann::ordered_json doc;
  doc["type"] = "FeatureCollection";
  doc["features"] = features;
  return doc.dump(1) + "\n";
}

int cmd_fit(const FitOptions& o, std::ostream& out) {
  const ModelKind kind = parse_model_kind(o.model);
  if (needs_centroids(kind) && o.centroids.empty())
    throw Error(ErrorCode::InvalidArgument,
                std::string(to_string(kind)) + " requires --centroids (area centroid CSV for the kernel)");
  McmcConfig mcmc = o.mcmc;
  mcmc.validate();
  const STDataset data = load_dataset(o.counts);
  ArealGraph graph = build_graph(data.n_areas(), load_adjacency(o.adjacency));
  if (!o.centroids.empty()) graph = graph.with_centroids(load_centroids(o.centroids, data));

  const MultiChainResult res = run_multichain(kind, data, graph, mcmc);
  const FitResult& fit = res.pooled;
  const ModelFitStats stats = compute_fit_stats(fit.deviance, fit.theta, data);

  const fs::path dir(o.out);
  fs::create_directories(dir);
  io::write_text(dir / "summary.csv", summary_csv(data, fit));
  {
    std::ostringstream os;
    os << "model,n_chains,n_samples,dic,pd,mean_deviance,lmpl,floored_cells,invariant_violations\n"
       << to_string(kind) << ',' << fit.n_chains << ',' << fit.n_samples() << ',' << format_double(stats.dic)
       << ',' << format_double(stats.pd) << ',' << format_double(stats.mean_deviance) << ','
       << format_double(stats.lmpl) << ',' << stats.floored_cells << ',' << fit.invariant_violations << '\n';
    io::write_text(dir / "fit.csv", os.str());
  }
  {
    std::ostringstream os;
    os << "block,rate,proposal_sd\n";
    for (const auto& a : fit.acceptance)
      os << a.block << ',' << format_double(a.rate) << ',' << format_double(a.proposal_sd) << '\n';
    io::write_text(dir / "acceptance.csv", os.str());
  }
  for (const auto& name : fit.scalar_names)
    io::write_text(dir / ("trace_" + name + ".csv"), trace_csv(fit, fit.scalar_trace(name)));
  io::write_text(dir / "trace_deviance.csv", trace_csv(fit, fit.deviance));
  if (fit.lambda.size()) io::write_text(dir / "trace_lambda.csv", lambda_trace_csv(fit));
  if (graph.has_centroids()) io::write_text(dir / "risk.geojson", risk_geojson(data, graph, fit));

  out << "model " << to_string(kind) << ", " << fit.n_samples() << " samples\n"
      << "DIC " << format_double(stats.dic) << "  pd " << format_double(stats.pd) << "  LMPL "
      << format_double(stats.lmpl) << '\n';
  if (fit.invariant_violations > 0) out << "warning: " << fit.invariant_violations << " samples broke invariants\n";
  return kExitOk;
}

// ---------------------------------------------------------------- simulate

int cmd_simulate(const SimulateOptions& o, std::ostream& out, std::ostream& err) {
  StudyConfig cfg;
  cfg.scenarios = o.scenarios;
  for (int s : cfg.scenarios)
    if (s < 1 || s > 5) throw Error(ErrorCode::InvalidArgument, "scenario must be 1..5");
  cfg.e_ranges.clear();
  for (const auto& r : o.e_ranges) cfg.e_ranges.push_back(parse_range(r));
  cfg.models.clear();
  for (const auto& m : o.models) cfg.models.push_back(parse_model_kind(m));
  cfg.n_replicates = o.replicates;
  cfg.gaussian_sd = o.gaussian_sd;
  cfg.correlation_range = o.correlation_range;
  cfg.mcmc = o.mcmc;
  cfg.seed = o.mcmc.seed;

  const std::vector<StudyRow> rows = run_study(cfg);
  const fs::path dir(o.out);
  fs::create_directories(dir);
  io::write_text(dir / "results.csv", format_study_rows(rows, o.timing));
  const auto means = study_means(rows);
  io::write_text(dir / "means.csv", format_study_means(means));
  long failed = 0;
  for (const auto& r : rows) failed += r.ok() ? 0 : 1;
  out << rows.size() << " fits, " << failed << " failed\n" << format_study_means(means);
  if (failed > 0) err << "warning: " << failed << " replicate fits failed; see results.csv\n";
  return kExitOk;
}

// ---------------------------------------------------------------- generate

int cmd_generate(const GenerateOptions& o, std::ostream& out) {
  const auto [lo, hi] = parse_range(o.e_range);
  Scenario sc = make_scenario(o.scenario, lo, hi, o.periods);
  sc.gaussian_sd = o.gaussian_sd;
  sc.correlation_range = o.correlation_range;
  const SimLattice lat = default_lattice();
  const SimTruth truth = generate(sc, lat.graph.centroids(), lat.cluster_template, o.periods, o.seed);
  const fs::path dir(o.out);
  fs::create_directories(dir);
  write_dataset(truth.dataset, dir / "counts.csv");
  io::write_text(dir / "adjacency.csv", format_adjacency(lat.graph));
  std::ostringstream xy;
  xy << "area_id,x,y\n";
  for (Index i = 0; i < truth.dataset.n_areas(); ++i)
    xy << truth.dataset.area_ids[std::size_t(i)] << ',' << format_double(lat.graph.centroids()(i, 0)) << ','
       << format_double(lat.graph.centroids()(i, 1)) << '\n';
  io::write_text(dir / "centroids.csv", xy.str());
  std::ostringstream tr;
  tr << "area_id,period,theta,partition\n";
  for (Index t = 0; t < truth.dataset.n_periods(); ++t)
    for (Index i = 0; i < truth.dataset.n_areas(); ++i)
      tr << truth.dataset.area_ids[std::size_t(i)] << ',' << truth.dataset.period_labels[std::size_t(t)] << ','
         << format_double(truth.theta_true(i, t)) << ',' << truth.partition_true(i, t) << '\n';
  io::write_text(dir / "truth.csv", tr.str());
  out << "wrote scenario " << o.scenario << " data for " << truth.dataset.n_areas() << " areas x " << o.periods
      << " periods to " << dir.string() << '\n';
  return kExitOk;
}

// ---------------------------------------------------------------- summarize

io::CsvTable require_table(const fs::path& path) {
  if (!fs::exists(path)) throw Error(ErrorCode::MissingArtifacts, "missing " + path.string());
  return io::read_csv(path);
}

int cmd_summarize(const SummarizeOptions& o, std::ostream& out) {
  const fs::path dir(o.in);
  const io::CsvTable fit = require_table(dir / "fit.csv");
  if (fit.rows.empty()) throw Error(ErrorCode::MissingArtifacts, "fit.csv has no rows");
  const auto& row = fit.rows.front();
  out << "model " << row[fit.column("model")] << '\n'
      << "samples " << row[fit.column("n_samples")] << " (" << row[fit.column("n_chains")] << " chains)\n"
      << "DIC " << row[fit.column("dic")] << '\n'
      << "pd " << row[fit.column("pd")] << '\n'
      << "mean_deviance " << row[fit.column("mean_deviance")] << '\n'
      << "LMPL " << row[fit.column("lmpl")] << '\n';
  if (!o.class_trend) return kExitOk;

  const io::CsvTable lam = require_table(dir / "trace_lambda.csv");
  const io::CsvTable summary = require_table(dir / "summary.csv");
  std::vector<std::string> periods;
  const auto pc = summary.column("period");
  for (const auto& r : summary.rows)
    if (std::find(periods.begin(), periods.end(), r[pc]) == periods.end()) periods.push_back(r[pc]);
  out << "period,class,exp_lambda_median,exp_lambda_lo,exp_lambda_hi\n";
  std::vector<double> buf;
  std::vector<std::pair<std::pair<long, long>, std::string>> lines;
  for (std::size_t c = 2; c < lam.header.size(); ++c) {
    const std::string& h = lam.header[c];
    const auto a = h.find('_'), b = h.rfind('_');
    const long t = std::stol(h.substr(a + 1, b - a - 1));
    const long j = std::stol(h.substr(b + 1));
    buf.clear();
    for (const auto& r : lam.rows) buf.push_back(std::exp(io::parse_double(r[c], "trace_lambda.csv")));
    std::sort(buf.begin(), buf.end());
    auto q = [&](double p) {
      const double hpos = p * double(buf.size() - 1);
      const std::size_t lo = std::size_t(std::floor(hpos));
      const std::size_t hi = std::min(lo + 1, buf.size() - 1);
      return buf[lo] + (hpos - double(lo)) * (buf[hi] - buf[lo]);
    };
    const std::string label =
        t >= 1 && std::size_t(t) <= periods.size() ? periods[std::size_t(t - 1)] : std::to_string(t);
    lines.push_back({{t, j},
                     label + ',' + std::to_string(j) + ',' + format_double(q(0.5)) + ',' + format_double(q(0.025)) +
                         ',' + format_double(q(0.975))});
  }
  std::sort(lines.begin(), lines.end());
  for (const auto& [key, line] : lines) out << line << '\n';
  return kExitOk;
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Bayesian disease mapping with spatio-temporal risk clusters"};
  app.require_subcommand(1);

  FitOptions fit;
  auto* fit_cmd = app.add_subcommand("fit", "Fit one model to a dataset");
  fit_cmd->add_option("--model", fit.model, "cluster1|cluster2|cluster3|cluster4|kh|rlm")->required();
  fit_cmd->add_option("--counts", fit.counts, "CSV with area_id,period,y,e")->required();
  fit_cmd->add_option("--adjacency", fit.adjacency, "CSV with area_i,area_j (0-based positions)")->required();
  fit_cmd->add_option("--centroids", fit.centroids, "CSV with area_id,x,y");
  fit_cmd->add_option("--P", fit.mcmc.P, "Kernel bandwidth bound (default: squared max distance)");
  fit_cmd->add_option("--out", fit.out, "Output directory")->required();
  add_mcmc_options(fit_cmd, fit.mcmc);

  SimulateOptions sim;
  auto* sim_cmd = app.add_subcommand("simulate", "Run the simulation study");
  sim_cmd->add_option("--scenarios", sim.scenarios, "Comma-separated scenario ids")->delimiter(',');
  sim_cmd->add_option("--e-ranges", sim.e_ranges, "Comma-separated LOW:HIGH ranges")->delimiter(',');
  sim_cmd->add_option("--models", sim.models, "Comma-separated model names")->delimiter(',');
  sim_cmd->add_option("--replicates", sim.replicates, "Replicates per cell")->capture_default_str();
  sim_cmd->add_option("--gaussian-sd", sim.gaussian_sd, "Sd of the log-risk field")->capture_default_str();
  sim_cmd->add_option("--correlation-range", sim.correlation_range, "Exponential correlation range")
      ->capture_default_str();
  sim_cmd->add_flag("--timing", sim.timing, "Record wall-clock runtime per fit (output no longer reproducible)");
  sim_cmd->add_option("--out", sim.out, "Output directory")->required();
  add_mcmc_options(sim_cmd, sim.mcmc);

  GenerateOptions gen;
  auto* gen_cmd = app.add_subcommand("generate", "Write one synthetic dataset");
  gen_cmd->add_option("--scenario", gen.scenario, "Scenario id 1..5")->capture_default_str();
  gen_cmd->add_option("--e-range", gen.e_range, "LOW:HIGH expected counts")->capture_default_str();
  gen_cmd->add_option("--periods", gen.periods, "Number of periods")->capture_default_str();
  gen_cmd->add_option("--gaussian-sd", gen.gaussian_sd, "Sd of the log-risk field")->capture_default_str();
  gen_cmd->add_option("--correlation-range", gen.correlation_range, "Exponential correlation range")
      ->capture_default_str();
  gen_cmd->add_option("--seed", gen.seed, "Random seed")->capture_default_str();
  gen_cmd->add_option("--out", gen.out, "Output directory")->required();

  SummarizeOptions sum;
  auto* sum_cmd = app.add_subcommand("summarize", "Print statistics of a previous fit");
  sum_cmd->add_option("--in", sum.in, "Directory written by fit")->required();
  sum_cmd->add_flag("--class-trend", sum.class_trend, "Per-period class risks exp(lambda) with 95% intervals");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e, out, err);
    err << "usage error: " << e.what() << "\n";
    return kExitUsage;
  }

  try {
    if (*fit_cmd) return cmd_fit(fit, out);
    if (*sim_cmd) return cmd_simulate(sim, out, err);
    if (*gen_cmd) return cmd_generate(gen, out);
    if (*sum_cmd) return cmd_summarize(sum, out);
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return exit_code_for(e.code());
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitData;
  }
  return kExitUsage;
}

}  // namespace stcluster
