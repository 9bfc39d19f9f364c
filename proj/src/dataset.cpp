#include "stcluster/dataset.hpp"

#include "stcluster/io.hpp"

#include <algorithm>
#include <map>
#include <sstream>

namespace stcluster {

namespace {

std::vector<std::string> ordered_labels(std::vector<std::string> labels) {
  std::sort(labels.begin(), labels.end());
  labels.erase(std::unique(labels.begin(), labels.end()), labels.end());
  const bool numeric = std::all_of(labels.begin(), labels.end(), io::looks_like_integer);
  if (numeric) {
    std::stable_sort(labels.begin(), labels.end(), [](const std::string& a, const std::string& b) {
      return std::stoll(a) < std::stoll(b);
    });
  }
  return labels;
}

std::map<std::string, Index> index_of(const std::vector<std::string>& labels) {
  std::map<std::string, Index> out;
  for (std::size_t k = 0; k < labels.size(); ++k) out.emplace(labels[k], Index(k));
  return out;
}

}  // namespace

Index STDataset::area_index(const std::string& id) const {
  const auto it = std::find(area_ids.begin(), area_ids.end(), id);
  return it == area_ids.end() ? -1 : Index(it - area_ids.begin());
}

STDataset make_dataset(MatrixXi y, MatrixXd e, std::vector<std::string> area_ids,
                       std::vector<std::string> period_labels) {
  if (y.rows() != e.rows() || y.cols() != e.cols())
    throw Error(ErrorCode::ShapeMismatch, "y and e must have the same N x T shape");
  if (y.size() == 0) throw Error(ErrorCode::InvalidArgument, "dataset is empty");
  for (Index t = 0; t < y.cols(); ++t)
    for (Index i = 0; i < y.rows(); ++i) {
      if (y(i, t) < 0)
        throw Error(ErrorCode::NegativeCount, "negative count at area " + std::to_string(i) + ", period " +
                                                  std::to_string(t));
      if (!(e(i, t) > 0.0) || !std::isfinite(e(i, t)))
        throw Error(ErrorCode::NonPositiveExpected, "expected count must be positive at area " +
                                                        std::to_string(i) + ", period " + std::to_string(t));
    }
  if (area_ids.empty())
    for (Index i = 0; i < y.rows(); ++i) area_ids.push_back(std::to_string(i));
  if (period_labels.empty())
    for (Index t = 0; t < y.cols(); ++t) period_labels.push_back(std::to_string(t + 1));
  if (Index(area_ids.size()) != y.rows() || Index(period_labels.size()) != y.cols())
    throw Error(ErrorCode::ShapeMismatch, "label counts must match the data grid");
  return STDataset{std::move(y), std::move(e), std::move(area_ids), std::move(period_labels)};
}

STDataset parse_dataset(const std::string& csv_text, const std::string& source) {
  const io::CsvTable table = io::parse_csv(csv_text, source);
  const auto c_area = table.column("area_id");
  const auto c_period = table.column("period");
  const auto c_y = table.column("y");
  const auto c_e = table.column("e");

  std::vector<std::string> areas, periods;
  for (const auto& row : table.rows) {
    areas.push_back(row[c_area]);
    periods.push_back(row[c_period]);
  }
  areas = ordered_labels(std::move(areas));
  periods = ordered_labels(std::move(periods));
  const auto area_pos = index_of(areas);
  const auto period_pos = index_of(periods);

  const Index n = Index(areas.size());
  const Index t_count = Index(periods.size());
  MatrixXi y = MatrixXi::Constant(n, t_count, -1);
  MatrixXd e = MatrixXd::Zero(n, t_count);
  Mat<bool> seen = Mat<bool>::Constant(n, t_count, false);
  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    const auto& row = table.rows[r];
    const std::string ctx = source + " row " + std::to_string(r + 2);
    const Index i = area_pos.at(row[c_area]);
    const Index t = period_pos.at(row[c_period]);
    if (seen(i, t))
      throw Error(ErrorCode::MalformedInput, ctx + ": duplicate cell (" + row[c_area] + ", " + row[c_period] + ")");
    seen(i, t) = true;
    const long long count = io::parse_integer(row[c_y], ctx);
    if (count < 0) throw Error(ErrorCode::NegativeCount, ctx + ": negative observed count");
    y(i, t) = int(count);
    e(i, t) = io::parse_double(row[c_e], ctx);
    if (!(e(i, t) > 0.0)) throw Error(ErrorCode::NonPositiveExpected, ctx + ": expected count must be > 0");
  }
  for (Index i = 0; i < n; ++i)
    for (Index t = 0; t < t_count; ++t)
      if (!seen(i, t))
        throw Error(ErrorCode::MissingCell, "no row for area '" + areas[i] + "', period '" + periods[t] + "'");
  return make_dataset(std::move(y), std::move(e), std::move(areas), std::move(periods));
}

STDataset load_dataset(const std::filesystem::path& path) {
  return parse_dataset(io::read_text(path), path.string());
}

std::string format_dataset(const STDataset& data) {
  std::ostringstream out;
  out << "area_id,period,y,e\n";
  for (Index i = 0; i < data.n_areas(); ++i)
    for (Index t = 0; t < data.n_periods(); ++t)
      out << data.area_ids[i] << ',' << data.period_labels[t] << ',' << data.y(i, t) << ','
          << io::format_double(data.e(i, t)) << '\n';
  return out.str();
}

void write_dataset(const STDataset& data, const std::filesystem::path& path) {
  io::write_text(path, format_dataset(data));
}

std::vector<Edge> load_adjacency(const std::filesystem::path& path) {
  const io::CsvTable table = io::read_csv(path);
  const auto ci = table.column("area_i");
  const auto cj = table.column("area_j");
  std::vector<Edge> edges;
  edges.reserve(table.rows.size());
  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    const std::string ctx = path.string() + " row " + std::to_string(r + 2);
    edges.emplace_back(Index(io::parse_integer(table.rows[r][ci], ctx)),
                       Index(io::parse_integer(table.rows[r][cj], ctx)));
  }
  return edges;
}

std::string format_adjacency(const ArealGraph& graph) {
  std::ostringstream out;
  out << "area_i,area_j\n";
  for (const auto& [i, j] : graph.edges()) out << i << ',' << j << '\n';
  return out.str();
}

Centroids load_centroids(const std::filesystem::path& path, const STDataset& data) {
  const io::CsvTable table = io::read_csv(path);
  const auto c_id = table.column("area_id");
  const auto cx = table.column("x");
  const auto cy = table.column("y");
  Centroids out(data.n_areas(), 2);
  Mat<bool> seen = Mat<bool>::Constant(data.n_areas(), 1, false);
  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    const auto& row = table.rows[r];
    const std::string ctx = path.string() + " row " + std::to_string(r + 2);
    const Index i = data.area_index(row[c_id]);
    if (i < 0) throw Error(ErrorCode::MalformedInput, ctx + ": unknown area '" + row[c_id] + "'");
    out(i, 0) = io::parse_double(row[cx], ctx);
    out(i, 1) = io::parse_double(row[cy], ctx);
    seen(i, 0) = true;
  }
  for (Index i = 0; i < data.n_areas(); ++i)
    if (!seen(i, 0))
      throw Error(ErrorCode::MissingCentroids, "no centroid for area '" + data.area_ids[i] + "'");
  return out;
}

}  // namespace stcluster
