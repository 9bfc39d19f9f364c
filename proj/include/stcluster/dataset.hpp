#pragma once

#include "stcluster/areal_graph.hpp"
#include "stcluster/types.hpp"

#include <filesystem>
#include <string>
#include <vector>

namespace stcluster {

/// Observed counts y_it and expected counts e_it on an N x T grid.
/// Rows index areas, columns index periods.
struct STDataset {
  MatrixXi y;
  MatrixXd e;
  std::vector<std::string> area_ids;
  std::vector<std::string> period_labels;

  Index n_areas() const { return y.rows(); }
  Index n_periods() const { return y.cols(); }
  Index n_cells() const { return y.size(); }

  /// Standardised incidence ratio y / e.
  MatrixXd sir() const { return y.cast<double>().cwiseQuotient(e); }

  /// Position of an area label, or -1.
  Index area_index(const std::string& id) const;
};

/// Validating constructor. Labels default to "0".."N-1" and "1".."T".
STDataset make_dataset(MatrixXi y, MatrixXd e, std::vector<std::string> area_ids = {},
                       std::vector<std::string> period_labels = {});

/// Reads `area_id,period,y,e`. Areas and periods are ordered numerically
/// when every label is an integer, lexicographically otherwise; the
/// resulting area position is the index used by adjacency files.
STDataset load_dataset(const std::filesystem::path& path);
STDataset parse_dataset(const std::string& csv_text, const std::string& source = "<string>");

std::string format_dataset(const STDataset& data);
void write_dataset(const STDataset& data, const std::filesystem::path& path);

/// Adjacency CSV `area_i,area_j` with 0-based area positions.
std::vector<Edge> load_adjacency(const std::filesystem::path& path);
std::string format_adjacency(const ArealGraph& graph);

/// Centroid CSV `area_id,x,y`; rows are matched to the dataset's area labels.
Centroids load_centroids(const std::filesystem::path& path, const STDataset& data);

}  // namespace stcluster
