#pragma once

// Multi-view datasets: manifest + CSV ingestion, stratified splits,
// standardization, Gaussian noise injection and pseudo-view assembly.
//
// Manifest (JSON, paths relative to the manifest's directory):
//
//   {"k": 10,
//    "views": [{"name": "fou", "path": "fou.csv"}, ...],
//    "labels": "labels.csv",
//    "pseudo_view": "pseudo.csv"}          (optional, precomputed pseudo-view)
//
// View files are headerless CSV of reals, one sample per row. The label file
// has one integer per row. CRLF line endings and a final newline are accepted.

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstddef>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "tmc/error.hpp"
#include "tmc/rng.hpp"

namespace tmc {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;

class MultiViewDataset {
 public:
  MultiViewDataset(std::vector<Matrix> views, std::vector<std::string> view_names,
                   std::vector<int> labels, int num_classes,
                   std::vector<std::size_t> row_ids = {})
      : views_(std::move(views)),
        names_(std::move(view_names)),
        labels_(std::move(labels)),
        k_(num_classes),
        row_ids_(std::move(row_ids)) {
    if (views_.empty()) throw DataError(DataError::Kind::kFormat, "dataset has no views");
    if (names_.size() != views_.size()) {
      throw DataError(DataError::Kind::kFormat, "one name per view required");
    }
    if (k_ < 2) throw DataError(DataError::Kind::kFormat, "need at least 2 classes");
    const auto n = labels_.size();
    for (std::size_t m = 0; m < views_.size(); ++m) {
      if (static_cast<std::size_t>(views_[m].rows()) != n) {
        throw DataError(DataError::Kind::kRagged,
                        "view '" + names_[m] + "' has " + std::to_string(views_[m].rows()) +
                            " rows but there are " + std::to_string(n) + " labels");
      }
      if (!views_[m].allFinite()) {
        throw DataError(DataError::Kind::kNonNumeric, "view '" + names_[m] + "' has non-finite entries");
      }
    }
    for (int y : labels_) {
      if (y < 0 || y >= k_) {
        throw DataError(DataError::Kind::kLabelRange,
                        "label " + std::to_string(y) + " outside [0, " + std::to_string(k_) + ")");
      }
    }
    if (row_ids_.empty()) {
      row_ids_.resize(n);
      std::iota(row_ids_.begin(), row_ids_.end(), std::size_t{0});
    } else if (row_ids_.size() != n) {
      throw DataError(DataError::Kind::kRagged, "row id count differs from sample count");
    }
  }

  std::size_t num_views() const noexcept { return views_.size(); }
  std::size_t size() const noexcept { return labels_.size(); }
  int num_classes() const noexcept { return k_; }

  const Matrix& view(std::size_t m) const { return views_.at(m); }
  Matrix& view(std::size_t m) { return views_.at(m); }
  const std::vector<Matrix>& views() const noexcept { return views_; }
  const std::string& view_name(std::size_t m) const { return names_.at(m); }
  const std::vector<std::string>& view_names() const noexcept { return names_; }
  const std::vector<int>& labels() const noexcept { return labels_; }
  int label(std::size_t i) const { return labels_.at(i); }

  /// Row index of each sample in the originally loaded dataset.
  const std::vector<std::size_t>& row_ids() const noexcept { return row_ids_; }

  std::vector<Eigen::Index> view_widths() const {
    std::vector<Eigen::Index> w;
    for (const auto& v : views_) w.push_back(v.cols());
    return w;
  }

  /// Rows `indices`, in that order.
  MultiViewDataset subset(std::span<const std::size_t> indices) const {
    std::vector<Matrix> views;
    for (const auto& v : views_) {
      Matrix sub(static_cast<Eigen::Index>(indices.size()), v.cols());
      for (std::size_t r = 0; r < indices.size(); ++r) {
        sub.row(static_cast<Eigen::Index>(r)) = v.row(static_cast<Eigen::Index>(indices[r]));
      }
      views.push_back(std::move(sub));
    }
    std::vector<int> labels;
    std::vector<std::size_t> ids;
    for (auto i : indices) {
      labels.push_back(labels_.at(i));
      ids.push_back(row_ids_.at(i));
    }
    return MultiViewDataset(std::move(views), names_, std::move(labels), k_, std::move(ids));
  }

  MultiViewDataset with_view_appended(Matrix view, std::string name) const {
    auto views = views_;
    auto names = names_;
    views.push_back(std::move(view));
    names.push_back(std::move(name));
    return MultiViewDataset(std::move(views), std::move(names), labels_, k_, row_ids_);
  }

 private:
  std::vector<Matrix> views_;
  std::vector<std::string> names_;
  std::vector<int> labels_;
  int k_;
  std::vector<std::size_t> row_ids_;
};

namespace csv {

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw DataError(DataError::Kind::kMissingFile, "cannot open '" + path.string() + "'");
  }
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

/// Splits text into lines, accepting LF or CRLF and one trailing newline.
inline std::vector<std::string_view> lines(std::string_view text) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (start < text.size()) {
    std::size_t end = text.find('\n', start);
    if (end == std::string_view::npos) end = text.size();
    std::string_view line = text.substr(start, end - start);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    out.push_back(line);
    start = end + 1;
  }
  return out;
}

inline std::string where(const std::filesystem::path& path, std::size_t row, std::size_t col) {
  return path.string() + ":" + std::to_string(row + 1) + ":" + std::to_string(col + 1);
}

/// Headerless numeric CSV as a row-major matrix.
inline Matrix read_matrix(const std::filesystem::path& path) {
  const std::string text = read_file(path);
  const auto rows = lines(text);
  if (rows.empty()) throw DataError(DataError::Kind::kFormat, "'" + path.string() + "' is empty");
  std::vector<double> values;
  std::size_t width = 0;
  for (std::size_t r = 0; r < rows.size(); ++r) {
    std::string_view line = rows[r];
    std::size_t col = 0;
    std::size_t pos = 0;
    for (;;) {
      const std::size_t comma = line.find(',', pos);
      const std::string_view cell =
          line.substr(pos, comma == std::string_view::npos ? std::string_view::npos : comma - pos);
      double v = 0.0;
      const auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), v);
      if (cell.empty() || ec != std::errc() || ptr != cell.data() + cell.size() ||
          !std::isfinite(v)) {
        throw DataError(DataError::Kind::kNonNumeric,
                        where(path, r, col) + ": not a finite number: '" + std::string(cell) + "'");
      }
      values.push_back(v);
      ++col;
      if (comma == std::string_view::npos) break;
      pos = comma + 1;
    }
    if (r == 0) {
      width = col;
    } else if (col != width) {
      throw DataError(DataError::Kind::kRagged, path.string() + ":" + std::to_string(r + 1) +
                                                    ": expected " + std::to_string(width) +
                                                    " columns, found " + std::to_string(col));
    }
  }
  Matrix m(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(width));
  std::copy(values.begin(), values.end(), m.data());
  return m;
}

inline std::vector<int> read_labels(const std::filesystem::path& path) {
  const std::string text = read_file(path);
  std::vector<int> labels;
  const auto rows = lines(text);
  for (std::size_t r = 0; r < rows.size(); ++r) {
    const std::string_view cell = rows[r];
    int v = 0;
    const auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), v);
    if (cell.empty() || ec != std::errc() || ptr != cell.data() + cell.size()) {
      throw DataError(DataError::Kind::kNonNumeric,
                      where(path, r, 0) + ": not an integer label: '" + std::string(cell) + "'");
    }
    labels.push_back(v);
  }
  return labels;
}

inline void write_matrix(const std::filesystem::path& path, const Matrix& m) {
  std::ofstream out(path);
  if (!out) throw DataError(DataError::Kind::kMissingFile, "cannot write '" + path.string() + "'");
  char buf[32];
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) {
      const auto res = std::to_chars(buf, buf + sizeof buf, m(r, c));
      if (c) out << ',';
      out.write(buf, res.ptr - buf);
    }
    out << '\n';
  }
}

inline void write_labels(const std::filesystem::path& path, std::span<const int> labels) {
  std::ofstream out(path);
  if (!out) throw DataError(DataError::Kind::kMissingFile, "cannot write '" + path.string() + "'");
  for (int y : labels) out << y << '\n';
}

}  // namespace csv

struct LoadedManifest {
  MultiViewDataset dataset;
  // Precomputed pseudo-view matrix, when the manifest names one.
  std::optional<Matrix> pseudo_view;
};

inline LoadedManifest load_manifest_with_pseudo(const std::filesystem::path& path) {
  const std::string text = csv::read_file(path);
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw DataError(DataError::Kind::kFormat, "manifest '" + path.string() + "': " + e.what());
  }
  if (!j.is_object() || !j.contains("k") || !j.contains("views") || !j.contains("labels")) {
    throw DataError(DataError::Kind::kFormat,
                    "manifest '" + path.string() + "' needs keys \"k\", \"views\", \"labels\"");
  }
  const auto base = path.parent_path();
  try {
    const int k = j.at("k").get<int>();
    std::vector<Matrix> views;
    std::vector<std::string> names;
    for (const auto& v : j.at("views")) {
      names.push_back(v.at("name").get<std::string>());
      views.push_back(csv::read_matrix(base / v.at("path").get<std::string>()));
    }
    std::vector<int> labels = csv::read_labels(base / j.at("labels").get<std::string>());
    std::optional<Matrix> pseudo;
    if (j.contains("pseudo_view")) {
      pseudo = csv::read_matrix(base / j.at("pseudo_view").get<std::string>());
      if (static_cast<std::size_t>(pseudo->rows()) != labels.size()) {
        throw DataError(DataError::Kind::kRagged, "pseudo-view row count differs from labels");
      }
    }
    return {MultiViewDataset(std::move(views), std::move(names), std::move(labels), k),
            std::move(pseudo)};
  } catch (const nlohmann::json::exception& e) {
    throw DataError(DataError::Kind::kFormat, "manifest '" + path.string() + "': " + e.what());
  }
}

inline MultiViewDataset load_manifest(const std::filesystem::path& path) {
  return load_manifest_with_pseudo(path).dataset;
}

/// Writes `ds` as a manifest plus one CSV per view and a label file.
inline void save_manifest(const MultiViewDataset& ds, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  nlohmann::json j;
  j["k"] = ds.num_classes();
  j["views"] = nlohmann::json::array();
  for (std::size_t m = 0; m < ds.num_views(); ++m) {
    const std::string file = ds.view_name(m) + ".csv";
    csv::write_matrix(dir / file, ds.view(m));
    j["views"].push_back({{"name", ds.view_name(m)}, {"path", file}});
  }
  csv::write_labels(dir / "labels.csv", ds.labels());
  j["labels"] = "labels.csv";
  std::ofstream(dir / "manifest.json") << j.dump(2) << '\n';
}

struct Split {
  MultiViewDataset train;
  MultiViewDataset test;
  std::vector<std::size_t> train_indices;
  std::vector<std::size_t> test_indices;
  std::vector<std::string> warnings;
};

/// Stratified random split. round(N * test_fraction) samples go to the test
/// side, apportioned across classes by largest remainder. Classes with fewer
/// than two samples are pooled and split without stratification.
inline Split split(const MultiViewDataset& ds, double test_fraction, std::uint64_t seed) {
  if (!(test_fraction > 0.0 && test_fraction < 1.0)) {
    throw InvalidArgument("split: test fraction must lie in (0, 1)");
  }
  Rng rng(seed);
  std::vector<std::vector<std::size_t>> groups(static_cast<std::size_t>(ds.num_classes()) + 1);
  for (std::size_t i = 0; i < ds.size(); ++i) {
    groups[static_cast<std::size_t>(ds.label(i))].push_back(i);
  }
  std::vector<std::string> warnings;
  auto& pool = groups.back();
  for (std::size_t c = 0; c + 1 < groups.size(); ++c) {
    if (groups[c].size() == 1) {
      warnings.push_back("class " + std::to_string(c) +
                         " has fewer than 2 samples; split without stratification");
      pool.push_back(groups[c].front());
      groups[c].clear();
    }
  }

  const auto total_test =
      static_cast<std::size_t>(std::llround(static_cast<double>(ds.size()) * test_fraction));
  std::vector<std::size_t> quota(groups.size());
  std::vector<std::pair<double, std::size_t>> remainders;
  std::size_t assigned = 0;
  for (std::size_t g = 0; g < groups.size(); ++g) {
    const double exact = static_cast<double>(groups[g].size()) * test_fraction;
    quota[g] = static_cast<std::size_t>(std::floor(exact));
    assigned += quota[g];
    remainders.emplace_back(exact - std::floor(exact), g);
  }
  std::stable_sort(remainders.begin(), remainders.end(),
                   [](const auto& a, const auto& b) { return a.first > b.first; });
  for (std::size_t r = 0; assigned < total_test && r < remainders.size(); ++r) {
    const std::size_t g = remainders[r].second;
    if (quota[g] < groups[g].size()) {
      ++quota[g];
      ++assigned;
    }
  }

  std::vector<std::size_t> train_idx;
  std::vector<std::size_t> test_idx;
  for (std::size_t g = 0; g < groups.size(); ++g) {
    auto& members = groups[g];
    rng.shuffle(std::span<std::size_t>(members));
    test_idx.insert(test_idx.end(), members.begin(), members.begin() + static_cast<long>(quota[g]));
    train_idx.insert(train_idx.end(), members.begin() + static_cast<long>(quota[g]), members.end());
  }
  std::sort(train_idx.begin(), train_idx.end());
  std::sort(test_idx.begin(), test_idx.end());
  return {ds.subset(train_idx), ds.subset(test_idx), std::move(train_idx), std::move(test_idx),
          std::move(warnings)};
}

struct ViewStats {
  Vector mean;
  Vector scale;
};

struct Standardized {
  MultiViewDataset train;
  MultiViewDataset test;
  std::vector<ViewStats> stats;
};

/// Per-column z-scoring with train-set mean and population standard
/// deviation. Constant columns are centered and keep scale 1.
inline std::vector<ViewStats> fit_standardizer(const MultiViewDataset& train) {
  if (train.size() == 0) throw InvalidArgument("standardize: empty training set");
  std::vector<ViewStats> stats;
  for (const auto& v : train.views()) {
    ViewStats s;
    s.mean = v.colwise().mean().transpose();
    s.scale.resize(v.cols());
    for (Eigen::Index c = 0; c < v.cols(); ++c) {
      const double var = (v.col(c).array() - s.mean(c)).square().mean();
      const double sd = std::sqrt(var);
      s.scale(c) = sd > 1e-12 * std::max(1.0, std::abs(s.mean(c))) ? sd : 1.0;
    }
    stats.push_back(std::move(s));
  }
  return stats;
}

inline MultiViewDataset apply_standardizer(const MultiViewDataset& ds,
                                           std::span<const ViewStats> stats) {
  if (stats.size() != ds.num_views()) throw InvalidArgument("standardizer view count mismatch");
  std::vector<Matrix> views;
  for (std::size_t m = 0; m < ds.num_views(); ++m) {
    if (stats[m].mean.size() != ds.view(m).cols()) {
      throw InvalidArgument("standardizer width mismatch on view '" + ds.view_name(m) + "'");
    }
    Matrix z = (ds.view(m).rowwise() - stats[m].mean.transpose()).array().rowwise() /
               stats[m].scale.transpose().array();
    views.push_back(std::move(z));
  }
  return MultiViewDataset(std::move(views), ds.view_names(), ds.labels(), ds.num_classes(),
                          ds.row_ids());
}

inline Standardized standardize(const MultiViewDataset& train, const MultiViewDataset& test) {
  auto stats = fit_standardizer(train);
  auto tr = apply_standardizer(train, stats);
  auto te = apply_standardizer(test, stats);
  return {std::move(tr), std::move(te), std::move(stats)};
}

struct NoiseSpec {
  double sigma = 0.0;
  std::vector<std::size_t> views;
  std::uint64_t seed = 0;
};

/// Adds i.i.d. N(0, sigma^2) to every entry of the targeted views. One stream
/// seeded by `spec.seed` is consumed view by view (in the order listed), rows
/// then columns.
inline MultiViewDataset inject_noise(const MultiViewDataset& ds, const NoiseSpec& spec) {
  if (!(spec.sigma >= 0.0)) throw InvalidArgument("inject_noise: sigma must be >= 0");
  for (auto m : spec.views) {
    if (m >= ds.num_views()) {
      throw InvalidArgument("inject_noise: view index " + std::to_string(m) + " out of range");
    }
  }
  MultiViewDataset out = ds;
  if (spec.sigma == 0.0) return out;
  Rng rng(spec.seed);
  for (auto m : spec.views) {
    Matrix& v = out.view(m);
    for (Eigen::Index r = 0; r < v.rows(); ++r) {
      for (Eigen::Index c = 0; c < v.cols(); ++c) v(r, c) += spec.sigma * rng.normal();
    }
  }
  return out;
}

/// Horizontal concatenation of all views, in view order.
inline Matrix concatenate_views(const MultiViewDataset& ds) {
  Eigen::Index width = 0;
  for (const auto& v : ds.views()) width += v.cols();
  Matrix out(static_cast<Eigen::Index>(ds.size()), width);
  Eigen::Index col = 0;
  for (const auto& v : ds.views()) {
    out.middleCols(col, v.cols()) = v;
    col += v.cols();
  }
  return out;
}

/// Appends the concatenated pseudo-view as view M.
inline MultiViewDataset build_pseudo_view(const MultiViewDataset& ds) {
  if (ds.num_views() < 2) throw InvalidArgument("build_pseudo_view: need at least 2 views");
  return ds.with_view_appended(concatenate_views(ds), "pseudo");
}

}  // namespace tmc
