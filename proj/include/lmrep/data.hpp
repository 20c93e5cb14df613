#pragma once

// Tabular dataset ingestion and preprocessing: CSV + manifest loading, ID
// column removal, balanced target binarization, one-hot / min-max scaling
// with a stratified split, meta-level splits, encoder mini-batches and a
// synthetic meta-dataset generator.

#include "lmrep/core.hpp"
#include "lmrep/csv.hpp"

#include <json.hpp>

#include <algorithm>
#include <cctype>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

namespace lmrep {

enum class ColumnKind { numeric, categorical };

struct RawColumn {
  std::string name;
  ColumnKind kind = ColumnKind::numeric;
  std::vector<double> numeric;           // kind == numeric
  std::vector<std::string> categorical;  // kind == categorical

  std::size_t size() const { return kind == ColumnKind::numeric ? numeric.size() : categorical.size(); }
};

struct RawDataset {
  std::string name;
  std::vector<RawColumn> columns;
  std::string target_name;
  std::vector<std::string> target;
  std::vector<std::string> class_labels;  // sorted distinct target labels
  std::vector<std::string> positive_labels;  // set by binarize_target
  std::vector<std::string> log;

  std::size_t n_rows() const { return target.size(); }

  void validate() const {
    if (target.size() < 2) throw Error(name + ": fewer than 2 rows");
    std::set<std::string> names;
    for (const auto& c : columns) {
      if (c.size() != target.size()) throw Error(name + ": column '" + c.name + "' has wrong length");
      if (!names.insert(c.name).second) throw Error(name + ": duplicate column '" + c.name + "'");
    }
    if (names.count(target_name)) throw Error(name + ": target column listed as feature");
  }
};

struct DatasetManifest {
  std::string name;
  std::string target;
  std::vector<std::string> categorical;
  std::string source;

  static DatasetManifest from_json(const nlohmann::json& j) {
    DatasetManifest m;
    m.name = j.at("name").get<std::string>();
    m.target = j.at("target").get<std::string>();
    if (j.contains("categorical")) m.categorical = j.at("categorical").get<std::vector<std::string>>();
    if (j.contains("source")) m.source = j.at("source").get<std::string>();
    return m;
  }
};

/// Preprocessed binary-classification dataset. Feature values lie in [0, 1].
struct Dataset {
  std::string name;
  Matrix x_train;
  Matrix x_test;
  std::vector<int> y_train;
  std::vector<int> y_test;
  std::vector<std::string> feature_names;
  std::vector<bool> categorical;           // column derived from one-hot encoding
  std::vector<std::size_t> train_rows;     // row indices into the raw table
  std::vector<std::size_t> test_rows;
  std::vector<std::string> provenance;

  int n_features() const { return static_cast<int>(x_train.cols()); }

  void validate() const {
    if (x_train.rows() < 1 || x_test.rows() < 1) throw Error(name + ": empty split");
    if (x_train.cols() != x_test.cols()) throw Error(name + ": train/test column mismatch");
    if (static_cast<std::size_t>(x_train.rows()) != y_train.size() ||
        static_cast<std::size_t>(x_test.rows()) != y_test.size())
      throw Error(name + ": target length mismatch");
    constexpr double tol = 1e-12;
    for (const Matrix* m : {&x_train, &x_test})
      for (Eigen::Index i = 0; i < m->size(); ++i) {
        const double v = m->data()[i];
        if (!(v >= -tol && v <= 1.0 + tol)) throw Error(name + ": feature value outside [0,1]");
      }
    for (const auto* y : {&y_train, &y_test})
      for (int v : *y)
        if (v != 0 && v != 1) throw Error(name + ": non-binary target");
  }
};

struct MetaDataset {
  std::vector<Dataset> meta_train;
  std::vector<Dataset> meta_valid;
  std::uint64_t seed = 0;

  void validate() const {
    if (meta_train.empty() || meta_valid.empty()) throw Error("meta-dataset: empty split");
    std::set<std::string> names;
    for (const auto& d : meta_train) names.insert(d.name);
    for (const auto& d : meta_valid)
      if (names.count(d.name)) throw Error("meta-dataset: '" + d.name + "' in both splits");
  }
};

/// Row/column sub-sample of a dataset's train split.
struct Batch {
  std::string dataset;
  std::vector<std::size_t> rows;
  std::vector<std::size_t> cols;
  Matrix x;
  std::vector<double> y;

  std::size_t n_rows() const { return rows.size(); }
  std::size_t n_cols() const { return cols.size(); }
};

namespace detail {

inline std::string lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::tolower(c); });
  return s;
}

inline bool is_missing(const std::string& cell) {
  if (cell.empty()) return true;
  const auto l = lower(cell);
  return l == "na" || l == "nan" || l == "?" || l == "null" || l == "none";
}

inline std::optional<double> parse_number(const std::string& cell) {
  const char* begin = cell.c_str();
  char* end = nullptr;
  const double v = std::strtod(begin, &end);
  while (end && *end && std::isspace(static_cast<unsigned char>(*end))) ++end;
  if (end == begin || (end && *end) || !std::isfinite(v)) return std::nullopt;
  return v;
}

inline double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

inline std::vector<std::string> sorted_unique(std::vector<std::string> v) {
  std::sort(v.begin(), v.end());
  v.erase(std::unique(v.begin(), v.end()), v.end());
  return v;
}

}  // namespace detail

inline constexpr const char* kMissingLevel = "__missing__";

/// Builds a RawDataset from an in-memory CSV table. Rows with a missing
/// target are dropped; missing numeric cells take the column median and
/// missing categorical cells a dedicated level.
inline RawDataset raw_from_table(const csv::Table& table, const DatasetManifest& manifest) {
  const auto target_col = table.column(manifest.target);
  if (target_col < 0) throw Error(manifest.name + ": target column absent");
  for (const auto& c : manifest.categorical)
    if (table.column(c) < 0) throw Error(manifest.name + ": categorical column '" + c + "' absent");

  std::vector<std::size_t> keep;
  for (std::size_t r = 0; r < table.rows.size(); ++r)
    if (!detail::is_missing(table.rows[r][target_col])) keep.push_back(r);
  if (keep.empty()) throw Error(manifest.name + ": zero usable rows");

  RawDataset raw;
  raw.name = manifest.name;
  raw.target_name = manifest.target;
  for (std::size_t r : keep) raw.target.push_back(table.rows[r][target_col]);
  raw.class_labels = detail::sorted_unique(raw.target);
  if (keep.size() < table.rows.size())
    raw.log.push_back("dropped " + std::to_string(table.rows.size() - keep.size()) + " rows with missing target");

  const std::set<std::string> categorical(manifest.categorical.begin(), manifest.categorical.end());
  for (std::size_t c = 0; c < table.header.size(); ++c) {
    if (static_cast<std::ptrdiff_t>(c) == target_col) continue;
    RawColumn col;
    col.name = table.header[c];
    std::vector<std::string> cells;
    cells.reserve(keep.size());
    for (std::size_t r : keep) cells.push_back(table.rows[r][c]);

    bool numeric = !categorical.count(col.name);
    if (numeric) {
      for (const auto& cell : cells)
        if (!detail::is_missing(cell) && !detail::parse_number(cell)) {
          numeric = false;
          raw.log.push_back("column '" + col.name + "' has non-numeric values; treated as categorical");
          break;
        }
    }
    if (numeric) {
      col.kind = ColumnKind::numeric;
      std::vector<double> present;
      for (const auto& cell : cells)
        if (!detail::is_missing(cell)) present.push_back(*detail::parse_number(cell));
      const double fill = present.empty() ? 0.0 : detail::median(present);
      std::size_t imputed = 0;
      for (const auto& cell : cells) {
        if (detail::is_missing(cell)) {
          col.numeric.push_back(fill);
          ++imputed;
        } else {
          col.numeric.push_back(*detail::parse_number(cell));
        }
      }
      if (imputed)
        raw.log.push_back("imputed " + std::to_string(imputed) + " cells of '" + col.name + "' with median " +
                          format_double(fill));
    } else {
      col.kind = ColumnKind::categorical;
      for (const auto& cell : cells) col.categorical.push_back(detail::is_missing(cell) ? kMissingLevel : cell);
    }
    raw.columns.push_back(std::move(col));
  }
  raw.validate();
  return raw;
}

inline RawDataset load_dataset(const std::filesystem::path& path, const DatasetManifest& manifest) {
  std::string text;
  try {
    text = read_file(path);
  } catch (const Error&) {
    throw Error(manifest.name + ": unreadable file " + path.string());
  }
  return raw_from_table(csv::parse(text), manifest);
}

/// Removes columns named like identifiers, and all-unique integer-valued or
/// categorical columns.
inline RawDataset drop_id_columns(RawDataset raw) {
  static const std::set<std::string> id_names = {"id", "index", "row_id"};
  std::vector<RawColumn> kept;
  for (auto& col : raw.columns) {
    bool is_id = id_names.count(detail::lower(col.name)) > 0;
    if (!is_id) {
      if (col.kind == ColumnKind::categorical) {
        std::set<std::string> distinct(col.categorical.begin(), col.categorical.end());
        is_id = distinct.size() == col.categorical.size();
      } else {
        const bool integral = std::all_of(col.numeric.begin(), col.numeric.end(),
                                          [](double v) { return v == std::floor(v); });
        std::set<double> distinct(col.numeric.begin(), col.numeric.end());
        is_id = integral && distinct.size() == col.numeric.size();
      }
    }
    if (is_id)
      raw.log.push_back("dropped id-like column '" + col.name + "'");
    else
      kept.push_back(std::move(col));
  }
  if (kept.empty()) throw Error(raw.name + ": no features remain");
  raw.columns = std::move(kept);
  return raw;
}

/// Label grouping chosen by binarize_target.
struct Binarization {
  std::vector<std::string> positive;
  std::vector<std::string> negative;
  double balance = 0.0;  // |positive share - 0.5|
};

/// Exhaustive search over the 2^(c-1)-1 two-group partitions of the labels.
/// Best balance wins; the smaller group (by count) is positive, equal
/// counts give the lexicographically smaller group; remaining ties go to the
/// lexicographically smallest positive group. Binary targets map the larger
/// label to positive unchanged.
inline Binarization choose_binarization(const std::map<std::string, std::size_t>& counts) {
  const std::size_t c = counts.size();
  if (c < 2) throw Error("binarize: single-class target");
  if (c > 10) throw Error("binarize: more than 10 classes");
  std::vector<std::string> labels;
  std::vector<std::size_t> n;
  std::size_t total = 0;
  for (const auto& [label, count] : counts) {
    labels.push_back(label);
    n.push_back(count);
    total += count;
  }
  if (c == 2) {
    return {{labels[1]}, {labels[0]},
            std::abs(static_cast<double>(n[1]) / static_cast<double>(total) - 0.5)};
  }

  std::optional<Binarization> best;
  std::size_t best_gap = 0;  // |2 * positive_count - total|, exact
  for (std::uint32_t mask = 1; mask < (1u << (c - 1)); ++mask) {
    std::vector<std::string> a, b;
    std::size_t count_a = 0;
    for (std::size_t i = 0; i < c; ++i) {
      if (i + 1 < c && (mask >> i) & 1u) {
        a.push_back(labels[i]);
        count_a += n[i];
      } else {
        b.push_back(labels[i]);
      }
    }
    const std::size_t count_b = total - count_a;
    bool a_positive = count_a < count_b || (count_a == count_b && a < b);
    auto& pos = a_positive ? a : b;
    auto& neg = a_positive ? b : a;
    const std::size_t pos_count = a_positive ? count_a : count_b;
    const std::size_t gap = 2 * pos_count > total ? 2 * pos_count - total : total - 2 * pos_count;
    if (!best || gap < best_gap || (gap == best_gap && pos < best->positive)) {
      best_gap = gap;
      best = Binarization{pos, neg, static_cast<double>(gap) / (2.0 * static_cast<double>(total))};
    }
  }
  return *best;
}

inline RawDataset binarize_target(RawDataset raw) {
  std::map<std::string, std::size_t> counts;
  for (const auto& t : raw.target) ++counts[t];
  if (counts.size() < 2) throw Error(raw.name + ": single-class target");
  const auto choice = choose_binarization(counts);
  raw.positive_labels = choice.positive;
  std::string desc;
  for (const auto& l : choice.positive) desc += (desc.empty() ? "" : ",") + l;
  raw.log.push_back("binarized target: positive={" + desc + "} balance=" + format_double(choice.balance));
  return raw;
}

namespace detail {

inline std::vector<int> binary_target(const RawDataset& raw) {
  if (raw.positive_labels.empty()) throw Error(raw.name + ": target not binarized");
  const std::set<std::string> pos(raw.positive_labels.begin(), raw.positive_labels.end());
  std::vector<int> y;
  y.reserve(raw.target.size());
  for (const auto& t : raw.target) y.push_back(pos.count(t) ? 1 : 0);
  return y;
}

struct RowSplit {
  std::vector<std::size_t> train;
  std::vector<std::size_t> test;
};

inline RowSplit stratified_split(const std::vector<int>& y, double test_fraction, std::uint64_t seed) {
  Rng rng(seed);
  RowSplit split;
  for (int cls : {0, 1}) {
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < y.size(); ++i)
      if (y[i] == cls) idx.push_back(i);
    shuffle(idx, rng);
    const auto n_test = static_cast<std::size_t>(std::llround(static_cast<double>(idx.size()) * test_fraction));
    split.test.insert(split.test.end(), idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(n_test));
    split.train.insert(split.train.end(), idx.begin() + static_cast<std::ptrdiff_t>(n_test), idx.end());
  }
  std::sort(split.train.begin(), split.train.end());
  std::sort(split.test.begin(), split.test.end());
  return split;
}

inline bool has_both_classes(const std::vector<int>& y, const std::vector<std::size_t>& rows) {
  bool zero = false, one = false;
  for (auto r : rows) (y[r] ? one : zero) = true;
  return zero && one;
}

}  // namespace detail

/// Applies one-hot encoding and train-statistics min-max scaling for a fixed
/// row split.
inline Dataset transform(const RawDataset& raw, const std::vector<std::size_t>& train_rows,
                         const std::vector<std::size_t>& test_rows) {
  const auto y = detail::binary_target(raw);
  if (train_rows.empty() || test_rows.empty()) throw Error(raw.name + ": empty split");

  // Column-major staging, one vector per output feature over all raw rows.
  std::vector<std::vector<double>> features;
  Dataset ds;
  ds.name = raw.name;
  for (const auto& col : raw.columns) {
    if (col.kind == ColumnKind::categorical) {
      for (const auto& level : detail::sorted_unique(col.categorical)) {
        std::vector<double> ind(col.categorical.size());
        for (std::size_t r = 0; r < ind.size(); ++r) ind[r] = col.categorical[r] == level ? 1.0 : 0.0;
        features.push_back(std::move(ind));
        ds.feature_names.push_back(col.name + "=" + level);
        ds.categorical.push_back(true);
      }
    } else {
      double lo = std::numeric_limits<double>::infinity();
      double hi = -lo;
      for (auto r : train_rows) {
        lo = std::min(lo, col.numeric[r]);
        hi = std::max(hi, col.numeric[r]);
      }
      std::vector<double> scaled(col.numeric.size());
      for (std::size_t r = 0; r < scaled.size(); ++r)
        scaled[r] = hi > lo ? std::clamp((col.numeric[r] - lo) / (hi - lo), 0.0, 1.0) : 0.0;
      features.push_back(std::move(scaled));
      ds.feature_names.push_back(col.name);
      ds.categorical.push_back(false);
    }
  }
  if (features.empty()) throw Error(raw.name + ": no features");

  auto fill = [&](const std::vector<std::size_t>& rows, Matrix& x, std::vector<int>& yy) {
    x.resize(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(features.size()));
    yy.clear();
    for (std::size_t i = 0; i < rows.size(); ++i) {
      for (std::size_t j = 0; j < features.size(); ++j)
        x(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = features[j][rows[i]];
      yy.push_back(y[rows[i]]);
    }
  };
  fill(train_rows, ds.x_train, ds.y_train);
  fill(test_rows, ds.x_test, ds.y_test);
  ds.train_rows = train_rows;
  ds.test_rows = test_rows;
  ds.provenance = raw.log;
  return ds;
}

/// One-hot + min-max preprocessing with a stratified split. A split missing
/// a class is re-drawn with the next seed, at most 10 times.
inline Dataset preprocess(const RawDataset& raw, double test_fraction = 0.25, std::uint64_t seed = 0) {
  if (!(test_fraction > 0.0 && test_fraction < 1.0)) throw Error(raw.name + ": test_fraction outside (0,1)");
  raw.validate();
  const auto y = detail::binary_target(raw);
  for (std::uint64_t attempt = 0; attempt < 10; ++attempt) {
    auto split = detail::stratified_split(y, test_fraction, seed + attempt);
    if (split.train.empty() || split.test.empty()) continue;
    if (!detail::has_both_classes(y, split.train) || !detail::has_both_classes(y, split.test)) continue;
    auto ds = transform(raw, split.train, split.test);
    ds.provenance.push_back("split seed " + std::to_string(seed + attempt) + ", test_fraction " +
                            format_double(test_fraction));
    return ds;
  }
  throw Error(raw.name + ": could not draw a split with both classes in train and test");
}

/// Reassembles a preprocessed dataset into raw form (all columns numeric,
/// rows in their original order, target labels "0"/"1").
inline RawDataset to_raw(const Dataset& ds) {
  const std::size_t n = ds.train_rows.size() + ds.test_rows.size();
  RawDataset raw;
  raw.name = ds.name;
  raw.target_name = "target";
  raw.target.assign(n, "0");
  raw.columns.resize(static_cast<std::size_t>(ds.n_features()));
  for (std::size_t j = 0; j < raw.columns.size(); ++j) {
    raw.columns[j].name = ds.feature_names.at(j);
    raw.columns[j].numeric.assign(n, 0.0);
  }
  auto put = [&](const Matrix& x, const std::vector<int>& y, const std::vector<std::size_t>& rows) {
    for (std::size_t i = 0; i < rows.size(); ++i) {
      if (rows[i] >= n) throw Error(ds.name + ": row index out of range");
      raw.target[rows[i]] = y[i] ? "1" : "0";
      for (std::size_t j = 0; j < raw.columns.size(); ++j)
        raw.columns[j].numeric[rows[i]] = x(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
    }
  };
  put(ds.x_train, ds.y_train, ds.train_rows);
  put(ds.x_test, ds.y_test, ds.test_rows);
  raw.class_labels = detail::sorted_unique(raw.target);
  raw.positive_labels = {"1"};
  return raw;
}

inline MetaDataset split_meta(std::vector<Dataset> datasets, double valid_fraction, std::uint64_t seed) {
  if (!(valid_fraction > 0.0 && valid_fraction < 1.0)) throw Error("split_meta: fraction outside (0,1)");
  if (datasets.size() < 2) throw Error("split_meta: need at least 2 datasets");
  const std::size_t n = datasets.size();
  auto n_valid = static_cast<std::size_t>(std::llround(static_cast<double>(n) * valid_fraction));
  n_valid = std::clamp<std::size_t>(n_valid, 1, n - 1);

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(seed);
  shuffle(order, rng);
  std::vector<bool> is_valid(n, false);
  for (std::size_t i = 0; i < n_valid; ++i) is_valid[order[i]] = true;

  MetaDataset meta;
  meta.seed = seed;
  for (std::size_t i = 0; i < n; ++i)
    (is_valid[i] ? meta.meta_valid : meta.meta_train).push_back(std::move(datasets[i]));
  meta.validate();
  return meta;
}

/// Builds a Batch from explicit train-split row and column indices.
inline Batch make_batch(const Dataset& ds, std::vector<std::size_t> rows, std::vector<std::size_t> cols) {
  if (rows.empty() || cols.empty()) throw Error(ds.name + ": empty batch");
  Batch b;
  b.dataset = ds.name;
  b.x.resize(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(cols.size()));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i] >= static_cast<std::size_t>(ds.x_train.rows())) throw Error(ds.name + ": batch row out of range");
    for (std::size_t j = 0; j < cols.size(); ++j) {
      if (cols[j] >= static_cast<std::size_t>(ds.n_features())) throw Error(ds.name + ": batch column out of range");
      b.x(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) =
          ds.x_train(static_cast<Eigen::Index>(rows[i]), static_cast<Eigen::Index>(cols[j]));
    }
    b.y.push_back(ds.y_train[rows[i]]);
  }
  b.rows = std::move(rows);
  b.cols = std::move(cols);
  return b;
}

/// Uniform sample without replacement of train rows and feature columns.
/// Indices are returned in ascending order.
inline Batch subsample(const Dataset& ds, std::size_t n_rows, std::size_t n_cols, Rng& rng) {
  const auto total_rows = static_cast<std::size_t>(ds.x_train.rows());
  const auto total_cols = static_cast<std::size_t>(ds.n_features());
  if (n_rows < 1 || n_rows > total_rows) throw Error(ds.name + ": subsample row count out of range");
  if (n_cols < 1 || n_cols > total_cols) throw Error(ds.name + ": subsample column count out of range");
  auto rows = sample_without_replacement(total_rows, n_rows, rng);
  auto cols = sample_without_replacement(total_cols, n_cols, rng);
  std::sort(rows.begin(), rows.end());
  std::sort(cols.begin(), cols.end());
  return make_batch(ds, std::move(rows), std::move(cols));
}

inline Batch full_batch(const Dataset& ds) {
  std::vector<std::size_t> rows(static_cast<std::size_t>(ds.x_train.rows()));
  std::vector<std::size_t> cols(static_cast<std::size_t>(ds.n_features()));
  std::iota(rows.begin(), rows.end(), std::size_t{0});
  std::iota(cols.begin(), cols.end(), std::size_t{0});
  return make_batch(ds, std::move(rows), std::move(cols));
}

// ---------------------------------------------------------------------------
// Synthetic meta-datasets

struct SyntheticProfile {
  int min_features = 2;
  int max_features = 20;
  int min_rows = 80;
  int max_rows = 400;
  double min_separation = 0.3;
  double max_separation = 4.0;
  bool infinite_separation = false;
  double max_label_noise = 0.3;
  double max_irrelevant_fraction = 0.7;
  double min_prevalence = 0.2;
  int max_blobs_per_class = 3;
  double categorical_probability = 0.3;
  double test_fraction = 0.25;
  double valid_fraction = 0.25;

  void validate() const {
    if (min_features < 2 || max_features < min_features) throw Error("synthetic profile: bad feature range");
    if (min_rows < 8 || max_rows < min_rows) throw Error("synthetic profile: bad row range");
    if (min_separation < 0 || max_separation < min_separation) throw Error("synthetic profile: bad separation");
    if (max_label_noise < 0 || max_label_noise >= 0.5) throw Error("synthetic profile: label noise must be < 0.5");
    if (min_prevalence <= 0 || min_prevalence > 0.5) throw Error("synthetic profile: bad prevalence");
    if (max_blobs_per_class < 1) throw Error("synthetic profile: bad blob count");
  }
};

/// One Gaussian-blob mixture classification task in raw form.
inline RawDataset generate_synthetic_raw(const std::string& name, const SyntheticProfile& profile, std::uint64_t seed) {
  Rng rng(seed);
  const auto d = static_cast<int>(uniform_int(rng, profile.min_features, profile.max_features));
  const auto n = static_cast<int>(uniform_int(rng, profile.min_rows, profile.max_rows));
  const double separation =
      profile.infinite_separation ? 0.0 : uniform(rng, profile.min_separation, profile.max_separation);
  const double noise = profile.infinite_separation ? 0.0 : uniform(rng, 0.0, profile.max_label_noise);
  const int max_irrelevant = static_cast<int>(std::floor(profile.max_irrelevant_fraction * (d - 1)));
  const auto irrelevant = static_cast<int>(uniform_int(rng, 0, std::max(0, max_irrelevant)));
  const int informative = d - irrelevant;
  const double prevalence = uniform(rng, profile.min_prevalence, 0.5);
  const bool with_categorical = uniform01(rng) < profile.categorical_probability;

  // Each class is a mixture of blobs; class-1 centres sit `separation` away
  // from a class-0 centre along random directions.
  const int blobs = static_cast<int>(uniform_int(rng, 1, profile.max_blobs_per_class));
  std::vector<std::vector<double>> centres0(blobs), centres1(blobs);
  for (int b = 0; b < blobs; ++b) {
    std::vector<double> dir(informative);
    double norm = 0.0;
    for (auto& v : dir) {
      v = standard_normal(rng);
      norm += v * v;
    }
    norm = std::sqrt(norm);
    centres0[b].resize(informative);
    centres1[b].resize(informative);
    for (int j = 0; j < informative; ++j) {
      centres0[b][j] = blobs > 1 ? 2.0 * standard_normal(rng) : 0.0;
      const double offset = profile.infinite_separation ? 1e6 : separation;
      centres1[b][j] = centres0[b][j] + offset * dir[j] / norm;
    }
  }

  RawDataset raw;
  raw.name = name;
  raw.target_name = "target";
  std::vector<std::vector<double>> cols(d, std::vector<double>(n));
  for (int i = 0; i < n; ++i) {
    const int cls = uniform01(rng) < prevalence ? 1 : 0;
    const int b = static_cast<int>(uniform_index(rng, static_cast<std::size_t>(blobs)));
    const auto& centre = cls ? centres1[b] : centres0[b];
    for (int j = 0; j < informative; ++j) cols[j][i] = centre[j] + standard_normal(rng);
    for (int j = informative; j < d; ++j) cols[j][i] = standard_normal(rng);
    int label = cls;
    if (uniform01(rng) < noise) label = 1 - label;
    raw.target.push_back(label ? "1" : "0");
  }
  // Guarantee both classes with enough members for a stratified split.
  for (int cls = 0; cls < 2; ++cls) {
    const std::string l = cls ? "1" : "0";
    if (std::count(raw.target.begin(), raw.target.end(), l) < 4)
      for (int i = 0; i < 4; ++i) raw.target[static_cast<std::size_t>(i * 2 + cls)] = l;
  }

  for (int j = 0; j < d; ++j) {
    RawColumn col;
    col.name = "x" + std::to_string(j);
    if (with_categorical && j == 0) {
      col.kind = ColumnKind::categorical;
      for (int i = 0; i < n; ++i) col.categorical.push_back(cols[j][i] < -0.5 ? "lo" : cols[j][i] < 0.5 ? "mid" : "hi");
    } else {
      col.numeric = std::move(cols[j]);
    }
    raw.columns.push_back(std::move(col));
  }
  raw.class_labels = detail::sorted_unique(raw.target);
  raw.log.push_back("synthetic: d=" + std::to_string(d) + " informative=" + std::to_string(informative) +
                    " blobs=" + std::to_string(blobs) + " separation=" + format_double(separation) +
                    " noise=" + format_double(noise));
  raw.validate();
  return raw;
}

inline std::vector<Dataset> generate_synthetic_datasets(int n_datasets, std::uint64_t seed,
                                                        const SyntheticProfile& profile = {}) {
  profile.validate();
  std::vector<Dataset> out;
  for (int i = 0; i < n_datasets; ++i) {
    char name[32];
    std::snprintf(name, sizeof(name), "syn_%03d", i);
    const auto ds_seed = derive_seed(seed, static_cast<std::uint64_t>(i));
    auto raw = binarize_target(generate_synthetic_raw(name, profile, ds_seed));
    auto ds = preprocess(raw, profile.test_fraction, derive_seed(ds_seed, "split"));
    ds.validate();
    out.push_back(std::move(ds));
  }
  return out;
}

inline MetaDataset generate_synthetic_metadataset(int n_datasets, std::uint64_t seed,
                                                  const SyntheticProfile& profile = {}) {
  if (n_datasets < 4) throw Error("generate_synthetic_metadataset: need at least 4 datasets");
  return split_meta(generate_synthetic_datasets(n_datasets, seed, profile), profile.valid_fraction,
                    derive_seed(seed, "meta-split"));
}

// ---------------------------------------------------------------------------
// Persistence

namespace detail {

inline nlohmann::json matrix_to_json(const Matrix& m) {
  nlohmann::json rows = nlohmann::json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    nlohmann::json row = nlohmann::json::array();
    for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    rows.push_back(std::move(row));
  }
  return rows;
}

inline Matrix matrix_from_json(const nlohmann::json& j, Eigen::Index cols) {
  Matrix m(static_cast<Eigen::Index>(j.size()), cols);
  for (std::size_t i = 0; i < j.size(); ++i) {
    if (static_cast<Eigen::Index>(j[i].size()) != cols) throw Error("matrix json: ragged rows");
    for (Eigen::Index c = 0; c < cols; ++c) m(static_cast<Eigen::Index>(i), c) = j[i][static_cast<std::size_t>(c)].get<double>();
  }
  return m;
}

}  // namespace detail

inline nlohmann::json dataset_to_json(const Dataset& ds) {
  std::vector<int> categorical(ds.categorical.begin(), ds.categorical.end());
  return {{"name", ds.name},
          {"feature_names", ds.feature_names},
          {"categorical", categorical},
          {"x_train", detail::matrix_to_json(ds.x_train)},
          {"y_train", ds.y_train},
          {"x_test", detail::matrix_to_json(ds.x_test)},
          {"y_test", ds.y_test},
          {"train_rows", ds.train_rows},
          {"test_rows", ds.test_rows},
          {"provenance", ds.provenance}};
}

inline Dataset dataset_from_json(const nlohmann::json& j) {
  Dataset ds;
  ds.name = j.at("name").get<std::string>();
  ds.feature_names = j.at("feature_names").get<std::vector<std::string>>();
  for (int c : j.at("categorical").get<std::vector<int>>()) ds.categorical.push_back(c != 0);
  const auto d = static_cast<Eigen::Index>(ds.feature_names.size());
  ds.x_train = detail::matrix_from_json(j.at("x_train"), d);
  ds.x_test = detail::matrix_from_json(j.at("x_test"), d);
  ds.y_train = j.at("y_train").get<std::vector<int>>();
  ds.y_test = j.at("y_test").get<std::vector<int>>();
  ds.train_rows = j.at("train_rows").get<std::vector<std::size_t>>();
  ds.test_rows = j.at("test_rows").get<std::vector<std::size_t>>();
  ds.provenance = j.at("provenance").get<std::vector<std::string>>();
  ds.validate();
  return ds;
}

/// Layout: <dir>/index.json and <dir>/datasets/<name>.json.
inline void save_metadataset(const MetaDataset& meta, const std::filesystem::path& dir) {
  meta.validate();
  nlohmann::json index;
  index["schema_version"] = 1;
  index["seed"] = meta.seed;
  index["meta_train"] = nlohmann::json::array();
  index["meta_valid"] = nlohmann::json::array();
  for (const auto* part : {&meta.meta_train, &meta.meta_valid}) {
    const char* key = part == &meta.meta_train ? "meta_train" : "meta_valid";
    for (const auto& ds : *part) {
      index[key].push_back(ds.name);
      write_file_atomic(dir / "datasets" / (ds.name + ".json"), dataset_to_json(ds).dump());
    }
  }
  write_file_atomic(dir / "index.json", index.dump(2) + "\n");
}

inline MetaDataset load_metadataset(const std::filesystem::path& dir) {
  const auto index = nlohmann::json::parse(read_file(dir / "index.json"));
  MetaDataset meta;
  meta.seed = index.at("seed").get<std::uint64_t>();
  for (const auto& name : index.at("meta_train"))
    meta.meta_train.push_back(dataset_from_json(nlohmann::json::parse(read_file(dir / "datasets" / (name.get<std::string>() + ".json")))));
  for (const auto& name : index.at("meta_valid"))
    meta.meta_valid.push_back(dataset_from_json(nlohmann::json::parse(read_file(dir / "datasets" / (name.get<std::string>() + ".json")))));
  meta.validate();
  return meta;
}

}  // namespace lmrep
