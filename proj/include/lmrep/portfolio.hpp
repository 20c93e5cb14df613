#pragma once

// Portfolio construction and the landmarker base: simple meta-features,
// k-means over datasets, per-cluster tournament selection, landmarker
// vectors, and a replay evaluator backed by a stored performance table.

#include "lmrep/core.hpp"
#include "lmrep/csv.hpp"
#include "lmrep/data.hpp"
#include "lmrep/gbt.hpp"
#include "lmrep/space.hpp"

#include <json.hpp>

#include <functional>
#include <map>
#include <memory>
#include <numeric>
#include <set>
#include <unordered_map>

namespace lmrep {

/// Trains and scores one configuration on one dataset; returns test ROC AUC.
using Evaluator = std::function<double(const Dataset&, const HyperparameterConfig&)>;

inline Evaluator gbt_evaluator() {
  return [](const Dataset& ds, const HyperparameterConfig& c) {
    const auto model = train_gbt(ds, GbtParams::from_config(c));
    return roc_auc(ds.y_test, predict_proba(model, ds.x_test));
  };
}

/// Calls the evaluator, mapping failures to AUC 0.5 with a warning.
inline double evaluate_or_default(const Evaluator& evaluator, const Dataset& ds, const HyperparameterConfig& c,
                                  std::string* warning = nullptr) {
  try {
    const double v = evaluator(ds, c);
    if (!std::isfinite(v)) throw Error("non-finite score");
    return v;
  } catch (const std::exception& e) {
    const std::string msg = "evaluation of " + c.key() + " on " + ds.name + " failed (" + e.what() + "); using 0.5";
    if (warning)
      *warning = msg;
    else
      log_warning(msg);
    return 0.5;
  }
}

/// Evaluates every (dataset, config) cell. Cells are independent; results are
/// stored by index so the outcome does not depend on `workers`.
inline Matrix evaluate_grid(const std::vector<const Dataset*>& datasets, const std::vector<HyperparameterConfig>& configs,
                            const Evaluator& evaluator, int workers = 1) {
  const std::size_t rows = datasets.size(), cols = configs.size(), total = rows * cols;
  Matrix out(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
  std::vector<std::string> warnings(total);
  parallel_for(total, workers, [&](std::size_t k) {
    const std::size_t i = k / cols, j = k % cols;
    out(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) =
        evaluate_or_default(evaluator, *datasets[i], configs[j], &warnings[k]);
  });
  for (const auto& w : warnings)
    if (!w.empty()) log_warning(w);
  return out;
}

// ---------------------------------------------------------------------------
// Performance tables and the replay evaluator

/// Stored (dataset x configuration) scores.
struct PerformanceTable {
  std::vector<std::string> datasets;
  std::vector<HyperparameterConfig> configs;
  Matrix values;  // datasets x configs

  std::ptrdiff_t dataset_index(const std::string& name) const {
    for (std::size_t i = 0; i < datasets.size(); ++i)
      if (datasets[i] == name) return static_cast<std::ptrdiff_t>(i);
    return -1;
  }
};

inline void save_performance_table(const PerformanceTable& t, const std::filesystem::path& dir) {
  nlohmann::json configs = nlohmann::json::array();
  for (const auto& c : t.configs) configs.push_back(config_to_json(c));
  write_file_atomic(dir / "configs.json", nlohmann::json{{"schema_version", 1}, {"configs", configs}}.dump(2) + "\n");
  csv::Table table;
  table.header.push_back("dataset");
  for (std::size_t j = 0; j < t.configs.size(); ++j) table.header.push_back("c" + std::to_string(j));
  for (std::size_t i = 0; i < t.datasets.size(); ++i) {
    csv::Row row{t.datasets[i]};
    for (std::size_t j = 0; j < t.configs.size(); ++j)
      row.push_back(format_double(t.values(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j))));
    table.rows.push_back(std::move(row));
  }
  write_file_atomic(dir / "table.csv", csv::format(table));
}

inline PerformanceTable load_performance_table(const std::filesystem::path& dir) {
  PerformanceTable t;
  const auto j = nlohmann::json::parse(read_file(dir / "configs.json"));
  for (const auto& c : j.at("configs")) t.configs.push_back(config_from_json(c));
  const auto table = csv::read(dir / "table.csv");
  if (table.header.size() != t.configs.size() + 1) throw Error("performance table: column count mismatch");
  t.values.resize(static_cast<Eigen::Index>(table.rows.size()), static_cast<Eigen::Index>(t.configs.size()));
  for (std::size_t i = 0; i < table.rows.size(); ++i) {
    t.datasets.push_back(table.rows[i][0]);
    for (std::size_t k = 0; k < t.configs.size(); ++k)
      t.values(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)) = std::stod(table.rows[i][k + 1]);
  }
  return t;
}

/// Looks up stored scores. With `nearest_fallback`, a configuration absent
/// from the table takes the score of the closest stored configuration in the
/// unit-cube encoding (lowest index on ties).
inline Evaluator replay_evaluator(std::shared_ptr<const PerformanceTable> table, bool nearest_fallback) {
  struct Index {
    std::unordered_map<std::string, std::size_t> rows;
    std::unordered_map<std::string, std::size_t> cols;
    std::vector<Vector> units;
  };
  auto index = std::make_shared<Index>();
  const SearchSpace space;
  for (std::size_t i = 0; i < table->datasets.size(); ++i) index->rows.emplace(table->datasets[i], i);
  for (std::size_t j = 0; j < table->configs.size(); ++j) {
    index->cols.emplace(table->configs[j].key(), j);
    index->units.push_back(space.to_unit(table->configs[j]));
  }
  return [table, index, nearest_fallback, space](const Dataset& ds, const HyperparameterConfig& c) {
    const auto row = index->rows.find(ds.name);
    if (row == index->rows.end()) throw Error("replay: dataset '" + ds.name + "' not in table");
    std::size_t col = 0;
    if (auto it = index->cols.find(c.key()); it != index->cols.end()) {
      col = it->second;
    } else if (nearest_fallback) {
      if (index->units.empty()) throw Error("replay: empty table");
      const Vector u = space.to_unit(c);
      double best = std::numeric_limits<double>::infinity();
      for (std::size_t j = 0; j < index->units.size(); ++j) {
        const double d = (index->units[j] - u).squaredNorm();
        if (d < best) {
          best = d;
          col = j;
        }
      }
    } else {
      throw Error("replay: configuration " + c.key() + " not in table");
    }
    return table->values(static_cast<Eigen::Index>(row->second), static_cast<Eigen::Index>(col));
  };
}

// ---------------------------------------------------------------------------
// Meta-features

inline constexpr std::size_t kNumMetaFeatures = 7;
inline const std::array<const char*, kNumMetaFeatures> kMetaFeatureNames = {
    "n_rows", "n_features", "categorical_fraction", "mean", "std", "prevalence", "mean_abs_target_correlation"};

/// Raw (unstandardised) meta-features from the train split.
inline Vector compute_meta_features(const Dataset& ds) {
  const auto& x = ds.x_train;
  const auto n = static_cast<double>(x.rows());
  const auto d = x.cols();
  Vector mf(static_cast<Eigen::Index>(kNumMetaFeatures));
  mf[0] = n;
  mf[1] = static_cast<double>(d);
  mf[2] = static_cast<double>(std::count(ds.categorical.begin(), ds.categorical.end(), true)) / static_cast<double>(d);
  const double mean = x.mean();
  mf[3] = mean;
  mf[4] = std::sqrt((x.array() - mean).square().mean());
  Vector y(x.rows());
  for (Eigen::Index i = 0; i < x.rows(); ++i) y[i] = ds.y_train[static_cast<std::size_t>(i)];
  mf[5] = y.mean();
  const Vector yc = y.array() - y.mean();
  double corr_sum = 0.0;
  for (Eigen::Index j = 0; j < d; ++j) {
    const Vector xc = x.col(j).array() - x.col(j).mean();
    const double denom = xc.norm() * yc.norm();
    corr_sum += denom > 0 ? std::abs(xc.dot(yc) / denom) : 0.0;
  }
  mf[6] = corr_sum / static_cast<double>(d);
  return mf;
}

/// Z-scores each component across the given vectors; zero-variance
/// components become 0.
inline std::vector<Vector> standardize(const std::vector<Vector>& raw) {
  if (raw.empty()) return {};
  const auto dim = raw.front().size();
  Vector mean = Vector::Zero(dim), var = Vector::Zero(dim);
  for (const auto& v : raw) mean += v;
  mean /= static_cast<double>(raw.size());
  for (const auto& v : raw) var.array() += (v - mean).array().square();
  var /= static_cast<double>(raw.size());
  std::vector<Vector> out;
  for (const auto& v : raw) {
    Vector z(dim);
    for (Eigen::Index k = 0; k < dim; ++k) z[k] = var[k] > 1e-24 ? (v[k] - mean[k]) / std::sqrt(var[k]) : 0.0;
    out.push_back(std::move(z));
  }
  return out;
}

// ---------------------------------------------------------------------------
// K-means

struct KMeansResult {
  std::vector<int> assignments;
  std::vector<Vector> centroids;
  std::vector<double> inertia_history;  // after every assignment step
  int iterations = 0;

  double inertia() const { return inertia_history.empty() ? 0.0 : inertia_history.back(); }
};

/// k-means++ seeding followed by Lloyd iterations until the assignment is a
/// fixpoint or 300 iterations. An empty cluster takes the point farthest
/// from its centroid among clusters with more than one member.
inline KMeansResult kmeans(const std::vector<Vector>& points, int k, std::uint64_t seed, int max_iterations = 300) {
  const auto n = points.size();
  if (k < 1) throw Error("kmeans: k must be positive");
  if (static_cast<std::size_t>(k) > n) throw Error("kmeans: k exceeds number of points");
  Rng rng(seed);
  auto sq = [](const Vector& a, const Vector& b) { return (a - b).squaredNorm(); };

  KMeansResult res;
  std::vector<bool> chosen(n, false);
  std::size_t first = uniform_index(rng, n);
  res.centroids.push_back(points[first]);
  chosen[first] = true;
  std::vector<double> dist(n);
  while (res.centroids.size() < static_cast<std::size_t>(k)) {
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      double best = std::numeric_limits<double>::infinity();
      for (const auto& c : res.centroids) best = std::min(best, sq(points[i], c));
      dist[i] = chosen[i] ? 0.0 : best;
      total += dist[i];
    }
    std::size_t pick = n;
    if (total > 0) {
      double r = uniform01(rng) * total;
      for (std::size_t i = 0; i < n; ++i) {
        if (dist[i] <= 0) continue;
        pick = i;
        r -= dist[i];
        if (r < 0) break;
      }
    } else {
      for (std::size_t i = 0; i < n && pick == n; ++i)
        if (!chosen[i]) pick = i;
    }
    chosen[pick] = true;
    res.centroids.push_back(points[pick]);
  }

  res.assignments.assign(n, -1);
  for (int it = 0; it < max_iterations; ++it) {
    bool changed = false;
    std::vector<double> own(n);
    for (std::size_t i = 0; i < n; ++i) {
      int best_c = 0;
      double best = std::numeric_limits<double>::infinity();
      for (int c = 0; c < k; ++c) {
        const double d = sq(points[i], res.centroids[static_cast<std::size_t>(c)]);
        if (d < best) {
          best = d;
          best_c = c;
        }
      }
      own[i] = best;
      if (res.assignments[i] != best_c) changed = true;
      res.assignments[i] = best_c;
    }
    // Repair empty clusters.
    std::vector<int> sizes(static_cast<std::size_t>(k), 0);
    for (int a : res.assignments) ++sizes[static_cast<std::size_t>(a)];
    for (int c = 0; c < k; ++c) {
      if (sizes[static_cast<std::size_t>(c)] > 0) continue;
      std::size_t far = n;
      for (std::size_t i = 0; i < n; ++i)
        if (sizes[static_cast<std::size_t>(res.assignments[i])] > 1 && (far == n || own[i] > own[far])) far = i;
      if (far == n) throw Error("kmeans: cannot repair empty cluster");
      --sizes[static_cast<std::size_t>(res.assignments[far])];
      res.assignments[far] = c;
      sizes[static_cast<std::size_t>(c)] = 1;
      res.centroids[static_cast<std::size_t>(c)] = points[far];
      own[far] = 0.0;
      changed = true;
    }
    res.inertia_history.push_back(std::accumulate(own.begin(), own.end(), 0.0));
    res.iterations = it + 1;
    if (!changed && it > 0) break;
    for (int c = 0; c < k; ++c) {
      Vector sum = Vector::Zero(points.front().size());
      for (std::size_t i = 0; i < n; ++i)
        if (res.assignments[i] == c) sum += points[i];
      res.centroids[static_cast<std::size_t>(c)] = sum / static_cast<double>(sizes[static_cast<std::size_t>(c)]);
    }
  }
  return res;
}

// ---------------------------------------------------------------------------
// Portfolio and landmarker base

struct Portfolio {
  std::vector<HyperparameterConfig> configs;
  std::vector<int> cluster;             // tournament the entry won
  std::vector<double> mean_score;       // winner's mean score in that cluster
  std::vector<int> candidate;           // index in the candidate pool

  std::size_t size() const { return configs.size(); }
};

struct LandmarkerVector {
  std::string dataset;
  Vector values;
};

/// Landmarker vectors of the meta-train datasets, aligned with one portfolio.
struct LandmarkerBase {
  std::shared_ptr<const Portfolio> portfolio;
  std::vector<std::string> datasets;
  Matrix values;  // datasets x portfolio size

  std::size_t size() const { return datasets.size(); }
  std::size_t portfolio_size() const { return static_cast<std::size_t>(values.cols()); }

  std::ptrdiff_t index_of(const std::string& name) const {
    for (std::size_t i = 0; i < datasets.size(); ++i)
      if (datasets[i] == name) return static_cast<std::ptrdiff_t>(i);
    return -1;
  }

  Vector row(const std::string& name) const {
    const auto i = index_of(name);
    if (i < 0) throw Error("landmarker base: no entry for '" + name + "'");
    return values.row(i).transpose();
  }

  /// Argmax of the dataset's landmarker vector, lowest index on ties.
  int best_config(std::size_t i) const {
    int best = 0;
    for (Eigen::Index j = 1; j < values.cols(); ++j)
      if (values(static_cast<Eigen::Index>(i), j) > values(static_cast<Eigen::Index>(i), best)) best = static_cast<int>(j);
    return best;
  }
};

/// Per-cluster winner: highest mean score over the cluster's datasets, lowest
/// candidate index on ties; a candidate already taken by an earlier cluster
/// yields to the cluster's next-best unused one. `perf` is datasets x
/// candidates.
inline std::vector<int> tournament_winners(const Matrix& perf, const std::vector<int>& assignments, int k,
                                           std::vector<double>* winner_means = nullptr) {
  if (static_cast<Eigen::Index>(assignments.size()) != perf.rows()) throw Error("tournament: assignment size mismatch");
  if (perf.cols() < k) throw Error("tournament: fewer candidates than clusters");
  std::vector<bool> used(static_cast<std::size_t>(perf.cols()), false);
  std::vector<int> winners;
  for (int c = 0; c < k; ++c) {
    Vector mean = Vector::Zero(perf.cols());
    int members = 0;
    for (std::size_t i = 0; i < assignments.size(); ++i)
      if (assignments[i] == c) {
        mean += perf.row(static_cast<Eigen::Index>(i)).transpose();
        ++members;
      }
    if (members == 0) throw Error("tournament: empty cluster");
    mean /= members;
    int best = -1;
    for (Eigen::Index j = 0; j < perf.cols(); ++j) {
      if (used[static_cast<std::size_t>(j)]) continue;
      if (best < 0 || mean[j] > mean[best]) best = static_cast<int>(j);
    }
    used[static_cast<std::size_t>(best)] = true;
    winners.push_back(best);
    if (winner_means) winner_means->push_back(mean[best]);
  }
  return winners;
}

struct PortfolioSelection {
  Portfolio portfolio;
  LandmarkerBase base;
  PerformanceTable candidates;  // meta-train x candidate pool
  KMeansResult clusters;
};

/// Draws `candidate_count` distinct configurations uniformly from the space.
inline std::vector<HyperparameterConfig> draw_candidates(const SearchSpace& space, int candidate_count,
                                                         std::uint64_t seed) {
  Rng rng(seed);
  std::vector<HyperparameterConfig> candidates;
  std::set<HyperparameterConfig> seen;
  while (static_cast<int>(candidates.size()) < candidate_count) {
    auto c = space.sample(rng);
    if (seen.insert(c).second) candidates.push_back(c);
  }
  return candidates;
}

/// Scores the candidates on every meta-train dataset, clusters the datasets
/// on standardised meta-features and runs one tournament per cluster.
inline PortfolioSelection select_portfolio(const std::vector<Dataset>& meta_train,
                                           const std::vector<HyperparameterConfig>& candidates, int k,
                                           const Evaluator& evaluator, std::uint64_t seed, int workers = 1) {
  if (meta_train.empty()) throw Error("select_portfolio: empty meta-train");
  if (static_cast<int>(candidates.size()) < k) throw Error("select_portfolio: fewer candidates than k");
  std::vector<const Dataset*> ptrs;
  for (const auto& d : meta_train) ptrs.push_back(&d);
  PortfolioSelection sel;
  sel.candidates.configs = candidates;
  for (const auto& d : meta_train) sel.candidates.datasets.push_back(d.name);
  sel.candidates.values = evaluate_grid(ptrs, candidates, evaluator, workers);

  std::vector<Vector> mf;
  for (const auto& d : meta_train) mf.push_back(compute_meta_features(d));
  sel.clusters = kmeans(standardize(mf), k, derive_seed(seed, "kmeans"));
  std::vector<double> means;
  const auto winners = tournament_winners(sel.candidates.values, sel.clusters.assignments, k, &means);
  auto portfolio = std::make_shared<Portfolio>();
  for (int c = 0; c < k; ++c) {
    portfolio->configs.push_back(candidates[static_cast<std::size_t>(winners[static_cast<std::size_t>(c)])]);
    portfolio->cluster.push_back(c);
    portfolio->mean_score.push_back(means[static_cast<std::size_t>(c)]);
    portfolio->candidate.push_back(winners[static_cast<std::size_t>(c)]);
  }
  sel.portfolio = *portfolio;
  sel.base.portfolio = portfolio;
  sel.base.datasets = sel.candidates.datasets;
  sel.base.values.resize(static_cast<Eigen::Index>(meta_train.size()), k);
  for (int c = 0; c < k; ++c)
    sel.base.values.col(c) = sel.candidates.values.col(winners[static_cast<std::size_t>(c)]);
  return sel;
}

inline PortfolioSelection select_portfolio(const std::vector<Dataset>& meta_train, const SearchSpace& space, int k,
                                           int candidate_count, const Evaluator& evaluator, std::uint64_t seed,
                                           int workers = 1) {
  if (candidate_count < k) throw Error("select_portfolio: candidate_count < k");
  return select_portfolio(meta_train, draw_candidates(space, candidate_count, derive_seed(seed, "candidates")), k,
                          evaluator, seed, workers);
}

inline LandmarkerVector compute_landmarkers(const Dataset& ds, const Portfolio& portfolio, const Evaluator& evaluator) {
  LandmarkerVector l{ds.name, Vector(static_cast<Eigen::Index>(portfolio.size()))};
  for (std::size_t k = 0; k < portfolio.size(); ++k)
    l.values[static_cast<Eigen::Index>(k)] = evaluate_or_default(evaluator, ds, portfolio.configs[k]);
  return l;
}

inline LandmarkerBase build_landmarker_base(const std::vector<Dataset>& datasets,
                                            std::shared_ptr<const Portfolio> portfolio, const Evaluator& evaluator,
                                            int workers = 1) {
  std::vector<const Dataset*> ptrs;
  LandmarkerBase base;
  for (const auto& d : datasets) {
    ptrs.push_back(&d);
    base.datasets.push_back(d.name);
  }
  base.values = evaluate_grid(ptrs, portfolio->configs, evaluator, workers);
  base.portfolio = std::move(portfolio);
  return base;
}

// ---------------------------------------------------------------------------
// Persistence

inline nlohmann::json portfolio_to_json(const Portfolio& p) {
  nlohmann::json entries = nlohmann::json::array();
  for (std::size_t i = 0; i < p.size(); ++i) {
    auto e = config_to_json(p.configs[i]);
    e["cluster"] = p.cluster[i];
    e["mean_score"] = p.mean_score[i];
    e["candidate"] = p.candidate[i];
    entries.push_back(std::move(e));
  }
  return {{"schema_version", 1}, {"configs", entries}};
}

inline Portfolio portfolio_from_json(const nlohmann::json& j) {
  Portfolio p;
  for (const auto& e : j.at("configs")) {
    p.configs.push_back(config_from_json(e));
    p.cluster.push_back(e.value("cluster", -1));
    p.mean_score.push_back(e.value("mean_score", 0.0));
    p.candidate.push_back(e.value("candidate", -1));
  }
  return p;
}

inline std::string landmarkers_to_csv(const LandmarkerBase& base) {
  csv::Table t;
  t.header.push_back("dataset");
  for (std::size_t j = 0; j < base.portfolio_size(); ++j) t.header.push_back("c" + std::to_string(j));
  for (std::size_t i = 0; i < base.size(); ++i) {
    csv::Row row{base.datasets[i]};
    for (std::size_t j = 0; j < base.portfolio_size(); ++j)
      row.push_back(format_double(base.values(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j))));
    t.rows.push_back(std::move(row));
  }
  return csv::format(t);
}

inline LandmarkerBase landmarkers_from_csv(const std::string& text, std::shared_ptr<const Portfolio> portfolio) {
  const auto t = csv::parse(text);
  LandmarkerBase base;
  const std::size_t p = t.header.size() - 1;
  if (portfolio && p != portfolio->size()) throw Error("landmarker csv: column count does not match portfolio");
  base.values.resize(static_cast<Eigen::Index>(t.rows.size()), static_cast<Eigen::Index>(p));
  for (std::size_t i = 0; i < t.rows.size(); ++i) {
    base.datasets.push_back(t.rows[i][0]);
    for (std::size_t j = 0; j < p; ++j)
      base.values(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = std::stod(t.rows[i][j + 1]);
  }
  base.portfolio = std::move(portfolio);
  return base;
}

}  // namespace lmrep
