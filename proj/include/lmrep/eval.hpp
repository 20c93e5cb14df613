#pragma once

// Evaluation: rank correlation of representation distances with landmarker
// distances, ADTM curves, Friedman and Wilcoxon-Holm statistics, and the
// report bundle consumed by the plotting scripts.

#include "lmrep/core.hpp"
#include "lmrep/csv.hpp"
#include "lmrep/hpo.hpp"

#include <boost/math/distributions/chi_squared.hpp>
#include <json.hpp>

#include <map>
#include <span>

namespace lmrep {

// ---------------------------------------------------------------------------
// Ranks and Spearman

/// Ascending ranks starting at 1; ties share the mean of their positions.
inline std::vector<double> midranks(std::span<const double> v) {
  std::vector<std::size_t> order(v.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
  std::vector<double> r(v.size());
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j + 1 < order.size() && v[order[j + 1]] == v[order[i]]) ++j;
    const double rank = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t t = i; t <= j; ++t) r[order[t]] = rank;
    i = j + 1;
  }
  return r;
}

inline double pearson(std::span<const double> x, std::span<const double> y) {
  const auto n = static_cast<double>(x.size());
  const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
  const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
  double sxy = 0, sxx = 0, syy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
  }
  if (sxx <= 0 || syy <= 0) throw Error("correlation: degenerate input");
  return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

inline double spearman(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw Error("spearman: length mismatch");
  if (x.size() < 3) throw Error("spearman: need at least three observations");
  const auto rx = midranks(x), ry = midranks(y);
  return pearson(rx, ry);
}

// ---------------------------------------------------------------------------
// Distance correlations

struct CorrelationConfig {
  int repetitions = 20;  // S
  int pairs = 1000;      // N
  std::uint64_t seed = 0;

  void validate() const {
    if (repetitions < 1) throw Error("correlation config: repetitions must be >= 1");
    if (pairs < 3) throw Error("correlation config: pairs must be >= 3");
  }
};

struct CorrelationSummary {
  double mean = 0.0;
  double std = 0.0;  // population, over repetitions
  std::vector<double> values;
};

/// For each repetition draws N ordered pairs of distinct indices uniformly
/// with replacement and correlates dist_a with dist_b over them.
template <typename DistA, typename DistB>
CorrelationSummary distance_correlation(std::size_t n, DistA&& dist_a, DistB&& dist_b, const CorrelationConfig& cfg) {
  cfg.validate();
  if (n < 2) throw Error("distance_correlation: need at least two datasets");
  Rng rng(cfg.seed);
  CorrelationSummary s;
  std::vector<double> a(static_cast<std::size_t>(cfg.pairs)), b(a.size());
  for (int rep = 0; rep < cfg.repetitions; ++rep) {
    for (std::size_t k = 0; k < a.size(); ++k) {
      const std::size_t i = uniform_index(rng, n);
      std::size_t j = uniform_index(rng, n - 1);
      if (j >= i) ++j;
      a[k] = dist_a(i, j);
      b[k] = dist_b(i, j);
    }
    s.values.push_back(spearman(a, b));
  }
  s.mean = std::accumulate(s.values.begin(), s.values.end(), 0.0) / static_cast<double>(s.values.size());
  double var = 0;
  for (double v : s.values) var += (v - s.mean) * (v - s.mean);
  s.std = std::sqrt(var / static_cast<double>(s.values.size()));
  return s;
}

/// corr(d(r_i, r_j), d(l_i, l_j)).
inline CorrelationSummary distance_correlation_repr(const std::vector<Vector>& representations,
                                                    const std::vector<Vector>& landmarkers,
                                                    const CorrelationConfig& cfg) {
  if (representations.size() != landmarkers.size()) throw Error("distance_correlation: size mismatch");
  return distance_correlation(
      representations.size(), [&](std::size_t i, std::size_t j) { return (representations[i] - representations[j]).norm(); },
      [&](std::size_t i, std::size_t j) { return (landmarkers[i] - landmarkers[j]).norm(); }, cfg);
}

/// corr(d(pred_i, l_j), d(l_i, l_j)).
inline CorrelationSummary distance_correlation_pred(const std::vector<Vector>& predictions,
                                                    const std::vector<Vector>& landmarkers,
                                                    const CorrelationConfig& cfg) {
  if (predictions.size() != landmarkers.size()) throw Error("distance_correlation: size mismatch");
  return distance_correlation(
      predictions.size(), [&](std::size_t i, std::size_t j) { return (predictions[i] - landmarkers[j]).norm(); },
      [&](std::size_t i, std::size_t j) { return (landmarkers[i] - landmarkers[j]).norm(); }, cfg);
}

// ---------------------------------------------------------------------------
// ADTM

struct AdtmBounds {
  double min = 0.0;
  double max = 0.0;
};

/// Per-dataset objective range over every trace given.
inline std::map<std::string, AdtmBounds> adtm_bounds(const std::vector<OptimizationTrace>& traces) {
  std::map<std::string, AdtmBounds> b;
  for (const auto& t : traces)
    for (const auto& e : t.entries) {
      auto [it, inserted] = b.try_emplace(t.dataset, AdtmBounds{e.objective, e.objective});
      if (!inserted) {
        it->second.min = std::min(it->second.min, e.objective);
        it->second.max = std::max(it->second.max, e.objective);
      }
    }
  return b;
}

struct AdtmCurve {
  std::vector<double> mean;
  std::vector<double> std;  // population, over (dataset, seed) traces
  std::size_t traces = 0;
};

/// Scaled regret of the best-so-far value, averaged over the given traces.
/// Traces on datasets with a degenerate range are skipped with a warning.
inline AdtmCurve adtm(const std::vector<const OptimizationTrace*>& traces, const std::map<std::string, AdtmBounds>& bounds) {
  std::vector<std::vector<double>> curves;
  std::size_t budget = 0;
  for (const auto* t : traces) {
    const auto it = bounds.find(t->dataset);
    if (it == bounds.end()) throw Error("adtm: no bounds for dataset '" + t->dataset + "'");
    const auto [lo, hi] = it->second;
    if (!(hi > lo)) {
      log_warning("adtm: degenerate objective range on '" + t->dataset + "', skipped");
      continue;
    }
    if (budget == 0) budget = t->size();
    if (t->size() != budget) throw Error("adtm: traces differ in length");
    std::vector<double> c;
    for (double b : t->best_so_far()) c.push_back(std::clamp((hi - b) / (hi - lo), 0.0, 1.0));
    curves.push_back(std::move(c));
  }
  AdtmCurve out;
  out.traces = curves.size();
  out.mean.assign(budget, 0.0);
  out.std.assign(budget, 0.0);
  if (curves.empty()) return out;
  const auto n = static_cast<double>(curves.size());
  for (std::size_t t = 0; t < budget; ++t) {
    for (const auto& c : curves) out.mean[t] += c[t];
    out.mean[t] /= n;
    for (const auto& c : curves) out.std[t] += (c[t] - out.mean[t]) * (c[t] - out.mean[t]);
    out.std[t] = std::sqrt(out.std[t] / n);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Friedman, Wilcoxon signed-rank, Holm

/// Row-wise ranks with 1 = highest value, ties averaged.
inline Matrix row_ranks_descending(const Matrix& perf) {
  Matrix r(perf.rows(), perf.cols());
  for (Eigen::Index i = 0; i < perf.rows(); ++i) {
    std::vector<double> neg(static_cast<std::size_t>(perf.cols()));
    for (Eigen::Index j = 0; j < perf.cols(); ++j) neg[static_cast<std::size_t>(j)] = -perf(i, j);
    const auto mr = midranks(neg);
    for (Eigen::Index j = 0; j < perf.cols(); ++j) r(i, j) = mr[static_cast<std::size_t>(j)];
  }
  return r;
}

inline Vector average_ranks(const Matrix& perf) { return row_ranks_descending(perf).colwise().mean().transpose(); }

struct FriedmanResult {
  double statistic = 0.0;
  double p_value = 1.0;
  Vector average_ranks;
};

inline double chi_squared_survival(double x, double df) {
  if (x <= 0) return 1.0;
  return boost::math::cdf(boost::math::complement(boost::math::chi_squared(df), x));
}

inline FriedmanResult friedman_test(const Matrix& perf) {
  const auto n = perf.rows(), k = perf.cols();
  if (n < 2 || k < 2) throw Error("friedman_test: need at least two datasets and two strategies");
  FriedmanResult res;
  res.average_ranks = average_ranks(perf);
  const double kk = static_cast<double>(k);
  const double stat = 12.0 * static_cast<double>(n) / (kk * (kk + 1)) *
                      (res.average_ranks.squaredNorm() - kk * (kk + 1) * (kk + 1) / 4.0);
  res.statistic = std::max(stat, 0.0);
  if (res.statistic < 1e-12) {
    res.statistic = 0.0;
    res.p_value = 1.0;
  } else {
    res.p_value = chi_squared_survival(res.statistic, kk - 1);
  }
  return res;
}

struct SignedRankResult {
  double p_value = 1.0;
  double w_plus = 0.0;
  std::size_t n = 0;  // nonzero differences
  bool exact = true;
  bool insufficient = false;
};

inline constexpr std::size_t kWilcoxonExactMax = 25;

/// Two-sided Wilcoxon signed-rank test; zero differences dropped.
inline SignedRankResult wilcoxon_signed_rank(std::span<const double> diffs) {
  std::vector<double> d;
  for (double v : diffs)
    if (v != 0.0) d.push_back(v);
  SignedRankResult res;
  res.n = d.size();
  if (res.n < 3) {
    res.insufficient = true;
    return res;
  }
  std::vector<double> absd;
  for (double v : d) absd.push_back(std::abs(v));
  const auto ranks = midranks(absd);
  // Doubled ranks are integral even with ties.
  std::vector<int> r2;
  int w2 = 0;
  for (std::size_t i = 0; i < d.size(); ++i) {
    r2.push_back(static_cast<int>(std::lround(2.0 * ranks[i])));
    if (d[i] > 0) w2 += r2.back();
  }
  res.w_plus = w2 / 2.0;
  if (res.n <= kWilcoxonExactMax) {
    const int total = std::accumulate(r2.begin(), r2.end(), 0);
    std::vector<double> dist(static_cast<std::size_t>(total) + 1, 0.0);
    dist[0] = 1.0;
    for (int r : r2)
      for (int s = total; s >= r; --s) dist[static_cast<std::size_t>(s)] += dist[static_cast<std::size_t>(s - r)];
    const double all = std::ldexp(1.0, static_cast<int>(res.n));
    double lower = 0, upper = 0;
    for (int s = 0; s <= total; ++s) {
      if (s <= w2) lower += dist[static_cast<std::size_t>(s)];
      if (s >= w2) upper += dist[static_cast<std::size_t>(s)];
    }
    res.p_value = std::min(1.0, 2.0 * std::min(lower, upper) / all);
  } else {
    res.exact = false;
    const double n = static_cast<double>(res.n);
    const double mean = n * (n + 1) / 4.0;
    double var = n * (n + 1) * (2 * n + 1) / 24.0;
    std::map<int, int> ties;
    for (int r : r2) ++ties[r];
    for (const auto& [r, t] : ties) var -= (static_cast<double>(t) * t * t - t) / 48.0;
    const double z = std::max(std::abs(res.w_plus - mean) - 0.5, 0.0) / std::sqrt(var);
    res.p_value = std::min(1.0, 2.0 * (1.0 - normal_cdf(z)));
  }
  return res;
}

/// Holm step-down adjustment, returned in the input order.
inline std::vector<double> holm_adjust(const std::vector<double>& p) {
  const std::size_t m = p.size();
  std::vector<std::size_t> order(m);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return p[a] < p[b]; });
  std::vector<double> adj(m);
  double running = 0.0;
  for (std::size_t i = 0; i < m; ++i) {
    running = std::max(running, std::min(1.0, static_cast<double>(m - i) * p[order[i]]));
    adj[order[i]] = running;
  }
  return adj;
}

struct WilcoxonHolmResult {
  Vector average_ranks;
  Matrix p_raw;       // k x k, diagonal 1
  Matrix p_adjusted;  // k x k, diagonal 1
  std::vector<std::vector<bool>> insufficient;
  std::vector<std::vector<int>> groups;  // strategy indices, best rank first
};

/// Cliques of mutually indistinguishable strategies along the average-rank
/// order: from each position, the longest run whose pairs all have adjusted
/// p >= alpha; runs contained in an earlier run are dropped.
inline std::vector<std::vector<int>> indistinguishable_groups(const Vector& avg_ranks, const Matrix& p_adjusted,
                                                              double alpha) {
  const auto k = avg_ranks.size();
  std::vector<int> order(static_cast<std::size_t>(k));
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return avg_ranks[a] < avg_ranks[b]; });
  std::vector<std::vector<int>> groups;
  std::size_t last_end = 0;
  for (std::size_t i = 0; i < order.size(); ++i) {
    std::size_t j = i;
    while (j + 1 < order.size()) {
      bool ok = true;
      for (std::size_t a = i; a <= j + 1 && ok; ++a)
        if (p_adjusted(order[a], order[j + 1]) < alpha) ok = false;
      if (!ok) break;
      ++j;
    }
    if (j > i && (groups.empty() || j + 1 > last_end)) {
      groups.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(i), order.begin() + static_cast<std::ptrdiff_t>(j) + 1);
      last_end = j + 1;
    }
  }
  return groups;
}

inline WilcoxonHolmResult wilcoxon_holm(const Matrix& perf, double alpha = 0.05) {
  const auto k = perf.cols();
  if (k < 2) throw Error("wilcoxon_holm: need at least two strategies");
  WilcoxonHolmResult res;
  res.average_ranks = average_ranks(perf);
  res.p_raw = Matrix::Ones(k, k);
  res.p_adjusted = Matrix::Ones(k, k);
  res.insufficient.assign(static_cast<std::size_t>(k), std::vector<bool>(static_cast<std::size_t>(k), false));
  std::vector<std::pair<Eigen::Index, Eigen::Index>> pairs;
  std::vector<double> raw;
  for (Eigen::Index a = 0; a < k; ++a)
    for (Eigen::Index b = a + 1; b < k; ++b) {
      std::vector<double> diff(static_cast<std::size_t>(perf.rows()));
      for (Eigen::Index i = 0; i < perf.rows(); ++i) diff[static_cast<std::size_t>(i)] = perf(i, a) - perf(i, b);
      const auto w = wilcoxon_signed_rank(diff);
      res.p_raw(a, b) = res.p_raw(b, a) = w.p_value;
      res.insufficient[static_cast<std::size_t>(a)][static_cast<std::size_t>(b)] =
          res.insufficient[static_cast<std::size_t>(b)][static_cast<std::size_t>(a)] = w.insufficient;
      pairs.emplace_back(a, b);
      raw.push_back(w.p_value);
    }
  const auto adj = holm_adjust(raw);
  for (std::size_t i = 0; i < pairs.size(); ++i)
    res.p_adjusted(pairs[i].first, pairs[i].second) = res.p_adjusted(pairs[i].second, pairs[i].first) = adj[i];
  res.groups = indistinguishable_groups(res.average_ranks, res.p_adjusted, alpha);
  return res;
}

// ---------------------------------------------------------------------------
// Experiment results and the report bundle

struct CorrelationRow {
  std::string encoder;   // baseline | metric | reconstruction
  std::string distance;  // representation | prediction
  double mean = 0.0;
  double std = 0.0;

  bool operator==(const CorrelationRow&) const = default;
};

struct ExperimentResult {
  std::vector<std::string> strategies;
  std::vector<std::string> datasets;
  std::vector<std::uint64_t> seeds;
  int budget = 0;
  int warmstart = 0;
  std::vector<OptimizationTrace> traces;

  const OptimizationTrace* find(const std::string& strategy, const std::string& dataset, std::uint64_t seed) const {
    for (const auto& t : traces)
      if (t.strategy == strategy && t.dataset == dataset && t.seed == seed) return &t;
    return nullptr;
  }

  /// Every (strategy, dataset, seed) present once, each trace well formed.
  void validate() const {
    if (traces.size() != strategies.size() * datasets.size() * seeds.size())
      throw Error("experiment result: unexpected number of traces");
    for (const auto& s : strategies)
      for (const auto& d : datasets)
        for (auto seed : seeds) {
          const auto* t = find(s, d, seed);
          if (!t) throw Error("experiment result: missing trace " + s + "/" + d);
          if (!t->well_formed(static_cast<std::size_t>(budget))) throw Error("experiment result: malformed trace " + s + "/" + d);
        }
  }

  std::vector<const OptimizationTrace*> traces_of(const std::string& strategy) const {
    std::vector<const OptimizationTrace*> out;
    for (const auto& d : datasets)
      for (auto seed : seeds)
        if (const auto* t = find(strategy, d, seed)) out.push_back(t);
    return out;
  }

  /// datasets x strategies: best-so-far at `iteration` (1-based), mean over
  /// seeds.
  Matrix performance_at(int iteration) const {
    Matrix m(static_cast<Eigen::Index>(datasets.size()), static_cast<Eigen::Index>(strategies.size()));
    for (std::size_t i = 0; i < datasets.size(); ++i)
      for (std::size_t j = 0; j < strategies.size(); ++j) {
        double s = 0;
        for (auto seed : seeds) s += find(strategies[j], datasets[i], seed)->best_so_far()[static_cast<std::size_t>(iteration - 1)];
        m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = s / static_cast<double>(seeds.size());
      }
    return m;
  }

  std::map<std::string, AdtmCurve> adtm_curves() const {
    const auto bounds = adtm_bounds(traces);
    std::map<std::string, AdtmCurve> out;
    for (const auto& s : strategies) out[s] = adtm(traces_of(s), bounds);
    return out;
  }
};

inline constexpr int kReportSchemaVersion = 1;

struct AdtmRow {
  std::string strategy;
  int iteration = 0;
  double mean = 0.0;
  double std = 0.0;
};

struct CdPanel {
  int iteration = 0;
  std::vector<double> average_ranks;
  double friedman_statistic = 0.0;
  double friedman_p = 1.0;
  std::vector<std::vector<double>> p_adjusted;
  std::vector<std::vector<std::string>> groups;
};

struct ReportBundle {
  std::vector<AdtmRow> adtm;
  std::vector<std::string> strategies;
  double alpha = 0.05;
  std::vector<CdPanel> cd;
  std::vector<CorrelationRow> correlations;
  nlohmann::json manifest;
};

inline CdPanel cd_panel(const ExperimentResult& r, int iteration, double alpha) {
  const Matrix perf = r.performance_at(iteration);
  const auto f = friedman_test(perf);
  const auto w = wilcoxon_holm(perf, alpha);
  CdPanel p;
  p.iteration = iteration;
  p.average_ranks.assign(w.average_ranks.data(), w.average_ranks.data() + w.average_ranks.size());
  p.friedman_statistic = f.statistic;
  p.friedman_p = f.p_value;
  for (Eigen::Index a = 0; a < w.p_adjusted.rows(); ++a) {
    std::vector<double> row;
    for (Eigen::Index b = 0; b < w.p_adjusted.cols(); ++b) row.push_back(w.p_adjusted(a, b));
    p.p_adjusted.push_back(std::move(row));
  }
  for (const auto& g : w.groups) {
    std::vector<std::string> names;
    for (int i : g) names.push_back(r.strategies[static_cast<std::size_t>(i)]);
    p.groups.push_back(std::move(names));
  }
  return p;
}

inline ReportBundle make_report(const ExperimentResult& r, const std::vector<CorrelationRow>& correlations, double alpha,
                                nlohmann::json manifest) {
  r.validate();
  ReportBundle b;
  b.strategies = r.strategies;
  b.alpha = alpha;
  const auto curves = r.adtm_curves();
  for (const auto& s : r.strategies) {
    const auto& c = curves.at(s);
    for (std::size_t t = 0; t < c.mean.size(); ++t) b.adtm.push_back({s, static_cast<int>(t + 1), c.mean[t], c.std[t]});
  }
  if (r.datasets.size() >= 2 && r.strategies.size() >= 2) {
    b.cd.push_back(cd_panel(r, r.warmstart, alpha));
    b.cd.push_back(cd_panel(r, r.budget, alpha));
  }
  b.correlations = correlations;
  b.manifest = std::move(manifest);
  return b;
}

inline std::string adtm_to_csv(const std::vector<AdtmRow>& rows) {
  csv::Table t;
  t.header = {"strategy", "iteration", "mean", "std"};
  for (const auto& r : rows) t.rows.push_back({r.strategy, std::to_string(r.iteration), format_double(r.mean), format_double(r.std)});
  return csv::format(t);
}

inline std::vector<AdtmRow> adtm_from_csv(const std::string& text) {
  const auto t = csv::parse(text);
  std::vector<AdtmRow> out;
  for (const auto& r : t.rows) out.push_back({r.at(0), std::stoi(r.at(1)), std::stod(r.at(2)), std::stod(r.at(3))});
  return out;
}

inline nlohmann::json cd_to_json(const ReportBundle& b) {
  nlohmann::json panels = nlohmann::json::array();
  for (const auto& p : b.cd)
    panels.push_back({{"iteration", p.iteration},
                      {"average_ranks", p.average_ranks},
                      {"friedman", {{"statistic", p.friedman_statistic}, {"p_value", p.friedman_p}}},
                      {"p_adjusted", p.p_adjusted},
                      {"groups", p.groups}});
  return {{"schema_version", kReportSchemaVersion}, {"alpha", b.alpha}, {"strategies", b.strategies}, {"panels", panels}};
}

inline void cd_from_json(const nlohmann::json& j, ReportBundle& b) {
  if (j.at("schema_version").get<int>() != kReportSchemaVersion) throw Error("cd.json: unsupported schema version");
  b.alpha = j.at("alpha").get<double>();
  b.strategies = j.at("strategies").get<std::vector<std::string>>();
  b.cd.clear();
  for (const auto& p : j.at("panels")) {
    CdPanel c;
    c.iteration = p.at("iteration").get<int>();
    c.average_ranks = p.at("average_ranks").get<std::vector<double>>();
    c.friedman_statistic = p.at("friedman").at("statistic").get<double>();
    c.friedman_p = p.at("friedman").at("p_value").get<double>();
    c.p_adjusted = p.at("p_adjusted").get<std::vector<std::vector<double>>>();
    c.groups = p.at("groups").get<std::vector<std::vector<std::string>>>();
    b.cd.push_back(std::move(c));
  }
}

inline nlohmann::json correlations_to_json(const std::vector<CorrelationRow>& rows) {
  nlohmann::json a = nlohmann::json::array();
  for (const auto& r : rows) a.push_back({{"encoder", r.encoder}, {"distance", r.distance}, {"mean", r.mean}, {"std", r.std}});
  return {{"schema_version", kReportSchemaVersion}, {"rows", a}};
}

inline std::vector<CorrelationRow> correlations_from_json(const nlohmann::json& j) {
  if (j.at("schema_version").get<int>() != kReportSchemaVersion) throw Error("correlations.json: unsupported schema version");
  std::vector<CorrelationRow> out;
  for (const auto& r : j.at("rows"))
    out.push_back({r.at("encoder").get<std::string>(), r.at("distance").get<std::string>(), r.at("mean").get<double>(),
                   r.at("std").get<double>()});
  return out;
}

inline void export_report(const ReportBundle& b, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  write_file_atomic(dir / "adtm.csv", adtm_to_csv(b.adtm));
  write_file_atomic(dir / "cd.json", cd_to_json(b).dump(2) + "\n");
  write_file_atomic(dir / "correlations.json", correlations_to_json(b.correlations).dump(2) + "\n");
  auto manifest = b.manifest;
  manifest["schema_version"] = kReportSchemaVersion;
  write_file_atomic(dir / "manifest.json", manifest.dump(2) + "\n");
}

inline ReportBundle read_report(const std::filesystem::path& dir) {
  for (const char* f : {"adtm.csv", "cd.json", "correlations.json"})
    if (!std::filesystem::exists(dir / f)) throw Error("report bundle incomplete: missing " + std::string(f));
  ReportBundle b;
  b.adtm = adtm_from_csv(read_file(dir / "adtm.csv"));
  cd_from_json(nlohmann::json::parse(read_file(dir / "cd.json")), b);
  b.correlations = correlations_from_json(nlohmann::json::parse(read_file(dir / "correlations.json")));
  if (std::filesystem::exists(dir / "manifest.json")) b.manifest = nlohmann::json::parse(read_file(dir / "manifest.json"));
  return b;
}

}  // namespace lmrep
