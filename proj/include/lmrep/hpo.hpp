#pragma once

// Bayesian optimisation over the search space: Matern 5/2 GP surrogate on
// the unit cube, expected improvement maximised over random candidates,
// warm-start injection, and the random-search baseline.

#include "lmrep/core.hpp"
#include "lmrep/csv.hpp"
#include "lmrep/portfolio.hpp"
#include "lmrep/space.hpp"

namespace lmrep {

inline double matern52(double r) {
  const double s = std::sqrt(5.0) * r;
  return (1.0 + s + s * s / 3.0) * std::exp(-s);
}

inline double normal_pdf(double z) { return std::exp(-0.5 * z * z) / std::sqrt(2.0 * M_PI); }
inline double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::sqrt(2.0)); }

struct GpHyper {
  Vector lengthscales;
  double signal_variance = 1.0;
  double noise_variance = 1e-6;
};

struct GpPrediction {
  double mean = 0.0;
  double variance = 0.0;
};

class GpSurrogate {
 public:
  Matrix x;            // observations x dims, unit cube
  Vector y;            // raw objectives
  double y_mean = 0.0;
  double y_scale = 1.0;
  GpHyper hyper;
  double jitter = 0.0;
  double log_marginal_likelihood = 0.0;

  double kernel(const Vector& a, const Vector& b) const {
    return hyper.signal_variance * matern52(((a - b).array() / hyper.lengthscales.array()).matrix().norm());
  }

  Vector cross(const Vector& q) const {
    Vector k(x.rows());
    for (Eigen::Index i = 0; i < x.rows(); ++i) k[i] = kernel(x.row(i).transpose(), q);
    return k;
  }

  /// Posterior in the units of the observed objective.
  GpPrediction predict(const Vector& q) const {
    const Vector k = cross(q);
    const Vector v = chol_.matrixL().solve(k);
    const double var = std::max(hyper.signal_variance - v.squaredNorm(), 0.0);
    return {y_mean + y_scale * k.dot(alpha_), y_scale * y_scale * var};
  }

  double best_observed() const { return y.maxCoeff(); }
  std::size_t size() const { return static_cast<std::size_t>(x.rows()); }

  /// Fits with fixed kernel hyperparameters. With `standardize`, targets are
  /// centred and scaled to unit variance (zero variance: centred only).
  static GpSurrogate fit_fixed(const Matrix& x, const Vector& y, const GpHyper& hyper, bool standardize = true) {
    if (x.rows() < 1 || x.rows() != y.size()) throw Error("gp_fit: need at least one observation");
    if (!y.allFinite()) throw Error("gp_fit: non-finite objective");
    if (hyper.lengthscales.size() != x.cols()) throw Error("gp_fit: lengthscale dimension mismatch");
    GpSurrogate gp;
    gp.x = x;
    gp.y = y;
    gp.hyper = hyper;
    if (standardize) {
      gp.y_mean = y.mean();
      const double var = (y.array() - gp.y_mean).square().mean();
      gp.y_scale = var > 0 ? std::sqrt(var) : 1.0;
    }
    const Vector ys = (y.array() - gp.y_mean) / gp.y_scale;
    const auto n = x.rows();
    Eigen::MatrixXd k(n, n);
    for (Eigen::Index i = 0; i < n; ++i)
      for (Eigen::Index j = 0; j <= i; ++j) k(i, j) = k(j, i) = gp.kernel(x.row(i).transpose(), x.row(j).transpose());
    k.diagonal().array() += hyper.noise_variance;
    gp.chol_.compute(k);
    for (double jit = 1e-10; gp.chol_.info() != Eigen::Success; jit *= 10) {
      if (jit > 1e-4 * (1 + 1e-9)) throw Error("gp_fit: kernel matrix not positive definite after jitter");
      Eigen::MatrixXd kj = k;
      kj.diagonal().array() += jit;
      gp.chol_.compute(kj);
      gp.jitter = jit;
    }
    gp.alpha_ = gp.chol_.solve(ys);
    const Eigen::MatrixXd l = gp.chol_.matrixL();
    gp.log_marginal_likelihood = -0.5 * ys.dot(gp.alpha_) - l.diagonal().array().log().sum() -
                                 0.5 * static_cast<double>(n) * std::log(2.0 * M_PI);
    return gp;
  }

 private:
  Eigen::LLT<Eigen::MatrixXd> chol_;
  Vector alpha_;
};

/// Per-dimension median absolute pairwise difference (floored at 1e-2),
/// scaled by sqrt(dims) so that a typical pair sits at unit distance.
inline Vector median_lengthscales(const Matrix& x) {
  const auto n = x.rows(), d = x.cols();
  Vector ls = Vector::Constant(d, std::sqrt(static_cast<double>(d)));
  if (n < 2) return ls;
  for (Eigen::Index j = 0; j < d; ++j) {
    std::vector<double> diffs;
    for (Eigen::Index a = 0; a < n; ++a)
      for (Eigen::Index b = a + 1; b < n; ++b) diffs.push_back(std::abs(x(a, j) - x(b, j)));
    std::nth_element(diffs.begin(), diffs.begin() + static_cast<std::ptrdiff_t>(diffs.size() / 2), diffs.end());
    double med = diffs[diffs.size() / 2];
    if (diffs.size() % 2 == 0) {
      const double lower = *std::max_element(diffs.begin(), diffs.begin() + static_cast<std::ptrdiff_t>(diffs.size() / 2));
      med = 0.5 * (med + lower);
    }
    ls[j] = std::max(med, 1e-2) * std::sqrt(static_cast<double>(d));
  }
  return ls;
}

/// Fits on standardised targets, choosing lengthscale multiplier, signal
/// variance and noise variance from a 3x3x3 grid by marginal likelihood.
inline GpSurrogate gp_fit(const Matrix& x, const Vector& y) {
  const Vector base = median_lengthscales(x);
  std::optional<GpSurrogate> best;
  for (double ls : {0.5, 1.0, 2.0})
    for (double sv : {0.5, 1.0, 2.0})
      for (double nv : {1e-6, 1e-3, 1e-1}) {
        GpHyper h{base * ls, sv, nv};
        try {
          auto gp = GpSurrogate::fit_fixed(x, y, h, true);
          if (!best || gp.log_marginal_likelihood > best->log_marginal_likelihood) best = std::move(gp);
        } catch (const Error&) {
        }
      }
  if (!best) throw Error("gp_fit: no kernel setting produced a valid factorisation");
  return std::move(*best);
}

/// Expected improvement for maximisation.
inline double expected_improvement(double mean, double sigma, double best) {
  if (!(sigma > 0)) return std::max(mean - best, 0.0);
  const double z = (mean - best) / sigma;
  return std::max(sigma * (z * normal_cdf(z) + normal_pdf(z)), 0.0);
}

inline double expected_improvement(const GpSurrogate& gp, const Vector& x, double best) {
  const auto p = gp.predict(x);
  return expected_improvement(p.mean, std::sqrt(p.variance), best);
}

/// EI argmax over `n_candidates` random configurations, first on ties.
inline HyperparameterConfig propose_next(const GpSurrogate& gp, const SearchSpace& space, Rng& rng,
                                         int n_candidates = 512, double* ei_out = nullptr) {
  if (n_candidates < 1) throw Error("propose_next: need at least one candidate");
  const double best = gp.best_observed();
  HyperparameterConfig arg;
  double best_ei = -1.0;
  for (int i = 0; i < n_candidates; ++i) {
    const auto c = space.sample(rng);
    const double ei = expected_improvement(gp, space.to_unit(c), best);
    if (ei > best_ei) {
      best_ei = ei;
      arg = c;
    }
  }
  if (ei_out) *ei_out = best_ei;
  return arg;
}

// ---------------------------------------------------------------------------
// Traces

enum class Phase { warmstart, bo };

inline std::string to_string(Phase p) { return p == Phase::warmstart ? "warmstart" : "bo"; }

inline Phase phase_from_string(const std::string& s) {
  if (s == "warmstart") return Phase::warmstart;
  if (s == "bo") return Phase::bo;
  throw Error("unknown phase '" + s + "'");
}

struct TraceEntry {
  int iteration = 0;  // 1-based
  HyperparameterConfig config;
  double objective = 0.0;
  Phase phase = Phase::warmstart;
};

struct OptimizationTrace {
  std::string dataset;
  std::string strategy;
  std::uint64_t seed = 0;
  std::vector<TraceEntry> entries;

  std::size_t size() const { return entries.size(); }

  std::vector<double> best_so_far() const {
    std::vector<double> out;
    double best = -std::numeric_limits<double>::infinity();
    for (const auto& e : entries) out.push_back(best = std::max(best, e.objective));
    return out;
  }

  std::size_t warmstart_count() const {
    return static_cast<std::size_t>(
        std::count_if(entries.begin(), entries.end(), [](const TraceEntry& e) { return e.phase == Phase::warmstart; }));
  }

  /// Budget length, 1-based consecutive iterations, warm-start entries
  /// before bo entries, finite objectives.
  bool well_formed(std::size_t budget) const {
    if (entries.size() != budget) return false;
    bool seen_bo = false;
    for (std::size_t i = 0; i < entries.size(); ++i) {
      const auto& e = entries[i];
      if (e.iteration != static_cast<int>(i + 1) || !std::isfinite(e.objective)) return false;
      if (e.phase == Phase::bo) seen_bo = true;
      else if (seen_bo) return false;
    }
    return true;
  }
};

/// Evaluates the warm-start configurations in order, then fits the GP on
/// all observations and evaluates the EI proposal until `budget` entries.
inline OptimizationTrace run_hpo(const Dataset& ds, const std::vector<HyperparameterConfig>& warmstart, int budget,
                                 const Evaluator& evaluator, std::uint64_t seed, int n_candidates = 512,
                                 const SearchSpace& space = {}) {
  if (budget < 1) throw Error("run_hpo: budget must be positive");
  if (static_cast<int>(warmstart.size()) > budget) throw Error("run_hpo: more warm-start configurations than budget");
  OptimizationTrace trace;
  trace.dataset = ds.name;
  trace.seed = seed;
  int it = 0;
  for (const auto& c : warmstart)
    trace.entries.push_back({++it, c, evaluate_or_default(evaluator, ds, c), Phase::warmstart});
  Rng rng(derive_seed(seed, "bo"));
  while (it < budget) {
    HyperparameterConfig next;
    if (trace.entries.empty()) {
      next = space.sample(rng);
    } else {
      Matrix x(static_cast<Eigen::Index>(trace.size()), static_cast<Eigen::Index>(space.size()));
      Vector y(static_cast<Eigen::Index>(trace.size()));
      for (std::size_t i = 0; i < trace.size(); ++i) {
        x.row(static_cast<Eigen::Index>(i)) = space.to_unit(trace.entries[i].config).transpose();
        y[static_cast<Eigen::Index>(i)] = trace.entries[i].objective;
      }
      next = propose_next(gp_fit(x, y), space, rng, n_candidates);
    }
    trace.entries.push_back({++it, next, evaluate_or_default(evaluator, ds, next), Phase::bo});
  }
  return trace;
}

/// I.i.d. samples from the space; the first `warmstart` entries are labelled
/// as warm-start so that curves align with the BO strategies.
inline OptimizationTrace run_random_search(const Dataset& ds, int budget, const Evaluator& evaluator,
                                           std::uint64_t seed, int warmstart = 5, const SearchSpace& space = {}) {
  if (budget < 1) throw Error("run_random_search: budget must be positive");
  OptimizationTrace trace;
  trace.dataset = ds.name;
  trace.strategy = "random_search";
  trace.seed = seed;
  Rng rng(derive_seed(seed, "random_search"));
  for (int it = 1; it <= budget; ++it) {
    const auto c = space.sample(rng);
    trace.entries.push_back(
        {it, c, evaluate_or_default(evaluator, ds, c), it <= warmstart ? Phase::warmstart : Phase::bo});
  }
  return trace;
}

inline std::string trace_to_csv(const OptimizationTrace& t, const SearchSpace& space = {}) {
  csv::Table table;
  table.header = {"iteration", "phase"};
  for (const auto& d : space.dims()) table.header.push_back(d.name);
  table.header.push_back("objective");
  for (const auto& e : t.entries) {
    csv::Row row{std::to_string(e.iteration), to_string(e.phase)};
    for (std::size_t i = 0; i < space.size(); ++i) row.push_back(format_double(e.config[i]));
    row.push_back(format_double(e.objective));
    table.rows.push_back(std::move(row));
  }
  return csv::format(table);
}

inline OptimizationTrace trace_from_csv(const std::string& text, const SearchSpace& space = {}) {
  const auto table = csv::parse(text);
  if (table.header.size() != space.size() + 3) throw Error("trace csv: unexpected column count");
  OptimizationTrace t;
  for (const auto& r : table.rows) {
    TraceEntry e;
    e.iteration = std::stoi(r[0]);
    e.phase = phase_from_string(r[1]);
    for (std::size_t i = 0; i < space.size(); ++i) e.config[i] = std::stod(r[i + 2]);
    e.objective = std::stod(r[space.size() + 2]);
    t.entries.push_back(e);
  }
  return t;
}

}  // namespace lmrep
