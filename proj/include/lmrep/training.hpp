#pragma once

// Training objectives for the dataset encoder (same-origin contrastive
// baseline, distance-alignment metric loss, landmarker reconstruction), pair
// sampling and the momentum gradient-descent loop.

#include "lmrep/core.hpp"
#include "lmrep/csv.hpp"
#include "lmrep/data.hpp"
#include "lmrep/encoder.hpp"
#include "lmrep/portfolio.hpp"

#include <optional>

namespace lmrep {

enum class ObjectiveKind { baseline, metric, reconstruction };

inline std::string to_string(ObjectiveKind k) {
  switch (k) {
    case ObjectiveKind::baseline: return "baseline";
    case ObjectiveKind::metric: return "metric";
    case ObjectiveKind::reconstruction: return "reconstruction";
  }
  return "?";
}

inline ObjectiveKind objective_from_string(const std::string& s) {
  if (s == "baseline") return ObjectiveKind::baseline;
  if (s == "metric") return ObjectiveKind::metric;
  if (s == "reconstruction") return ObjectiveKind::reconstruction;
  throw Error("unknown objective '" + s + "'");
}

struct TrainSettings {
  ObjectiveKind kind = ObjectiveKind::metric;
  int steps = 2000;
  int pairs_per_step = 16;
  int min_rows = 32;
  int max_rows = 128;
  int min_cols = 2;
  int max_cols = 0;  // 0: all columns
  double learning_rate = 1e-3;
  double momentum = 0.9;
  std::uint64_t seed = 0;
  double valid_fraction = 0.2;
  int eval_every = 50;
  int valid_pairs = 64;

  void validate() const {
    if (steps < 0) throw Error("train settings: steps must be non-negative");
    if (pairs_per_step < 1 || min_rows < 1 || max_rows < min_rows || min_cols < 1 || max_cols < 0 ||
        eval_every < 1 || valid_pairs < 1)
      throw Error("train settings: counts must be positive and ranges ordered");
    if (!(learning_rate > 0)) throw Error("train settings: learning rate must be positive");
    if (!(momentum >= 0 && momentum < 1)) throw Error("train settings: momentum must lie in [0, 1)");
    if (!(valid_fraction > 0 && valid_fraction < 1)) throw Error("train settings: valid_fraction must lie in (0, 1)");
  }
};

inline nlohmann::json train_settings_to_json(const TrainSettings& s) {
  return {{"objective", to_string(s.kind)},  {"steps", s.steps},
          {"pairs_per_step", s.pairs_per_step}, {"min_rows", s.min_rows},
          {"max_rows", s.max_rows},          {"min_cols", s.min_cols},
          {"max_cols", s.max_cols},          {"learning_rate", s.learning_rate},
          {"momentum", s.momentum},          {"seed", s.seed},
          {"valid_fraction", s.valid_fraction}, {"eval_every", s.eval_every},
          {"valid_pairs", s.valid_pairs}};
}

inline TrainSettings train_settings_from_json(const nlohmann::json& j, TrainSettings s = {}) {
  if (j.contains("objective")) s.kind = objective_from_string(j.at("objective").get<std::string>());
  s.steps = j.value("steps", s.steps);
  s.pairs_per_step = j.value("pairs_per_step", s.pairs_per_step);
  s.min_rows = j.value("min_rows", s.min_rows);
  s.max_rows = j.value("max_rows", s.max_rows);
  s.min_cols = j.value("min_cols", s.min_cols);
  s.max_cols = j.value("max_cols", s.max_cols);
  s.learning_rate = j.value("learning_rate", s.learning_rate);
  s.momentum = j.value("momentum", s.momentum);
  s.seed = j.value("seed", s.seed);
  s.valid_fraction = j.value("valid_fraction", s.valid_fraction);
  s.eval_every = j.value("eval_every", s.eval_every);
  s.valid_pairs = j.value("valid_pairs", s.valid_pairs);
  s.validate();
  return s;
}

/// Two batches with their landmarker vectors; `same` is set only for the
/// contrastive objective.
struct PairSample {
  std::string name1, name2;
  Batch batch1, batch2;
  Vector landmarkers1, landmarkers2;
  std::optional<bool> same;
};

// ---------------------------------------------------------------------------
// Losses

inline double euclidean(const Vector& a, const Vector& b) {
  if (a.size() != b.size()) throw Error("euclidean: length mismatch");
  return (a - b).norm();
}

/// Mean squared difference between embedding and landmarker distances.
inline double metric_loss_from_distances(const std::vector<double>& embedding_d, const std::vector<double>& landmark_d) {
  if (embedding_d.empty()) throw Error("metric_loss: empty pair list");
  if (embedding_d.size() != landmark_d.size()) throw Error("metric_loss: length mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < embedding_d.size(); ++i) s += (embedding_d[i] - landmark_d[i]) * (embedding_d[i] - landmark_d[i]);
  return s / static_cast<double>(embedding_d.size());
}

inline double reconstruction_loss(const Vector& pred, const Vector& truth) {
  if (pred.size() != truth.size() || pred.size() == 0) throw Error("reconstruction_loss: length mismatch");
  return (pred - truth).squaredNorm() / static_cast<double>(pred.size());
}

inline constexpr double kProbClamp = 1e-7;

/// Cross-entropy of the same-origin probability exp(-d) for one pair.
inline double contrastive_term(double d, bool same) {
  const double p = std::clamp(std::exp(-d), kProbClamp, 1.0 - kProbClamp);
  return same ? -std::log(p) : -std::log(1.0 - p);
}

/// Derivative of contrastive_term with respect to d; zero where clamped.
inline double contrastive_term_derivative(double d, bool same) {
  const double p = std::exp(-d);
  if (p < kProbClamp || p > 1.0 - kProbClamp) return 0.0;
  return same ? 1.0 : -p / (1.0 - p);
}

namespace detail {

inline std::vector<const Batch*> pair_batches(const std::vector<PairSample>& pairs) {
  std::vector<const Batch*> out;
  out.reserve(2 * pairs.size());
  for (const auto& p : pairs) {
    out.push_back(&p.batch1);
    out.push_back(&p.batch2);
  }
  return out;
}

// Adds d(dist)/d(a) and its negation for b, scaled by `coef`.
inline void add_distance_grad(const Vector& a, const Vector& b, double coef, Vector& ga, Vector& gb) {
  const double d = (a - b).norm();
  if (d <= 0.0) return;
  const Vector u = (a - b) * (coef / d);
  ga += u;
  gb -= u;
}

}  // namespace detail

/// Builds the differentiable objective for a list of pairs. Outputs are
/// ordered (pair0.batch1, pair0.batch2, pair1.batch1, ...).
inline Objective make_objective(ObjectiveKind kind, const std::vector<PairSample>& pairs) {
  if (pairs.empty()) throw Error("objective: empty pair list");
  Objective obj;
  obj.batches = detail::pair_batches(pairs);
  const double n = static_cast<double>(pairs.size());
  switch (kind) {
    case ObjectiveKind::metric: {
      std::vector<double> target;
      for (const auto& p : pairs) target.push_back(euclidean(p.landmarkers1, p.landmarkers2));
      obj.kind = OutputKind::embedding;
      obj.loss = [target, n](const std::vector<Vector>& out, std::vector<Vector>& grad) {
        double loss = 0.0;
        for (std::size_t i = 0; i < target.size(); ++i) {
          const double r = euclidean(out[2 * i], out[2 * i + 1]) - target[i];
          loss += r * r;
          detail::add_distance_grad(out[2 * i], out[2 * i + 1], 2.0 * r / n, grad[2 * i], grad[2 * i + 1]);
        }
        return loss / n;
      };
      break;
    }
    case ObjectiveKind::baseline: {
      std::vector<bool> same;
      for (const auto& p : pairs) {
        if (!p.same) throw Error("contrastive_loss: pair without label");
        same.push_back(*p.same);
      }
      obj.kind = OutputKind::embedding;
      obj.loss = [same, n](const std::vector<Vector>& out, std::vector<Vector>& grad) {
        double loss = 0.0;
        for (std::size_t i = 0; i < same.size(); ++i) {
          const double d = euclidean(out[2 * i], out[2 * i + 1]);
          loss += contrastive_term(d, same[i]);
          detail::add_distance_grad(out[2 * i], out[2 * i + 1], contrastive_term_derivative(d, same[i]) / n, grad[2 * i],
                                    grad[2 * i + 1]);
        }
        return loss / n;
      };
      break;
    }
    case ObjectiveKind::reconstruction: {
      std::vector<Vector> truth;
      for (const auto& p : pairs) {
        truth.push_back(p.landmarkers1);
        truth.push_back(p.landmarkers2);
      }
      obj.kind = OutputKind::reconstruction;
      obj.loss = [truth](const std::vector<Vector>& out, std::vector<Vector>& grad) {
        const double m = static_cast<double>(truth.size());
        double loss = 0.0;
        for (std::size_t i = 0; i < truth.size(); ++i) {
          loss += reconstruction_loss(out[i], truth[i]);
          grad[i] = (out[i] - truth[i]) * (2.0 / (static_cast<double>(truth[i].size()) * m));
        }
        return loss / m;
      };
      break;
    }
  }
  return obj;
}

inline double metric_loss(const std::vector<PairSample>& pairs, const EncoderParams& params) {
  return evaluate_objective(params, make_objective(ObjectiveKind::metric, pairs));
}

inline double contrastive_loss(const std::vector<PairSample>& pairs, const EncoderParams& params) {
  return evaluate_objective(params, make_objective(ObjectiveKind::baseline, pairs));
}

/// Mean reconstruction loss over both datasets of every pair.
inline double reconstruction_loss(const std::vector<PairSample>& pairs, const EncoderParams& params) {
  return evaluate_objective(params, make_objective(ObjectiveKind::reconstruction, pairs));
}

// ---------------------------------------------------------------------------
// Pair sampling

namespace detail {

inline std::size_t draw_count(Rng& rng, int lo, int hi, std::size_t available) {
  const auto a = static_cast<std::int64_t>(available);
  const std::int64_t l = std::min<std::int64_t>(lo, a);
  const std::int64_t h = std::clamp<std::int64_t>(hi, l, a);
  return static_cast<std::size_t>(uniform_int(rng, l, h));
}

inline std::vector<std::size_t> draw_cols(const Dataset& ds, const TrainSettings& s, Rng& rng) {
  const auto d = static_cast<std::size_t>(ds.n_features());
  const int hi = s.max_cols == 0 ? static_cast<int>(d) : s.max_cols;
  auto cols = sample_without_replacement(d, draw_count(rng, s.min_cols, hi, d), rng);
  std::sort(cols.begin(), cols.end());
  return cols;
}

inline Batch draw_batch(const Dataset& ds, const TrainSettings& s, Rng& rng) {
  const auto n = static_cast<std::size_t>(ds.x_train.rows());
  auto rows = sample_without_replacement(n, draw_count(rng, s.min_rows, s.max_rows, n), rng);
  std::sort(rows.begin(), rows.end());
  auto cols = draw_cols(ds, s, rng);
  return make_batch(ds, std::move(rows), std::move(cols));
}

// Two disjoint row subsamples of one dataset over the same columns.
inline std::pair<Batch, Batch> draw_disjoint(const Dataset& ds, const TrainSettings& s, Rng& rng) {
  const auto n = static_cast<std::size_t>(ds.x_train.rows());
  if (n < 2) throw Error("sample_pairs: dataset '" + ds.name + "' too small for disjoint subsamples");
  const std::size_t r = draw_count(rng, s.min_rows, s.max_rows, n / 2);
  auto rows = sample_without_replacement(n, 2 * r, rng);
  std::vector<std::size_t> a(rows.begin(), rows.begin() + static_cast<std::ptrdiff_t>(r));
  std::vector<std::size_t> b(rows.begin() + static_cast<std::ptrdiff_t>(r), rows.end());
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  const auto cols = draw_cols(ds, s, rng);
  return {make_batch(ds, std::move(a), cols), make_batch(ds, std::move(b), cols)};
}

}  // namespace detail

/// Metric and reconstruction: uniform pairs of distinct datasets. Baseline:
/// exactly floor(n/2) same-dataset pairs, placed at shuffled positions.
inline std::vector<PairSample> sample_pairs(const std::vector<Dataset>& datasets, const LandmarkerBase* base,
                                            std::size_t n, const TrainSettings& s, Rng& rng) {
  if (datasets.size() < 2) throw Error("sample_pairs: need at least two datasets");
  const bool need_landmarkers = s.kind != ObjectiveKind::baseline;
  if (need_landmarkers && base == nullptr) throw Error("sample_pairs: landmarker base required");
  auto landmarkers = [&](const Dataset& ds) { return need_landmarkers ? base->row(ds.name) : Vector(); };

  std::vector<char> same(n, 0);
  if (s.kind == ObjectiveKind::baseline) {
    std::fill(same.begin(), same.begin() + static_cast<std::ptrdiff_t>(n / 2), 1);
    shuffle(same, rng);
  }
  std::vector<PairSample> pairs;
  pairs.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    PairSample p;
    if (same[i]) {
      const auto& ds = datasets[uniform_index(rng, datasets.size())];
      auto [a, b] = detail::draw_disjoint(ds, s, rng);
      p.name1 = p.name2 = ds.name;
      p.batch1 = std::move(a);
      p.batch2 = std::move(b);
    } else {
      const std::size_t i1 = uniform_index(rng, datasets.size());
      std::size_t i2 = uniform_index(rng, datasets.size() - 1);
      if (i2 >= i1) ++i2;
      p.name1 = datasets[i1].name;
      p.name2 = datasets[i2].name;
      p.batch1 = detail::draw_batch(datasets[i1], s, rng);
      p.batch2 = detail::draw_batch(datasets[i2], s, rng);
      p.landmarkers1 = landmarkers(datasets[i1]);
      p.landmarkers2 = landmarkers(datasets[i2]);
    }
    if (s.kind == ObjectiveKind::baseline) p.same = same[i] != 0;
    pairs.push_back(std::move(p));
  }
  return pairs;
}

inline std::vector<PairSample> sample_pairs(const MetaDataset& meta, const LandmarkerBase* base, std::size_t n,
                                            const TrainSettings& s, Rng& rng) {
  return sample_pairs(meta.meta_train, base, n, s, rng);
}

// ---------------------------------------------------------------------------
// Optimisation loop

struct HistoryRow {
  int step = 0;
  double train_loss = 0.0;
  double valid_loss = 0.0;
};

struct TrainResult {
  EncoderParams params;  // best validation loss
  std::vector<HistoryRow> history;
  int best_step = 0;
  double best_valid_loss = 0.0;
  std::vector<std::string> train_datasets, valid_datasets;

  double initial_valid_loss() const { return history.front().valid_loss; }
};

/// Splits meta-train datasets into optimisation and validation parts.
inline std::pair<std::vector<Dataset>, std::vector<Dataset>> split_for_validation(const std::vector<Dataset>& datasets,
                                                                                 double valid_fraction,
                                                                                 std::uint64_t seed) {
  const std::size_t n = datasets.size();
  if (n < 4) throw Error("train_encoder: need at least four meta-train datasets");
  const auto n_valid = static_cast<std::size_t>(
      std::clamp<long long>(std::llround(valid_fraction * static_cast<double>(n)), 2, static_cast<long long>(n) - 2));
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  Rng rng(seed);
  shuffle(order, rng);
  std::vector<std::size_t> vi(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_valid));
  std::vector<std::size_t> ti(order.begin() + static_cast<std::ptrdiff_t>(n_valid), order.end());
  std::sort(vi.begin(), vi.end());
  std::sort(ti.begin(), ti.end());
  std::vector<Dataset> train, valid;
  for (auto i : ti) train.push_back(datasets[i]);
  for (auto i : vi) valid.push_back(datasets[i]);
  return {std::move(train), std::move(valid)};
}

inline TrainResult train_encoder(const MetaDataset& meta, const LandmarkerBase* base, const TrainSettings& s,
                                 EncoderParams params) {
  s.validate();
  if (s.kind == ObjectiveKind::reconstruction && !params.config.has_head())
    throw Error("train_encoder: reconstruction objective needs an encoder head");
  if (s.kind != ObjectiveKind::baseline) {
    if (!base) throw Error("train_encoder: landmarker base required");
    for (const auto& d : meta.meta_train)
      if (base->index_of(d.name) < 0) throw Error("train_encoder: no landmarkers for '" + d.name + "'");
    if (s.kind == ObjectiveKind::reconstruction &&
        params.config.head_widths.back() != static_cast<int>(base->portfolio_size()))
      throw Error("train_encoder: head output size differs from portfolio size");
  }
  auto [train_sets, valid_sets] = split_for_validation(meta.meta_train, s.valid_fraction, derive_seed(s.seed, "split"));

  TrainResult res;
  for (const auto& d : train_sets) res.train_datasets.push_back(d.name);
  for (const auto& d : valid_sets) res.valid_datasets.push_back(d.name);

  Rng monitor_rng(derive_seed(s.seed, "monitor"));
  const auto monitor_pairs = sample_pairs(train_sets, base, static_cast<std::size_t>(s.valid_pairs), s, monitor_rng);
  const auto monitor = make_objective(s.kind, monitor_pairs);
  Rng valid_rng(derive_seed(s.seed, "valid"));
  const auto valid_pairs = sample_pairs(valid_sets, base, static_cast<std::size_t>(s.valid_pairs), s, valid_rng);
  const auto valid = make_objective(s.kind, valid_pairs);

  auto record = [&](int step) {
    const HistoryRow row{step, evaluate_objective(params, monitor), evaluate_objective(params, valid)};
    if (!std::isfinite(row.train_loss) || !std::isfinite(row.valid_loss))
      throw Error("train_encoder: non-finite loss at step " + std::to_string(step));
    res.history.push_back(row);
    if (res.history.size() == 1 || row.valid_loss < res.best_valid_loss) {
      res.best_valid_loss = row.valid_loss;
      res.best_step = step;
      res.params = params;
    }
  };

  record(0);
  Rng rng(derive_seed(s.seed, "pairs"));
  std::vector<double> velocity(params.size(), 0.0);
  for (int step = 1; step <= s.steps; ++step) {
    const auto pairs = sample_pairs(train_sets, base, static_cast<std::size_t>(s.pairs_per_step), s, rng);
    LossAndGradient lg;
    try {
      lg = loss_and_gradient(params, make_objective(s.kind, pairs));
    } catch (const Error& e) {
      throw Error("train_encoder: diverged at step " + std::to_string(step) + ": " + e.what());
    }
    for (std::size_t i = 0; i < params.values.size(); ++i) {
      velocity[i] = s.momentum * velocity[i] - s.learning_rate * lg.gradient[i];
      params.values[i] += velocity[i];
    }
    if (step % s.eval_every == 0 || step == s.steps) record(step);
  }
  return res;
}

inline TrainResult train_encoder(const MetaDataset& meta, const LandmarkerBase* base, const TrainSettings& s,
                                 const EncoderConfig& config) {
  return train_encoder(meta, base, s, init_params(config, derive_seed(s.seed, "init")));
}

inline std::string history_to_csv(const std::vector<HistoryRow>& history) {
  csv::Table t;
  t.header = {"step", "train_loss", "valid_loss"};
  for (const auto& h : history)
    t.rows.push_back({std::to_string(h.step), format_double(h.train_loss), format_double(h.valid_loss)});
  return csv::format(t);
}

inline std::vector<HistoryRow> history_from_csv(const std::string& text) {
  const auto t = csv::parse(text);
  std::vector<HistoryRow> out;
  for (const auto& r : t.rows) out.push_back({std::stoi(r.at(0)), std::stod(r.at(1)), std::stod(r.at(2))});
  return out;
}

}  // namespace lmrep
