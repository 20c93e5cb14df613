#pragma once

// Experiment configuration and the pipeline stages behind the command-line
// subcommands: ingest, portfolio, train, evaluate, report.
//
// Output layout under the run directory:
//   meta/                     index.json, datasets/<name>.json
//   portfolio/                portfolio.json, landmarkers.csv, valid_landmarkers.csv,
//                             clusters.json, table/{configs.json,table.csv}
//   encoders/                 <objective>.json, <objective>_history.csv
//   traces/<strategy>/        <dataset>_seed<seed>.csv
//   report/                   adtm.csv, cd.json, correlations.json, manifest.json

#include "lmrep/data.hpp"
#include "lmrep/encoder.hpp"
#include "lmrep/eval.hpp"
#include "lmrep/hpo.hpp"
#include "lmrep/portfolio.hpp"
#include "lmrep/training.hpp"
#include "lmrep/warmstart.hpp"

#include <json.hpp>

#include <map>
#include <optional>

namespace lmrep {

inline const std::vector<std::string> kDefaultStrategies = {
    "none", "random_portfolio", "rank", "landmarkers", "knn_encoder:metric", "knn_encoder:reconstruction"};

struct ExperimentConfig {
  std::uint64_t seed = 0;
  int workers = 1;
  std::filesystem::path data_dir;
  std::filesystem::path out_dir = "lmrep-run";

  std::optional<int> synthetic_datasets;
  SyntheticProfile profile;
  double valid_fraction = 0.25;
  double test_fraction = 0.25;

  int portfolio_size = 100;
  int candidate_count = 200;
  std::string evaluator = "gbt";  // gbt | replay | replay:<table dir>

  std::map<std::string, nlohmann::json> encoders;  // per objective, merged over defaults
  nlohmann::json training = nlohmann::json::object();
  std::map<std::string, nlohmann::json> training_overrides;

  int budget = 20;
  int warmstart = 5;
  int bo_candidates = 512;
  std::vector<std::uint64_t> hpo_seeds = {0, 1, 2};

  CorrelationConfig correlation;
  double alpha = 0.05;
  std::vector<std::string> strategies = kDefaultStrategies;

  std::filesystem::path plot_script;
  std::string python = "python3";

  std::uint64_t stage_seed(const std::string& stage) const { return derive_seed(seed, stage); }

  void validate() const {
    if (workers < 1) throw Error("config: workers must be >= 1");
    if (!(valid_fraction > 0 && valid_fraction < 1)) throw Error("config: meta_split.valid_fraction outside (0,1)");
    if (!(test_fraction > 0 && test_fraction < 1)) throw Error("config: meta_split.test_fraction outside (0,1)");
    if (portfolio_size < 1 || candidate_count < portfolio_size) throw Error("config: need 1 <= portfolio.k <= candidate_count");
    if (budget < 1 || warmstart < 0 || warmstart > budget) throw Error("config: need 0 <= hpo.warmstart <= hpo.budget");
    if (bo_candidates < 1) throw Error("config: hpo.candidates must be >= 1");
    if (hpo_seeds.empty()) throw Error("config: hpo.seeds must not be empty");
    if (!(alpha > 0 && alpha < 1)) throw Error("config: evaluation.alpha outside (0,1)");
    correlation.validate();
    if (evaluator != "gbt" && evaluator != "replay" && evaluator.rfind("replay:", 0) != 0)
      throw Error("config: evaluator must be gbt, replay or replay:<path>");
  }

  /// Encoder architecture for an objective; the reconstruction encoder gets
  /// a head ending in the portfolio size unless one is given.
  EncoderConfig encoder_config(const std::string& objective) const {
    auto j = encoder_config_to_json(EncoderConfig{});
    if (auto it = encoders.find(objective); it != encoders.end()) j.update(it->second);
    if (objective == "reconstruction" && j.at("head").empty())
      j["head"] = {j.at("h").back().get<int>(), 32, portfolio_size};
    if (objective != "reconstruction") j["head"] = nlohmann::json::array();
    return encoder_config_from_json(j);
  }

  TrainSettings train_settings(const std::string& objective) const {
    auto j = training;
    if (auto it = training_overrides.find(objective); it != training_overrides.end()) j.update(it->second);
    j["objective"] = objective;
    j["seed"] = stage_seed("train:" + objective);
    return train_settings_from_json(j);
  }

  std::filesystem::path meta_dir() const { return out_dir / "meta"; }
  std::filesystem::path portfolio_dir() const { return out_dir / "portfolio"; }
  std::filesystem::path encoder_dir() const { return out_dir / "encoders"; }
  std::filesystem::path trace_dir() const { return out_dir / "traces"; }
  std::filesystem::path report_dir() const { return out_dir / "report"; }

  nlohmann::json to_json() const {
    nlohmann::json enc = nlohmann::json::object();
    for (const auto& [k, v] : encoders) enc[k] = v;
    nlohmann::json over = nlohmann::json::object();
    for (const auto& [k, v] : training_overrides) over[k] = v;
    nlohmann::json j = {
        {"seed", seed},
        {"workers", workers},
        {"paths", {{"data_dir", data_dir.string()}, {"out_dir", out_dir.string()}}},
        {"meta_split", {{"valid_fraction", valid_fraction}, {"test_fraction", test_fraction}}},
        {"portfolio", {{"k", portfolio_size}, {"candidate_count", candidate_count}}},
        {"evaluator", evaluator},
        {"encoders", enc},
        {"training", training},
        {"training_overrides", over},
        {"hpo", {{"budget", budget}, {"warmstart", warmstart}, {"candidates", bo_candidates}, {"seeds", hpo_seeds}}},
        {"evaluation",
         {{"repetitions", correlation.repetitions},
          {"pairs", correlation.pairs},
          {"alpha", alpha},
          {"strategies", strategies}}},
        {"report", {{"script", plot_script.string()}, {"python", python}}}};
    if (synthetic_datasets) j["synthetic"] = synthetic_to_json();
    return j;
  }

  nlohmann::json synthetic_to_json() const {
    const auto& p = profile;
    return {{"n_datasets", *synthetic_datasets},
            {"min_features", p.min_features},
            {"max_features", p.max_features},
            {"min_rows", p.min_rows},
            {"max_rows", p.max_rows},
            {"min_separation", p.min_separation},
            {"max_separation", p.max_separation},
            {"max_label_noise", p.max_label_noise},
            {"max_irrelevant_fraction", p.max_irrelevant_fraction},
            {"min_prevalence", p.min_prevalence},
            {"max_blobs_per_class", p.max_blobs_per_class},
            {"categorical_probability", p.categorical_probability}};
  }

  /// Relative paths are resolved against `base_dir`.
  static ExperimentConfig from_json(const nlohmann::json& j, const std::filesystem::path& base_dir = {}) {
    ExperimentConfig c;
    auto resolve = [&](const std::string& p) -> std::filesystem::path {
      if (p.empty()) return {};
      std::filesystem::path path(p);
      return path.is_absolute() || base_dir.empty() ? path : base_dir / path;
    };
    c.seed = j.value("seed", c.seed);
    c.workers = j.value("workers", c.workers);
    if (j.contains("paths")) {
      const auto& p = j.at("paths");
      c.data_dir = resolve(p.value("data_dir", std::string()));
      if (p.contains("out_dir")) c.out_dir = resolve(p.at("out_dir").get<std::string>());
    }
    if (j.contains("synthetic") && !j.at("synthetic").is_null()) {
      const auto& s = j.at("synthetic");
      auto& p = c.profile;
      c.synthetic_datasets = s.value("n_datasets", 60);
      p.min_features = s.value("min_features", p.min_features);
      p.max_features = s.value("max_features", p.max_features);
      p.min_rows = s.value("min_rows", p.min_rows);
      p.max_rows = s.value("max_rows", p.max_rows);
      p.min_separation = s.value("min_separation", p.min_separation);
      p.max_separation = s.value("max_separation", p.max_separation);
      p.max_label_noise = s.value("max_label_noise", p.max_label_noise);
      p.max_irrelevant_fraction = s.value("max_irrelevant_fraction", p.max_irrelevant_fraction);
      p.min_prevalence = s.value("min_prevalence", p.min_prevalence);
      p.max_blobs_per_class = s.value("max_blobs_per_class", p.max_blobs_per_class);
      p.categorical_probability = s.value("categorical_probability", p.categorical_probability);
    }
    if (j.contains("meta_split")) {
      c.valid_fraction = j.at("meta_split").value("valid_fraction", c.valid_fraction);
      c.test_fraction = j.at("meta_split").value("test_fraction", c.test_fraction);
    }
    c.profile.valid_fraction = c.valid_fraction;
    c.profile.test_fraction = c.test_fraction;
    if (j.contains("portfolio")) {
      c.portfolio_size = j.at("portfolio").value("k", c.portfolio_size);
      c.candidate_count = j.at("portfolio").value("candidate_count", c.candidate_count);
    }
    c.evaluator = j.value("evaluator", c.evaluator);
    if (c.evaluator.rfind("replay:", 0) == 0) c.evaluator = "replay:" + resolve(c.evaluator.substr(7)).string();
    if (j.contains("encoders"))
      for (const auto& [k, v] : j.at("encoders").items()) c.encoders[k] = v;
    if (j.contains("training")) c.training = j.at("training");
    if (j.contains("training_overrides"))
      for (const auto& [k, v] : j.at("training_overrides").items()) c.training_overrides[k] = v;
    if (j.contains("hpo")) {
      const auto& h = j.at("hpo");
      c.budget = h.value("budget", c.budget);
      c.warmstart = h.value("warmstart", c.warmstart);
      c.bo_candidates = h.value("candidates", c.bo_candidates);
      if (h.contains("seeds")) c.hpo_seeds = h.at("seeds").get<std::vector<std::uint64_t>>();
    }
    if (j.contains("evaluation")) {
      const auto& e = j.at("evaluation");
      c.correlation.repetitions = e.value("repetitions", c.correlation.repetitions);
      c.correlation.pairs = e.value("pairs", c.correlation.pairs);
      c.alpha = e.value("alpha", c.alpha);
      if (e.contains("strategies")) c.strategies = e.at("strategies").get<std::vector<std::string>>();
    }
    if (j.contains("report")) {
      c.plot_script = resolve(j.at("report").value("script", std::string()));
      c.python = j.at("report").value("python", c.python);
    }
    c.validate();
    return c;
  }

  static ExperimentConfig load(const std::filesystem::path& path) {
    return from_json(nlohmann::json::parse(read_file(path)), path.parent_path());
  }
};

// ---------------------------------------------------------------------------
// ingest

/// Reads every <name>.json manifest in `dir` with its <name>.csv; datasets
/// that fail to load are skipped with a warning.
inline std::vector<Dataset> ingest_directory(const std::filesystem::path& dir, double test_fraction, std::uint64_t seed) {
  if (!std::filesystem::is_directory(dir)) throw Error("ingest: data directory '" + dir.string() + "' not found");
  std::vector<std::filesystem::path> manifests;
  for (const auto& e : std::filesystem::directory_iterator(dir))
    if (e.path().extension() == ".json") manifests.push_back(e.path());
  std::sort(manifests.begin(), manifests.end());
  std::vector<Dataset> out;
  for (const auto& m : manifests) {
    try {
      const auto manifest = DatasetManifest::from_json(nlohmann::json::parse(read_file(m)));
      auto csv_path = m;
      csv_path.replace_extension(".csv");
      auto raw = binarize_target(drop_id_columns(load_dataset(csv_path, manifest)));
      auto ds = preprocess(raw, test_fraction, derive_seed(seed, manifest.name));
      ds.validate();
      out.push_back(std::move(ds));
    } catch (const std::exception& e) {
      log_warning("ingest: skipping " + m.filename().string() + ": " + e.what());
    }
  }
  return out;
}

inline MetaDataset cmd_ingest(const ExperimentConfig& cfg) {
  const auto seed = cfg.stage_seed("ingest");
  MetaDataset meta;
  if (!cfg.data_dir.empty()) {
    auto datasets = ingest_directory(cfg.data_dir, cfg.test_fraction, seed);
    if (datasets.size() < 4) throw Error("ingest: fewer than 4 usable datasets in '" + cfg.data_dir.string() + "'");
    meta = split_meta(std::move(datasets), cfg.valid_fraction, derive_seed(seed, "meta-split"));
  } else if (cfg.synthetic_datasets) {
    meta = generate_synthetic_metadataset(*cfg.synthetic_datasets, seed, cfg.profile);
  } else {
    throw Error("ingest: no data directory and no synthetic profile configured");
  }
  std::filesystem::remove_all(cfg.meta_dir());
  save_metadataset(meta, cfg.meta_dir());
  return meta;
}

// ---------------------------------------------------------------------------
// portfolio

struct PortfolioStage {
  std::shared_ptr<const Portfolio> portfolio;
  std::shared_ptr<const LandmarkerBase> train_base;  // meta-train
  std::shared_ptr<const LandmarkerBase> valid_base;  // meta-valid
  std::shared_ptr<const PerformanceTable> table;     // all datasets x candidates
};

inline std::vector<Dataset> all_datasets(const MetaDataset& meta) {
  auto all = meta.meta_train;
  all.insert(all.end(), meta.meta_valid.begin(), meta.meta_valid.end());
  return all;
}

inline std::vector<const Dataset*> dataset_ptrs(const std::vector<Dataset>& v) {
  std::vector<const Dataset*> out;
  for (const auto& d : v) out.push_back(&d);
  return out;
}

/// Restricts a table to the given columns.
inline LandmarkerBase base_from_table(const PerformanceTable& table, const std::vector<Dataset>& datasets,
                                      std::shared_ptr<const Portfolio> portfolio) {
  LandmarkerBase b;
  b.values.resize(static_cast<Eigen::Index>(datasets.size()), static_cast<Eigen::Index>(portfolio->size()));
  for (std::size_t i = 0; i < datasets.size(); ++i) {
    const auto row = table.dataset_index(datasets[i].name);
    if (row < 0) throw Error("portfolio: dataset '" + datasets[i].name + "' missing from performance table");
    b.datasets.push_back(datasets[i].name);
    for (std::size_t k = 0; k < portfolio->size(); ++k)
      b.values(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)) =
          table.values(row, portfolio->candidate[k]);
  }
  b.portfolio = std::move(portfolio);
  return b;
}

inline PortfolioStage cmd_portfolio(const ExperimentConfig& cfg) {
  const auto meta = load_metadataset(cfg.meta_dir());
  const auto seed = cfg.stage_seed("portfolio");
  Evaluator evaluator = gbt_evaluator();
  std::vector<HyperparameterConfig> candidates;
  if (cfg.evaluator.rfind("replay:", 0) == 0) {
    auto external = std::make_shared<const PerformanceTable>(load_performance_table(cfg.evaluator.substr(7)));
    evaluator = replay_evaluator(external, false);
    candidates = external->configs;
  } else {
    candidates = draw_candidates(SearchSpace{}, cfg.candidate_count, derive_seed(seed, "candidates"));
  }
  auto sel = select_portfolio(meta.meta_train, candidates, cfg.portfolio_size, evaluator, seed, cfg.workers);

  auto table = std::make_shared<PerformanceTable>();
  table->configs = candidates;
  const auto all = all_datasets(meta);
  for (const auto& d : all) table->datasets.push_back(d.name);
  const Matrix valid_values = evaluate_grid(dataset_ptrs(meta.meta_valid), candidates, evaluator, cfg.workers);
  table->values.resize(static_cast<Eigen::Index>(all.size()), static_cast<Eigen::Index>(candidates.size()));
  table->values.topRows(sel.candidates.values.rows()) = sel.candidates.values;
  table->values.bottomRows(valid_values.rows()) = valid_values;

  PortfolioStage st;
  st.portfolio = std::make_shared<const Portfolio>(sel.portfolio);
  st.table = table;
  st.train_base = std::make_shared<const LandmarkerBase>(base_from_table(*table, meta.meta_train, st.portfolio));
  st.valid_base = std::make_shared<const LandmarkerBase>(base_from_table(*table, meta.meta_valid, st.portfolio));

  const auto dir = cfg.portfolio_dir();
  std::filesystem::remove_all(dir);
  write_file_atomic(dir / "portfolio.json", portfolio_to_json(*st.portfolio).dump(2) + "\n");
  write_file_atomic(dir / "landmarkers.csv", landmarkers_to_csv(*st.train_base));
  write_file_atomic(dir / "valid_landmarkers.csv", landmarkers_to_csv(*st.valid_base));
  save_performance_table(*table, dir / "table");
  nlohmann::json clusters = {{"datasets", sel.candidates.datasets},
                             {"assignments", sel.clusters.assignments},
                             {"inertia", sel.clusters.inertia_history}};
  write_file_atomic(dir / "clusters.json", clusters.dump(2) + "\n");
  return st;
}

inline PortfolioStage load_portfolio_stage(const ExperimentConfig& cfg) {
  const auto dir = cfg.portfolio_dir();
  if (!std::filesystem::exists(dir / "portfolio.json")) throw Error("portfolio stage missing; run `portfolio` first");
  PortfolioStage st;
  st.portfolio = std::make_shared<const Portfolio>(portfolio_from_json(nlohmann::json::parse(read_file(dir / "portfolio.json"))));
  st.train_base = std::make_shared<const LandmarkerBase>(landmarkers_from_csv(read_file(dir / "landmarkers.csv"), st.portfolio));
  st.valid_base =
      std::make_shared<const LandmarkerBase>(landmarkers_from_csv(read_file(dir / "valid_landmarkers.csv"), st.portfolio));
  st.table = std::make_shared<const PerformanceTable>(load_performance_table(dir / "table"));
  return st;
}

// ---------------------------------------------------------------------------
// train

inline std::filesystem::path checkpoint_path(const ExperimentConfig& cfg, const std::string& objective) {
  return cfg.encoder_dir() / (objective + ".json");
}

inline TrainResult cmd_train(const ExperimentConfig& cfg, const std::string& objective) {
  const auto settings = cfg.train_settings(objective);
  const auto meta = load_metadataset(cfg.meta_dir());
  std::optional<PortfolioStage> st;
  if (settings.kind != ObjectiveKind::baseline) st = load_portfolio_stage(cfg);
  auto res = train_encoder(meta, st ? st->train_base.get() : nullptr, settings, cfg.encoder_config(objective));
  save_checkpoint(res.params, checkpoint_path(cfg, objective));
  write_file_atomic(cfg.encoder_dir() / (objective + "_history.csv"), history_to_csv(res.history));
  return res;
}

// ---------------------------------------------------------------------------
// evaluate

inline Evaluator hpo_evaluator(const ExperimentConfig& cfg, const PortfolioStage& st) {
  if (cfg.evaluator == "gbt") return gbt_evaluator();
  if (cfg.evaluator == "replay") return replay_evaluator(st.table, true);
  return replay_evaluator(std::make_shared<const PerformanceTable>(load_performance_table(cfg.evaluator.substr(7))), true);
}

/// Loads the checkpoint named by a `knn_encoder:<name>` strategy: an
/// objective name resolves to the run's encoder directory, anything else is
/// a path.
inline EncoderParams load_strategy_encoder(const ExperimentConfig& cfg, const std::string& name) {
  std::filesystem::path p = name;
  if (name == "baseline" || name == "metric" || name == "reconstruction") p = checkpoint_path(cfg, name);
  if (!std::filesystem::exists(p))
    throw Error("evaluate: checkpoint for encoder '" + name + "' not found at " + p.string() + "; run `train " + name + "`");
  return load_checkpoint(p);
}

inline std::string sanitize(std::string s) {
  for (char& c : s)
    if (!(std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '-' || c == '.')) c = '_';
  return s;
}

struct EvaluateOutput {
  ExperimentResult result;
  std::vector<CorrelationRow> correlations;
  ReportBundle report;
};

/// Warm-start configurations for one (strategy, dataset).
struct WarmstartSelector {
  const ExperimentConfig* cfg = nullptr;
  const PortfolioStage* stage = nullptr;
  std::map<std::string, std::pair<EncoderParams, RepresentationBase>> encoders;  // by strategy key

  std::vector<HyperparameterConfig> select(const std::string& strategy, const Dataset& ds, Rng& rng) const {
    const auto k = static_cast<std::size_t>(cfg->warmstart);
    if (strategy == "none") return select_no_warmstart(SearchSpace{}, k, rng);
    if (strategy == "random_portfolio") return select_random_portfolio(*stage->portfolio, k, rng);
    if (strategy == "rank") return select_rank(*stage->train_base, k);
    if (strategy == "landmarkers") return select_landmarker_oracle(stage->valid_base->row(ds.name), stage->train_base, k);
    if (auto it = encoders.find(strategy); it != encoders.end()) {
      const auto& [params, base] = it->second;
      return select_knn(dataset_representation(params, ds, params.config.has_head()), base, k);
    }
    throw Error("evaluate: unknown strategy '" + strategy + "'");
  }
};

inline std::vector<CorrelationRow> compute_correlations(const ExperimentConfig& cfg, const MetaDataset& meta,
                                                        const PortfolioStage& st) {
  std::vector<Vector> landmarkers;
  for (const auto& d : meta.meta_valid) landmarkers.push_back(st.valid_base->row(d.name));
  CorrelationConfig cc = cfg.correlation;
  cc.seed = cfg.stage_seed("correlation");
  std::vector<CorrelationRow> rows;
  for (const std::string name : {"baseline", "metric", "reconstruction"}) {
    const auto path = checkpoint_path(cfg, name);
    if (!std::filesystem::exists(path)) continue;
    const auto params = load_checkpoint(path);
    std::vector<Vector> reps, preds;
    for (const auto& d : meta.meta_valid) {
      reps.push_back(dataset_representation(params, d, false));
      if (params.config.has_head()) preds.push_back(dataset_representation(params, d, true));
    }
    const auto r = distance_correlation_repr(reps, landmarkers, cc);
    rows.push_back({name, "representation", r.mean, r.std});
    if (!preds.empty()) {
      const auto p = distance_correlation_pred(preds, landmarkers, cc);
      rows.push_back({name, "prediction", p.mean, p.std});
    }
  }
  return rows;
}

inline EvaluateOutput cmd_evaluate(const ExperimentConfig& cfg) {
  const auto meta = load_metadataset(cfg.meta_dir());
  const auto st = load_portfolio_stage(cfg);
  const auto evaluator = hpo_evaluator(cfg, st);
  const auto seed = cfg.stage_seed("evaluate");

  WarmstartSelector selector{&cfg, &st, {}};
  for (const auto& s : cfg.strategies) {
    if (s.rfind("knn_encoder:", 0) != 0) continue;
    auto params = load_strategy_encoder(cfg, s.substr(12));
    auto base = encoder_representation(params, meta.meta_train, st.train_base, params.config.has_head());
    selector.encoders.emplace(s, std::make_pair(std::move(params), std::move(base)));
  }

  EvaluateOutput out;
  auto& r = out.result;
  r.strategies = cfg.strategies;
  for (const auto& d : meta.meta_valid) r.datasets.push_back(d.name);
  r.seeds = cfg.hpo_seeds;
  r.budget = cfg.budget;
  r.warmstart = cfg.warmstart;
  const std::size_t n_d = meta.meta_valid.size(), n_seed = cfg.hpo_seeds.size();
  r.traces.resize(cfg.strategies.size() * n_d * n_seed);
  parallel_for(r.traces.size(), cfg.workers, [&](std::size_t idx) {
    const auto& strategy = cfg.strategies[idx / (n_d * n_seed)];
    const auto& ds = meta.meta_valid[(idx / n_seed) % n_d];
    const auto run_seed = cfg.hpo_seeds[idx % n_seed];
    const auto cell = derive_seed(derive_seed(seed, run_seed), strategy + "/" + ds.name);
    OptimizationTrace t;
    if (strategy == "random_search") {
      t = run_random_search(ds, cfg.budget, evaluator, cell, cfg.warmstart);
    } else {
      Rng rng(derive_seed(cell, "warmstart"));
      const auto ws = selector.select(strategy, ds, rng);
      t = run_hpo(ds, ws, cfg.budget, evaluator, derive_seed(cell, "bo"), cfg.bo_candidates);
    }
    t.strategy = strategy;
    t.seed = run_seed;
    r.traces[idx] = std::move(t);
  });
  r.validate();

  std::filesystem::remove_all(cfg.trace_dir());
  for (const auto& t : r.traces)
    write_file_atomic(cfg.trace_dir() / sanitize(t.strategy) / (t.dataset + "_seed" + std::to_string(t.seed) + ".csv"),
                      trace_to_csv(t));

  out.correlations = compute_correlations(cfg, meta, st);
  nlohmann::json manifest = {{"config", cfg.to_json()},
                             {"stage_seeds",
                              {{"ingest", cfg.stage_seed("ingest")},
                               {"portfolio", cfg.stage_seed("portfolio")},
                               {"evaluate", seed},
                               {"correlation", cfg.stage_seed("correlation")}}},
                             {"datasets", r.datasets},
                             {"strategies", r.strategies},
                             {"hpo_seeds", r.seeds}};
  // The output path itself is not part of the result.
  manifest["config"]["paths"].erase("out_dir");
  out.report = make_report(r, out.correlations, cfg.alpha, manifest);
  export_report(out.report, cfg.report_dir());
  return out;
}

// ---------------------------------------------------------------------------
// report

/// Runs the configured plot script on the bundle when available; returns the
/// bundle files otherwise.
inline std::vector<std::filesystem::path> cmd_report(const ExperimentConfig& cfg) {
  const auto dir = cfg.report_dir();
  read_report(dir);  // throws when the bundle is absent or incomplete
  std::vector<std::filesystem::path> out;
  if (!cfg.plot_script.empty() && std::filesystem::exists(cfg.plot_script)) {
    const auto fig = dir / "figures";
    std::filesystem::create_directories(fig);
    const std::string cmd = cfg.python + " \"" + cfg.plot_script.string() + "\" --bundle \"" + dir.string() +
                            "\" --out \"" + fig.string() + "\"";
    if (std::system(cmd.c_str()) != 0) throw Error("report: plot script failed: " + cmd);
    for (const auto& e : std::filesystem::directory_iterator(fig)) out.push_back(e.path());
  } else {
    for (const auto& e : std::filesystem::directory_iterator(dir))
      if (e.is_regular_file()) out.push_back(e.path());
  }
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace lmrep
