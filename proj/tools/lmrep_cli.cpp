// lmrep: command-line front end for the landmarker-representation pipeline.
//
//   lmrep ingest    --config exp.json
//   lmrep portfolio --config exp.json [--workers 4]
//   lmrep train     --config exp.json metric
//   lmrep evaluate  --config exp.json
//   lmrep report    --config exp.json

#include "lmrep/pipeline.hpp"

#include <CLI11.hpp>

#include <iostream>

namespace {

struct Overrides {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<int> workers;
  std::optional<std::string> out;
};

lmrep::ExperimentConfig load(const Overrides& o) {
  auto cfg = lmrep::ExperimentConfig::load(o.config);
  if (o.seed) cfg.seed = *o.seed;
  if (o.workers) cfg.workers = *o.workers;
  if (o.out) cfg.out_dir = *o.out;
  cfg.validate();
  return cfg;
}

void add_common(CLI::App* app, Overrides& o) {
  app->add_option("-c,--config", o.config, "Experiment configuration (JSON)")->required()->check(CLI::ExistingFile);
  app->add_option("--seed", o.seed, "Override the master seed");
  app->add_option("--workers", o.workers, "Maximum worker threads")->check(CLI::PositiveNumber);
  app->add_option("--out", o.out, "Override the run directory");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Landmarker-aware dataset representations for warm-starting hyperparameter optimisation"};
  app.require_subcommand(1);
  Overrides o;
  std::string objective;

  auto* ingest = app.add_subcommand("ingest", "Preprocess datasets and write the meta-dataset");
  auto* portfolio = app.add_subcommand("portfolio", "Select the portfolio and compute the landmarker base");
  auto* train = app.add_subcommand("train", "Train an encoder (baseline | metric | reconstruction)");
  auto* evaluate = app.add_subcommand("evaluate", "Run warm-start experiments and write the report bundle");
  auto* report = app.add_subcommand("report", "Render figures from the report bundle");
  for (auto* sub : {ingest, portfolio, train, evaluate, report}) add_common(sub, o);
  train->add_option("objective", objective, "Training objective")
      ->required()
      ->check(CLI::IsMember({"baseline", "metric", "reconstruction"}));

  CLI11_PARSE(app, argc, argv);

  try {
    const auto cfg = load(o);
    if (*ingest) {
      const auto meta = lmrep::cmd_ingest(cfg);
      std::cout << "ingested " << meta.meta_train.size() << " meta-train and " << meta.meta_valid.size()
                << " meta-valid datasets into " << cfg.meta_dir().string() << "\n";
    } else if (*portfolio) {
      const auto st = lmrep::cmd_portfolio(cfg);
      std::cout << "portfolio of " << st.portfolio->size() << " configurations, landmarkers for "
                << st.train_base->size() << " datasets in " << cfg.portfolio_dir().string() << "\n";
    } else if (*train) {
      const auto res = lmrep::cmd_train(cfg, objective);
      std::cout << objective << ": validation loss " << res.initial_valid_loss() << " -> " << res.best_valid_loss
                << " (best at step " << res.best_step << "); checkpoint "
                << lmrep::checkpoint_path(cfg, objective).string() << "\n";
    } else if (*evaluate) {
      const auto out = lmrep::cmd_evaluate(cfg);
      std::cout << out.result.traces.size() << " traces; report in " << cfg.report_dir().string() << "\n";
      for (const auto& c : out.correlations)
        std::cout << "  " << c.encoder << " (" << c.distance << "): " << c.mean << " +- " << c.std << "\n";
    } else if (*report) {
      for (const auto& p : lmrep::cmd_report(cfg)) std::cout << p.string() << "\n";
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
