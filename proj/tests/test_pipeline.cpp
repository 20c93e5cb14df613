#include "lmrep/pipeline.hpp"

#include <gtest/gtest.h>

#include <cstdlib>

using namespace lmrep;

namespace {

std::filesystem::path scratch(const std::string& name) {
  auto p = std::filesystem::temp_directory_path() / ("lmrep_pipeline_" + name);
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

nlohmann::json tiny_config_json(const std::filesystem::path& out, int workers) {
  return {
      {"seed", 5},
      {"workers", workers},
      {"paths", {{"out_dir", out.string()}}},
      {"synthetic", {{"n_datasets", 12}, {"max_rows", 120}, {"max_features", 6}}},
      {"meta_split", {{"valid_fraction", 0.25}}},
      {"portfolio", {{"k", 3}, {"candidate_count", 5}}},
      {"evaluator", "replay"},
      {"encoders", {{"metric", {{"f", {2, 8}}, {"g", {8, 8}}, {"h", {8, 4}}}},
                    {"reconstruction", {{"f", {2, 8}}, {"g", {8, 8}}, {"h", {8, 4}}}}}},
      {"training", {{"steps", 10}, {"eval_every", 5}, {"pairs_per_step", 4}, {"valid_pairs", 4}, {"min_rows", 8}, {"max_rows", 16},
                    {"learning_rate", 0.01}}},
      {"hpo", {{"budget", 4}, {"warmstart", 2}, {"candidates", 16}, {"seeds", {0, 1}}}},
      {"evaluation",
       {{"repetitions", 2},
        {"pairs", 20},
        {"strategies",
         {"none", "random_portfolio", "rank", "landmarkers", "knn_encoder:metric", "knn_encoder:reconstruction",
          "random_search"}}}}};
}

void run_all(const ExperimentConfig& cfg) {
  cmd_ingest(cfg);
  cmd_portfolio(cfg);
  cmd_train(cfg, "metric");
  cmd_train(cfg, "reconstruction");
  cmd_evaluate(cfg);
}

int run_cli(const std::string& args) {
  const std::string cmd = std::string(LMREP_CLI_PATH) + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

}  // namespace

TEST(Config, DefaultsAndRelativePaths) {
  const auto c = ExperimentConfig::from_json(
      {{"paths", {{"data_dir", "data"}, {"out_dir", "run"}}}, {"evaluator", "replay:tables/x"}}, "/base");
  EXPECT_EQ(c.data_dir, std::filesystem::path("/base/data"));
  EXPECT_EQ(c.out_dir, std::filesystem::path("/base/run"));
  EXPECT_EQ(c.evaluator, "replay:/base/tables/x");
  EXPECT_EQ(c.portfolio_size, 100);
  EXPECT_EQ(c.budget, 20);
  EXPECT_EQ(c.warmstart, 5);
  EXPECT_EQ(c.alpha, 0.05);
  EXPECT_EQ(c.correlation.repetitions, 20);
  EXPECT_EQ(c.correlation.pairs, 1000);
  EXPECT_EQ(c.encoder_config("reconstruction").head_widths.back(), 100);
  EXPECT_FALSE(c.encoder_config("metric").has_head());
}

TEST(Config, InvalidValuesRejected) {
  EXPECT_THROW(ExperimentConfig::from_json({{"hpo", {{"budget", 4}, {"warmstart", 5}}}}), Error);
  EXPECT_THROW(ExperimentConfig::from_json({{"portfolio", {{"k", 10}, {"candidate_count", 5}}}}), Error);
  EXPECT_THROW(ExperimentConfig::from_json({{"evaluator", "xgboost"}}), Error);
  EXPECT_THROW(ExperimentConfig::from_json({{"evaluation", {{"pairs", 2}}}}), Error);
}

TEST(Config, TrainingOverridesAndStageSeeds) {
  const auto c = ExperimentConfig::from_json(
      {{"seed", 3}, {"training", {{"steps", 100}}}, {"training_overrides", {{"metric", {{"steps", 7}}}}}});
  EXPECT_EQ(c.train_settings("metric").steps, 7);
  EXPECT_EQ(c.train_settings("baseline").steps, 100);
  EXPECT_NE(c.train_settings("metric").seed, c.train_settings("baseline").seed);
  EXPECT_EQ(c.stage_seed("ingest"), derive_seed(3, "ingest"));
}

TEST(Ingest, DirectoryOfCsvFilesWithBadFileSkipped) {
  const auto dir = scratch("ingest");
  Rng rng(1);
  for (int d = 0; d < 5; ++d) {
    std::string text = "id,a,b,colour,label\n";
    for (int i = 0; i < 40; ++i) {
      const double a = uniform01(rng);
      text += std::to_string(i) + "," + format_double(a) + "," + format_double(uniform01(rng)) + "," +
              (i % 3 ? "red" : "blue") + "," + (a > 0.5 ? "yes" : "no") + "\n";
    }
    const std::string name = "set" + std::to_string(d);
    write_file_atomic(dir / (name + ".csv"), text);
    write_file_atomic(dir / (name + ".json"),
                      nlohmann::json{{"name", name}, {"target", "label"}, {"categorical", {"colour"}}}.dump());
  }
  write_file_atomic(dir / "broken.json", nlohmann::json{{"name", "broken"}, {"target", "label"}}.dump());
  const auto datasets = ingest_directory(dir, 0.25, 7);
  ASSERT_EQ(datasets.size(), 5u);
  EXPECT_EQ(datasets[0].feature_names, (std::vector<std::string>{"a", "b", "colour=blue", "colour=red"}));
  std::filesystem::remove_all(dir);
}

TEST(Pipeline, EndToEndProducesCompleteBundle) {
  const auto out = scratch("e2e");
  const auto cfg = ExperimentConfig::from_json(tiny_config_json(out / "run", 1));
  run_all(cfg);
  const auto bundle = read_report(cfg.report_dir());
  EXPECT_EQ(bundle.adtm.size(), 7u * 4u);
  ASSERT_EQ(bundle.cd.size(), 2u);
  EXPECT_EQ(bundle.cd[0].iteration, 2);
  EXPECT_EQ(bundle.cd[1].iteration, 4);
  EXPECT_EQ(bundle.cd[1].average_ranks.size(), 7u);
  ASSERT_EQ(bundle.correlations.size(), 3u);  // metric repr, reconstruction repr + prediction
  EXPECT_TRUE(std::filesystem::exists(cfg.trace_dir() / "knn_encoder_metric" / "syn_000_seed0.csv") ||
              !std::filesystem::is_empty(cfg.trace_dir() / "knn_encoder_metric"));
  // Warm-start configurations of portfolio-based strategies come from the portfolio.
  const auto st = load_portfolio_stage(cfg);
  for (const auto& e : std::filesystem::directory_iterator(cfg.trace_dir() / "rank")) {
    const auto t = trace_from_csv(read_file(e.path()));
    ASSERT_EQ(t.size(), 4u);
    for (int i = 0; i < 2; ++i)
      EXPECT_NE(std::find(st.portfolio->configs.begin(), st.portfolio->configs.end(), t.entries[static_cast<std::size_t>(i)].config),
                st.portfolio->configs.end());
  }
  EXPECT_FALSE(cmd_report(cfg).empty());
  std::filesystem::remove_all(out);
}

TEST(Pipeline, ReportBytesIndependentOfRunDirectoryAndWorkers) {
  const auto out = scratch("determinism");
  const auto a = ExperimentConfig::from_json(tiny_config_json(out / "a", 1));
  const auto b = ExperimentConfig::from_json(tiny_config_json(out / "b", 3));
  run_all(a);
  run_all(b);
  for (const char* f : {"adtm.csv", "cd.json", "correlations.json"})
    EXPECT_EQ(read_file(a.report_dir() / f), read_file(b.report_dir() / f)) << f;
  auto ma = nlohmann::json::parse(read_file(a.report_dir() / "manifest.json"));
  auto mb = nlohmann::json::parse(read_file(b.report_dir() / "manifest.json"));
  ma["config"].erase("workers");
  mb["config"].erase("workers");
  EXPECT_EQ(ma, mb);
  std::filesystem::remove_all(out);
}

TEST(Pipeline, MissingEncoderIsNamed) {
  const auto out = scratch("missing");
  auto j = tiny_config_json(out / "run", 1);
  j["evaluation"]["strategies"] = {"rank", "knn_encoder:metric"};
  const auto cfg = ExperimentConfig::from_json(j);
  cmd_ingest(cfg);
  cmd_portfolio(cfg);
  try {
    cmd_evaluate(cfg);
    FAIL();
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("metric"), std::string::npos);
  }
  std::filesystem::remove_all(out);
}

TEST(Pipeline, StagesRequireTheirInputs) {
  const auto out = scratch("order");
  const auto cfg = ExperimentConfig::from_json(tiny_config_json(out / "run", 1));
  EXPECT_THROW(cmd_portfolio(cfg), Error);
  cmd_ingest(cfg);
  EXPECT_THROW(cmd_train(cfg, "metric"), Error);
  EXPECT_THROW(cmd_report(cfg), Error);
  std::filesystem::remove_all(out);
}

TEST(Cli, SubcommandsAndErrors) {
  const auto out = scratch("cli");
  auto j = tiny_config_json(out / "run", 1);
  j["evaluation"]["strategies"] = {"none", "rank", "knn_encoder:baseline"};
  write_file_atomic(out / "exp.json", j.dump());
  const std::string c = "--config " + (out / "exp.json").string();
  EXPECT_EQ(run_cli("ingest " + c), 0);
  EXPECT_EQ(run_cli("portfolio " + c + " --workers 2"), 0);
  EXPECT_NE(run_cli("train " + c + " contrastive"), 0);
  EXPECT_EQ(run_cli("train " + c + " baseline"), 0);
  EXPECT_EQ(run_cli("evaluate " + c), 0);
  EXPECT_EQ(run_cli("report " + c), 0);
  EXPECT_NE(run_cli("evaluate --config " + (out / "nope.json").string()), 0);
  EXPECT_NE(run_cli(""), 0);
  EXPECT_TRUE(std::filesystem::exists(out / "run" / "report" / "cd.json"));
  std::filesystem::remove_all(out);
}
