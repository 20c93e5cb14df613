#include "lmrep/portfolio.hpp"

#include <gtest/gtest.h>

#include <set>

using namespace lmrep;

namespace {

std::vector<Vector> points_1d(const std::vector<double>& v) {
  std::vector<Vector> out;
  for (double x : v) out.push_back(Vector::Constant(1, x));
  return out;
}

Dataset handmade(const std::string& name, const std::vector<std::vector<double>>& rows, const std::vector<int>& y) {
  Dataset d;
  d.name = name;
  d.x_train.resize(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(rows[0].size()));
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t j = 0; j < rows[0].size(); ++j) d.x_train(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[i][j];
  d.y_train = y;
  d.x_test = d.x_train;
  d.y_test = y;
  d.categorical.assign(rows[0].size(), false);
  for (std::size_t j = 0; j < rows[0].size(); ++j) d.feature_names.push_back("f" + std::to_string(j));
  return d;
}

// A deterministic stand-in evaluator: a smooth function of dataset name hash
// and configuration.
double fake_score(const Dataset& ds, const HyperparameterConfig& c) {
  const double h = static_cast<double>(std::hash<std::string>{}(ds.name) % 1000) / 1000.0;
  const Vector u = SearchSpace{}.to_unit(c);
  return 0.5 + 0.4 * std::exp(-(u.array() - h).square().sum());
}

}  // namespace

TEST(MetaFeatures, Definitions) {
  const auto d = handmade("d", {{0.0, 0.3}, {1.0, 0.1}, {0.0, 0.9}, {1.0, 0.2}}, {0, 1, 0, 1});
  const auto mf = compute_meta_features(d);
  EXPECT_EQ(mf.size(), 7);
  EXPECT_EQ(mf[0], 4.0);
  EXPECT_EQ(mf[1], 2.0);
  EXPECT_EQ(mf[2], 0.0);
  EXPECT_DOUBLE_EQ(mf[5], 0.5);
  EXPECT_GE(mf[6], 0.5);  // first feature equals the target: its |corr| is 1
  const auto one = handmade("e", {{0.0}, {1.0}, {0.0}, {1.0}}, {0, 1, 0, 1});
  EXPECT_NEAR(compute_meta_features(one)[6], 1.0, 1e-12);
}

TEST(Standardize, ZeroMeanUnitVarianceAndConstantComponents) {
  std::vector<Vector> raw;
  for (int i = 0; i < 5; ++i) {
    Vector v(2);
    v << i * 3.0, 7.0;
    raw.push_back(v);
  }
  const auto z = standardize(raw);
  double m = 0, s = 0;
  for (const auto& v : z) {
    m += v[0] / 5;
    s += v[0] * v[0] / 5;
    EXPECT_EQ(v[1], 0.0);
  }
  EXPECT_NEAR(m, 0.0, 1e-12);
  EXPECT_NEAR(s, 1.0, 1e-12);
}

TEST(KMeans, TwoObviousClusters) {
  const auto r = kmeans(points_1d({0, 1, 10, 11}), 2, 3);
  EXPECT_EQ(r.assignments[0], r.assignments[1]);
  EXPECT_EQ(r.assignments[2], r.assignments[3]);
  EXPECT_NE(r.assignments[0], r.assignments[2]);
  std::set<double> centroids{r.centroids[0][0], r.centroids[1][0]};
  EXPECT_EQ(centroids, (std::set<double>{0.5, 10.5}));
  EXPECT_DOUBLE_EQ(r.inertia(), 1.0);
}

TEST(KMeans, DegenerateK) {
  const auto pts = points_1d({2, 4, 9});
  const auto one = kmeans(pts, 1, 1);
  EXPECT_NEAR(one.centroids[0][0], 5.0, 1e-12);
  const auto all = kmeans(pts, 3, 1);
  EXPECT_EQ(all.inertia(), 0.0);
  EXPECT_EQ(std::set<int>(all.assignments.begin(), all.assignments.end()).size(), 3u);
  EXPECT_THROW(kmeans(pts, 4, 1), Error);
}

TEST(KMeans, InertiaNonIncreasingAndDeterministic) {
  Rng rng(4);
  std::vector<Vector> pts;
  for (int i = 0; i < 120; ++i) {
    Vector v(3);
    for (int j = 0; j < 3; ++j) v[j] = standard_normal(rng) + (i % 4) * 2.0;
    pts.push_back(v);
  }
  for (int k : {2, 5, 9}) {
    const auto r = kmeans(pts, k, 7);
    for (std::size_t i = 1; i < r.inertia_history.size(); ++i) EXPECT_LE(r.inertia_history[i], r.inertia_history[i - 1] + 1e-9);
    std::vector<int> sizes(static_cast<std::size_t>(k), 0);
    for (int a : r.assignments) ++sizes[static_cast<std::size_t>(a)];
    for (int s : sizes) EXPECT_GT(s, 0);
    EXPECT_EQ(kmeans(pts, k, 7).assignments, r.assignments);
  }
}

TEST(KMeans, DuplicatePointsStillFillEveryCluster) {
  const auto r = kmeans(points_1d({1, 1, 1, 1, 5}), 3, 2);
  std::set<int> used(r.assignments.begin(), r.assignments.end());
  EXPECT_EQ(used.size(), 3u);
}

TEST(Tournament, HandBuiltTable) {
  Matrix perf(4, 2);
  perf << 0.8, 0.7,  // cluster 0
      0.8, 0.7,      // cluster 0
      0.6, 0.9,      // cluster 1
      0.6, 0.9;      // cluster 1
  std::vector<double> means;
  EXPECT_EQ(tournament_winners(perf, {0, 0, 1, 1}, 2, &means), (std::vector<int>{0, 1}));
  EXPECT_NEAR(means[0], 0.8, 1e-12);
  // Both clusters prefer candidate 0: the second takes its next best.
  Matrix same(2, 3);
  same << 0.9, 0.5, 0.6, 0.9, 0.4, 0.7;
  EXPECT_EQ(tournament_winners(same, {0, 1}, 2), (std::vector<int>{0, 2}));
  // Ties go to the lowest index.
  EXPECT_EQ(tournament_winners(Matrix::Constant(2, 3, 0.5), {0, 0}, 1), std::vector<int>{0});
}

TEST(Tournament, MatchesBruteForceScan) {
  Rng rng(2);
  for (int trial = 0; trial < 50; ++trial) {
    const int n = 12, c = 9, k = 3;
    Matrix perf(n, c);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < c; ++j) perf(i, j) = uniform01(rng);
    std::vector<int> assign;
    for (int i = 0; i < n; ++i) assign.push_back(i % k);
    const auto w = tournament_winners(perf, assign, k);
    std::set<int> used;
    for (int cl = 0; cl < k; ++cl) {
      int best = -1;
      double best_mean = -1;
      for (int j = 0; j < c; ++j) {
        if (used.count(j)) continue;
        double m = 0;
        for (int i = cl; i < n; i += k) m += perf(i, j) / (n / k);
        if (m > best_mean) {
          best_mean = m;
          best = j;
        }
      }
      used.insert(best);
      EXPECT_EQ(w[static_cast<std::size_t>(cl)], best);
    }
  }
}

TEST(SelectPortfolio, DistinctInBoundsDeterministicAndAligned) {
  const auto datasets = generate_synthetic_datasets(10, 3);
  const Evaluator ev = fake_score;
  const auto a = select_portfolio(datasets, SearchSpace{}, 4, 12, ev, 9, 1);
  const auto b = select_portfolio(datasets, SearchSpace{}, 4, 12, ev, 9, 3);
  EXPECT_EQ(a.portfolio.configs, b.portfolio.configs);
  EXPECT_EQ(a.base.values, b.base.values);
  const SearchSpace space;
  std::set<HyperparameterConfig> distinct(a.portfolio.configs.begin(), a.portfolio.configs.end());
  EXPECT_EQ(distinct.size(), 4u);
  for (const auto& c : a.portfolio.configs) EXPECT_TRUE(space.contains(c));
  for (std::size_t i = 0; i < datasets.size(); ++i) {
    for (std::size_t k = 0; k < 4; ++k)
      EXPECT_EQ(a.base.values(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)),
                fake_score(datasets[i], a.portfolio.configs[k]));
    Eigen::Index arg;
    a.base.values.row(static_cast<Eigen::Index>(i)).maxCoeff(&arg);
    EXPECT_EQ(a.base.best_config(i), static_cast<int>(arg));
  }
  const auto single = select_portfolio(datasets, SearchSpace{}, 1, 12, ev, 9, 1);
  Eigen::Index best;
  single.candidates.values.colwise().mean().maxCoeff(&best);
  EXPECT_EQ(single.portfolio.candidate[0], static_cast<int>(best));
}

TEST(Landmarkers, FailuresBecomeHalfAndShapesMatch) {
  const auto datasets = generate_synthetic_datasets(2, 4);
  auto portfolio = std::make_shared<Portfolio>();
  Rng rng(1);
  for (int i = 0; i < 3; ++i) portfolio->configs.push_back(SearchSpace{}.sample(rng));
  const Evaluator failing = [](const Dataset&, const HyperparameterConfig&) -> double { throw Error("boom"); };
  const auto l = compute_landmarkers(datasets[0], *portfolio, failing);
  EXPECT_EQ(l.values, Vector::Constant(3, 0.5));
  std::string warning;
  EXPECT_EQ(evaluate_or_default(failing, datasets[0], portfolio->configs[0], &warning), 0.5);
  EXPECT_NE(warning.find("boom"), std::string::npos);
  const auto base = build_landmarker_base(datasets, portfolio, fake_score, 2);
  EXPECT_EQ(base.values.rows(), 2);
  EXPECT_EQ(base.portfolio_size(), 3u);
}

TEST(Landmarkers, SeparableDatasetScoresHighWithGbt) {
  std::vector<std::vector<double>> rows;
  std::vector<int> y;
  for (int i = 0; i < 60; ++i) {
    rows.push_back({i / 60.0, (i * 7 % 13) / 13.0});
    y.push_back(i >= 30);
  }
  const auto d = handmade("sep", rows, y);
  Portfolio p;
  HyperparameterConfig c;
  c.values = {100, 0.3, 1e-5, 6, 1, 1, 1e-5};
  p.configs = {c};
  EXPECT_GE(compute_landmarkers(d, p, gbt_evaluator()).values[0], 0.95);
}

TEST(Replay, LookupFallbackAndErrors) {
  auto table = std::make_shared<PerformanceTable>();
  Rng rng(3);
  for (int j = 0; j < 5; ++j) table->configs.push_back(SearchSpace{}.sample(rng));
  table->datasets = {"x", "y"};
  table->values.resize(2, 5);
  for (int j = 0; j < 5; ++j) {
    table->values(0, j) = 0.5 + 0.1 * j;
    table->values(1, j) = 0.9 - 0.1 * j;
  }
  Dataset y;
  y.name = "y";
  const auto strict = replay_evaluator(table, false);
  const auto near = replay_evaluator(table, true);
  EXPECT_EQ(strict(y, table->configs[2]), 0.7);
  const auto query = SearchSpace{}.sample(rng);
  EXPECT_THROW(strict(y, query), Error);
  // Linear scan oracle.
  const SearchSpace space;
  std::size_t best = 0;
  for (std::size_t j = 1; j < 5; ++j)
    if ((space.to_unit(table->configs[j]) - space.to_unit(query)).squaredNorm() <
        (space.to_unit(table->configs[best]) - space.to_unit(query)).squaredNorm())
      best = j;
  EXPECT_EQ(near(y, query), table->values(1, static_cast<Eigen::Index>(best)));
  Dataset z;
  z.name = "z";
  EXPECT_THROW(near(z, query), Error);

  // A landmarker vector computed through the replay evaluator is the stored row.
  Portfolio p;
  p.configs = table->configs;
  EXPECT_EQ(compute_landmarkers(y, p, strict).values, table->values.row(1).transpose());
}

TEST(Persistence, TablePortfolioAndLandmarkers) {
  const auto datasets = generate_synthetic_datasets(6, 1);
  const auto sel = select_portfolio(datasets, SearchSpace{}, 2, 5, fake_score, 4, 1);
  const auto dir = std::filesystem::temp_directory_path() / "lmrep_test_portfolio";
  std::filesystem::remove_all(dir);
  save_performance_table(sel.candidates, dir);
  const auto t = load_performance_table(dir);
  EXPECT_EQ(t.values, sel.candidates.values);
  EXPECT_EQ(t.configs, sel.candidates.configs);
  std::filesystem::remove_all(dir);

  const auto p = portfolio_from_json(portfolio_to_json(sel.portfolio));
  EXPECT_EQ(p.configs, sel.portfolio.configs);
  EXPECT_EQ(p.candidate, sel.portfolio.candidate);
  auto shared = std::make_shared<const Portfolio>(p);
  const auto base = landmarkers_from_csv(landmarkers_to_csv(sel.base), shared);
  EXPECT_EQ(base.values, sel.base.values);
  EXPECT_EQ(base.datasets, sel.base.datasets);
  auto wrong = std::make_shared<Portfolio>();
  EXPECT_THROW(landmarkers_from_csv(landmarkers_to_csv(sel.base), wrong), Error);
}

TEST(EvaluateGrid, IndependentOfWorkerCount) {
  const auto datasets = generate_synthetic_datasets(4, 2);
  std::vector<const Dataset*> ptrs;
  for (const auto& d : datasets) ptrs.push_back(&d);
  const auto configs = draw_candidates(SearchSpace{}, 5, 1);
  EXPECT_EQ(evaluate_grid(ptrs, configs, fake_score, 1), evaluate_grid(ptrs, configs, fake_score, 4));
}
