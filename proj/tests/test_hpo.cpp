#include "lmrep/hpo.hpp"

#include <gtest/gtest.h>

using namespace lmrep;

namespace {

Dataset named(const std::string& name) {
  Dataset d;
  d.name = name;
  return d;
}

Matrix random_unit(int n, int d, std::uint64_t seed) {
  Rng rng(seed);
  Matrix x(n, d);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < d; ++j) x(i, j) = uniform01(rng);
  return x;
}

// Smooth synthetic objective with its optimum inside the cube.
double bump(const HyperparameterConfig& c) {
  const Vector u = SearchSpace{}.to_unit(c);
  return 0.9 - 0.3 * (u.array() - 0.6).square().sum() / 7.0;
}

}  // namespace

TEST(Gp, MaternAtUnitDistance) {
  EXPECT_NEAR(matern52(1.0), (1 + std::sqrt(5.0) + 5.0 / 3.0) * std::exp(-std::sqrt(5.0)), 1e-15);
  EXPECT_NEAR(matern52(1.0), 0.5240, 5e-5);
  EXPECT_EQ(matern52(0.0), 1.0);
}

TEST(Gp, SingleObservationPosteriorMean) {
  Matrix x = Matrix::Zero(1, 1);
  Vector y(1);
  y << 1.0;
  const auto gp = GpSurrogate::fit_fixed(x, y, {Vector::Ones(1), 1.0, 0.0}, false);
  Vector q(1);
  q << 1.0;
  EXPECT_NEAR(gp.predict(q).mean, matern52(1.0), 1e-9);
}

TEST(Gp, InterpolatesObservationsWithTinyNoise) {
  const Matrix x = random_unit(12, 3, 1);
  Vector y(12);
  for (int i = 0; i < 12; ++i) y[i] = std::sin(3 * x(i, 0)) + x(i, 1) * x(i, 2);
  const auto gp = GpSurrogate::fit_fixed(x, y, {median_lengthscales(x), 1.0, 1e-12}, true);
  for (int i = 0; i < 12; ++i) EXPECT_NEAR(gp.predict(x.row(i).transpose()).mean, y[i], 1e-6);
}

TEST(Gp, RevertsToPriorFarAway) {
  const Matrix x = random_unit(8, 2, 2);
  Vector y(8);
  for (int i = 0; i < 8; ++i) y[i] = x(i, 0) - x(i, 1) + 3;
  GpHyper h{Vector::Constant(2, 0.1), 1.5, 1e-6};
  const auto gp = GpSurrogate::fit_fixed(x, y, h, true);
  const auto p = gp.predict(Vector::Constant(2, 50.0));
  EXPECT_NEAR(p.mean, y.mean(), 1e-9);
  EXPECT_NEAR(p.variance, gp.y_scale * gp.y_scale * 1.5, 1e-9);
}

TEST(Gp, MatchesDenseSolveOracle) {
  for (int n : {1, 5, 20}) {
    const Matrix x = random_unit(n, 7, 10 + n);
    Vector y(n);
    for (int i = 0; i < n; ++i) y[i] = x.row(i).sum() + 0.1 * i;
    const auto gp = gp_fit(x, y);
    // Independent dense oracle on the same hyperparameters.
    const auto n_ = static_cast<Eigen::Index>(n);
    Eigen::MatrixXd k(n_, n_);
    for (Eigen::Index i = 0; i < n_; ++i)
      for (Eigen::Index j = 0; j < n_; ++j) k(i, j) = gp.kernel(x.row(i).transpose(), x.row(j).transpose());
    k.diagonal().array() += gp.hyper.noise_variance + gp.jitter;
    const Vector ys = (y.array() - gp.y_mean) / gp.y_scale;
    const Eigen::FullPivLU<Eigen::MatrixXd> lu(k);
    const Vector alpha = lu.solve(ys);
    const Matrix q = random_unit(10, 7, 99);
    for (Eigen::Index r = 0; r < q.rows(); ++r) {
      const Vector kq = gp.cross(q.row(r).transpose());
      const double mean = gp.y_mean + gp.y_scale * kq.dot(alpha);
      const double var = gp.y_scale * gp.y_scale * std::max(gp.hyper.signal_variance - kq.dot(lu.solve(kq)), 0.0);
      const auto p = gp.predict(q.row(r).transpose());
      EXPECT_NEAR(p.mean, mean, 1e-8);
      EXPECT_NEAR(p.variance, var, 1e-8);
    }
  }
}

TEST(Gp, HyperparametersMaximiseLikelihoodOverGrid) {
  const Matrix x = random_unit(15, 2, 5);
  Vector y(15);
  for (int i = 0; i < 15; ++i) y[i] = std::cos(4 * x(i, 0)) + 0.05 * i;
  const auto gp = gp_fit(x, y);
  const Vector base = median_lengthscales(x);
  for (double ls : {0.5, 1.0, 2.0})
    for (double sv : {0.5, 1.0, 2.0})
      for (double nv : {1e-6, 1e-3, 1e-1})
        EXPECT_LE(GpSurrogate::fit_fixed(x, y, {base * ls, sv, nv}).log_marginal_likelihood,
                  gp.log_marginal_likelihood + 1e-9);
}

TEST(Gp, ConstantTargetsStayCentred) {
  const Matrix x = random_unit(4, 2, 6);
  const Vector y = Vector::Constant(4, 0.7);
  const auto gp = gp_fit(x, y);
  EXPECT_EQ(gp.y_scale, 1.0);
  EXPECT_NEAR(gp.predict(Vector::Constant(2, 0.3)).mean, 0.7, 1e-9);
}

TEST(Gp, DuplicatePointsSurviveViaJitter) {
  Matrix x(3, 1);
  x << 0.5, 0.5, 0.5;
  Vector y(3);
  y << 0.1, 0.2, 0.3;
  const auto gp = GpSurrogate::fit_fixed(x, y, {Vector::Ones(1), 1.0, 0.0});
  EXPECT_GT(gp.jitter, 0.0);
  EXPECT_LE(gp.jitter, 1e-4);
  EXPECT_THROW(GpSurrogate::fit_fixed(x, Vector::Constant(3, NAN), {Vector::Ones(1), 1.0, 0.0}), Error);
}

TEST(Acquisition, ExpectedImprovementValues) {
  EXPECT_EQ(expected_improvement(0.4, 0.0, 0.4), 0.0);
  EXPECT_EQ(expected_improvement(0.7, 0.0, 0.4), 0.7 - 0.4);
  EXPECT_NEAR(expected_improvement(0.4, 1.0, 0.4), 1 / std::sqrt(2 * M_PI), 1e-12);
  EXPECT_NEAR(expected_improvement(0.5, 0.1, 0.4), 0.10833, 5e-6);
}

TEST(Acquisition, ExpectedImprovementMatchesIntegral) {
  // E[max(Y - best, 0)] for Y ~ N(mean, sigma^2) by trapezoidal quadrature.
  for (double mean : {-0.3, 0.1, 0.5})
    for (double sigma : {0.05, 0.4}) {
      const double best = 0.2;
      double integral = 0;
      const int steps = 200000;
      const double lo = best, hi = mean + 12 * sigma;
      const double h = (hi - lo) / steps;
      for (int i = 0; i <= steps; ++i) {
        const double v = lo + i * h;
        const double f = (v - best) * normal_pdf((v - mean) / sigma) / sigma;
        integral += (i == 0 || i == steps ? 0.5 : 1.0) * f * h;
      }
      if (hi <= lo) integral = 0;
      EXPECT_NEAR(expected_improvement(mean, sigma, best), integral, 1e-7);
      EXPECT_GE(expected_improvement(mean, sigma, best), 0.0);
    }
}

TEST(Acquisition, ProposeNextIsArgmaxAndDeterministic) {
  const SearchSpace space;
  Rng data(1);
  Matrix x(6, 7);
  Vector y(6);
  for (int i = 0; i < 6; ++i) {
    const auto c = space.sample(data);
    x.row(i) = space.to_unit(c).transpose();
    y[i] = bump(c);
  }
  const auto gp = gp_fit(x, y);
  Rng a(5), b(5), replay(5);
  double ei = 0;
  const auto pa = propose_next(gp, space, a, 64, &ei);
  EXPECT_EQ(pa, propose_next(gp, space, b, 64));
  for (int i = 0; i < 64; ++i) EXPECT_LE(expected_improvement(gp, space.to_unit(space.sample(replay)), gp.best_observed()), ei);
  Rng one(7), one_replay(7);
  EXPECT_EQ(propose_next(gp, space, one, 1), space.sample(one_replay));
}

TEST(RunHpo, PhasesAndBudget) {
  const auto ds = named("d");
  const Evaluator ev = [](const Dataset&, const HyperparameterConfig& c) { return bump(c); };
  const SearchSpace space;
  Rng rng(3);
  std::vector<HyperparameterConfig> ws;
  for (int i = 0; i < 5; ++i) ws.push_back(space.sample(rng));

  const auto pure = run_hpo(ds, ws, 5, ev, 1, 32);
  EXPECT_TRUE(pure.well_formed(5));
  EXPECT_EQ(pure.warmstart_count(), 5u);

  const auto t = run_hpo(ds, ws, 20, ev, 1, 64);
  EXPECT_TRUE(t.well_formed(20));
  EXPECT_EQ(t.warmstart_count(), 5u);
  for (int i = 0; i < 5; ++i) EXPECT_EQ(t.entries[static_cast<std::size_t>(i)].config, ws[static_cast<std::size_t>(i)]);
  const auto best = t.best_so_far();
  for (std::size_t i = 1; i < best.size(); ++i) EXPECT_GE(best[i], best[i - 1]);
  EXPECT_GE(best.back(), best[4]);

  const auto again = run_hpo(ds, ws, 20, ev, 1, 64);
  for (std::size_t i = 0; i < 20; ++i) EXPECT_EQ(again.entries[i].config, t.entries[i].config);

  const auto cold = run_hpo(ds, {}, 3, ev, 2, 16);
  EXPECT_TRUE(cold.well_formed(3));
  EXPECT_EQ(cold.warmstart_count(), 0u);
  EXPECT_THROW(run_hpo(ds, ws, 4, ev, 1), Error);
}

TEST(RunHpo, FailuresRecordHalf) {
  const Evaluator failing = [](const Dataset&, const HyperparameterConfig&) -> double { throw Error("no"); };
  const auto t = run_hpo(named("d"), {}, 3, failing, 1, 8);
  for (const auto& e : t.entries) EXPECT_EQ(e.objective, 0.5);
}

TEST(RunHpo, BayesianOptimisationBeatsRandomOnSmoothObjective) {
  const Evaluator ev = [](const Dataset&, const HyperparameterConfig& c) { return bump(c); };
  double bo = 0, rs = 0;
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    bo += run_hpo(named("d"), {}, 20, ev, seed, 256).best_so_far().back();
    rs += run_random_search(named("d"), 20, ev, seed).best_so_far().back();
  }
  EXPECT_GT(bo, rs);
}

TEST(RandomSearch, ExpectedBestMatchesExhaustiveValue) {
  // The objective depends on max_depth only, uniform over {3..8}.
  const std::array<double, 6> table{0.60, 0.75, 0.70, 0.82, 0.55, 0.65};
  const Evaluator ev = [&](const Dataset&, const HyperparameterConfig& c) {
    return table[static_cast<std::size_t>(c.max_depth()) - 3];
  };
  // E[max of 20 draws] = sum over sorted values of v * (P(max <= v) - P(max < v)).
  std::vector<double> sorted(table.begin(), table.end());
  std::sort(sorted.begin(), sorted.end());
  double expected = 0;
  for (std::size_t i = 0; i < sorted.size(); ++i)
    expected += sorted[i] * (std::pow((i + 1) / 6.0, 20) - std::pow(i / 6.0, 20));
  const int seeds = 100;
  double mean = 0, sq = 0;
  for (int s = 0; s < seeds; ++s) {
    const auto t = run_random_search(named("d"), 20, ev, static_cast<std::uint64_t>(s));
    EXPECT_TRUE(t.well_formed(20));
    EXPECT_EQ(t.warmstart_count(), 5u);
    const double b = t.best_so_far().back();
    mean += b / seeds;
    sq += b * b / seeds;
  }
  const double se = std::sqrt(std::max(sq - mean * mean, 1e-8) / seeds);
  EXPECT_NEAR(mean, expected, 4 * se + 1e-9);
}

TEST(RandomSearch, DeterministicAndInBounds) {
  const Evaluator ev = [](const Dataset&, const HyperparameterConfig& c) { return bump(c); };
  const auto a = run_random_search(named("d"), 15, ev, 9);
  const auto b = run_random_search(named("d"), 15, ev, 9);
  const SearchSpace space;
  for (std::size_t i = 0; i < 15; ++i) {
    EXPECT_EQ(a.entries[i].config, b.entries[i].config);
    EXPECT_TRUE(space.contains(a.entries[i].config));
  }
}

TEST(Trace, CsvRoundTripAndWellFormedness) {
  const Evaluator ev = [](const Dataset&, const HyperparameterConfig& c) { return bump(c); };
  auto t = run_random_search(named("d"), 8, ev, 1);
  const auto back = trace_from_csv(trace_to_csv(t));
  ASSERT_EQ(back.size(), 8u);
  for (std::size_t i = 0; i < 8; ++i) {
    EXPECT_EQ(back.entries[i].config, t.entries[i].config);
    EXPECT_EQ(back.entries[i].objective, t.entries[i].objective);
    EXPECT_EQ(back.entries[i].phase, t.entries[i].phase);
  }
  EXPECT_FALSE(t.well_formed(7));
  std::swap(t.entries[4].phase, t.entries[6].phase);
  EXPECT_FALSE(t.well_formed(8));
}
