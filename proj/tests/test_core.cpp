#include "lmrep/core.hpp"
#include "lmrep/csv.hpp"
#include "lmrep/space.hpp"

#include <gtest/gtest.h>

#include <set>

using namespace lmrep;

TEST(Rng, DerivedSeedsDifferByTagAndIndex) {
  EXPECT_NE(derive_seed(1, "a"), derive_seed(1, "b"));
  EXPECT_NE(derive_seed(1, std::uint64_t{0}), derive_seed(1, std::uint64_t{1}));
  EXPECT_EQ(derive_seed(7, "x"), derive_seed(7, "x"));
}

TEST(Rng, UniformIntCoversInclusiveRange) {
  Rng rng(3);
  std::set<std::int64_t> seen;
  for (int i = 0; i < 2000; ++i) {
    const auto v = uniform_int(rng, -2, 2);
    ASSERT_GE(v, -2);
    ASSERT_LE(v, 2);
    seen.insert(v);
  }
  EXPECT_EQ(seen.size(), 5u);
}

TEST(Rng, StandardNormalMoments) {
  Rng rng(11);
  double s = 0, s2 = 0;
  const int n = 20000;
  for (int i = 0; i < n; ++i) {
    const double z = standard_normal(rng);
    s += z;
    s2 += z * z;
  }
  EXPECT_NEAR(s / n, 0.0, 0.03);
  EXPECT_NEAR(s2 / n, 1.0, 0.04);
}

TEST(Rng, SampleWithoutReplacementIsDistinct) {
  Rng rng(5);
  const auto v = sample_without_replacement(50, 20, rng);
  EXPECT_EQ(std::set<std::size_t>(v.begin(), v.end()).size(), 20u);
  EXPECT_THROW(sample_without_replacement(3, 4, rng), Error);
}

TEST(ParallelFor, ResultIndependentOfWorkerCount) {
  std::vector<double> a(101), b(101);
  parallel_for(a.size(), 1, [&](std::size_t i) { a[i] = std::sqrt(static_cast<double>(i)); });
  parallel_for(b.size(), 4, [&](std::size_t i) { b[i] = std::sqrt(static_cast<double>(i)); });
  EXPECT_EQ(a, b);
  EXPECT_THROW(parallel_for(10, 3, [](std::size_t i) { if (i == 7) throw Error("boom"); }), Error);
}

TEST(FormatDouble, RoundTripsExactly) {
  for (double v : {0.1, 1.0 / 3.0, 1e-300, 123456.789, -2.5e-7}) EXPECT_EQ(std::stod(format_double(v)), v);
}

TEST(Csv, QuotedFieldsRoundTrip) {
  csv::Table t;
  t.header = {"a", "b,c"};
  t.rows = {{"1", "x \"quoted\""}, {"", "line\nbreak"}};
  const auto back = csv::parse(csv::format(t));
  EXPECT_EQ(back.header, t.header);
  EXPECT_EQ(back.rows, t.rows);
}

TEST(Csv, RaggedRowIsRejected) { EXPECT_THROW(csv::parse("a,b\n1\n"), Error); }

TEST(SearchSpace, SamplesStayInBoundsAndCoverDepth) {
  SearchSpace space;
  Rng rng(1);
  std::set<int> depths;
  int eta_low = 0;
  const int n = 10000;
  for (int i = 0; i < n; ++i) {
    const auto c = space.sample(rng);
    ASSERT_TRUE(space.contains(c));
    depths.insert(static_cast<int>(c.max_depth()));
    if (c.eta() <= std::pow(10.0, -2.5)) ++eta_low;
  }
  EXPECT_EQ(depths, (std::set<int>{3, 4, 5, 6, 7, 8}));
  // Log-uniform CDF at the log-midpoint is 1/2; 4 sigma of a binomial(1e4, 0.5).
  EXPECT_NEAR(eta_low / static_cast<double>(n), 0.5, 4 * 0.005);
}

TEST(SearchSpace, UnitEncodingEndpointsAndMidpoint) {
  SearchSpace space;
  EXPECT_TRUE(space.to_unit(space.lower_bounds()).isZero(0.0));
  EXPECT_TRUE(space.to_unit(space.upper_bounds()).isOnes(0.0));
  auto c = space.lower_bounds();
  c[1] = std::pow(10.0, -2.5);
  EXPECT_NEAR(space.to_unit(c)[1], 0.5, 1e-12);
  EXPECT_EQ(space.from_unit(space.to_unit(space.upper_bounds())), space.upper_bounds());
  EXPECT_EQ(space.from_unit(space.to_unit(space.lower_bounds())), space.lower_bounds());
}

TEST(SearchSpace, RoundTripUpToIntegerRounding) {
  SearchSpace space;
  Rng rng(9);
  for (int i = 0; i < 200; ++i) {
    const auto c = space.sample(rng);
    const auto back = space.from_unit(space.to_unit(c));
    for (std::size_t d = 0; d < space.size(); ++d) EXPECT_NEAR(back[d], c[d], 1e-9 * std::max(1.0, c[d]));
  }
}

TEST(SearchSpace, OutOfBoundsRejected) {
  SearchSpace space;
  auto c = space.upper_bounds();
  c[0] = 1001;
  EXPECT_THROW(space.to_unit(c), Error);
  c = space.lower_bounds();
  c[3] = 3.5;
  EXPECT_THROW(space.to_unit(c), Error);
}

TEST(SearchSpace, JsonRoundTrip) {
  SearchSpace space;
  Rng rng(2);
  const auto c = space.sample(rng);
  EXPECT_EQ(config_from_json(config_to_json(c)), c);
}
