#include "lmrep/encoder.hpp"

#include <gtest/gtest.h>

using namespace lmrep;

namespace {

Batch random_batch(std::size_t rows, std::size_t cols, std::uint64_t seed) {
  Rng rng(seed);
  Batch b;
  b.dataset = "b";
  b.x.resize(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
  for (std::size_t i = 0; i < rows; ++i) {
    for (std::size_t j = 0; j < cols; ++j) b.x(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = uniform01(rng);
    b.y.push_back(static_cast<int>(uniform_int(rng, 0, 1)));
  }
  for (std::size_t i = 0; i < rows; ++i) b.rows.push_back(i);
  for (std::size_t j = 0; j < cols; ++j) b.cols.push_back(j);
  return b;
}

EncoderConfig small_config(Activation act, int head) {
  EncoderConfig c;
  c.f_widths = {2, 5, 4};
  c.g_widths = {4, 6, 3};
  c.h_widths = {3, 5, 4};
  if (head > 0) c.head_widths = {4, 3, head};
  c.activation = act;
  return c;
}

// Straightforward loop implementation of one dense stack, reading the flat
// parameter layout: each layer is an out x in row-major weight block
// followed by the bias.
std::vector<double> dense_stack(const std::vector<double>& theta, std::size_t& offset, const std::vector<int>& widths,
                                std::vector<double> x, Activation act, int final_kind) {
  for (std::size_t l = 0; l + 1 < widths.size(); ++l) {
    const int in = widths[l], out = widths[l + 1];
    std::vector<double> y(static_cast<std::size_t>(out));
    for (int o = 0; o < out; ++o) {
      double s = theta[offset + static_cast<std::size_t>(in * out + o)];
      for (int i = 0; i < in; ++i) s += theta[offset + static_cast<std::size_t>(o * in + i)] * x[static_cast<std::size_t>(i)];
      const bool last = l + 2 == widths.size();
      if (!last || final_kind == 0) {
        if (act == Activation::relu) s = std::max(0.0, s);
        else if (act == Activation::tanh) s = std::tanh(s);
        else s = std::log1p(std::exp(s));
      } else if (final_kind == 2) {
        s = 1.0 / (1.0 + std::exp(-s));
      }
      y[static_cast<std::size_t>(o)] = s;
    }
    offset += static_cast<std::size_t>(in * out + out);
    x = std::move(y);
  }
  return x;
}

std::vector<double> naive_forward(const EncoderParams& p, const Batch& b, bool head) {
  const auto& c = p.config;
  const auto r = b.x.rows(), k = b.x.cols();
  std::vector<double> col_mean_sum(static_cast<std::size_t>(c.g_widths.back()), 0.0);
  std::size_t f_off = 0;
  std::size_t g_off = 0;
  for (Eigen::Index j = 0; j < k; ++j) {
    std::vector<double> pooled(static_cast<std::size_t>(c.f_widths.back()), 0.0);
    for (Eigen::Index i = 0; i < r; ++i) {
      std::size_t off = 0;
      const auto z = dense_stack(p.values, off, c.f_widths, {b.x(i, j), static_cast<double>(b.y[static_cast<std::size_t>(i)])},
                                 c.activation, 0);
      f_off = off;
      for (std::size_t d = 0; d < z.size(); ++d) pooled[d] += z[d] / static_cast<double>(r);
    }
    std::size_t off = f_off;
    const auto gz = dense_stack(p.values, off, c.g_widths, pooled, c.activation, 0);
    g_off = off;
    for (std::size_t d = 0; d < gz.size(); ++d) col_mean_sum[d] += gz[d] / static_cast<double>(k);
  }
  std::size_t off = g_off;
  auto e = dense_stack(p.values, off, c.h_widths, col_mean_sum, c.activation, 1);
  if (head) e = dense_stack(p.values, off, c.head_widths, e, c.activation, 2);
  return e;
}

Objective weighted_sum_of_squares(OutputKind kind, const std::vector<const Batch*>& batches, std::uint64_t seed) {
  Rng rng(seed);
  auto weights = std::make_shared<std::vector<double>>();
  for (int i = 0; i < 64; ++i) weights->push_back(uniform(rng, -1, 1));
  Objective obj;
  obj.kind = kind;
  obj.batches = batches;
  obj.loss = [weights](const std::vector<Vector>& out, std::vector<Vector>& grads) {
    double loss = 0;
    std::size_t w = 0;
    for (std::size_t b = 0; b < out.size(); ++b)
      for (Eigen::Index d = 0; d < out[b].size(); ++d, ++w) {
        const double a = (*weights)[w % weights->size()];
        loss += a * out[b][d] * out[b][d] + out[b][d];
        grads[b][d] = 2 * a * out[b][d] + 1;
      }
    return loss;
  };
  return obj;
}

double max_relative_gradient_error(const EncoderParams& params, const Objective& obj, double h) {
  const auto analytic = loss_and_gradient(params, obj);
  double worst = 0;
  auto p = params;
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double v = p.values[i];
    p.values[i] = v + h;
    const double up = evaluate_objective(p, obj);
    p.values[i] = v - h;
    const double down = evaluate_objective(p, obj);
    p.values[i] = v;
    const double fd = (up - down) / (2 * h);
    worst = std::max(worst, std::abs(fd - analytic.gradient[i]) / std::max(1.0, std::abs(fd)));
  }
  return worst;
}

}  // namespace

TEST(Encoder, InitBoundExample) { EXPECT_DOUBLE_EQ(init_bound(4, 8), std::sqrt(0.5)); }

TEST(Encoder, InitWithinBoundsAndBiasesZero) {
  const auto p = init_params(EncoderConfig::defaults(12), 3);
  for (const auto& stage : p.layers)
    for (const auto& layer : stage) {
      const double b = init_bound(layer.in, layer.out);
      for (int i = 0; i < layer.in * layer.out; ++i) EXPECT_LE(std::abs(p.values[layer.weight_offset + static_cast<std::size_t>(i)]), b);
      for (int i = 0; i < layer.out; ++i) EXPECT_EQ(p.values[layer.bias_offset + static_cast<std::size_t>(i)], 0.0);
    }
  EXPECT_EQ(init_params(EncoderConfig::defaults(12), 3).values, p.values);
  EXPECT_NE(init_params(EncoderConfig::defaults(12), 4).values, p.values);
}

TEST(Encoder, ForwardMatchesLoopOracle) {
  for (auto act : {Activation::relu, Activation::tanh, Activation::softplus}) {
    const auto p = init_params(small_config(act, 7), 11);
    const auto b = random_batch(9, 4, 2);
    const auto e = encode(p, b).values;
    const auto oracle = naive_forward(p, b, false);
    ASSERT_EQ(e.size(), static_cast<Eigen::Index>(oracle.size()));
    for (std::size_t d = 0; d < oracle.size(); ++d) EXPECT_NEAR(e[static_cast<Eigen::Index>(d)], oracle[d], 1e-12);
    const auto rec = reconstruct(p, b);
    const auto rec_oracle = naive_forward(p, b, true);
    ASSERT_EQ(rec.size(), 7);
    for (std::size_t d = 0; d < rec_oracle.size(); ++d) EXPECT_NEAR(rec[static_cast<Eigen::Index>(d)], rec_oracle[d], 1e-12);
  }
}

TEST(Encoder, DefaultShapes) {
  const auto p = init_params(EncoderConfig::defaults(20), 1);
  const auto b = random_batch(33, 5, 4);
  EXPECT_EQ(encode(p, b).values.size(), 16);
  const auto rec = reconstruct(p, b);
  EXPECT_EQ(rec.size(), 20);
  EXPECT_GT(rec.minCoeff(), 0.0);
  EXPECT_LT(rec.maxCoeff(), 1.0);
  EXPECT_EQ(encode(p, random_batch(1, 1, 5)).values.size(), 16);
}

TEST(Encoder, InvariantToRowAndColumnPermutations) {
  const auto p = init_params(EncoderConfig::defaults(5), 7);
  const auto b = random_batch(20, 6, 8);
  Rng rng(1);
  std::vector<Eigen::Index> rows(20), cols(6);
  std::iota(rows.begin(), rows.end(), 0);
  std::iota(cols.begin(), cols.end(), 0);
  shuffle(rows, rng);
  shuffle(cols, rng);
  Batch q = b;
  for (Eigen::Index i = 0; i < 20; ++i) {
    for (Eigen::Index j = 0; j < 6; ++j) q.x(i, j) = b.x(rows[static_cast<std::size_t>(i)], cols[static_cast<std::size_t>(j)]);
    q.y[static_cast<std::size_t>(i)] = b.y[static_cast<std::size_t>(rows[static_cast<std::size_t>(i)])];
  }
  EXPECT_LT((encode(p, b).values - encode(p, q).values).norm(), 1e-12);
  EXPECT_LT((reconstruct(p, b) - reconstruct(p, q)).norm(), 1e-12);
}

TEST(Encoder, NoHeadMeansNoReconstruction) {
  const auto p = init_params(EncoderConfig::defaults(), 1);
  EXPECT_THROW(reconstruct(p, random_batch(3, 2, 1)), Error);
}

TEST(Encoder, ConfigValidation) {
  auto c = EncoderConfig::defaults(4);
  c.head_widths = {8, 4};
  EXPECT_THROW(c.validate(), Error);
  c = EncoderConfig::defaults();
  c.f_widths = {3, 32};
  EXPECT_THROW(c.validate(), Error);
}

TEST(EncoderGradient, EmbeddingTanhMatchesFiniteDifferences) {
  const auto p = init_params(small_config(Activation::tanh, 0), 5);
  const auto b1 = random_batch(6, 3, 1);
  const auto b2 = random_batch(4, 2, 2);
  const auto obj = weighted_sum_of_squares(OutputKind::embedding, {&b1, &b2}, 3);
  EXPECT_LT(max_relative_gradient_error(p, obj, 1e-6), 1e-6);
}

TEST(EncoderGradient, ReconstructionTanhMatchesFiniteDifferences) {
  const auto p = init_params(small_config(Activation::tanh, 5), 6);
  const auto b1 = random_batch(5, 3, 4);
  const auto obj = weighted_sum_of_squares(OutputKind::reconstruction, {&b1}, 9);
  EXPECT_LT(max_relative_gradient_error(p, obj, 1e-6), 1e-6);
}

TEST(EncoderGradient, SoftplusMatchesFiniteDifferences) {
  const auto p = init_params(small_config(Activation::softplus, 3), 8);
  const auto b1 = random_batch(5, 2, 6);
  EXPECT_LT(max_relative_gradient_error(p, weighted_sum_of_squares(OutputKind::reconstruction, {&b1}, 1), 1e-6), 1e-6);
}

TEST(EncoderGradient, ReluMatchesFiniteDifferencesAwayFromKinks) {
  // Random biases keep pre-activations away from zero, so a small step does
  // not cross a kink.
  auto p = init_params(small_config(Activation::relu, 0), 10);
  Rng rng(3);
  for (const auto& stage : p.layers)
    for (const auto& layer : stage)
      for (int i = 0; i < layer.out; ++i) p.values[layer.bias_offset + static_cast<std::size_t>(i)] = uniform(rng, 0.05, 0.3);
  const auto b1 = random_batch(6, 3, 7);
  EXPECT_LT(max_relative_gradient_error(p, weighted_sum_of_squares(OutputKind::embedding, {&b1}, 2), 1e-7), 1e-5);
}

TEST(EncoderGradient, GradientsAccumulateAcrossBatches) {
  const auto p = init_params(small_config(Activation::tanh, 0), 2);
  const auto b1 = random_batch(4, 2, 1);
  const auto b2 = random_batch(5, 3, 2);
  const auto both = loss_and_gradient(p, weighted_sum_of_squares(OutputKind::embedding, {&b1, &b2}, 4));
  Objective first = weighted_sum_of_squares(OutputKind::embedding, {&b1, &b2}, 4);
  auto inner = first.loss;
  first.loss = [inner](const std::vector<Vector>& out, std::vector<Vector>& g) {
    const double l = inner(out, g);
    g[1].setZero();
    return l;
  };
  const auto only_first = loss_and_gradient(p, first);
  EXPECT_EQ(both.loss, only_first.loss);
  EXPECT_NE(both.gradient, only_first.gradient);
}

TEST(Checkpoint, RoundTripAndValidation) {
  const auto p = init_params(EncoderConfig::defaults(6), 3);
  const auto path = std::filesystem::temp_directory_path() / "lmrep_test_ckpt.json";
  save_checkpoint(p, path);
  const auto back = load_checkpoint(path);
  EXPECT_EQ(back.values, p.values);
  EXPECT_TRUE(back.config == p.config);
  std::filesystem::remove(path);

  auto j = params_to_json(p);
  j["values"].erase(0);
  EXPECT_THROW(params_from_json(j), Error);
  j = params_to_json(p);
  j.erase("version");
  EXPECT_THROW(params_from_json(j), Error);
}
