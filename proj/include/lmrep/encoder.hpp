#pragma once

// Permutation-invariant dataset encoder. Every cell (feature value, target
// value) goes through a per-cell MLP f; the results are mean-pooled over rows
// per feature and passed through g; those are mean-pooled over features and
// passed through h to give the embedding. An optional head maps the
// embedding to a sigmoid vector of predicted landmarkers.
//
// Gradients are computed by explicit reverse-mode passes over cached
// activations; there is no tape library.

#include "lmrep/core.hpp"
#include "lmrep/data.hpp"

#include <json.hpp>

#include <array>
#include <functional>
#include <span>

namespace lmrep {

enum class Activation { relu, tanh, softplus };

inline std::string to_string(Activation a) {
  switch (a) {
    case Activation::relu: return "relu";
    case Activation::tanh: return "tanh";
    case Activation::softplus: return "softplus";
  }
  return "?";
}

inline Activation activation_from_string(const std::string& s) {
  if (s == "relu") return Activation::relu;
  if (s == "tanh") return Activation::tanh;
  if (s == "softplus") return Activation::softplus;
  throw Error("unknown activation '" + s + "'");
}

struct EncoderConfig {
  std::vector<int> f_widths{2, 32, 32};
  std::vector<int> g_widths{32, 32};
  std::vector<int> h_widths{32, 32, 16};
  std::vector<int> head_widths;  // empty: no reconstruction head
  Activation activation = Activation::relu;

  /// Default architecture; a positive portfolio size adds the head.
  static EncoderConfig defaults(int portfolio_size = 0) {
    EncoderConfig c;
    if (portfolio_size > 0) c.head_widths = {16, 32, portfolio_size};
    return c;
  }

  int embedding_dim() const { return h_widths.back(); }
  bool has_head() const { return !head_widths.empty(); }
  int portfolio_size() const { return has_head() ? head_widths.back() : 0; }

  void validate() const {
    auto check_stage = [](const std::vector<int>& w, const char* name) {
      if (w.size() < 2) throw Error(std::string("encoder config: stage ") + name + " needs at least one layer");
      for (int v : w)
        if (v < 1) throw Error(std::string("encoder config: non-positive width in ") + name);
    };
    check_stage(f_widths, "f");
    check_stage(g_widths, "g");
    check_stage(h_widths, "h");
    if (f_widths.front() != 2) throw Error("encoder config: f must take the 2-value cell input");
    if (g_widths.front() != f_widths.back()) throw Error("encoder config: g input != f output");
    if (h_widths.front() != g_widths.back()) throw Error("encoder config: h input != g output");
    if (has_head()) {
      check_stage(head_widths, "head");
      if (head_widths.front() != embedding_dim()) throw Error("encoder config: head input != embedding size");
    }
  }

  bool operator==(const EncoderConfig&) const = default;
};

inline nlohmann::json encoder_config_to_json(const EncoderConfig& c) {
  return {{"f", c.f_widths}, {"g", c.g_widths}, {"h", c.h_widths}, {"head", c.head_widths},
          {"activation", to_string(c.activation)}};
}

inline EncoderConfig encoder_config_from_json(const nlohmann::json& j) {
  EncoderConfig c;
  c.f_widths = j.at("f").get<std::vector<int>>();
  c.g_widths = j.at("g").get<std::vector<int>>();
  c.h_widths = j.at("h").get<std::vector<int>>();
  c.head_widths = j.value("head", std::vector<int>{});
  c.activation = activation_from_string(j.value("activation", std::string("relu")));
  c.validate();
  return c;
}

enum class Stage : std::size_t { f = 0, g = 1, h = 2, head = 3 };

struct LayerShape {
  int in = 0;
  int out = 0;
  std::size_t weight_offset = 0;  // out x in, row-major
  std::size_t bias_offset = 0;
};

/// Flat parameter vector plus the per-layer index into it.
struct EncoderParams {
  EncoderConfig config;
  std::vector<double> values;
  std::array<std::vector<LayerShape>, 4> layers;

  static EncoderParams zeros(const EncoderConfig& config) {
    config.validate();
    EncoderParams p;
    p.config = config;
    std::size_t offset = 0;
    const std::array<const std::vector<int>*, 4> widths{&config.f_widths, &config.g_widths, &config.h_widths,
                                                        &config.head_widths};
    for (std::size_t s = 0; s < 4; ++s) {
      const auto& w = *widths[s];
      for (std::size_t l = 0; l + 1 < w.size(); ++l) {
        LayerShape shape{w[l], w[l + 1], offset, offset + static_cast<std::size_t>(w[l] * w[l + 1])};
        offset = shape.bias_offset + static_cast<std::size_t>(w[l + 1]);
        p.layers[s].push_back(shape);
      }
    }
    p.values.assign(offset, 0.0);
    return p;
  }

  std::size_t size() const { return values.size(); }
  const std::vector<LayerShape>& stage(Stage s) const { return layers[static_cast<std::size_t>(s)]; }
};

/// Scaled-uniform init: weights in [-b, b] with b = sqrt(6 / (fan_in + fan_out)),
/// biases zero.
inline double init_bound(int fan_in, int fan_out) { return std::sqrt(6.0 / (fan_in + fan_out)); }

inline EncoderParams init_params(const EncoderConfig& config, std::uint64_t seed) {
  auto p = EncoderParams::zeros(config);
  Rng rng(seed);
  for (const auto& stage : p.layers)
    for (const auto& layer : stage) {
      const double b = init_bound(layer.in, layer.out);
      for (std::size_t i = 0; i < static_cast<std::size_t>(layer.in * layer.out); ++i)
        p.values[layer.weight_offset + i] = uniform(rng, -b, b);
    }
  return p;
}

struct Embedding {
  Vector values;
  std::string dataset;
};

namespace detail {

enum class FinalActivation { hidden, linear, sigmoid };

using ConstMatrixMap = Eigen::Map<const Matrix>;
using MatrixMap = Eigen::Map<Matrix>;
using ConstRowMap = Eigen::Map<const Eigen::RowVectorXd>;
using RowMap = Eigen::Map<Eigen::RowVectorXd>;

/// acts[0] is the input; acts[l + 1] the output of layer l.
struct MlpTrace {
  std::vector<Matrix> acts;
  const Matrix& output() const { return acts.back(); }
};

inline void activate(Matrix& a, Activation act) {
  switch (act) {
    case Activation::relu: a = a.cwiseMax(0.0); break;
    case Activation::tanh: a = a.array().tanh().matrix(); break;
    case Activation::softplus:
      a = a.unaryExpr([](double z) { return z > 0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z)); });
      break;
  }
}

/// Multiplies `grad` (dL/d output) in place by the activation derivative,
/// expressed through the layer output.
inline void activation_backward(Matrix& grad, const Matrix& out, Activation act) {
  switch (act) {
    case Activation::relu: grad = (out.array() > 0.0).select(grad, 0.0); break;
    case Activation::tanh: grad.array() *= 1.0 - out.array().square(); break;
    case Activation::softplus: grad.array() *= 1.0 - (-out.array()).exp(); break;
  }
}

inline MlpTrace mlp_forward(const EncoderParams& p, Stage stage, Matrix input, FinalActivation final) {
  MlpTrace trace;
  trace.acts.reserve(p.stage(stage).size() + 1);
  trace.acts.push_back(std::move(input));
  const auto& layers = p.stage(stage);
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const auto& shape = layers[l];
    ConstMatrixMap w(p.values.data() + shape.weight_offset, shape.out, shape.in);
    ConstRowMap b(p.values.data() + shape.bias_offset, shape.out);
    Matrix a = trace.acts.back() * w.transpose();
    a.rowwise() += b;
    const bool last = l + 1 == layers.size();
    if (!last || final == FinalActivation::hidden) {
      activate(a, p.config.activation);
    } else if (final == FinalActivation::sigmoid) {
      a = a.unaryExpr([](double z) { return z >= 0 ? 1.0 / (1.0 + std::exp(-z)) : std::exp(z) / (1.0 + std::exp(z)); });
    }
    trace.acts.push_back(std::move(a));
  }
  return trace;
}

/// Accumulates parameter gradients into `grad` and returns dL/d input.
inline Matrix mlp_backward(const EncoderParams& p, Stage stage, const MlpTrace& trace, Matrix d_out,
                           FinalActivation final, std::span<double> grad) {
  const auto& layers = p.stage(stage);
  for (std::size_t l = layers.size(); l-- > 0;) {
    const auto& shape = layers[l];
    const Matrix& out = trace.acts[l + 1];
    const bool last = l + 1 == layers.size();
    if (!last || final == FinalActivation::hidden)
      activation_backward(d_out, out, p.config.activation);
    else if (final == FinalActivation::sigmoid)
      d_out.array() *= out.array() * (1.0 - out.array());
    MatrixMap gw(grad.data() + shape.weight_offset, shape.out, shape.in);
    RowMap gb(grad.data() + shape.bias_offset, shape.out);
    gw.noalias() += d_out.transpose() * trace.acts[l];
    gb += d_out.colwise().sum();
    ConstMatrixMap w(p.values.data() + shape.weight_offset, shape.out, shape.in);
    d_out = d_out * w;
  }
  return d_out;
}

struct EncodeTrace {
  std::size_t rows = 0;
  std::size_t cols = 0;
  MlpTrace f, g, h, head;
  bool with_head = false;
};

inline Matrix cell_inputs(const Batch& batch) {
  const auto r = static_cast<Eigen::Index>(batch.n_rows());
  const auto c = static_cast<Eigen::Index>(batch.n_cols());
  Matrix z(r * c, 2);
  for (Eigen::Index j = 0; j < c; ++j)
    for (Eigen::Index i = 0; i < r; ++i) {
      z(j * r + i, 0) = batch.x(i, j);
      z(j * r + i, 1) = batch.y[static_cast<std::size_t>(i)];
    }
  return z;
}

inline EncodeTrace encode_forward(const EncoderParams& p, const Batch& batch, bool with_head) {
  if (batch.n_rows() == 0 || batch.n_cols() == 0) throw Error("encode: empty batch");
  if (with_head && !p.config.has_head()) throw Error("reconstruct: encoder has no reconstruction head");
  EncodeTrace t;
  t.rows = batch.n_rows();
  t.cols = batch.n_cols();
  t.with_head = with_head;
  const auto r = static_cast<Eigen::Index>(t.rows);
  const auto c = static_cast<Eigen::Index>(t.cols);

  t.f = mlp_forward(p, Stage::f, cell_inputs(batch), FinalActivation::hidden);
  const Matrix& cells = t.f.output();
  Matrix pooled(c, cells.cols());
  for (Eigen::Index j = 0; j < c; ++j) pooled.row(j) = cells.middleRows(j * r, r).colwise().mean();

  t.g = mlp_forward(p, Stage::g, std::move(pooled), FinalActivation::hidden);
  Matrix summary = t.g.output().colwise().mean();
  t.h = mlp_forward(p, Stage::h, std::move(summary), FinalActivation::linear);
  if (with_head) t.head = mlp_forward(p, Stage::head, t.h.output(), FinalActivation::sigmoid);
  return t;
}

inline void encode_backward(const EncoderParams& p, const EncodeTrace& t, const Vector* d_embedding,
                            const Vector* d_head, std::span<double> grad) {
  const auto r = static_cast<Eigen::Index>(t.rows);
  const auto c = static_cast<Eigen::Index>(t.cols);
  Matrix d_emb = Matrix::Zero(1, p.config.embedding_dim());
  if (d_embedding) d_emb += d_embedding->transpose();
  if (d_head) {
    if (!t.with_head) throw Error("encode_backward: head gradient without head pass");
    Matrix dh = d_head->transpose();
    d_emb += mlp_backward(p, Stage::head, t.head, std::move(dh), FinalActivation::sigmoid, grad);
  }
  Matrix d_summary = mlp_backward(p, Stage::h, t.h, std::move(d_emb), FinalActivation::linear, grad);
  Matrix d_g = d_summary.replicate(c, 1) / static_cast<double>(c);
  Matrix d_pooled = mlp_backward(p, Stage::g, t.g, std::move(d_g), FinalActivation::hidden, grad);
  Matrix d_cells(r * c, d_pooled.cols());
  for (Eigen::Index j = 0; j < c; ++j)
    d_cells.middleRows(j * r, r) = d_pooled.row(j).replicate(r, 1) / static_cast<double>(r);
  mlp_backward(p, Stage::f, t.f, std::move(d_cells), FinalActivation::hidden, grad);
}

}  // namespace detail

inline Embedding encode(const EncoderParams& params, const Batch& batch) {
  const auto t = detail::encode_forward(params, batch, false);
  return {t.h.output().row(0).transpose(), batch.dataset};
}

/// Predicted landmarker vector, each entry in (0, 1).
inline Vector reconstruct(const EncoderParams& params, const Batch& batch) {
  const auto t = detail::encode_forward(params, batch, true);
  return t.head.output().row(0).transpose();
}

enum class OutputKind { embedding, reconstruction };

/// A differentiable loss over encoder outputs. `loss` receives one output per
/// batch (embedding or reconstruction, per `kind`) and must fill the
/// gradient of the loss with respect to each output.
struct Objective {
  OutputKind kind = OutputKind::embedding;
  std::vector<const Batch*> batches;
  std::function<double(const std::vector<Vector>& outputs, std::vector<Vector>& output_grads)> loss;
};

struct LossAndGradient {
  double loss = 0.0;
  std::vector<double> gradient;  // same layout as EncoderParams::values
};

inline std::vector<Vector> objective_outputs(const EncoderParams& params, const Objective& objective,
                                             std::vector<detail::EncodeTrace>* traces = nullptr) {
  const bool head = objective.kind == OutputKind::reconstruction;
  std::vector<Vector> outputs;
  outputs.reserve(objective.batches.size());
  for (const Batch* b : objective.batches) {
    auto t = detail::encode_forward(params, *b, head);
    outputs.push_back((head ? t.head.output() : t.h.output()).row(0).transpose());
    if (traces) traces->push_back(std::move(t));
  }
  return outputs;
}

/// Forward pass only.
inline double evaluate_objective(const EncoderParams& params, const Objective& objective) {
  const auto outputs = objective_outputs(params, objective);
  std::vector<Vector> grads(outputs.size());
  for (std::size_t i = 0; i < outputs.size(); ++i) grads[i] = Vector::Zero(outputs[i].size());
  const double loss = objective.loss(outputs, grads);
  if (!std::isfinite(loss)) throw Error("objective: non-finite loss");
  return loss;
}

inline LossAndGradient loss_and_gradient(const EncoderParams& params, const Objective& objective) {
  std::vector<detail::EncodeTrace> traces;
  const auto outputs = objective_outputs(params, objective, &traces);
  std::vector<Vector> grads(outputs.size());
  for (std::size_t i = 0; i < outputs.size(); ++i) grads[i] = Vector::Zero(outputs[i].size());
  LossAndGradient result;
  result.loss = objective.loss(outputs, grads);
  if (!std::isfinite(result.loss)) throw Error("objective: non-finite loss");
  result.gradient.assign(params.size(), 0.0);
  const bool head = objective.kind == OutputKind::reconstruction;
  for (std::size_t i = 0; i < traces.size(); ++i) {
    if (grads[i].isZero(0.0)) continue;
    detail::encode_backward(params, traces[i], head ? nullptr : &grads[i], head ? &grads[i] : nullptr,
                            result.gradient);
  }
  return result;
}

// ---------------------------------------------------------------------------
// Checkpoints

inline nlohmann::json params_to_json(const EncoderParams& p) {
  return {{"format", "lmrep-encoder"}, {"version", 1}, {"config", encoder_config_to_json(p.config)},
          {"values", p.values}};
}

inline EncoderParams params_from_json(const nlohmann::json& j) {
  if (!j.contains("version")) throw Error("encoder checkpoint: missing version");
  if (j.at("version").get<int>() != 1) throw Error("encoder checkpoint: unsupported version");
  auto p = EncoderParams::zeros(encoder_config_from_json(j.at("config")));
  const auto values = j.at("values").get<std::vector<double>>();
  if (values.size() != p.size()) throw Error("encoder checkpoint: parameter count does not match config");
  for (double v : values)
    if (!std::isfinite(v)) throw Error("encoder checkpoint: non-finite parameter");
  p.values = values;
  return p;
}

inline void save_checkpoint(const EncoderParams& p, const std::filesystem::path& path) {
  write_file_atomic(path, params_to_json(p).dump() + "\n");
}

inline EncoderParams load_checkpoint(const std::filesystem::path& path) {
  return params_from_json(nlohmann::json::parse(read_file(path)));
}

}  // namespace lmrep
