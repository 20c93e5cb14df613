#pragma once

// Second-order gradient-boosted regression trees for binary classification
// with logistic loss, exact greedy split search and L1/L2 leaf
// regularisation, plus the ROC AUC metric.

#include "lmrep/core.hpp"
#include "lmrep/data.hpp"
#include "lmrep/space.hpp"

#include <json.hpp>

#include <span>

namespace lmrep {

struct GbtParams {
  int n_estimators = 100;
  double eta = 0.3;
  double gamma = 1e-5;
  int max_depth = 6;
  double min_child_weight = 1.0;
  double reg_lambda = 1.0;
  double reg_alpha = 1e-5;

  void validate() const {
    auto check = [](bool ok, const char* what) {
      if (!ok) throw Error(std::string("gbt params: ") + what + " out of range");
    };
    check(n_estimators >= 10 && n_estimators <= 1000, "n_estimators");
    check(eta >= 1e-5 && eta <= 1.0, "eta");
    check(gamma >= 1e-5 && gamma <= 1.0, "gamma");
    check(max_depth >= 3 && max_depth <= 8, "max_depth");
    check(min_child_weight >= 1e-5 && min_child_weight <= 100.0, "min_child_weight");
    check(reg_lambda >= 1e-5 && reg_lambda <= 1000.0, "reg_lambda");
    check(reg_alpha >= 1e-5 && reg_alpha <= 1000.0, "reg_alpha");
  }

  static GbtParams from_config(const HyperparameterConfig& c) {
    GbtParams p;
    p.n_estimators = static_cast<int>(std::lround(c.n_estimators()));
    p.eta = c.eta();
    p.gamma = c.gamma();
    p.max_depth = static_cast<int>(std::lround(c.max_depth()));
    p.min_child_weight = c.min_child_weight();
    p.reg_lambda = c.reg_lambda();
    p.reg_alpha = c.reg_alpha();
    return p;
  }
};

struct TreeNode {
  int feature = -1;  // -1 marks a leaf
  double threshold = 0.0;
  int left = -1;
  int right = -1;
  double weight = 0.0;
  double gain = 0.0;
  int depth = 0;

  bool is_leaf() const { return feature < 0; }
};

struct RegressionTree {
  std::vector<TreeNode> nodes;

  double predict(const double* row) const {
    int i = 0;
    while (!nodes[i].is_leaf()) i = row[nodes[i].feature] < nodes[i].threshold ? nodes[i].left : nodes[i].right;
    return nodes[i].weight;
  }

  int depth() const {
    int d = 0;
    for (const auto& n : nodes) d = std::max(d, n.depth);
    return d;
  }

  bool operator==(const RegressionTree& other) const {
    if (nodes.size() != other.nodes.size()) return false;
    for (std::size_t i = 0; i < nodes.size(); ++i) {
      const auto& a = nodes[i];
      const auto& b = other.nodes[i];
      if (a.feature != b.feature || a.threshold != b.threshold || a.left != b.left || a.right != b.right ||
          a.weight != b.weight)
        return false;
    }
    return true;
  }
};

struct GbtModel {
  std::vector<RegressionTree> trees;
  double base_score = 0.0;  // log-odds
  double eta = 1.0;
  int n_features = 0;
};

inline double sigmoid(double z) {
  if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

inline double soft_threshold(double g, double alpha) {
  const double m = std::abs(g) - alpha;
  return m > 0 ? std::copysign(m, g) : 0.0;
}

/// Mean logistic loss for margins F.
inline double logistic_loss(std::span<const double> margin, std::span<const int> y) {
  double total = 0.0;
  for (std::size_t i = 0; i < margin.size(); ++i) {
    const double z = margin[i];
    // log(1 + exp(z)) - y z, computed stably
    const double softplus = z > 0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z));
    total += softplus - y[i] * z;
  }
  return total / static_cast<double>(margin.size());
}

namespace detail {

struct SplitCandidate {
  double gain = 0.0;
  int feature = -1;
  double threshold = 0.0;
};

inline double leaf_objective(double g, double h, double lambda, double alpha) {
  const double gs = soft_threshold(g, alpha);
  return gs * gs / (h + lambda);
}

/// Grows one tree level by level. `leaf_of` receives the leaf node index of
/// every row.
inline RegressionTree grow_tree(const Matrix& x, const std::vector<std::vector<int>>& sorted,
                                const std::vector<double>& grad, const std::vector<double>& hess,
                                const GbtParams& p, std::vector<int>& leaf_of) {
  const auto n = static_cast<int>(x.rows());
  const auto d = static_cast<int>(x.cols());
  RegressionTree tree;
  std::vector<double> node_g{0.0}, node_h{0.0};
  for (int i = 0; i < n; ++i) {
    node_g[0] += grad[i];
    node_h[0] += hess[i];
  }
  tree.nodes.push_back(TreeNode{});
  std::vector<int> node_of(n, 0);  // frontier node of each row, -1 once settled
  std::vector<int> frontier{0};

  for (int depth = 0; depth < p.max_depth && !frontier.empty(); ++depth) {
    // slot[node] = position in frontier
    std::vector<int> slot(tree.nodes.size(), -1);
    for (std::size_t s = 0; s < frontier.size(); ++s) slot[frontier[s]] = static_cast<int>(s);
    const std::size_t m = frontier.size();
    std::vector<SplitCandidate> best(m);
    std::vector<double> gl(m), hl(m), last(m);
    std::vector<char> started(m);

    for (int f = 0; f < d; ++f) {
      std::fill(gl.begin(), gl.end(), 0.0);
      std::fill(hl.begin(), hl.end(), 0.0);
      std::fill(started.begin(), started.end(), 0);
      for (int row : sorted[f]) {
        const int nd = node_of[row];
        if (nd < 0) continue;
        const int s = slot[nd];
        const double v = x(row, f);
        if (started[s] && v != last[s]) {
          const double g_tot = node_g[nd], h_tot = node_h[nd];
          const double hr = h_tot - hl[s];
          if (hl[s] >= p.min_child_weight && hr >= p.min_child_weight) {
            const double gain = 0.5 * (leaf_objective(gl[s], hl[s], p.reg_lambda, p.reg_alpha) +
                                       leaf_objective(g_tot - gl[s], hr, p.reg_lambda, p.reg_alpha) -
                                       leaf_objective(g_tot, h_tot, p.reg_lambda, p.reg_alpha));
            if (gain > p.gamma && gain > best[s].gain) best[s] = {gain, f, 0.5 * (last[s] + v)};
          }
        }
        gl[s] += grad[row];
        hl[s] += hess[row];
        last[s] = v;
        started[s] = 1;
      }
    }

    std::vector<int> next;
    for (std::size_t s = 0; s < m; ++s) {
      const int nd = frontier[s];
      if (best[s].feature < 0) continue;
      const int left = static_cast<int>(tree.nodes.size());
      tree.nodes[nd].feature = best[s].feature;
      tree.nodes[nd].threshold = best[s].threshold;
      tree.nodes[nd].gain = best[s].gain;
      tree.nodes[nd].left = left;
      tree.nodes[nd].right = left + 1;
      TreeNode child;
      child.depth = depth + 1;
      tree.nodes.push_back(child);
      tree.nodes.push_back(child);
      node_g.push_back(0.0);
      node_g.push_back(0.0);
      node_h.push_back(0.0);
      node_h.push_back(0.0);
      next.push_back(left);
      next.push_back(left + 1);
    }
    for (int i = 0; i < n; ++i) {
      const int nd = node_of[i];
      if (nd < 0) continue;
      const auto& node = tree.nodes[nd];
      if (node.is_leaf()) {
        leaf_of[i] = nd;
        node_of[i] = -1;
        continue;
      }
      const int child = x(i, node.feature) < node.threshold ? node.left : node.right;
      node_of[i] = child;
      node_g[child] += grad[i];
      node_h[child] += hess[i];
    }
    frontier = std::move(next);
  }
  for (int i = 0; i < n; ++i)
    if (node_of[i] >= 0) leaf_of[i] = node_of[i];

  for (std::size_t k = 0; k < tree.nodes.size(); ++k)
    if (tree.nodes[k].is_leaf())
      tree.nodes[k].weight = -soft_threshold(node_g[k], p.reg_alpha) / (node_h[k] + p.reg_lambda);
  return tree;
}

}  // namespace detail

/// Trains with logistic loss. Each round's leaf weights are halved while the
/// full step would increase the mean training loss, so the training loss is
/// non-increasing across rounds.
inline GbtModel train_gbt(const Matrix& x, std::span<const int> y, const GbtParams& params) {
  params.validate();
  const auto n = static_cast<int>(x.rows());
  if (n < 2 || static_cast<std::size_t>(n) != y.size()) throw Error("train_gbt: bad training data");
  const double pos = static_cast<double>(std::count(y.begin(), y.end(), 1));
  if (pos == 0 || pos == n) throw Error("train_gbt: training split has a single class");

  GbtModel model;
  model.eta = params.eta;
  model.n_features = static_cast<int>(x.cols());
  model.base_score = std::log(pos / (n - pos));

  std::vector<std::vector<int>> sorted(static_cast<std::size_t>(x.cols()));
  for (Eigen::Index f = 0; f < x.cols(); ++f) {
    auto& idx = sorted[static_cast<std::size_t>(f)];
    idx.resize(static_cast<std::size_t>(n));
    std::iota(idx.begin(), idx.end(), 0);
    std::stable_sort(idx.begin(), idx.end(), [&](int a, int b) { return x(a, f) < x(b, f); });
  }

  std::vector<double> margin(static_cast<std::size_t>(n), model.base_score), trial(margin.size());
  std::vector<double> grad(margin.size()), hess(margin.size());
  std::vector<int> leaf_of(margin.size(), 0);
  double loss = logistic_loss(margin, y);

  for (int t = 0; t < params.n_estimators; ++t) {
    for (int i = 0; i < n; ++i) {
      const double prob = sigmoid(margin[i]);
      grad[i] = prob - y[i];
      hess[i] = prob * (1.0 - prob);
    }
    auto tree = detail::grow_tree(x, sorted, grad, hess, params, leaf_of);
    if (tree.nodes.size() == 1 && tree.nodes[0].weight == 0.0) {
      // Fixpoint: gradients will not change, every remaining round is identical.
      model.trees.insert(model.trees.end(), static_cast<std::size_t>(params.n_estimators - t), tree);
      break;
    }
    double scale = 1.0;
    for (int attempt = 0; attempt <= 60; ++attempt) {
      for (int i = 0; i < n; ++i) trial[i] = margin[i] + params.eta * scale * tree.nodes[leaf_of[i]].weight;
      const double trial_loss = logistic_loss(trial, y);
      if (trial_loss <= loss) {
        loss = trial_loss;
        break;
      }
      scale = attempt == 60 ? 0.0 : scale * 0.5;
      if (scale == 0.0) trial = margin;
    }
    if (scale != 1.0)
      for (auto& node : tree.nodes)
        if (node.is_leaf()) node.weight *= scale;
    margin.swap(trial);
    model.trees.push_back(std::move(tree));
  }
  return model;
}

inline GbtModel train_gbt(const Dataset& ds, const GbtParams& params) {
  return train_gbt(ds.x_train, ds.y_train, params);
}

inline Vector predict_margin(const GbtModel& model, const Matrix& x) {
  if (x.cols() != model.n_features) throw Error("predict: column count does not match training");
  Vector out = Vector::Constant(x.rows(), model.base_score);
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    const double* row = x.data() + i * x.cols();
    double s = 0.0;
    for (const auto& tree : model.trees) s += tree.predict(row);
    out[i] += model.eta * s;
  }
  return out;
}

inline Vector predict_proba(const GbtModel& model, const Matrix& x) {
  Vector m = predict_margin(model, x);
  for (Eigen::Index i = 0; i < m.size(); ++i) m[i] = sigmoid(m[i]);
  return m;
}

/// Mann-Whitney form of the ROC AUC; tied scores count one half.
inline double roc_auc(std::span<const int> y, std::span<const double> scores) {
  if (y.size() != scores.size()) throw Error("roc_auc: length mismatch");
  const std::size_t n = y.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  double rank_sum = 0.0;
  std::size_t n_pos = 0;
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j < n && scores[order[j]] == scores[order[i]]) ++j;
    const double mid = 0.5 * static_cast<double>(i + 1 + j);  // average of ranks i+1..j
    for (std::size_t k = i; k < j; ++k)
      if (y[order[k]] == 1) rank_sum += mid;
    i = j;
  }
  for (int v : y) n_pos += v == 1;
  const std::size_t n_neg = n - n_pos;
  if (n_pos == 0 || n_neg == 0) throw Error("roc_auc: y must contain both classes");
  const double np = static_cast<double>(n_pos);
  return (rank_sum - np * (np + 1.0) / 2.0) / (np * static_cast<double>(n_neg));
}

inline double roc_auc(std::span<const int> y, const Vector& scores) {
  return roc_auc(y, std::span<const double>(scores.data(), static_cast<std::size_t>(scores.size())));
}

// ---------------------------------------------------------------------------
// Serialization

inline nlohmann::json model_to_json(const GbtModel& model) {
  nlohmann::json trees = nlohmann::json::array();
  for (const auto& tree : model.trees) {
    nlohmann::json t = {{"feature", nlohmann::json::array()}, {"threshold", nlohmann::json::array()},
                        {"left", nlohmann::json::array()},    {"right", nlohmann::json::array()},
                        {"weight", nlohmann::json::array()},  {"gain", nlohmann::json::array()}};
    for (const auto& n : tree.nodes) {
      t["feature"].push_back(n.feature);
      t["threshold"].push_back(n.threshold);
      t["left"].push_back(n.left);
      t["right"].push_back(n.right);
      t["weight"].push_back(n.weight);
      t["gain"].push_back(n.gain);
    }
    trees.push_back(std::move(t));
  }
  return {{"format", "lmrep-gbt"}, {"version", 1},          {"base_score", model.base_score},
          {"eta", model.eta},      {"n_features", model.n_features}, {"trees", std::move(trees)}};
}

inline GbtModel model_from_json(const nlohmann::json& j) {
  if (j.at("version").get<int>() != 1) throw Error("gbt model: unsupported version");
  GbtModel model;
  model.base_score = j.at("base_score").get<double>();
  model.eta = j.at("eta").get<double>();
  model.n_features = j.at("n_features").get<int>();
  for (const auto& t : j.at("trees")) {
    RegressionTree tree;
    const std::size_t count = t.at("feature").size();
    for (std::size_t i = 0; i < count; ++i) {
      TreeNode n;
      n.feature = t["feature"][i].get<int>();
      n.threshold = t["threshold"][i].get<double>();
      n.left = t["left"][i].get<int>();
      n.right = t["right"][i].get<int>();
      n.weight = t["weight"][i].get<double>();
      n.gain = t["gain"][i].get<double>();
      tree.nodes.push_back(n);
    }
    // depth is recomputed from the topology
    for (std::size_t i = 0; i < count; ++i)
      if (!tree.nodes[i].is_leaf()) {
        tree.nodes[static_cast<std::size_t>(tree.nodes[i].left)].depth = tree.nodes[i].depth + 1;
        tree.nodes[static_cast<std::size_t>(tree.nodes[i].right)].depth = tree.nodes[i].depth + 1;
      }
    model.trees.push_back(std::move(tree));
  }
  return model;
}

}  // namespace lmrep
