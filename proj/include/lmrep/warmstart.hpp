#pragma once

// Warm-start selection strategies: nearest neighbours in a representation
// space, best-on-average ranking, random portfolio draws and plain random
// sampling.

#include "lmrep/core.hpp"
#include "lmrep/encoder.hpp"
#include "lmrep/portfolio.hpp"
#include "lmrep/space.hpp"

namespace lmrep {

/// Representation vectors of the landmarker-base datasets.
struct RepresentationBase {
  std::vector<std::string> datasets;
  std::vector<Vector> vectors;
  std::shared_ptr<const LandmarkerBase> landmarkers;

  void validate() const {
    if (!landmarkers) throw Error("representation base: missing landmarker base");
    if (datasets.size() != vectors.size()) throw Error("representation base: size mismatch");
    for (std::size_t i = 0; i < vectors.size(); ++i) {
      if (vectors[i].size() != vectors.front().size()) throw Error("representation base: ragged vectors");
      if (landmarkers->index_of(datasets[i]) < 0)
        throw Error("representation base: '" + datasets[i] + "' missing from landmarker base");
    }
  }
};

/// The true landmarkers used as representations.
inline RepresentationBase landmarker_representation(std::shared_ptr<const LandmarkerBase> base) {
  RepresentationBase r;
  r.datasets = base->datasets;
  for (std::size_t i = 0; i < base->size(); ++i) r.vectors.push_back(base->values.row(static_cast<Eigen::Index>(i)).transpose());
  r.landmarkers = std::move(base);
  return r;
}

/// Embedding of the full train split, or the predicted landmarkers when
/// `predicted` is set.
inline Vector dataset_representation(const EncoderParams& params, const Dataset& ds, bool predicted) {
  const auto batch = full_batch(ds);
  return predicted ? reconstruct(params, batch) : encode(params, batch).values;
}

inline RepresentationBase encoder_representation(const EncoderParams& params, const std::vector<Dataset>& datasets,
                                                 std::shared_ptr<const LandmarkerBase> base, bool predicted) {
  RepresentationBase r;
  for (const auto& d : datasets) {
    if (base->index_of(d.name) < 0) continue;
    r.datasets.push_back(d.name);
    r.vectors.push_back(dataset_representation(params, d, predicted));
  }
  r.landmarkers = std::move(base);
  r.validate();
  return r;
}

/// Portfolio indices ordered by the dataset's landmarker value, best first,
/// lowest index on ties.
inline std::vector<int> ranked_configs(const LandmarkerBase& base, std::size_t row) {
  std::vector<int> order(base.portfolio_size());
  std::iota(order.begin(), order.end(), 0);
  const auto r = static_cast<Eigen::Index>(row);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return base.values(r, a) > base.values(r, b); });
  return order;
}

/// Indices of the k nearest base entries, nearest first, ties by name.
inline std::vector<std::size_t> nearest_neighbours(const Vector& target, const RepresentationBase& base, std::size_t k) {
  if (k > base.vectors.size()) throw Error("select_knn: k exceeds base size");
  std::vector<std::pair<double, std::size_t>> d;
  for (std::size_t i = 0; i < base.vectors.size(); ++i) {
    if (base.vectors[i].size() != target.size()) throw Error("select_knn: representation length mismatch");
    d.emplace_back((base.vectors[i] - target).norm(), i);
  }
  std::sort(d.begin(), d.end(), [&](const auto& a, const auto& b) {
    if (a.first != b.first) return a.first < b.first;
    return base.datasets[a.second] < base.datasets[b.second];
  });
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < k; ++i) out.push_back(d[i].second);
  return out;
}

/// Portfolio indices chosen by select_knn.
inline std::vector<int> select_knn_indices(const Vector& target, const RepresentationBase& base, std::size_t k) {
  base.validate();
  if (k > base.landmarkers->portfolio_size()) throw Error("select_knn: k exceeds portfolio size");
  std::vector<bool> used(base.landmarkers->portfolio_size(), false);
  std::vector<int> out;
  for (auto n : nearest_neighbours(target, base, k)) {
    const auto row = static_cast<std::size_t>(base.landmarkers->index_of(base.datasets[n]));
    for (int c : ranked_configs(*base.landmarkers, row))
      if (!used[static_cast<std::size_t>(c)]) {
        used[static_cast<std::size_t>(c)] = true;
        out.push_back(c);
        break;
      }
  }
  return out;
}

inline std::vector<HyperparameterConfig> to_configs(const Portfolio& portfolio, const std::vector<int>& indices) {
  std::vector<HyperparameterConfig> out;
  for (int i : indices) out.push_back(portfolio.configs.at(static_cast<std::size_t>(i)));
  return out;
}

inline std::vector<HyperparameterConfig> select_knn(const Vector& target, const RepresentationBase& base, std::size_t k) {
  base.validate();
  if (!base.landmarkers->portfolio) throw Error("select_knn: landmarker base has no portfolio");
  return to_configs(*base.landmarkers->portfolio, select_knn_indices(target, base, k));
}

inline std::vector<HyperparameterConfig> select_landmarker_oracle(const Vector& target_landmarkers,
                                                                  std::shared_ptr<const LandmarkerBase> base,
                                                                  std::size_t k) {
  return select_knn(target_landmarkers, landmarker_representation(std::move(base)), k);
}

/// Portfolio indices by mean landmarker value, best first, lowest index on
/// ties.
inline std::vector<int> select_rank_indices(const LandmarkerBase& base, std::size_t k) {
  if (k > base.portfolio_size()) throw Error("select_rank: k exceeds portfolio size");
  const Vector mean = base.values.colwise().mean().transpose();
  std::vector<int> order(base.portfolio_size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return mean[a] > mean[b]; });
  order.resize(k);
  return order;
}

inline std::vector<HyperparameterConfig> select_rank(const LandmarkerBase& base, std::size_t k) {
  if (!base.portfolio) throw Error("select_rank: landmarker base has no portfolio");
  return to_configs(*base.portfolio, select_rank_indices(base, k));
}

inline std::vector<HyperparameterConfig> select_random_portfolio(const Portfolio& portfolio, std::size_t k, Rng& rng) {
  if (k > portfolio.size()) throw Error("select_random_portfolio: k exceeds portfolio size");
  std::vector<int> idx;
  for (auto i : sample_without_replacement(portfolio.size(), k, rng)) idx.push_back(static_cast<int>(i));
  return to_configs(portfolio, idx);
}

inline std::vector<HyperparameterConfig> select_no_warmstart(const SearchSpace& space, std::size_t k, Rng& rng) {
  std::vector<HyperparameterConfig> out;
  for (std::size_t i = 0; i < k; ++i) out.push_back(space.sample(rng));
  return out;
}

}  // namespace lmrep
