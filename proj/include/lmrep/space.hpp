#pragma once

// The seven-dimensional gradient-boosting hyperparameter space, its sampling
// distribution and the unit-cube encoding used by the GP surrogate.

#include "lmrep/core.hpp"

#include <json.hpp>

#include <array>
#include <string>

namespace lmrep {

enum class Scale { linear_int, log_float };

struct Dimension {
  std::string name;
  double lower;
  double upper;
  Scale scale;
};

inline constexpr std::size_t kNumHyperparameters = 7;

/// One point of the search space; values are in native units, integer
/// dimensions hold integral doubles.
struct HyperparameterConfig {
  std::array<double, kNumHyperparameters> values{};

  double n_estimators() const { return values[0]; }
  double eta() const { return values[1]; }
  double gamma() const { return values[2]; }
  double max_depth() const { return values[3]; }
  double min_child_weight() const { return values[4]; }
  double reg_lambda() const { return values[5]; }
  double reg_alpha() const { return values[6]; }

  double& operator[](std::size_t i) { return values[i]; }
  double operator[](std::size_t i) const { return values[i]; }
  bool operator==(const HyperparameterConfig&) const = default;
  auto operator<=>(const HyperparameterConfig&) const = default;

  /// Canonical text key, used for table lookup.
  std::string key() const {
    std::string k;
    for (std::size_t i = 0; i < values.size(); ++i) {
      if (i) k.push_back('|');
      k += format_double(values[i]);
    }
    return k;
  }
};

class SearchSpace {
 public:
  SearchSpace()
      : dims_{{{"n_estimators", 10, 1000, Scale::linear_int},
               {"eta", 1e-5, 1.0, Scale::log_float},
               {"gamma", 1e-5, 1.0, Scale::log_float},
               {"max_depth", 3, 8, Scale::linear_int},
               {"min_child_weight", 1e-5, 100.0, Scale::log_float},
               {"reg_lambda", 1e-5, 1000.0, Scale::log_float},
               {"reg_alpha", 1e-5, 1000.0, Scale::log_float}}} {}

  const std::array<Dimension, kNumHyperparameters>& dims() const { return dims_; }
  static constexpr std::size_t size() { return kNumHyperparameters; }

  bool contains(const HyperparameterConfig& c) const {
    for (std::size_t i = 0; i < size(); ++i) {
      const auto& d = dims_[i];
      if (!(c[i] >= d.lower && c[i] <= d.upper)) return false;
      if (d.scale == Scale::linear_int && c[i] != std::round(c[i])) return false;
    }
    return true;
  }

  /// Integer dims uniform over the inclusive integer range; log dims
  /// log-uniform.
  HyperparameterConfig sample(Rng& rng) const {
    HyperparameterConfig c;
    for (std::size_t i = 0; i < size(); ++i) {
      const auto& d = dims_[i];
      if (d.scale == Scale::linear_int)
        c[i] = static_cast<double>(
            uniform_int(rng, static_cast<std::int64_t>(d.lower), static_cast<std::int64_t>(d.upper)));
      else
        c[i] = std::clamp(std::exp(uniform(rng, std::log(d.lower), std::log(d.upper))), d.lower, d.upper);
    }
    return c;
  }

  Vector to_unit(const HyperparameterConfig& c) const {
    if (!contains(c)) throw Error("to_unit: configuration out of bounds");
    Vector u(static_cast<Eigen::Index>(size()));
    for (std::size_t i = 0; i < size(); ++i) {
      const auto& d = dims_[i];
      u[static_cast<Eigen::Index>(i)] =
          d.scale == Scale::linear_int
              ? (c[i] - d.lower) / (d.upper - d.lower)
              : (std::log(c[i]) - std::log(d.lower)) / (std::log(d.upper) - std::log(d.lower));
    }
    return u;
  }

  HyperparameterConfig from_unit(const Vector& u) const {
    if (u.size() != static_cast<Eigen::Index>(size())) throw Error("from_unit: wrong dimension");
    HyperparameterConfig c;
    for (std::size_t i = 0; i < size(); ++i) {
      const auto& d = dims_[i];
      const double t = std::clamp(u[static_cast<Eigen::Index>(i)], 0.0, 1.0);
      if (d.scale == Scale::linear_int) {
        c[i] = std::round(d.lower + t * (d.upper - d.lower));
      } else {
        // Endpoints are returned exactly so that bounds survive the round trip.
        c[i] = t == 0.0   ? d.lower
               : t == 1.0 ? d.upper
                          : std::clamp(std::exp(std::log(d.lower) + t * (std::log(d.upper) - std::log(d.lower))),
                                       d.lower, d.upper);
      }
    }
    return c;
  }

  HyperparameterConfig lower_bounds() const {
    HyperparameterConfig c;
    for (std::size_t i = 0; i < size(); ++i) c[i] = dims_[i].lower;
    return c;
  }

  HyperparameterConfig upper_bounds() const {
    HyperparameterConfig c;
    for (std::size_t i = 0; i < size(); ++i) c[i] = dims_[i].upper;
    return c;
  }

 private:
  std::array<Dimension, kNumHyperparameters> dims_;
};

inline HyperparameterConfig sample_config(const SearchSpace& space, Rng& rng) { return space.sample(rng); }

inline nlohmann::json config_to_json(const HyperparameterConfig& c, const SearchSpace& space = {}) {
  nlohmann::json j = nlohmann::json::object();
  for (std::size_t i = 0; i < space.size(); ++i) {
    if (space.dims()[i].scale == Scale::linear_int)
      j[space.dims()[i].name] = static_cast<std::int64_t>(c[i]);
    else
      j[space.dims()[i].name] = c[i];
  }
  return j;
}

inline HyperparameterConfig config_from_json(const nlohmann::json& j, const SearchSpace& space = {}) {
  HyperparameterConfig c;
  for (std::size_t i = 0; i < space.size(); ++i) c[i] = j.at(space.dims()[i].name).get<double>();
  if (!space.contains(c)) throw Error("configuration out of bounds: " + j.dump());
  return c;
}

}  // namespace lmrep
