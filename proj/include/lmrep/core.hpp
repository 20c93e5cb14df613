#pragma once

// Shared vocabulary: matrix aliases, the error type, a portable seeded RNG
// layer and small filesystem helpers used by every module.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <exception>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <limits>
#include <numeric>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

namespace lmrep {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// The engine is fixed (mt19937_64); the distributions below are written out
// by hand so that every stream is identical across standard libraries.
using Rng = std::mt19937_64;

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Derives an independent stream seed from a parent seed and a tag.
inline std::uint64_t derive_seed(std::uint64_t seed, std::string_view tag) {
  std::uint64_t h = 1469598103934665603ULL;  // FNV-1a
  for (unsigned char c : tag) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return splitmix64(seed ^ splitmix64(h));
}

inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t index) {
  return splitmix64(seed ^ splitmix64(index + 0x632be59bd9b4e019ULL));
}

/// Uniform double in [0, 1).
inline double uniform01(Rng& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

inline double uniform(Rng& rng, double lo, double hi) {
  return lo + (hi - lo) * uniform01(rng);
}

/// Uniform integer in [lo, hi], inclusive, by rejection.
inline std::int64_t uniform_int(Rng& rng, std::int64_t lo, std::int64_t hi) {
  if (hi < lo) throw Error("uniform_int: empty range");
  const std::uint64_t span = static_cast<std::uint64_t>(hi - lo) + 1ULL;
  if (span == 0) return static_cast<std::int64_t>(rng());
  const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                              std::numeric_limits<std::uint64_t>::max() % span;
  std::uint64_t draw = rng();
  while (draw >= limit) draw = rng();
  return lo + static_cast<std::int64_t>(draw % span);
}

inline std::size_t uniform_index(Rng& rng, std::size_t n) {
  return static_cast<std::size_t>(uniform_int(rng, 0, static_cast<std::int64_t>(n) - 1));
}

inline double standard_normal(Rng& rng) {
  // Box-Muller; the second variate is discarded.
  double u1 = uniform01(rng);
  while (u1 <= 0.0) u1 = uniform01(rng);
  const double u2 = uniform01(rng);
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
}

template <typename T>
void shuffle(std::vector<T>& v, Rng& rng) {
  for (std::size_t i = v.size(); i > 1; --i) {
    const std::size_t j = uniform_index(rng, i);
    std::swap(v[i - 1], v[j]);
  }
}

/// k distinct indices from [0, n), in draw order.
inline std::vector<std::size_t> sample_without_replacement(std::size_t n, std::size_t k, Rng& rng) {
  if (k > n) throw Error("sample_without_replacement: k > n");
  std::vector<std::size_t> pool(n);
  std::iota(pool.begin(), pool.end(), std::size_t{0});
  for (std::size_t i = 0; i < k; ++i) {
    const std::size_t j = i + uniform_index(rng, n - i);
    std::swap(pool[i], pool[j]);
  }
  pool.resize(k);
  return pool;
}

/// Runs fn(i) for i in [0, n) on up to `workers` threads with a strided
/// partition. Callers write results by index, so the outcome does not depend
/// on the worker count. The first exception is rethrown after joining.
template <typename Fn>
void parallel_for(std::size_t n, int workers, Fn&& fn) {
  const auto threads = std::min<std::size_t>(static_cast<std::size_t>(std::max(1, workers)), std::max<std::size_t>(n, 1));
  if (threads == 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::exception_ptr> errors(threads);
  std::vector<std::thread> pool;
  for (std::size_t t = 0; t < threads; ++t)
    pool.emplace_back([&, t] {
      try {
        for (std::size_t i = t; i < n; i += threads) fn(i);
      } catch (...) {
        errors[t] = std::current_exception();
      }
    });
  for (auto& th : pool) th.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

inline void log_warning(const std::string& message) {
  std::cerr << "warning: " << message << '\n';
}

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot read file: " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

/// Writes to a sibling temp file and renames it into place.
inline void write_file_atomic(const std::filesystem::path& path, const std::string& content) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write file: " + path.string());
    out << content;
    if (!out) throw Error("write failed: " + path.string());
  }
  std::filesystem::rename(tmp, path);
}

/// Shortest round-trip decimal representation of a double.
inline std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[32];
  for (int precision = 15; precision <= 17; ++precision) {
    std::snprintf(buf, sizeof(buf), "%.*g", precision, v);
    if (std::strtod(buf, nullptr) == v) break;
  }
  return buf;
}

inline double euclidean_distance(const Vector& a, const Vector& b) {
  if (a.size() != b.size()) throw Error("euclidean: length mismatch");
  return (a - b).norm();
}

}  // namespace lmrep
