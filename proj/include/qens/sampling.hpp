#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <vector>

#include "systems.hpp"

namespace qens {

inline constexpr std::size_t kDefaultTestSize = 300;

/// Independent streams derived from one master seed.
enum class Stream : std::uint64_t { training = 1, test = 2 };

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

inline std::uint64_t derive_seed(std::uint64_t master, Stream stream) {
  return splitmix64(master ^ (static_cast<std::uint64_t>(stream) * 0xD1B54A32D192ED03ULL));
}

/// mt19937_64 with a portable mapping to [0, 1).
///
/// std::uniform_real_distribution is implementation-defined, so the 53-bit
/// conversion is done here to keep sequences identical across standard
/// libraries.
class SeededRng {
 public:
  explicit SeededRng(std::uint64_t seed) : seed_(seed), engine_(seed) {}

  std::uint64_t seed() const { return seed_; }
  std::uint64_t draws() const { return draws_; }

  double uniform01() {
    ++draws_;
    return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
  }

 private:
  std::uint64_t seed_;
  std::uint64_t draws_ = 0;
  std::mt19937_64 engine_;
};

inline ParameterSample sample_one(const ParameterDomain& domain, SeededRng& rng) {
  ParameterSample theta{std::vector<double>(domain.dim())};
  for (std::size_t i = 0; i < domain.dim(); ++i) {
    const double lo = domain.lower(i), hi = domain.upper(i);
    theta.values[i] = lo + rng.uniform01() * (hi - lo);
    // rounding can push lo + U·(hi − lo) past hi
    if (theta.values[i] > hi) theta.values[i] = hi;
  }
  return theta;
}

/// M independent uniform draws from the box.
inline std::vector<ParameterSample> sample_batch(const ParameterDomain& domain, std::size_t m,
                                                 SeededRng& rng) {
  if (m == 0) throw std::invalid_argument("sample_batch: batch size must be >= 1");
  std::vector<ParameterSample> batch;
  batch.reserve(m);
  for (std::size_t k = 0; k < m; ++k) batch.push_back(sample_one(domain, rng));
  return batch;
}

/// Endpoint-inclusive tensor grid with p points per coordinate, first
/// coordinate varying slowest.
inline std::vector<ParameterSample> fixed_grid(const ParameterDomain& domain,
                                               std::size_t points_per_dim) {
  if (points_per_dim < 2) throw std::invalid_argument("fixed_grid: need at least 2 points per dimension");
  const std::size_t d = domain.dim();
  std::vector<std::vector<double>> axes(d);
  for (std::size_t i = 0; i < d; ++i)
    for (std::size_t k = 0; k < points_per_dim; ++k)
      axes[i].push_back(std::lerp(domain.lower(i), domain.upper(i),
                                  static_cast<double>(k) / static_cast<double>(points_per_dim - 1)));

  std::size_t total = 1;
  for (std::size_t i = 0; i < d; ++i) total *= points_per_dim;

  std::vector<ParameterSample> grid;
  grid.reserve(total);
  std::vector<std::size_t> idx(d, 0);
  for (std::size_t c = 0; c < total; ++c) {
    ParameterSample theta{std::vector<double>(d)};
    for (std::size_t i = 0; i < d; ++i) theta.values[i] = axes[i][idx[i]];
    grid.push_back(std::move(theta));
    for (std::size_t i = d; i-- > 0;) {
      if (++idx[i] < points_per_dim) break;
      idx[i] = 0;
    }
  }
  return grid;
}

/// Frozen evaluation sample drawn once per run from the test stream.
struct TestSet {
  std::vector<ParameterSample> samples;
  std::uint64_t seed;

  std::size_t size() const { return samples.size(); }
};

inline TestSet make_test_set(const ParameterDomain& domain, std::size_t size,
                             std::uint64_t master_seed) {
  if (size == 0) throw std::invalid_argument("make_test_set: test size must be >= 1");
  SeededRng rng(derive_seed(master_seed, Stream::test));
  return {sample_batch(domain, size, rng), master_seed};
}

}  // namespace qens
