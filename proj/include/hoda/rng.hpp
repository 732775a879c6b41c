#pragma once

// Deterministic randomness. Everything downstream (datasets, training,
// calibration, attacks, simulated populations) draws from named streams
// derived from one root seed, so any component can be re-run in isolation
// and reproduce its part of a larger run bit for bit.

#include <cstdint>
#include <random>
#include <string_view>
#include <vector>

namespace hoda {

/// Child seed for a named stream under `root`.
std::uint64_t derive_seed(std::uint64_t root, std::string_view stream);

/// Child seed for the `index`-th element of a named stream (one seed per
/// calibration sequence, per simulated user, per attack round, ...).
std::uint64_t derive_seed(std::uint64_t root, std::string_view stream,
                          std::uint64_t index);

/// Random source with fixed variate transforms. std::mt19937_64 is bit-exact
/// across implementations; the standard distributions are not, so the
/// uniform/normal transforms are spelled out here.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : gen_(seed) {}

  std::uint64_t next_u64() { return gen_(); }

  /// Uniform double in [0, 1).
  double uniform() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Uniform integer in [0, n), unbiased via rejection.
  int uniform_int(int n);

  /// Standard normal variate (Marsaglia polar method).
  double normal();

  double normal(double mean, double stddev) {
    return mean + stddev * normal();
  }

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (int i = static_cast<int>(v.size()) - 1; i > 0; --i) {
      const int j = uniform_int(i + 1);
      std::swap(v[static_cast<std::size_t>(i)], v[static_cast<std::size_t>(j)]);
    }
  }

  /// First k entries of a random permutation of [0, population).
  std::vector<int> sample_without_replacement(int population, int k);

 private:
  std::mt19937_64 gen_;
  double cached_normal_ = 0.0;
  bool has_cached_normal_ = false;
};

}  // namespace hoda
