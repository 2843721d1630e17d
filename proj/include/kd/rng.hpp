#pragma once

#include <cstdint>
#include <random>
#include <vector>

namespace kd {

// splitmix64 step, used to derive independent sub-stream seeds from a master
// seed. Derived seeds are stable across platforms.
std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream);

// Deterministic random source. The engine (mt19937_64) is specified bit-exact
// by the standard; the distribution mappings below are hand-rolled because
// std::uniform_real_distribution and friends are implementation-defined and
// would break byte-identical reruns across toolchains.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : eng_(seed) {}

  std::uint64_t next_u64() { return eng_(); }

  // uniform in [0, 1), 53-bit resolution
  double uniform() {
    return static_cast<double>(eng_() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // unbiased integer in [0, n) via rejection
  std::uint64_t below(std::uint64_t n);

  // standard normal, Box-Muller (pairs cached)
  double normal();

  double normal(double mean, double stddev) { return mean + stddev * normal(); }

  bool bernoulli(double p) { return uniform() < p; }

  // Fisher-Yates; identical results regardless of element type
  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::size_t j = static_cast<std::size_t>(below(i));
      std::swap(v[i - 1], v[j]);
    }
  }

 private:
  std::mt19937_64 eng_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace kd
