#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

namespace mt6 {

// Deterministic random source. The engine is std::mt19937_64, whose output
// sequence is fixed by the standard; the distributions are implemented here
// because the std:: ones are implementation-defined and would make dumps and
// checkpoints differ between standard libraries.
class Rng {
 public:
  explicit Rng(uint64_t seed) : engine_(seed) {}

  uint64_t NextU64() { return engine_(); }

  // Uniform in [0, 1) with 53 bits of precision.
  double Uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  // Uniform integer in [0, n). n must be > 0.
  uint64_t Below(uint64_t n) {
    // Rejection sampling keeps the draw exactly uniform.
    const uint64_t limit = UINT64_MAX - UINT64_MAX % n;
    uint64_t x;
    do {
      x = engine_();
    } while (x >= limit);
    return x % n;
  }

  bool Bernoulli(double p) { return Uniform() < p; }

  // Standard normal via Box-Muller; the spare value is discarded so that the
  // stream position depends only on the number of calls.
  double Normal() {
    double u1 = Uniform();
    while (u1 <= 0.0) u1 = Uniform();
    const double u2 = Uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
  }

  template <typename T>
  void Shuffle(std::vector<T>& v) {
    for (size_t i = v.size(); i > 1; --i) {
      const size_t j = static_cast<size_t>(Below(i));
      std::swap(v[i - 1], v[j]);
    }
  }

  // Index drawn from unnormalized nonnegative weights.
  size_t Categorical(const std::vector<double>& weights);

 private:
  std::mt19937_64 engine_;
};

// splitmix64 finalizer; used to derive independent per-example seeds from
// (base seed, stream, index) so results never depend on processing order.
uint64_t MixSeed(uint64_t base, uint64_t stream, uint64_t index);

// Uniformly random k-subset of {0, .., n-1}, returned sorted.
std::vector<size_t> SampleSortedSubset(size_t n, size_t k, Rng& rng);

}  // namespace mt6
