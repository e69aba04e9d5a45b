#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

namespace octad {

// Deterministic 64-bit generator (splitmix64). Chosen for its single word of
// state and a documented, platform-independent update rule: every run of the
// pipeline draws all of its randomness through instances of this class, so
// two runs with the same seed replay the same sequence.
//
// Single-owner by convention: parallel work derives child generators with
// fork() instead of sharing one instance.
class Rng {
 public:
  explicit Rng(uint64_t seed) : state_(seed) {}

  uint64_t next_u64() {
    uint64_t z = (state_ += 0x9e3779b97f4a7c15ull);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
  }

  // Uniform in [0, 1), 53-bit mantissa.
  double next_f64() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  // Uniform integer in [0, n). Lemire's multiply-shift; bias is < 2^-64 and
  // irrelevant at the scales used here.
  int next_int(int n) {
    return static_cast<int>((static_cast<unsigned __int128>(next_u64()) *
                             static_cast<unsigned __int128>(n)) >> 64);
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * next_f64(); }

  // Standard normal via the Marsaglia polar method (pairs cached).
  double next_normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u, v, s;
    do {
      u = 2.0 * next_f64() - 1.0;
      v = 2.0 * next_f64() - 1.0;
      s = u * u + v * v;
    } while (s >= 1.0 || s == 0.0);
    const double m = std::sqrt(-2.0 * std::log(s) / s);
    spare_ = v * m;
    has_spare_ = true;
    return u * m;
  }

  // Child generator. Advances this generator once; the child's stream is
  // independent of further draws from the parent.
  Rng fork(uint64_t tag) { return Rng(mix(next_u64() ^ tag)); }

  // Fisher-Yates.
  template <class T>
  void shuffle(std::vector<T>& v) {
    for (int i = static_cast<int>(v.size()) - 1; i > 0; --i) {
      std::swap(v[i], v[static_cast<size_t>(next_int(i + 1))]);
    }
  }

  // Stateless mixing used to derive sub-seeds (seed ^ per-module tag pushed
  // through the splitmix64 finalizer).
  static uint64_t mix(uint64_t x) {
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
    return x ^ (x >> 31);
  }

  static Rng derive(uint64_t seed, uint64_t tag) { return Rng(mix(seed ^ tag)); }

 private:
  uint64_t state_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

// Fixed per-module tags for sub-seed derivation.
namespace seed_tag {
inline constexpr uint64_t phantom = 0x7068616e746f6d31ull;
inline constexpr uint64_t match = 0x6d6174636863746cull;
inline constexpr uint64_t folds = 0x666f6c64706c616eull;
inline constexpr uint64_t init = 0x696e69747061726dull;
inline constexpr uint64_t train = 0x747261696e6c6f6full;
inline constexpr uint64_t augment = 0x6175676d656e7431ull;
}  // namespace seed_tag

}  // namespace octad
