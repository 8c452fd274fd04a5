#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <utility>

namespace varinf {

/// Platform-independent random source.
///
/// Backed by std::mt19937_64, whose output sequence is fixed by the standard.
/// The standard distributions are not (their algorithms are
/// implementation-defined), so all derived draws are computed here from raw
/// 64-bit words. Sweeps are therefore reproducible bit-for-bit across
/// compilers and platforms.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }

  /// Uniform on the open interval (0, 1), 53-bit resolution.
  double uniform01() {
    for (;;) {
      const double u = static_cast<double>(engine_() >> 11) * 0x1.0p-53;
      if (u > 0.0) return u;
    }
  }

  /// Uniform on the open interval (lo, hi).
  double uniform(double lo, double hi) {
    for (;;) {
      const double x = lo + (hi - lo) * uniform01();
      if (x > lo && x < hi) return x;
    }
  }

  bool bernoulli(double p) {
    if (p <= 0.0) return false;
    if (p >= 1.0) return true;
    return uniform01() < p;
  }

  /// Uniform integer in [0, n) by rejection; n must be positive.
  std::uint64_t below(std::uint64_t n) {
    const std::uint64_t limit = UINT64_MAX - (UINT64_MAX % n);
    for (;;) {
      const std::uint64_t r = engine_();
      if (r < limit) return r % n;
    }
  }

  /// Fisher-Yates; std::shuffle is implementation-defined.
  template <typename T>
  void shuffle(std::span<T> items) {
    for (std::size_t i = items.size(); i > 1; --i) {
      const auto j = static_cast<std::size_t>(below(i));
      std::swap(items[i - 1], items[j]);
    }
  }

 private:
  std::mt19937_64 engine_;
};

/// SplitMix64 finalizer.
constexpr std::uint64_t mix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Child seed as a pure function of a parent seed and an index path.
constexpr std::uint64_t derive_seed(std::uint64_t parent, std::uint64_t index) {
  return mix64(parent ^ mix64(index + 0x632be59bd9b4e019ULL));
}

template <typename... Rest>
constexpr std::uint64_t derive_seed(std::uint64_t parent, std::uint64_t index,
                                    Rest... rest) {
  return derive_seed(derive_seed(parent, index), static_cast<std::uint64_t>(rest)...);
}

}  // namespace varinf
