#pragma once

#include <cstdint>
#include <initializer_list>
#include <vector>

namespace flexdti {

/// SplitMix64 finalizer. Used both for seeding and as a counter-based hash.
constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

/// Hashes a sequence of counters into one 64-bit key.
std::uint64_t hash_key(std::initializer_list<std::uint64_t> parts) noexcept;

/// Maps 53 random bits to [0, 1).
inline double to_unit_double(std::uint64_t bits) noexcept {
  return static_cast<double>(bits >> 11) * 0x1.0p-53;
}

/// xoshiro256** generator. All distributions below are implemented here rather
/// than with <random> distributions, whose output differs across standard
/// libraries.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) noexcept;

  std::uint64_t next() noexcept;
  double uniform() noexcept { return to_unit_double(next()); }
  double uniform(double lo, double hi) noexcept { return lo + (hi - lo) * uniform(); }
  /// Uniform integer in [0, n). Rejection sampling, no modulo bias.
  std::uint64_t below(std::uint64_t n) noexcept;
  /// Uniform integer in [lo, hi].
  int integer(int lo, int hi) noexcept;
  double normal() noexcept;

  template <typename T>
  void shuffle(std::vector<T>& v) noexcept {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::size_t j = static_cast<std::size_t>(below(i));
      std::swap(v[i - 1], v[j]);
    }
  }

 private:
  std::uint64_t s_[4];
  bool has_spare_ = false;
  double spare_ = 0.0;
};

/// Pair of independent standard normals derived purely from a key (Box-Muller).
struct NormalPair {
  double a;
  double b;
};
NormalPair normal_pair(std::uint64_t key) noexcept;

}  // namespace flexdti
