#include "flexdti/random.hpp"

#include <cmath>
#include <numbers>

namespace flexdti {

std::uint64_t hash_key(std::initializer_list<std::uint64_t> parts) noexcept {
  std::uint64_t h = 0x243f6a8885a308d3ULL;
  for (std::uint64_t p : parts) h = mix64(h ^ mix64(p));
  return h;
}

Rng::Rng(std::uint64_t seed) noexcept {
  std::uint64_t z = seed;
  for (auto& s : s_) {
    z = mix64(z);
    s = z;
  }
}

static inline std::uint64_t rotl(std::uint64_t x, int k) noexcept { return (x << k) | (x >> (64 - k)); }

std::uint64_t Rng::next() noexcept {
  const std::uint64_t result = rotl(s_[1] * 5, 7) * 9;
  const std::uint64_t t = s_[1] << 17;
  s_[2] ^= s_[0];
  s_[3] ^= s_[1];
  s_[1] ^= s_[2];
  s_[0] ^= s_[3];
  s_[2] ^= t;
  s_[3] = rotl(s_[3], 45);
  return result;
}

std::uint64_t Rng::below(std::uint64_t n) noexcept {
  if (n <= 1) return 0;
  const std::uint64_t limit = ~std::uint64_t{0} - (~std::uint64_t{0} % n);
  std::uint64_t x;
  do {
    x = next();
  } while (x >= limit);
  return x % n;
}

int Rng::integer(int lo, int hi) noexcept {
  return lo + static_cast<int>(below(static_cast<std::uint64_t>(hi - lo) + 1));
}

static NormalPair box_muller(double u1, double u2) noexcept {
  // u1 in (0, 1] keeps the log finite.
  const double r = std::sqrt(-2.0 * std::log(u1));
  const double t = 2.0 * std::numbers::pi * u2;
  return {r * std::cos(t), r * std::sin(t)};
}

double Rng::normal() noexcept {
  if (has_spare_) {
    has_spare_ = false;
    return spare_;
  }
  const double u1 = 1.0 - uniform();
  const double u2 = uniform();
  const NormalPair p = box_muller(u1, u2);
  spare_ = p.b;
  has_spare_ = true;
  return p.a;
}

NormalPair normal_pair(std::uint64_t key) noexcept {
  const std::uint64_t a = mix64(key);
  const std::uint64_t b = mix64(a ^ 0xd1b54a32d192ed03ULL);
  return box_muller(1.0 - to_unit_double(a), to_unit_double(b));
}

}  // namespace flexdti
