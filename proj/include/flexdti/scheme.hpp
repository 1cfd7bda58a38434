#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "flexdti/tensor_core.hpp"

namespace flexdti {

/// Single-shell acquisition: n_b0 unweighted volumes followed by one
/// diffusion-weighted volume per direction.
struct GradientScheme {
  BValue b{1000.0};
  std::vector<UnitDirection> directions;
  int n_b0 = 1;

  std::size_t size() const noexcept { return directions.size(); }
  /// Throws InvalidArgument on n_b0 < 1 or two directions closer than 1e-6 rad as lines.
  void validate() const;
  GradientScheme subset(std::span<const int> indices) const;
};

struct DirectionPools {
  std::vector<int> train_pool;
  std::vector<int> test_pool;
};

struct UniformOptions {
  int iterations = 500;
  /// When set, receives the energy before the first and after every iteration.
  std::vector<double>* energy_trace = nullptr;
};

/// Antipodally symmetric Coulomb energy: sum over pairs of 1/|a-b| + 1/|a+b|.
double coulomb_energy(std::span<const UnitDirection> dirs);

/// n directions minimising the antipodal Coulomb energy by projected gradient
/// descent with a backtracking step, from a seeded random start.
GradientScheme generate_uniform(int n, std::uint64_t seed, const UniformOptions& opts = {});

/// sigma_max / sigma_min of the n x 6 design matrix. Throws RankDeficient.
double condition_number(std::span<const UnitDirection> dirs);
inline double condition_number(const GradientScheme& s) { return condition_number(s.directions); }

/// Smallest angle (degrees) between any two directions treated as lines.
double min_line_angle_deg(std::span<const UnitDirection> dirs);

/// Indices [0, train_count) for training, the rest for testing.
DirectionPools split_pools(const GradientScheme& s, int train_count);

/// k distinct entries of `pool`, uniformly without replacement, in shuffled order.
std::vector<int> sample_subset(std::span<const int> pool, int k, std::uint64_t seed);

}  // namespace flexdti
