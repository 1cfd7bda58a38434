#include "flexdti/scheme.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "flexdti/error.hpp"
#include "flexdti/random.hpp"

namespace flexdti {

namespace {

double line_angle(const UnitDirection& a, const UnitDirection& b) {
  const double d = std::abs(a.x() * b.x() + a.y() * b.y() + a.z() * b.z());
  const double cx = a.y() * b.z() - a.z() * b.y();
  const double cy = a.z() * b.x() - a.x() * b.z();
  const double cz = a.x() * b.y() - a.y() * b.x();
  return std::atan2(std::sqrt(cx * cx + cy * cy + cz * cz), d);
}

using Points = std::vector<Vec3>;

double energy_of(const Points& p) {
  double e = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    for (std::size_t j = i + 1; j < p.size(); ++j) {
      double dm = 0.0, dp = 0.0;
      for (int k = 0; k < 3; ++k) {
        dm += (p[i][k] - p[j][k]) * (p[i][k] - p[j][k]);
        dp += (p[i][k] + p[j][k]) * (p[i][k] + p[j][k]);
      }
      e += 1.0 / std::sqrt(dm) + 1.0 / std::sqrt(dp);
    }
  }
  return e;
}

// Tangential component of the energy gradient at each point.
Points tangent_gradient(const Points& p) {
  Points g(p.size(), Vec3{0, 0, 0});
  for (std::size_t i = 0; i < p.size(); ++i) {
    for (std::size_t j = i + 1; j < p.size(); ++j) {
      Vec3 dm, dp;
      double nm = 0.0, np = 0.0;
      for (int k = 0; k < 3; ++k) {
        dm[k] = p[i][k] - p[j][k];
        dp[k] = p[i][k] + p[j][k];
        nm += dm[k] * dm[k];
        np += dp[k] * dp[k];
      }
      const double cm = 1.0 / (nm * std::sqrt(nm));
      const double cp = 1.0 / (np * std::sqrt(np));
      for (int k = 0; k < 3; ++k) {
        g[i][k] += -dm[k] * cm - dp[k] * cp;
        g[j][k] += dm[k] * cm - dp[k] * cp;
      }
    }
  }
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double radial = g[i][0] * p[i][0] + g[i][1] * p[i][1] + g[i][2] * p[i][2];
    for (int k = 0; k < 3; ++k) g[i][k] -= radial * p[i][k];
  }
  return g;
}

Points step_points(const Points& p, const Points& g, double step) {
  Points out(p.size());
  for (std::size_t i = 0; i < p.size(); ++i) {
    Vec3 q{p[i][0] - step * g[i][0], p[i][1] - step * g[i][1], p[i][2] - step * g[i][2]};
    const double n = std::sqrt(q[0] * q[0] + q[1] * q[1] + q[2] * q[2]);
    out[i] = {q[0] / n, q[1] / n, q[2] / n};
  }
  return out;
}

}  // namespace

void GradientScheme::validate() const {
  if (n_b0 < 1) throw Error(ErrorCode::InvalidArgument, "a scheme needs at least one b=0 volume");
  for (std::size_t i = 0; i < directions.size(); ++i) {
    for (std::size_t j = i + 1; j < directions.size(); ++j) {
      if (line_angle(directions[i], directions[j]) < 1e-6) {
        throw Error(ErrorCode::InvalidArgument,
                    "directions " + std::to_string(i) + " and " + std::to_string(j) + " coincide as lines");
      }
    }
  }
}

GradientScheme GradientScheme::subset(std::span<const int> indices) const {
  GradientScheme s{b, {}, n_b0};
  s.directions.reserve(indices.size());
  for (int i : indices) {
    if (i < 0 || static_cast<std::size_t>(i) >= directions.size()) {
      throw Error(ErrorCode::SubsetOutOfRange, "direction index " + std::to_string(i) + " out of range");
    }
    s.directions.push_back(directions[static_cast<std::size_t>(i)]);
  }
  return s;
}

double coulomb_energy(std::span<const UnitDirection> dirs) {
  Points p;
  p.reserve(dirs.size());
  for (const auto& d : dirs) p.push_back(d.vec());
  return energy_of(p);
}

GradientScheme generate_uniform(int n, std::uint64_t seed, const UniformOptions& opts) {
  if (n < 6) {
    throw Error(ErrorCode::TooFewDirections, "a tensor scheme needs at least 6 directions, got " + std::to_string(n));
  }
  Rng rng(seed);
  Points p(static_cast<std::size_t>(n));
  for (auto& v : p) {
    double norm = 0.0;
    do {
      v = {rng.normal(), rng.normal(), rng.normal()};
      norm = std::sqrt(v[0] * v[0] + v[1] * v[1] + v[2] * v[2]);
    } while (norm < 1e-6);
    for (double& c : v) c /= norm;
  }

  double energy = energy_of(p);
  if (opts.energy_trace) opts.energy_trace->assign(1, energy);
  double step = 0.0;
  for (int it = 0; it < opts.iterations; ++it) {
    const Points g = tangent_gradient(p);
    double gmax = 0.0;
    for (const auto& v : g) gmax = std::max(gmax, std::sqrt(v[0] * v[0] + v[1] * v[1] + v[2] * v[2]));
    if (gmax == 0.0) break;
    if (step == 0.0) step = 0.1 / gmax;
    bool accepted = false;
    for (int halving = 0; halving < 40; ++halving) {
      Points trial = step_points(p, g, step);
      const double e = energy_of(trial);
      if (e <= energy) {
        p = std::move(trial);
        energy = e;
        accepted = true;
        break;
      }
      step *= 0.5;
    }
    if (opts.energy_trace) opts.energy_trace->push_back(energy);
    if (accepted) step *= 1.5;
  }

  GradientScheme s;
  s.directions.reserve(p.size());
  for (const auto& v : p) s.directions.push_back(UnitDirection::normalize(v));
  return s;
}

double condition_number(std::span<const UnitDirection> dirs) {
  if (dirs.size() < 6) throw Error(ErrorCode::RankDeficient, "fewer than 6 directions");
  Eigen::MatrixXd a(static_cast<Eigen::Index>(dirs.size()), 6);
  for (std::size_t i = 0; i < dirs.size(); ++i) {
    const DesignRow r = design_row(dirs[i]);
    for (int k = 0; k < 6; ++k) a(static_cast<Eigen::Index>(i), k) = r[k];
  }
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(a);
  const auto& sv = svd.singularValues();
  const double smax = sv(0), smin = sv(sv.size() - 1);
  if (!(smin > 1e-10 * smax)) throw Error(ErrorCode::RankDeficient, "design matrix has rank < 6");
  return smax / smin;
}

double min_line_angle_deg(std::span<const UnitDirection> dirs) {
  double best = std::numbers::pi / 2.0;
  for (std::size_t i = 0; i < dirs.size(); ++i) {
    for (std::size_t j = i + 1; j < dirs.size(); ++j) best = std::min(best, line_angle(dirs[i], dirs[j]));
  }
  return best * 180.0 / std::numbers::pi;
}

DirectionPools split_pools(const GradientScheme& s, int train_count) {
  const int n = static_cast<int>(s.size());
  if (train_count < 6 || train_count >= n) {
    throw Error(ErrorCode::BadSplit, "train_count " + std::to_string(train_count) + " outside [6, " +
                                         std::to_string(n) + ")");
  }
  DirectionPools pools;
  for (int i = 0; i < n; ++i) (i < train_count ? pools.train_pool : pools.test_pool).push_back(i);
  return pools;
}

std::vector<int> sample_subset(std::span<const int> pool, int k, std::uint64_t seed) {
  if (k < 6) throw Error(ErrorCode::SubsetTooSmall, "subset needs at least 6 directions");
  if (static_cast<std::size_t>(k) > pool.size()) {
    throw Error(ErrorCode::SubsetTooLarge, "subset of " + std::to_string(k) + " from a pool of " +
                                               std::to_string(pool.size()));
  }
  std::vector<int> v(pool.begin(), pool.end());
  Rng rng(seed);
  rng.shuffle(v);
  v.resize(static_cast<std::size_t>(k));
  return v;
}

}  // namespace flexdti
