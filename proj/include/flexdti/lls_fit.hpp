#pragma once

#include <Eigen/Cholesky>
#include <Eigen/Core>
#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include "flexdti/phantom.hpp"
#include "flexdti/tensor_field.hpp"

namespace flexdti {

/// Signals below clamp_fraction * S0 are raised to that floor before the log.
inline constexpr double kSignalClampFraction = 1e-4;

struct FitReport {
  TensorField fitted;
  std::vector<double> residual_rms;  // per voxel, log-signal units
  std::size_t clamped_voxels = 0;
  std::size_t failed_voxels = 0;
  bool rank_deficient = false;
};

/// Plain (unweighted) linear least squares for one design. Rows are put in a
/// canonical order before accumulation, so results are bit-identical under any
/// permutation of the (direction, measurement) pairs.
class LlsSolver {
 public:
  /// Throws NotEnoughDirections (< 6 rows) or RankDeficient.
  explicit LlsSolver(std::vector<DesignRow> rows);
  static LlsSolver for_directions(std::span<const UnitDirection> dirs);

  std::size_t rows() const noexcept { return rows_.size(); }
  /// `betas` in the caller's row order.
  DiffusionTensor6 solve(std::span<const double> betas) const;
  /// RMS of (alpha_i^T D - beta_i), in the units of beta.
  double residual_rms(const DiffusionTensor6& d, std::span<const double> betas) const;

 private:
  std::vector<DesignRow> rows_;      // canonical order
  std::vector<std::size_t> order_;   // canonical position -> caller index
  std::vector<std::size_t> group_end_;  // exclusive ends of runs of identical rows
  Eigen::LLT<Eigen::Matrix<double, 6, 6>> normal_;
};

DiffusionTensor6 fit_voxel(std::span<const double> betas, std::span<const DesignRow> rows);

/// Fits every masked voxel; masked-out voxels stay zero. Voxel-level failures
/// (non-positive S0, rank-deficient design) are zero-filled and counted.
/// Throws NotEnoughDirections when fewer than 6 directions are selected.
FitReport fit_volume(const DwiVolume& v, std::optional<std::span<const int>> subset = std::nullopt);

}  // namespace flexdti
