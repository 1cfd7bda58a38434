#include "flexdti/lls_fit.hpp"

#include <Eigen/Eigenvalues>
#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "flexdti/error.hpp"

namespace flexdti {

LlsSolver::LlsSolver(std::vector<DesignRow> rows) {
  if (rows.size() < 6) {
    throw Error(ErrorCode::NotEnoughDirections, "need at least 6 directions, got " + std::to_string(rows.size()));
  }
  order_.resize(rows.size());
  std::iota(order_.begin(), order_.end(), std::size_t{0});
  std::stable_sort(order_.begin(), order_.end(), [&](std::size_t a, std::size_t b) { return rows[a] < rows[b]; });
  rows_.reserve(rows.size());
  for (std::size_t k = 0; k < order_.size(); ++k) {
    rows_.push_back(rows[order_[k]]);
    if (k + 1 == order_.size() || rows[order_[k + 1]] != rows[order_[k]]) group_end_.push_back(k + 1);
  }

  Eigen::Matrix<double, 6, 6> ata = Eigen::Matrix<double, 6, 6>::Zero();
  for (const DesignRow& r : rows_) {
    for (int i = 0; i < 6; ++i) {
      for (int j = 0; j < 6; ++j) ata(i, j) += r[i] * r[j];
    }
  }
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix<double, 6, 6>> es(ata, Eigen::EigenvaluesOnly);
  const auto& ev = es.eigenvalues();
  if (!(ev(0) > 1e-12 * ev(5))) throw Error(ErrorCode::RankDeficient, "design matrix has rank < 6");
  normal_.compute(ata);
}

LlsSolver LlsSolver::for_directions(std::span<const UnitDirection> dirs) {
  std::vector<DesignRow> rows;
  rows.reserve(dirs.size());
  for (const auto& g : dirs) rows.push_back(design_row(g));
  return LlsSolver(std::move(rows));
}

DiffusionTensor6 LlsSolver::solve(std::span<const double> betas) const {
  if (betas.size() != rows_.size()) throw Error(ErrorCode::ShapeMismatch, "beta count differs from row count");
  // Canonical beta order; runs of identical rows are additionally sorted by value.
  std::vector<double> ordered(betas.size());
  for (std::size_t k = 0; k < order_.size(); ++k) ordered[k] = betas[order_[k]];
  std::size_t begin = 0;
  for (std::size_t end : group_end_) {
    if (end - begin > 1) std::sort(ordered.begin() + static_cast<std::ptrdiff_t>(begin),
                                   ordered.begin() + static_cast<std::ptrdiff_t>(end));
    begin = end;
  }
  Eigen::Matrix<double, 6, 1> atb = Eigen::Matrix<double, 6, 1>::Zero();
  for (std::size_t k = 0; k < rows_.size(); ++k) {
    for (int i = 0; i < 6; ++i) atb(i) += rows_[k][i] * ordered[k];
  }
  const Eigen::Matrix<double, 6, 1> x = normal_.solve(atb);
  return DiffusionTensor6{x(0), x(1), x(2), x(3), x(4), x(5)};
}

double LlsSolver::residual_rms(const DiffusionTensor6& d, std::span<const double> betas) const {
  const auto dv = d.to_array();
  double sum = 0.0;
  for (std::size_t k = 0; k < rows_.size(); ++k) {
    double pred = 0.0;
    for (int i = 0; i < 6; ++i) pred += rows_[k][i] * dv[i];
    const double r = pred - betas[order_[k]];
    sum += r * r;
  }
  return std::sqrt(sum / static_cast<double>(rows_.size()));
}

DiffusionTensor6 fit_voxel(std::span<const double> betas, std::span<const DesignRow> rows) {
  if (betas.size() != rows.size()) throw Error(ErrorCode::ShapeMismatch, "beta count differs from row count");
  const LlsSolver solver(std::vector<DesignRow>(rows.begin(), rows.end()));
  return solver.solve(betas);
}

FitReport fit_volume(const DwiVolume& v, std::optional<std::span<const int>> subset) {
  std::vector<int> indices;
  if (subset) {
    indices.assign(subset->begin(), subset->end());
  } else {
    indices.resize(v.dwi.size());
    std::iota(indices.begin(), indices.end(), 0);
  }
  if (indices.size() < 6) {
    throw Error(ErrorCode::NotEnoughDirections, "need at least 6 directions, got " + std::to_string(indices.size()));
  }
  const GradientScheme sub = v.scheme.subset(indices);

  FitReport report;
  report.fitted = TensorField::zeros(v.nx, v.ny);
  report.fitted.mask = v.mask;
  report.residual_rms.assign(v.size(), 0.0);

  std::optional<LlsSolver> solver;
  try {
    solver.emplace(LlsSolver::for_directions(sub.directions));
  } catch (const Error& e) {
    if (e.code() != ErrorCode::RankDeficient) throw;
    report.rank_deficient = true;
  }

  const double b = v.scheme.b.value();
  if (b <= 0.0) throw Error(ErrorCode::ZeroB, "fit needs a non-zero b-value");
  const std::vector<double> s0_image = v.s0_image();
  std::vector<double> betas(indices.size());
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (!v.mask[i]) continue;
    const double s0 = s0_image[i];
    if (!solver || !(s0 > 0.0)) {
      ++report.failed_voxels;
      continue;
    }
    const double floor = kSignalClampFraction * s0;
    bool clamped = false;
    for (std::size_t k = 0; k < indices.size(); ++k) {
      double si = v.dwi[static_cast<std::size_t>(indices[k])][i];
      if (!(si >= floor)) {
        si = floor;
        clamped = true;
      }
      betas[k] = std::log(s0 / si) / b;
    }
    if (clamped) ++report.clamped_voxels;
    const DiffusionTensor6 d = solver->solve(betas);
    report.fitted.tensors[i] = d;
    report.residual_rms[i] = b * solver->residual_rms(d, betas);
  }
  return report;
}

}  // namespace flexdti
