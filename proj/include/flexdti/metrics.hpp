#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>

namespace flexdti {

/// PSNR returned for exact equality (and the magnitude bound otherwise).
inline constexpr double kPsnrCapDb = 300.0;

struct SsimConfig {
  double k1 = 0.01;
  double k2 = 0.03;
  /// Dynamic range; when unset, max - min of the reference over the mask
  /// (1.0 if the reference is constant there).
  std::optional<double> dynamic_range;
};

struct MetricReport {
  double psnr = 0.0;
  double ssim = 0.0;
  double nrmse = 0.0;
  std::size_t voxels = 0;
};

/// 10 log10(Peak^2 / MSE), Peak = max of ref over the mask.
double psnr(std::span<const double> est, std::span<const double> ref, std::span<const std::uint8_t> mask);
/// Global SSIM from masked means, variances and covariance.
double ssim(std::span<const double> est, std::span<const double> ref, std::span<const std::uint8_t> mask,
            const SsimConfig& cfg = {});
/// sqrt(sum (est - ref)^2 / sum ref^2) over the mask.
double nrmse(std::span<const double> est, std::span<const double> ref, std::span<const std::uint8_t> mask);

MetricReport evaluate(std::span<const double> est, std::span<const double> ref, std::span<const std::uint8_t> mask);

/// "map_name,method,n_directions,psnr_db,ssim,nrmse,voxels"
std::string metrics_csv_header();
std::string metrics_csv_row(std::string_view map_name, std::string_view method, int n_directions,
                            const MetricReport& r);

}  // namespace flexdti
