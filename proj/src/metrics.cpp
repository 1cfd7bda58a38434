#include "flexdti/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>

#include "flexdti/error.hpp"

namespace flexdti {

namespace {

std::size_t check_inputs(std::span<const double> est, std::span<const double> ref,
                         std::span<const std::uint8_t> mask, std::size_t min_voxels) {
  if (est.size() != ref.size() || mask.size() != ref.size()) {
    throw Error(ErrorCode::ShapeMismatch, "metric inputs differ in size");
  }
  const auto count = static_cast<std::size_t>(std::count_if(mask.begin(), mask.end(), [](auto m) { return m != 0; }));
  if (count < min_voxels) throw Error(ErrorCode::EmptyMask, "mask selects too few voxels");
  return count;
}

}  // namespace

double psnr(std::span<const double> est, std::span<const double> ref, std::span<const std::uint8_t> mask) {
  const std::size_t v = check_inputs(est, ref, mask, 1);
  double peak = -std::numeric_limits<double>::infinity();
  double sse = 0.0;
  for (std::size_t i = 0; i < ref.size(); ++i) {
    if (!mask[i]) continue;
    peak = std::max(peak, ref[i]);
    sse += (est[i] - ref[i]) * (est[i] - ref[i]);
  }
  const double mse = sse / static_cast<double>(v);
  if (mse == 0.0) return kPsnrCapDb;
  const double db = 10.0 * std::log10(peak * peak / mse);
  if (std::isnan(db)) return -kPsnrCapDb;
  return std::clamp(db, -kPsnrCapDb, kPsnrCapDb);
}

double ssim(std::span<const double> est, std::span<const double> ref, std::span<const std::uint8_t> mask,
            const SsimConfig& cfg) {
  const std::size_t v = check_inputs(est, ref, mask, 2);
  const double n = static_cast<double>(v);
  double mu_e = 0.0, mu_r = 0.0, lo = std::numeric_limits<double>::infinity(), hi = -lo;
  for (std::size_t i = 0; i < ref.size(); ++i) {
    if (!mask[i]) continue;
    mu_e += est[i];
    mu_r += ref[i];
    lo = std::min(lo, ref[i]);
    hi = std::max(hi, ref[i]);
  }
  mu_e /= n;
  mu_r /= n;
  double var_e = 0.0, var_r = 0.0, cov = 0.0;
  for (std::size_t i = 0; i < ref.size(); ++i) {
    if (!mask[i]) continue;
    const double de = est[i] - mu_e, dr = ref[i] - mu_r;
    var_e += de * de;
    var_r += dr * dr;
    cov += de * dr;
  }
  var_e /= n;
  var_r /= n;
  cov /= n;
  double range = cfg.dynamic_range.value_or(hi - lo);
  if (!(range > 0.0)) range = 1.0;
  const double c1 = (cfg.k1 * range) * (cfg.k1 * range);
  const double c2 = (cfg.k2 * range) * (cfg.k2 * range);
  return ((2.0 * mu_e * mu_r + c1) * (2.0 * cov + c2)) / ((mu_e * mu_e + mu_r * mu_r + c1) * (var_e + var_r + c2));
}

double nrmse(std::span<const double> est, std::span<const double> ref, std::span<const std::uint8_t> mask) {
  check_inputs(est, ref, mask, 1);
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < ref.size(); ++i) {
    if (!mask[i]) continue;
    num += (est[i] - ref[i]) * (est[i] - ref[i]);
    den += ref[i] * ref[i];
  }
  if (den == 0.0) throw Error(ErrorCode::ZeroReference, "reference is zero over the mask");
  return std::sqrt(num / den);
}

MetricReport evaluate(std::span<const double> est, std::span<const double> ref, std::span<const std::uint8_t> mask) {
  MetricReport r;
  r.voxels = check_inputs(est, ref, mask, 1);
  r.psnr = psnr(est, ref, mask);
  r.ssim = r.voxels >= 2 ? ssim(est, ref, mask) : 1.0;
  r.nrmse = nrmse(est, ref, mask);
  return r;
}

std::string metrics_csv_header() { return "map_name,method,n_directions,psnr_db,ssim,nrmse,voxels"; }

std::string metrics_csv_row(std::string_view map_name, std::string_view method, int n_directions,
                            const MetricReport& r) {
  char buf[160];
  std::snprintf(buf, sizeof(buf), ",%d,%.6f,%.6f,%.6f,%zu", n_directions, r.psnr, r.ssim, r.nrmse, r.voxels);
  return std::string(map_name) + "," + std::string(method) + buf;
}

}  // namespace flexdti
