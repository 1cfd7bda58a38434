#include "flexdti/phantom.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "flexdti/error.hpp"
#include "flexdti/random.hpp"

namespace flexdti {

namespace {

double draw(Rng& rng, const Range& r) { return rng.uniform(r.lo, r.hi); }

FiberEigenvalues draw_fiber(Rng& rng, const PhantomSpec& spec) {
  return {draw(rng, spec.lambda_parallel), draw(rng, spec.lambda_perpendicular),
          draw(rng, spec.lambda_perpendicular)};
}

void check_range(const Range& r, double lo, double hi, const char* name) {
  if (!(r.lo <= r.hi) || r.lo < lo || r.hi > hi) {
    throw Error(ErrorCode::InvalidArgument, std::string(name) + " range must lie within [" + std::to_string(lo) +
                                                ", " + std::to_string(hi) + "]");
  }
}

// Isotropic tensor with a small per-voxel eigenvalue jitter (+-1.5%).
DiffusionTensor6 jittered_isotropic(double lambda, std::uint64_t seed, std::size_t voxel) {
  std::array<double, 3> l{};
  for (int k = 0; k < 3; ++k) {
    const double u = to_unit_double(hash_key({seed, 0x150ULL, voxel, static_cast<std::uint64_t>(k)}));
    l[static_cast<std::size_t>(k)] = lambda * (1.0 + 0.015 * (2.0 * u - 1.0));
  }
  return {l[0], l[1], l[2], 0.0, 0.0, 0.0};
}

}  // namespace

Layout layout_from_string(std::string_view name) {
  if (name == "isotropic") return Layout::Isotropic;
  if (name == "rings") return Layout::Rings;
  if (name == "bundles") return Layout::Bundles;
  if (name == "mixed") return Layout::Mixed;
  throw Error(ErrorCode::InvalidArgument, "unknown phantom layout '" + std::string(name) + "'");
}

std::string_view to_string(Layout layout) {
  switch (layout) {
    case Layout::Isotropic: return "isotropic";
    case Layout::Rings: return "rings";
    case Layout::Bundles: return "bundles";
    case Layout::Mixed: return "mixed";
  }
  return "mixed";
}

void PhantomSpec::validate() const {
  if (nx < 32 || ny < 32) {
    throw Error(ErrorCode::DimsTooSmall, "phantom dims must be at least 32x32, got " + std::to_string(nx) + "x" +
                                             std::to_string(ny));
  }
  check_range(lambda_parallel, 1.0e-3, 2.2e-3, "lambda_parallel");
  check_range(lambda_perpendicular, 0.1e-3, 0.8e-3, "lambda_perpendicular");
  check_range(lambda_tissue, 0.7e-3, 3.2e-3, "lambda_tissue");
  check_range(lambda_free, 0.7e-3, 3.2e-3, "lambda_free");
}

bool EllipseRegion::contains(double x, double y) const noexcept {
  const double u = (x - cx) / rx, v = (y - cy) / ry;
  return u * u + v * v <= 1.0;
}

bool RingRegion::contains(double x, double y) const noexcept {
  const double r = std::hypot(x - cx, y - cy);
  return r >= r_inner && r <= r_outer;
}

UnitDirection RingRegion::fiber_at(double x, double y) const {
  const double phi = std::atan2(y - cy, x - cx);
  return UnitDirection::normalize(-std::sin(phi), std::cos(phi), 0.0);
}

bool BundleRegion::contains(double x, double y) const noexcept {
  const double d = -std::sin(angle) * (x - px) + std::cos(angle) * (y - py);
  return std::abs(d) <= half_width;
}

UnitDirection BundleRegion::fiber() const {
  return UnitDirection::normalize(std::cos(angle) * std::cos(elevation), std::sin(angle) * std::cos(elevation),
                                  std::sin(elevation));
}

DiffusionTensor6 tensor_from_fiber(const UnitDirection& fiber, const FiberEigenvalues& ev) {
  const Vec3& v = fiber.vec();
  Vec3 u;
  if (std::abs(v[0]) > std::abs(v[1])) {
    const double inv = 1.0 / std::sqrt(v[0] * v[0] + v[2] * v[2]);
    u = {-v[2] * inv, 0.0, v[0] * inv};
  } else {
    const double inv = 1.0 / std::sqrt(v[1] * v[1] + v[2] * v[2]);
    u = {0.0, v[2] * inv, -v[1] * inv};
  }
  const Vec3 w{v[1] * u[2] - v[2] * u[1], v[2] * u[0] - v[0] * u[2], v[0] * u[1] - v[1] * u[0]};
  Mat3 m{};
  for (int i = 0; i < 3; ++i) {
    for (int j = 0; j < 3; ++j) {
      m[i][j] = ev.parallel * v[i] * v[j] + ev.perpendicular1 * u[i] * u[j] + ev.perpendicular2 * w[i] * w[j];
    }
  }
  return DiffusionTensor6::from_matrix(m);
}

PhantomGeometry describe_phantom(const PhantomSpec& spec) {
  spec.validate();
  Rng rng(spec.seed);
  const double nx = spec.nx, ny = spec.ny;
  const double scale = std::min(nx, ny) / 64.0;

  PhantomGeometry g;
  g.brain.cx = nx / 2.0 + rng.uniform(-1.5, 1.5);
  g.brain.cy = ny / 2.0 + rng.uniform(-1.5, 1.5);
  g.brain.rx = std::min(nx * rng.uniform(0.40, 0.46), nx / 2.0 - 2.0);
  g.brain.ry = std::min(ny * rng.uniform(0.36, 0.44), ny / 2.0 - 2.0);
  g.tissue_lambda = draw(rng, spec.lambda_tissue);
  const double radius = std::min(g.brain.rx, g.brain.ry);

  const bool has_rings = spec.layout == Layout::Rings || spec.layout == Layout::Mixed;
  const int bundle_count = spec.layout == Layout::Bundles ? 3 : spec.layout == Layout::Mixed ? 2 : 0;
  const int free_count = spec.layout == Layout::Isotropic ? 2 : spec.layout == Layout::Rings ? 0 : 1;

  for (int i = 0; i < bundle_count; ++i) {
    BundleRegion b{};
    b.px = g.brain.cx + rng.uniform(-0.5, 0.5) * radius;
    b.py = g.brain.cy + rng.uniform(-0.5, 0.5) * radius;
    b.angle = rng.uniform(0.0, std::numbers::pi);
    b.elevation = rng.uniform(-1.2, 1.2);
    b.half_width = rng.uniform(2.0, 4.5) * scale;
    b.eigenvalues = draw_fiber(rng, spec);
    g.bundles.push_back(b);
  }

  if (has_rings) {
    // Integer centre so that voxels on the axes sample exact ring angles.
    const double cx = std::round(g.brain.cx + rng.uniform(-0.08, 0.08) * nx);
    const double cy = std::round(g.brain.cy + rng.uniform(-0.08, 0.08) * ny);
    const double room = std::min({radius, cx - (g.brain.cx - g.brain.rx), g.brain.cx + g.brain.rx - cx,
                                  cy - (g.brain.cy - g.brain.ry), g.brain.cy + g.brain.ry - cy});
    if (spec.layout == Layout::Rings) {
      g.rings.push_back({cx, cy, room * rng.uniform(0.22, 0.28), room * rng.uniform(0.44, 0.50), draw_fiber(rng, spec)});
      g.rings.push_back({cx, cy, room * rng.uniform(0.62, 0.66), room * rng.uniform(0.84, 0.90), draw_fiber(rng, spec)});
    } else {
      g.rings.push_back({cx, cy, room * rng.uniform(0.35, 0.42), room * rng.uniform(0.62, 0.72), draw_fiber(rng, spec)});
    }
  }

  for (int i = 0; i < free_count; ++i) {
    FreeWaterRegion f{};
    f.shape.cx = g.brain.cx + rng.uniform(-0.5, 0.5) * radius;
    f.shape.cy = g.brain.cy + rng.uniform(-0.5, 0.5) * radius;
    f.shape.rx = rng.uniform(0.06, 0.12) * nx;
    f.shape.ry = rng.uniform(0.06, 0.12) * ny;
    f.lambda = draw(rng, spec.lambda_free);
    g.free_water.push_back(f);
  }
  return g;
}

TensorField rasterize(const PhantomGeometry& geometry, const PhantomSpec& spec) {
  TensorField f = TensorField::zeros(spec.nx, spec.ny);
  for (int y = 0; y < spec.ny; ++y) {
    for (int x = 0; x < spec.nx; ++x) {
      const double px = x, py = y;
      if (!geometry.brain.contains(px, py)) continue;
      const std::size_t i = f.index(x, y);
      f.mask[i] = 1;
      DiffusionTensor6 t = jittered_isotropic(geometry.tissue_lambda, spec.seed, i);
      for (const auto& b : geometry.bundles) {
        if (b.contains(px, py)) t = tensor_from_fiber(b.fiber(), b.eigenvalues);
      }
      for (const auto& r : geometry.rings) {
        if (r.contains(px, py)) t = tensor_from_fiber(r.fiber_at(px, py), r.eigenvalues);
      }
      for (const auto& w : geometry.free_water) {
        if (w.shape.contains(px, py)) t = jittered_isotropic(w.lambda, spec.seed, i);
      }
      f.tensors[i] = t;
    }
  }
  return f;
}

TensorField make_tensor_field(const PhantomSpec& spec) { return rasterize(describe_phantom(spec), spec); }

std::vector<TensorField> make_phantom_stack(const PhantomSpec& spec, int slices) {
  std::vector<TensorField> out;
  out.reserve(static_cast<std::size_t>(std::max(slices, 0)));
  for (int k = 0; k < slices; ++k) {
    PhantomSpec s = spec;
    s.seed = hash_key({spec.seed, static_cast<std::uint64_t>(k)});
    out.push_back(make_tensor_field(s));
  }
  return out;
}

std::vector<double> DwiVolume::s0_image() const {
  std::vector<double> mean(size(), 0.0);
  if (b0.empty()) return mean;
  for (const auto& plane : b0) {
    for (std::size_t i = 0; i < mean.size(); ++i) mean[i] += plane[i];
  }
  for (double& v : mean) v /= static_cast<double>(b0.size());
  return mean;
}

double rician_sample(double x, double sigma, std::uint64_t key) noexcept {
  const NormalPair n = normal_pair(key);
  const double re = x + sigma * n.a, im = sigma * n.b;
  return std::sqrt(re * re + im * im);
}

DwiVolume synthesize_dwi(const TensorField& field, const GradientScheme& scheme, const NoiseModel& noise,
                         std::uint64_t seed) {
  if (!(noise.sigma >= 0.0)) throw Error(ErrorCode::InvalidArgument, "noise sigma must be >= 0");
  DwiVolume v;
  v.nx = field.nx;
  v.ny = field.ny;
  v.scheme = scheme;
  v.mask = field.mask;
  const std::size_t n = field.size();
  auto corrupt = [&](double x, std::uint64_t kind, std::size_t plane, std::size_t voxel) {
    if (noise.sigma == 0.0) return x;
    return rician_sample(x, noise.sigma, hash_key({seed, kind, plane, voxel}));
  };
  v.b0.assign(static_cast<std::size_t>(scheme.n_b0), std::vector<double>(n));
  for (std::size_t p = 0; p < v.b0.size(); ++p) {
    for (std::size_t i = 0; i < n; ++i) v.b0[p][i] = corrupt(noise.s0, 0, p, i);
  }
  v.dwi.assign(scheme.size(), std::vector<double>(n));
  for (std::size_t p = 0; p < scheme.size(); ++p) {
    const UnitDirection& g = scheme.directions[p];
    for (std::size_t i = 0; i < n; ++i) {
      v.dwi[p][i] = corrupt(signal_forward(field.tensors[i], g, scheme.b, noise.s0), 1, p, i);
    }
  }
  return v;
}

}  // namespace flexdti
