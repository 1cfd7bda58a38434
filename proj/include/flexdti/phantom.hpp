#pragma once

#include <cstdint>
#include <vector>

#include "flexdti/scheme.hpp"
#include "flexdti/tensor_field.hpp"

namespace flexdti {

enum class Layout { Isotropic, Rings, Bundles, Mixed };

Layout layout_from_string(std::string_view name);
std::string_view to_string(Layout layout);

struct Range {
  double lo = 0.0;
  double hi = 0.0;
};

/// Eigenvalue ranges are plausible tissue values in mm^2/s.
struct PhantomSpec {
  int nx = 64;
  int ny = 64;
  Layout layout = Layout::Mixed;
  Range lambda_parallel{1.2e-3, 2.0e-3};
  Range lambda_perpendicular{0.2e-3, 0.6e-3};
  Range lambda_tissue{0.7e-3, 1.0e-3};
  Range lambda_free{2.4e-3, 3.2e-3};
  std::uint64_t seed = 0;

  /// Throws DimsTooSmall or InvalidArgument.
  void validate() const;
};

struct EllipseRegion {
  double cx, cy, rx, ry;
  bool contains(double x, double y) const noexcept;
};

struct FiberEigenvalues {
  double parallel, perpendicular1, perpendicular2;
};

/// Annulus around (cx, cy) whose fibers run tangentially in-plane.
struct RingRegion {
  double cx, cy, r_inner, r_outer;
  FiberEigenvalues eigenvalues;
  bool contains(double x, double y) const noexcept;
  UnitDirection fiber_at(double x, double y) const;
};

/// Straight stripe through (px, py) with in-plane heading `angle`; the fiber
/// tilts out of plane by `elevation`.
struct BundleRegion {
  double px, py, angle, elevation, half_width;
  FiberEigenvalues eigenvalues;
  bool contains(double x, double y) const noexcept;
  UnitDirection fiber() const;
};

struct FreeWaterRegion {
  EllipseRegion shape;
  double lambda;
};

/// Deterministic region layout for one slice. Painted in order: tissue,
/// bundles, rings, free water.
struct PhantomGeometry {
  EllipseRegion brain;
  double tissue_lambda;
  std::vector<BundleRegion> bundles;
  std::vector<RingRegion> rings;
  std::vector<FreeWaterRegion> free_water;
};

PhantomGeometry describe_phantom(const PhantomSpec& spec);
TensorField rasterize(const PhantomGeometry& geometry, const PhantomSpec& spec);
TensorField make_tensor_field(const PhantomSpec& spec);

/// Builds a tensor from a principal direction and three eigenvalues.
DiffusionTensor6 tensor_from_fiber(const UnitDirection& fiber, const FiberEigenvalues& ev);

/// `slices` independent slices; slice k uses seed hash(spec.seed, k).
std::vector<TensorField> make_phantom_stack(const PhantomSpec& spec, int slices);

/// One slice of diffusion-weighted data.
struct DwiVolume {
  int nx = 0;
  int ny = 0;
  std::vector<std::vector<double>> b0;   // scheme.n_b0 planes
  std::vector<std::vector<double>> dwi;  // one plane per scheme direction
  GradientScheme scheme;
  Mask mask;

  std::size_t size() const noexcept { return static_cast<std::size_t>(nx) * static_cast<std::size_t>(ny); }
  /// Mean over the b=0 repeats.
  std::vector<double> s0_image() const;
};

struct NoiseModel {
  double s0 = 1000.0;
  double sigma = 50.0;

  double snr() const noexcept { return sigma > 0.0 ? s0 / sigma : 0.0; }
};

/// Stejskal-Tanner signals per voxel, then Rician corruption when sigma > 0.
/// Noise is keyed by (seed, plane, voxel), independent of evaluation order.
DwiVolume synthesize_dwi(const TensorField& field, const GradientScheme& scheme, const NoiseModel& noise,
                         std::uint64_t seed);

/// sqrt((x + n1)^2 + n2^2) for a pair of standard normals scaled by sigma.
double rician_sample(double x, double sigma, std::uint64_t key) noexcept;

}  // namespace flexdti
