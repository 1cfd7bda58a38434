#pragma once

#include <array>

namespace flexdti {

using Vec3 = std::array<double, 3>;
using Mat3 = std::array<Vec3, 3>;

/// Unit-norm gradient direction. Construction enforces |g| = 1 within 1e-9.
class UnitDirection {
 public:
  static constexpr double kNormTolerance = 1e-9;

  UnitDirection() = default;  // +x
  /// Throws NonUnitDirection unless |(x, y, z)| = 1 within kNormTolerance.
  static UnitDirection from(double x, double y, double z);
  /// Rescales to unit length; throws NonUnitDirection for a zero or non-finite vector.
  static UnitDirection normalize(double x, double y, double z);
  static UnitDirection normalize(const Vec3& v) { return normalize(v[0], v[1], v[2]); }

  double x() const noexcept { return v_[0]; }
  double y() const noexcept { return v_[1]; }
  double z() const noexcept { return v_[2]; }
  const Vec3& vec() const noexcept { return v_; }
  double operator[](int i) const noexcept { return v_[i]; }
  UnitDirection flipped() const noexcept { return UnitDirection(Vec3{-v_[0], -v_[1], -v_[2]}); }

  bool operator==(const UnitDirection&) const = default;

 private:
  explicit UnitDirection(const Vec3& v) noexcept : v_(v) {}
  Vec3 v_{1.0, 0.0, 0.0};
};

/// Diffusion weighting in s/mm^2, b >= 0.
class BValue {
 public:
  explicit BValue(double b);
  double value() const noexcept { return b_; }
  bool operator==(const BValue&) const = default;

 private:
  double b_;
};

/// The six unique elements of a symmetric 3x3 diffusion tensor (mm^2/s),
/// stored in the order (xx, yy, zz, xy, xz, yz).
struct DiffusionTensor6 {
  double xx = 0.0, yy = 0.0, zz = 0.0, xy = 0.0, xz = 0.0, yz = 0.0;

  static DiffusionTensor6 from_array(const std::array<double, 6>& a) noexcept {
    return {a[0], a[1], a[2], a[3], a[4], a[5]};
  }
  std::array<double, 6> to_array() const noexcept { return {xx, yy, zz, xy, xz, yz}; }
  Mat3 matrix() const noexcept { return {{{xx, xy, xz}, {xy, yy, yz}, {xz, yz, zz}}}; }
  static DiffusionTensor6 from_matrix(const Mat3& m) noexcept {
    return {m[0][0], m[1][1], m[2][2], m[0][1], m[0][2], m[1][2]};
  }
  double trace() const noexcept { return xx + yy + zz; }
  /// g^T D g
  double quadratic_form(const Vec3& g) const noexcept;

  bool operator==(const DiffusionTensor6&) const = default;
};

/// alpha_i = (gx^2, gy^2, gz^2, 2 gx gy, 2 gx gz, 2 gy gz)
using DesignRow = std::array<double, 6>;

/// Eigenvalues sorted descending with matching unit eigenvectors.
struct EigenSystem {
  std::array<double, 3> values{};
  std::array<UnitDirection, 3> vectors{};
};

struct DtiScalars {
  double fa = 0.0;
  double md = 0.0;
  double ad = 0.0;
  double rd = 0.0;
};

struct Rgb {
  double r = 0.0, g = 0.0, b = 0.0;
};

/// S0 * exp(-b g^T D g)
double signal_forward(const DiffusionTensor6& d, const UnitDirection& g, BValue b, double s0);

DesignRow design_row(const UnitDirection& g) noexcept;

/// ln(S0 / Si) / b. Throws NonPositiveSignal or ZeroB.
double log_signal_ratio(double s0, double si, BValue b);

/// Symmetric 3x3 eigendecomposition.
///
/// Closed-form trigonometric eigenvalues with eigenvectors built from the
/// best-separated eigenvalue first, then the orthogonal complement. Falls back
/// to cyclic Jacobi when the characteristic discriminant is within 1e-12 of
/// zero. Eigenvalues are re-evaluated as Rayleigh quotients of the final
/// vectors. Each eigenvector's first component with magnitude above 1e-12 is
/// made positive.
EigenSystem eig_sym3(const DiffusionTensor6& d);

/// Cyclic Jacobi eigendecomposition, same output conventions as eig_sym3.
EigenSystem eig_sym3_jacobi(const DiffusionTensor6& d);

/// FA, MD, AD = lambda1, RD = (lambda2 + lambda3) / 2. FA is 0 when all
/// eigenvalues vanish and is clamped to [0, 1].
DtiScalars derive_maps(const EigenSystem& e) noexcept;

/// Direction-encoded colour: |v1| scaled by FA (clamped to [0, 1]).
Rgb dec_color(const EigenSystem& e, double fa) noexcept;

}  // namespace flexdti
