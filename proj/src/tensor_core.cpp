#include "flexdti/tensor_core.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <utility>

#include "flexdti/error.hpp"

namespace flexdti {

namespace {

double dot(const Vec3& a, const Vec3& b) { return a[0] * b[0] + a[1] * b[1] + a[2] * b[2]; }

Vec3 cross(const Vec3& a, const Vec3& b) {
  return {a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]};
}

Vec3 mul(const Mat3& m, const Vec3& v) { return {dot(m[0], v), dot(m[1], v), dot(m[2], v)}; }

Vec3 scaled(const Vec3& v, double s) { return {v[0] * s, v[1] * s, v[2] * s}; }

UnitDirection sign_fixed(const Vec3& v) {
  for (double c : v) {
    if (std::abs(c) > 1e-12) {
      return UnitDirection::normalize(c < 0.0 ? scaled(v, -1.0) : v);
    }
  }
  return UnitDirection::normalize(v);
}

// Unit vector spanning the null space of (A - lambda I), from the best-conditioned
// cross product of its rows.
Vec3 eigenvector_from_rows(const Mat3& a, double lambda) {
  const Vec3 r0{a[0][0] - lambda, a[0][1], a[0][2]};
  const Vec3 r1{a[0][1], a[1][1] - lambda, a[1][2]};
  const Vec3 r2{a[0][2], a[1][2], a[2][2] - lambda};
  const Vec3 c01 = cross(r0, r1), c02 = cross(r0, r2), c12 = cross(r1, r2);
  const double d01 = dot(c01, c01), d02 = dot(c02, c02), d12 = dot(c12, c12);
  if (d01 >= d02 && d01 >= d12) return scaled(c01, 1.0 / std::sqrt(d01));
  if (d02 >= d12) return scaled(c02, 1.0 / std::sqrt(d02));
  return scaled(c12, 1.0 / std::sqrt(d12));
}

std::pair<Vec3, Vec3> orthogonal_complement(const Vec3& w) {
  Vec3 u;
  if (std::abs(w[0]) > std::abs(w[1])) {
    const double inv = 1.0 / std::sqrt(w[0] * w[0] + w[2] * w[2]);
    u = {-w[2] * inv, 0.0, w[0] * inv};
  } else {
    const double inv = 1.0 / std::sqrt(w[1] * w[1] + w[2] * w[2]);
    u = {0.0, w[2] * inv, -w[1] * inv};
  }
  return {u, cross(w, u)};
}

// Eigenvector for `lambda` restricted to the plane orthogonal to `known`.
Vec3 eigenvector_in_complement(const Mat3& a, const Vec3& known, double lambda) {
  const auto [u, v] = orthogonal_complement(known);
  const Vec3 au = mul(a, u), av = mul(a, v);
  double m00 = dot(u, au) - lambda;
  double m01 = dot(u, av);
  double m11 = dot(v, av) - lambda;
  const double a00 = std::abs(m00), a01 = std::abs(m01), a11 = std::abs(m11);
  auto combine = [](const Vec3& p, double cp, const Vec3& q, double cq) {
    return Vec3{p[0] * cp - q[0] * cq, p[1] * cp - q[1] * cq, p[2] * cp - q[2] * cq};
  };
  if (a00 >= a11) {
    if (std::max(a00, a01) <= 0.0) return u;
    if (a00 >= a01) {
      m01 /= m00;
      m00 = 1.0 / std::sqrt(1.0 + m01 * m01);
      m01 *= m00;
    } else {
      m00 /= m01;
      m01 = 1.0 / std::sqrt(1.0 + m00 * m00);
      m00 *= m01;
    }
    return combine(u, m01, v, m00);
  }
  if (std::max(a11, a01) <= 0.0) return u;
  if (a11 >= a01) {
    m01 /= m11;
    m11 = 1.0 / std::sqrt(1.0 + m01 * m01);
    m01 *= m11;
  } else {
    m11 /= m01;
    m01 = 1.0 / std::sqrt(1.0 + m11 * m11);
    m11 *= m01;
  }
  return combine(u, m11, v, m01);
}

EigenSystem finalize(const Mat3& original, std::array<Vec3, 3> vecs) {
  std::array<std::pair<double, Vec3>, 3> pairs;
  for (int i = 0; i < 3; ++i) {
    const double n = std::sqrt(dot(vecs[i], vecs[i]));
    vecs[i] = scaled(vecs[i], 1.0 / n);
    pairs[i] = {dot(vecs[i], mul(original, vecs[i])), vecs[i]};
  }
  std::stable_sort(pairs.begin(), pairs.end(),
                   [](const auto& l, const auto& r) { return l.first > r.first; });
  EigenSystem e;
  for (int i = 0; i < 3; ++i) {
    e.values[i] = pairs[i].first;
    e.vectors[i] = sign_fixed(pairs[i].second);
  }
  return e;
}

EigenSystem axes_system(double value) {
  EigenSystem e;
  e.values = {value, value, value};
  e.vectors = {UnitDirection::from(1, 0, 0), UnitDirection::from(0, 1, 0), UnitDirection::from(0, 0, 1)};
  return e;
}

}  // namespace

UnitDirection UnitDirection::from(double x, double y, double z) {
  const double n = std::sqrt(x * x + y * y + z * z);
  if (!(std::abs(n - 1.0) <= kNormTolerance)) {
    throw Error(ErrorCode::NonUnitDirection, "direction norm " + std::to_string(n));
  }
  return UnitDirection(Vec3{x, y, z});
}

UnitDirection UnitDirection::normalize(double x, double y, double z) {
  const double n = std::sqrt(x * x + y * y + z * z);
  if (!(n > 0.0) || !std::isfinite(n)) {
    throw Error(ErrorCode::NonUnitDirection, "cannot normalize a zero or non-finite vector");
  }
  return UnitDirection(Vec3{x / n, y / n, z / n});
}

BValue::BValue(double b) : b_(b) {
  if (!(b >= 0.0) || !std::isfinite(b)) {
    throw Error(ErrorCode::InvalidArgument, "b-value must be finite and >= 0");
  }
}

double DiffusionTensor6::quadratic_form(const Vec3& g) const noexcept {
  return xx * g[0] * g[0] + yy * g[1] * g[1] + zz * g[2] * g[2] +
         2.0 * (xy * g[0] * g[1] + xz * g[0] * g[2] + yz * g[1] * g[2]);
}

double signal_forward(const DiffusionTensor6& d, const UnitDirection& g, BValue b, double s0) {
  if (b.value() == 0.0) return s0;
  return s0 * std::exp(-b.value() * d.quadratic_form(g.vec()));
}

DesignRow design_row(const UnitDirection& g) noexcept {
  const double x = g.x(), y = g.y(), z = g.z();
  return {x * x, y * y, z * z, 2.0 * x * y, 2.0 * x * z, 2.0 * y * z};
}

double log_signal_ratio(double s0, double si, BValue b) {
  if (!(s0 > 0.0) || !(si > 0.0)) {
    throw Error(ErrorCode::NonPositiveSignal, "log ratio needs s0 > 0 and si > 0");
  }
  if (b.value() == 0.0) throw Error(ErrorCode::ZeroB, "b = 0 carries no diffusion weighting");
  return std::log(s0 / si) / b.value();
}

EigenSystem eig_sym3(const DiffusionTensor6& d) {
  const Mat3 original = d.matrix();
  const double max_abs = std::max({std::abs(d.xx), std::abs(d.yy), std::abs(d.zz), std::abs(d.xy),
                                   std::abs(d.xz), std::abs(d.yz)});
  if (max_abs == 0.0) return axes_system(0.0);

  // Work on a unit-scaled copy to keep the cubic well inside double range.
  const double inv = 1.0 / max_abs;
  const double a00 = d.xx * inv, a11 = d.yy * inv, a22 = d.zz * inv;
  const double a01 = d.xy * inv, a02 = d.xz * inv, a12 = d.yz * inv;
  const Mat3 a{{{a00, a01, a02}, {a01, a11, a12}, {a02, a12, a22}}};

  const double off = a01 * a01 + a02 * a02 + a12 * a12;
  const double q = (a00 + a11 + a22) / 3.0;
  const double b00 = a00 - q, b11 = a11 - q, b22 = a22 - q;
  const double p = std::sqrt((b00 * b00 + b11 * b11 + b22 * b22 + 2.0 * off) / 6.0);
  if (p < 1e-14) {
    EigenSystem e = axes_system(0.0);
    return finalize(original, {e.vectors[0].vec(), e.vectors[1].vec(), e.vectors[2].vec()});
  }

  const double c00 = b00 / p, c11 = b11 / p, c22 = b22 / p;
  const double c01 = a01 / p, c02 = a02 / p, c12 = a12 / p;
  const double det = c00 * (c11 * c22 - c12 * c12) - c01 * (c01 * c22 - c12 * c02) +
                     c02 * (c01 * c12 - c11 * c02);
  const double half_det = std::clamp(det / 2.0, -1.0, 1.0);
  if (1.0 - half_det * half_det < 1e-12) return eig_sym3_jacobi(d);

  const double angle = std::acos(half_det) / 3.0;
  const double two_thirds_pi = 2.0 * std::numbers::pi / 3.0;
  const double beta_max = 2.0 * std::cos(angle);
  const double beta_min = 2.0 * std::cos(angle + two_thirds_pi);
  const double beta_mid = -(beta_max + beta_min);
  const double l_max = q + p * beta_max, l_mid = q + p * beta_mid, l_min = q + p * beta_min;

  // Start from whichever extreme eigenvalue is best separated from the others.
  Vec3 v_max, v_mid, v_min;
  if (half_det >= 0.0) {
    v_max = eigenvector_from_rows(a, l_max);
    v_mid = eigenvector_in_complement(a, v_max, l_mid);
    v_min = cross(v_max, v_mid);
  } else {
    v_min = eigenvector_from_rows(a, l_min);
    v_mid = eigenvector_in_complement(a, v_min, l_mid);
    v_max = cross(v_mid, v_min);
  }
  return finalize(original, {v_max, v_mid, v_min});
}

EigenSystem eig_sym3_jacobi(const DiffusionTensor6& d) {
  Mat3 a = d.matrix();
  Mat3 v{{{1, 0, 0}, {0, 1, 0}, {0, 0, 1}}};
  for (int sweep = 0; sweep < 64; ++sweep) {
    const double off = a[0][1] * a[0][1] + a[0][2] * a[0][2] + a[1][2] * a[1][2];
    const double diag = a[0][0] * a[0][0] + a[1][1] * a[1][1] + a[2][2] * a[2][2];
    if (off == 0.0 || off <= 1e-36 * diag) break;
    for (int p = 0; p < 2; ++p) {
      for (int q = p + 1; q < 3; ++q) {
        if (a[p][q] == 0.0) continue;
        const double theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
        const double t = std::copysign(1.0, theta) / (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double s = t * c;
        for (int k = 0; k < 3; ++k) {
          const double akp = a[k][p], akq = a[k][q];
          a[k][p] = c * akp - s * akq;
          a[k][q] = s * akp + c * akq;
        }
        for (int k = 0; k < 3; ++k) {
          const double apk = a[p][k], aqk = a[q][k];
          a[p][k] = c * apk - s * aqk;
          a[q][k] = s * apk + c * aqk;
        }
        for (int k = 0; k < 3; ++k) {
          const double vkp = v[k][p], vkq = v[k][q];
          v[k][p] = c * vkp - s * vkq;
          v[k][q] = s * vkp + c * vkq;
        }
      }
    }
  }
  return finalize(d.matrix(), {Vec3{v[0][0], v[1][0], v[2][0]}, Vec3{v[0][1], v[1][1], v[2][1]},
                               Vec3{v[0][2], v[1][2], v[2][2]}});
}

DtiScalars derive_maps(const EigenSystem& e) noexcept {
  const double l1 = e.values[0], l2 = e.values[1], l3 = e.values[2];
  DtiScalars s;
  s.md = (l1 + l2 + l3) / 3.0;
  s.ad = l1;
  s.rd = 0.5 * (l2 + l3);
  const double norm2 = l1 * l1 + l2 * l2 + l3 * l3;
  if (norm2 > 0.0) {
    const double dev2 = (l1 - s.md) * (l1 - s.md) + (l2 - s.md) * (l2 - s.md) + (l3 - s.md) * (l3 - s.md);
    s.fa = std::clamp(std::sqrt(1.5 * dev2 / norm2), 0.0, 1.0);
  }
  return s;
}

Rgb dec_color(const EigenSystem& e, double fa) noexcept {
  const double w = std::clamp(fa, 0.0, 1.0);
  const UnitDirection& v = e.vectors[0];
  return {std::abs(v.x()) * w, std::abs(v.y()) * w, std::abs(v.z()) * w};
}

}  // namespace flexdti
