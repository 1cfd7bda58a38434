#include <doctest.h>

#include <cmath>
#include <numbers>

#include "flexdti/error.hpp"
#include "flexdti/tensor_core.hpp"
#include "oracles.hpp"
#include "test_helpers.hpp"

using namespace flexdti;
using doctest::Approx;

TEST_CASE("unit direction rejects non-unit vectors") {
  CHECK_NOTHROW(UnitDirection::from(0.0, 0.0, 1.0));
  CHECK_THROWS_AS(UnitDirection::from(0.9, 0.0, 0.0), Error);
  try {
    UnitDirection::from(1.0 + 1e-6, 0.0, 0.0);
    FAIL("expected throw");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::NonUnitDirection);
  }
  CHECK_THROWS_AS(UnitDirection::normalize(0.0, 0.0, 0.0), Error);
  CHECK_THROWS_AS(BValue(-1.0), Error);
}

TEST_CASE("signal_forward") {
  const DiffusionTensor6 iso{1e-3, 1e-3, 1e-3, 0, 0, 0};
  CHECK(signal_forward({1.2e-3, 0.3e-3, 0.5e-3, 1e-4, 0, 2e-4}, UnitDirection::from(0, 0, 1), BValue(0.0), 100.0) == 100.0);
  CHECK(signal_forward(iso, UnitDirection::from(1, 0, 0), BValue(1000.0), 1.0) == Approx(std::exp(-1.0)).epsilon(1e-15));
  CHECK(signal_forward({2e-3, 0.5e-3, 0.5e-3, 0, 0, 0}, UnitDirection::from(0, 1, 0), BValue(1000.0), 1.0) ==
        Approx(std::exp(-0.5)).epsilon(1e-15));
}

TEST_CASE("design_row") {
  const auto r1 = design_row(UnitDirection::from(1, 0, 0));
  CHECK(r1 == DesignRow{1, 0, 0, 0, 0, 0});
  CHECK(design_row(UnitDirection::from(0, 0, 1)) == DesignRow{0, 0, 1, 0, 0, 0});
  const double h = 1.0 / std::sqrt(2.0);
  const auto r = design_row(UnitDirection::from(h, h, 0));
  const DesignRow want{0.5, 0.5, 0, 1, 0, 0};
  for (int i = 0; i < 6; ++i) CHECK(r[i] == Approx(want[i]).epsilon(1e-15));

  Rng rng(3);
  for (int k = 0; k < 1000; ++k) {
    const auto row = design_row(testing::random_direction(rng));
    CHECK(row[0] + row[1] + row[2] == Approx(1.0).epsilon(1e-12));
    for (int i = 0; i < 3; ++i) CHECK((row[i] >= 0.0 && row[i] <= 1.0));
  }
}

TEST_CASE("log_signal_ratio") {
  CHECK(log_signal_ratio(1.0, std::exp(-1.0), BValue(1000.0)) == Approx(1e-3).epsilon(1e-14));
  CHECK(log_signal_ratio(5.0, 5.0, BValue(1000.0)) == 0.0);
  CHECK(log_signal_ratio(200.0, 100.0, BValue(1000.0)) == Approx(std::log(2.0) / 1000.0).epsilon(1e-14));
  auto code_of = [](auto&& f) {
    try {
      f();
    } catch (const Error& e) {
      return e.code();
    }
    return ErrorCode::InvalidArgument;
  };
  CHECK(code_of([] { log_signal_ratio(1.0, 0.0, BValue(1000.0)); }) == ErrorCode::NonPositiveSignal);
  CHECK(code_of([] { log_signal_ratio(-1.0, 1.0, BValue(1000.0)); }) == ErrorCode::NonPositiveSignal);
  CHECK(code_of([] { log_signal_ratio(1.0, 0.5, BValue(0.0)); }) == ErrorCode::ZeroB);
}

TEST_CASE("forward model round trip through design rows") {
  Rng rng(11);
  for (int k = 0; k < 2000; ++k) {
    const DiffusionTensor6 d = testing::random_tensor(rng);
    const UnitDirection g = testing::random_direction(rng);
    const BValue b(rng.uniform(500.0, 3000.0));
    const double beta = log_signal_ratio(1000.0, signal_forward(d, g, b, 1000.0), b);
    const auto row = design_row(g);
    const auto t = d.to_array();
    double lhs = 0.0;
    for (int i = 0; i < 6; ++i) lhs += row[i] * t[i];
    CHECK(std::abs(lhs - beta) < 1e-10);
  }
}

TEST_CASE("eig_sym3 diagonal and isotropic cases") {
  const EigenSystem e = eig_sym3({1e-3, 3e-3, 2e-3, 0, 0, 0});
  CHECK(e.values[0] == Approx(3e-3).epsilon(1e-14));
  CHECK(e.values[1] == Approx(2e-3).epsilon(1e-14));
  CHECK(e.values[2] == Approx(1e-3).epsilon(1e-14));
  CHECK(e.vectors[0].vec() == Vec3{0, 1, 0});
  CHECK(e.vectors[1].vec() == Vec3{0, 0, 1});
  CHECK(e.vectors[2].vec() == Vec3{1, 0, 0});

  const EigenSystem iso = eig_sym3({1e-3, 1e-3, 1e-3, 0, 0, 0});
  for (double v : iso.values) CHECK(v == Approx(1e-3).epsilon(1e-14));
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) {
      double dot = 0.0;
      for (int c = 0; c < 3; ++c) dot += iso.vectors[i][c] * iso.vectors[j][c];
      CHECK(std::abs(dot - (i == j ? 1.0 : 0.0)) < 1e-12);
    }
}

namespace {

void check_eigensystem(const DiffusionTensor6& d, const EigenSystem& e) {
  const Mat3 m = d.matrix();
  double scale = 0.0;
  for (double v : e.values) scale = std::max(scale, std::abs(v));
  CHECK(e.values[0] >= e.values[1]);
  CHECK(e.values[1] >= e.values[2]);
  Mat3 rec{};
  for (int k = 0; k < 3; ++k) {
    const Vec3& v = e.vectors[k].vec();
    for (int i = 0; i < 3; ++i) {
      double mv = 0.0;
      for (int j = 0; j < 3; ++j) mv += m[i][j] * v[j];
      CHECK(std::abs(mv - e.values[k] * v[i]) <= 1e-7 * scale + 1e-300);
      for (int j = 0; j < 3; ++j) rec[i][j] += e.values[k] * v[i] * v[j];
    }
    for (int l = k + 1; l < 3; ++l) {
      double dot = 0.0;
      for (int c = 0; c < 3; ++c) dot += v[c] * e.vectors[l][c];
      CHECK(std::abs(dot) < 1e-7);
    }
    // First component above 1e-12 in magnitude is positive.
    for (int c = 0; c < 3; ++c) {
      if (std::abs(v[c]) > 1e-12) {
        CHECK(v[c] > 0.0);
        break;
      }
    }
  }
  double frob = 0.0;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) frob += (rec[i][j] - m[i][j]) * (rec[i][j] - m[i][j]);
  CHECK(std::sqrt(frob) < 1e-9);
}

}  // namespace

TEST_CASE("eig_sym3 matches the Jacobi oracle on random symmetric matrices") {
  Rng rng(2024);
  double max_diff = 0.0;
  for (int k = 0; k < 2000; ++k) {
    const DiffusionTensor6 d{rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1),
                             rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1)};
    const EigenSystem e = eig_sym3(d);
    const auto o = oracle::jacobi3(d.matrix());
    for (int i = 0; i < 3; ++i) max_diff = std::max(max_diff, std::abs(e.values[i] - static_cast<double>(o.values[i])));
    check_eigensystem(d, e);
  }
  CHECK(max_diff < 1e-10);
}

TEST_CASE("eig_sym3 near-degenerate and structured inputs") {
  Rng rng(5);
  for (int k = 0; k < 500; ++k) {
    const Mat3 r = testing::random_rotation(rng);
    const double a = rng.uniform(0.5e-3, 2e-3);
    const double eps = std::pow(10.0, -rng.uniform(4.0, 15.0)) * a;
    const Mat3 dg{{{a + eps, 0, 0}, {0, a, 0}, {0, 0, rng.uniform() < 0.5 ? a : 0.2 * a}}};
    const DiffusionTensor6 d = DiffusionTensor6::from_matrix(testing::multiply(testing::multiply(r, dg), testing::transpose(r)));
    check_eigensystem(d, eig_sym3(d));
    check_eigensystem(d, eig_sym3_jacobi(d));
  }
  check_eigensystem({0, 0, 0, 0, 0, 0}, eig_sym3({0, 0, 0, 0, 0, 0}));
  check_eigensystem({1e-300, 0, 0, 0, 0, 0}, eig_sym3({1e-300, 0, 0, 0, 0, 0}));
}

TEST_CASE("derive_maps closed forms") {
  auto maps_of = [](double a, double b, double c) {
    EigenSystem e;
    e.values = {a, b, c};
    return derive_maps(e);
  };
  const DtiScalars iso = maps_of(1e-3, 1e-3, 1e-3);
  CHECK(iso.fa == Approx(0.0));
  CHECK(iso.md == Approx(1e-3));
  CHECK(iso.ad == Approx(1e-3));
  CHECK(iso.rd == Approx(1e-3));

  const DtiScalars line = maps_of(2e-3, 0, 0);
  CHECK(line.fa == Approx(1.0).epsilon(1e-15));
  CHECK(line.md == Approx(2e-3 / 3.0));
  CHECK(line.ad == 2e-3);
  CHECK(line.rd == 0.0);

  const DtiScalars s = maps_of(3e-3, 2e-3, 1e-3);
  CHECK(s.md == Approx(2e-3).epsilon(1e-14));
  CHECK(s.ad == 3e-3);
  CHECK(s.rd == Approx(1.5e-3).epsilon(1e-14));
  CHECK(s.fa == Approx(std::sqrt(3.0 / 14.0)).epsilon(1e-14));

  CHECK(maps_of(0, 0, 0).fa == 0.0);
}

TEST_CASE("scalar maps are rotation invariant, MD equals trace/3, FA in [0,1]") {
  Rng rng(77);
  for (int k = 0; k < 1000; ++k) {
    const DiffusionTensor6 d = testing::random_tensor(rng, 0.0, 3e-3);
    const DtiScalars a = derive_maps(eig_sym3(d));
    const Mat3 r = testing::random_rotation(rng);
    const DiffusionTensor6 rd =
        DiffusionTensor6::from_matrix(testing::multiply(testing::multiply(r, d.matrix()), testing::transpose(r)));
    const DtiScalars b = derive_maps(eig_sym3(rd));
    CHECK(std::abs(a.fa - b.fa) < 1e-9);
    CHECK(std::abs(a.md - b.md) < 1e-9);
    CHECK(std::abs(a.ad - b.ad) < 1e-9);
    CHECK(std::abs(a.rd - b.rd) < 1e-9);
    CHECK(std::abs(a.md - d.trace() / 3.0) < 1e-12);
    CHECK(std::abs(a.md - (a.ad + 2.0 * a.rd) / 3.0) < 1e-12);
    CHECK(a.ad >= a.rd);
    CHECK((a.fa >= 0.0 && a.fa <= 1.0));
  }
}

TEST_CASE("dec_color") {
  EigenSystem e;
  e.vectors[0] = UnitDirection::from(1, 0, 0);
  const Rgb zero = dec_color(e, 0.0);
  CHECK((zero.r == 0.0 && zero.g == 0.0 && zero.b == 0.0));
  const Rgb red = dec_color(e, 1.0);
  CHECK((red.r == 1.0 && red.g == 0.0 && red.b == 0.0));
  const double h = 1.0 / std::sqrt(2.0);
  e.vectors[0] = UnitDirection::from(h, h, 0);
  const Rgb c = dec_color(e, 0.5);
  CHECK(c.r == Approx(0.3536).epsilon(1e-4));
  CHECK(c.g == Approx(0.3536).epsilon(1e-4));
  CHECK(c.b == 0.0);
}
