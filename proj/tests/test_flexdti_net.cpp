#include <doctest.h>

#include <cmath>
#include <numeric>

#include "flexdti/error.hpp"
#include "flexdti/flexdti_net.hpp"
#include "flexdti/nn/gradcheck.hpp"
#include "grad_suite.hpp"
#include "flexdti/phantom.hpp"
#include "flexdti/random.hpp"
#include "flexdti/scheme.hpp"

using namespace flexdti;
using nn::Array4;
using nn::Array4d;
using nn::Shape4;
using nn::Var;

namespace {

NetConfig small_config() {
  NetConfig cfg;
  cfg.n_max = 8;
  cfg.gap_len = 4;
  cfg.depth = 2;
  cfg.width = 4;
  cfg.psi_hidden = 16;
  cfg.batch = 2;
  cfg.epochs = 3;
  cfg.seed = 11;
  return cfg;
}

Array4 random_plane(int h, int w, Rng& rng, double lo = 0.0, double hi = 1.0) {
  Array4 a(Shape4{1, 1, h, w});
  for (float& v : a.values()) v = static_cast<float>(rng.uniform(lo, hi));
  return a;
}

PhantomSpec small_phantom(std::uint64_t seed, Layout layout = Layout::Mixed) {
  PhantomSpec p;
  p.nx = 32;
  p.ny = 32;
  p.layout = layout;
  p.seed = seed;
  return p;
}

Dataset small_dataset(int slices, const GradientScheme& scheme, double sigma, std::uint64_t seed) {
  Dataset d;
  d.scheme = scheme;
  d.pool.resize(scheme.size());
  std::iota(d.pool.begin(), d.pool.end(), 0);
  d.noise = NoiseModel{1000.0, sigma};
  d.noise_seed = seed;
  for (int i = 0; i < slices; ++i) {
    d.slices.push_back(TrainingSlice{make_tensor_field(small_phantom(hash_key({seed, static_cast<std::uint64_t>(i)}))),
                                     std::nullopt});
  }
  return d;
}

double tensor_nrmse(const TensorField& est, const TensorField& ref) {
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < ref.size(); ++i) {
    if (!ref.mask[i]) continue;
    const auto a = est.tensors[i].to_array();
    const auto b = ref.tensors[i].to_array();
    for (int k = 0; k < 6; ++k) {
      num += (a[k] - b[k]) * (a[k] - b[k]);
      den += b[k] * b[k];
    }
  }
  return std::sqrt(num / den);
}

}  // namespace

TEST_CASE("dynamic kernel layout is 30/84/84") {
  DynKernelParams k;
  std::iota(k.values.begin(), k.values.end(), 0.0f);
  CHECK(k.values.size() == 198);
  CHECK(k.weights(0).size() == 27);
  CHECK(k.biases(0).size() == 3);
  CHECK(k.weights(1).size() == 81);
  CHECK(k.weights(2).size() == 81);
  CHECK(k.weights(0)[0] == 0.0f);
  CHECK(k.biases(0)[0] == 27.0f);
  CHECK(k.weights(1)[0] == 30.0f);
  CHECK(k.biases(1)[2] == 113.0f);
  CHECK(k.weights(2)[0] == 114.0f);
  CHECK(k.biases(2)[2] == 197.0f);
}

TEST_CASE("generate_dyn_params") {
  const NetConfig cfg = NetConfig{};
  nn::ParamStore theta = init_params(cfg, 3);
  Rng rng(4);
  const Array4 dw = random_plane(32, 32, rng);

  SUBCASE("always 198 values, finite") {
    const auto k = generate_dyn_params(dw, UnitDirection::normalize(1, 2, 3), theta, cfg);
    for (float v : k.values) CHECK(std::isfinite(v));
  }
  SUBCASE("affine collapse to the final bias") {
    for (std::size_t i = 0; i < theta.size(); ++i) {
      if (theta.name(i) == "psi.fc2.b") continue;
      for (float& v : theta.mutable_values(i)) v = 0.0f;
    }
    const Array4 zero_dw(Shape4{1, 1, 32, 32});
    const auto k = generate_dyn_params(zero_dw, UnitDirection::from(0, 0, 1), theta, cfg);
    const auto beta = theta.value("psi.fc2.b").values();
    for (std::size_t i = 0; i < 198; ++i) CHECK(k.values[i] == beta[i]);
  }
  SUBCASE("direction changes the kernels") {
    const auto a = generate_dyn_params(dw, UnitDirection::from(1, 0, 0), theta, cfg);
    const auto b = generate_dyn_params(dw, UnitDirection::from(0, 1, 0), theta, cfg);
    double max_diff = 0.0;
    for (std::size_t i = 0; i < 198; ++i) max_diff = std::max(max_diff, std::abs(double(a.values[i]) - b.values[i]));
    CHECK(max_diff > 1e-4);
  }
  SUBCASE("too small image") {
    try {
      generate_dyn_params(random_plane(8, 8, rng), UnitDirection{}, theta, cfg);
      FAIL("expected ImageTooSmall");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::ImageTooSmall);
    }
  }
}

TEST_CASE("dyn_conv_apply") {
  Rng rng(5);
  const Array4 dw = random_plane(12, 10, rng, 0.1, 2.0);

  SUBCASE("zero kernels give zero maps") {
    const Array4 y = dyn_conv_apply(dw, DynKernelParams{});
    CHECK(y.shape().c == 3);
    CHECK(y.shape().h == 12);
    CHECK(y.shape().w == 10);
    for (float v : y.values()) CHECK(v == 0.0f);
  }
  SUBCASE("constructed identity reproduces the input") {
    DynKernelParams k;
    for (int o = 0; o < 3; ++o) k.values[static_cast<std::size_t>(o * 9 + 4)] = 1.0f;
    for (int layer = 1; layer < 3; ++layer) {
      const std::size_t off = layer == 1 ? 30 : 114;
      for (int o = 0; o < 3; ++o) k.values[off + static_cast<std::size_t>((o * 3 + o) * 9 + 4)] = 1.0f;
    }
    const Array4 y = dyn_conv_apply(dw, k);
    for (int r = 0; r < 12; ++r)
      for (int c = 0; c < 10; ++c) CHECK(y.at(0, 0, r, c) == doctest::Approx(dw.at(0, 0, r, c)).epsilon(1e-6));
  }
  SUBCASE("shape errors") {
    nn::Graph g;
    const Var omega = g.input(Array4(Shape4{1, 197, 1, 1}));
    try {
      dyn_conv_apply<float>(g, g.input(dw), omega);
      FAIL("expected ShapeMismatch");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::ShapeMismatch);
    }
    const Var ok = g.input(Array4(Shape4{1, 198, 1, 1}));
    CHECK_THROWS_AS(dyn_conv_apply<float>(g, g.input(Array4(Shape4{1, 2, 4, 4})), ok), Error);
  }
  SUBCASE("gradient with respect to the kernels") {
    nn::ParamStored ps;
    Array4d omega(Shape4{1, 198, 1, 1});
    for (double& v : omega.values()) v = 0.4 * rng.normal();
    ps.assign(ps.add("omega", omega.shape()), omega);
    Array4d x(Shape4{1, 1, 6, 6});
    for (double& v : x.values()) v = rng.uniform(0.1, 1.0);
    ps.assign(ps.add("dw", x.shape()), x);
    Array4d target(Shape4{1, 3, 6, 6});
    for (double& v : target.values()) v = rng.normal();
    const auto r = nn::check_gradients<double>(ps, [&](nn::Graphd& g) {
      return g.mse_loss(dyn_conv_apply<double>(g, g.param("dw"), g.param("omega")), g.input(target));
    }, 1e-6);
    CHECK(r.relative_error < 1e-2);
  }
}

TEST_CASE("assemble_input fills direction slots cyclically") {
  auto features = [](int d) {
    std::vector<Array4> f;
    for (int k = 0; k < d; ++k) {
      Array4 a(Shape4{1, 3, 2, 2});
      for (int c = 0; c < 3; ++c)
        for (int i = 0; i < 4; ++i) a[static_cast<std::size_t>(c * 4 + i)] = static_cast<float>(10 * (k + 1) + c);
      f.push_back(a);
    }
    return f;
  };
  const Array4 b0(Shape4{1, 1, 2, 2}, -1.0f);

  SUBCASE("d = 6, n_max = 20") {
    const Array4 s = assemble_input(features(6), b0, 20);
    REQUIRE(s.shape().c == 61);
    CHECK(s.at(0, 0, 1, 1) == -1.0f);
    for (int slot = 0; slot < 20; ++slot) {
      const int k = slot % 6;
      for (int c = 0; c < 3; ++c) CHECK(s.at(0, 1 + 3 * slot + c, 0, 1) == static_cast<float>(10 * (k + 1) + c));
    }
    CHECK(s.at(0, 19, 0, 0) == 10.0f);  // slot 7 starts over at f_1
    CHECK(s.at(0, 55, 0, 0) == 10.0f);  // slot 19 is f_1
    CHECK(s.at(0, 58, 0, 0) == 20.0f);  // slot 20 is f_2
  }
  SUBCASE("d = n_max keeps input order") {
    const Array4 s = assemble_input(features(8), b0, 8);
    REQUIRE(s.shape().c == 25);
    for (int slot = 0; slot < 8; ++slot) CHECK(s.at(0, 1 + 3 * slot, 0, 0) == static_cast<float>(10 * (slot + 1)));
  }
  SUBCASE("direction count limits") {
    try {
      assemble_input(features(5), b0, 20);
      FAIL("expected TooFewDirections");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::TooFewDirections);
    }
    try {
      assemble_input(features(9), b0, 8);
      FAIL("expected TooManyDirections");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::TooManyDirections);
    }
  }
}

TEST_CASE("U-Net forward") {
  const NetConfig cfg = small_config();
  nn::ParamStore theta = init_params(cfg, 7);
  Rng rng(8);
  Array4 stack(Shape4{1, cfg.input_channels(), 16, 16});
  for (float& v : stack.values()) v = static_cast<float>(rng.uniform());

  SUBCASE("six output channels at input resolution") {
    const Array4 y = forward(stack, theta, cfg);
    CHECK(y.shape().c == 6);
    CHECK(y.shape().h == 16);
    CHECK(y.shape().w == 16);
    CHECK(y.all_finite());
  }
  SUBCASE("constant output from the head bias alone") {
    for (std::size_t i = 0; i < theta.size(); ++i) {
      for (float& v : theta.mutable_values(i)) v = 0.0f;
    }
    auto hb = theta.mutable_values("unet.head.b");
    for (std::size_t c = 0; c < 6; ++c) hb[c] = 0.25f * static_cast<float>(c + 1);
    const Array4 y = forward(stack, theta, cfg);
    for (int c = 0; c < 6; ++c)
      for (int r = 0; r < 16; ++r)
        for (int x = 0; x < 16; ++x) CHECK(y.at(0, c, r, x) == 0.25f * static_cast<float>(c + 1));
  }
  SUBCASE("spatial dims must divide by 2^depth") {
    try {
      forward(Array4(Shape4{1, cfg.input_channels(), 14, 16}), theta, cfg);
      FAIL("expected OddSpatialDims");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::OddSpatialDims);
    }
  }
  SUBCASE("default configuration size") {
    const nn::ParamStore full = init_params(NetConfig{}, 0);
    CHECK(full.total_count() > 100000);
    CHECK(full.contains("psi.fc2.w"));
    CHECK(full.shape(full.index_of("unet.enc0.conv1.w")).c == 61);
  }
}

TEST_CASE("composite network gradient check") {
  const auto wide = grad_suite::composite_check<double>(1e-6, 4);
  CHECK(wide.entries > 50);
  CHECK(wide.relative_error < 1e-3);
  CHECK(grad_suite::composite_check<float>(3e-4, 4).relative_error < 1e-2);
}

TEST_CASE("normalize_inputs") {
  const GradientScheme scheme = generate_uniform(6, 1);
  const TensorField truth = make_tensor_field(small_phantom(2));
  DwiVolume v = synthesize_dwi(truth, scheme, NoiseModel{400.0, 0.0}, 0);

  SUBCASE("constant b0 maps to one inside the mask") {
    const NormalizedSlice n = normalize_inputs(v);
    for (std::size_t i = 0; i < v.size(); ++i) {
      if (v.mask[i]) CHECK(n.b0[i] == doctest::Approx(1.0));
    }
    CHECK(n.dwi.size() == 6);
    CHECK(n.mask.shape().h == 32);
  }
  SUBCASE("ratios are preserved and values clipped") {
    Rng rng(3);
    for (auto& plane : v.b0)
      for (double& s : plane) s = rng.uniform(200.0, 600.0);
    v.dwi[0][0] = 1e6;
    const NormalizedSlice n = normalize_inputs(v);
    CHECK(n.dwi[0][0] == 3.0f);
    const auto s0 = v.s0_image();
    for (std::size_t i = 1; i < v.size(); ++i) {
      if (!v.mask[i] || s0[i] <= 0.0) continue;
      CHECK(double(n.dwi[2][i]) / n.b0[i] == doctest::Approx(v.dwi[2][i] / s0[i]).epsilon(1e-5));
    }
  }
  SUBCASE("empty mask") {
    std::fill(v.mask.begin(), v.mask.end(), 0);
    try {
      normalize_inputs(v);
      FAIL("expected ZeroB0Mean");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::ZeroB0Mean);
    }
  }
}

TEST_CASE("scaled tensor maps invert exactly") {
  const TensorField truth = make_tensor_field(small_phantom(12));
  const Array4 s = scaled_tensor_maps(truth);
  CHECK(s.shape().c == 6);
  const std::size_t plane = truth.size();
  for (std::size_t i = 0; i < plane; ++i) {
    const auto t = truth.tensors[i].to_array();
    for (std::size_t c = 0; c < 6; ++c) {
      const double back = static_cast<double>(s[c * plane + i]) / kTensorScale;
      CHECK(std::abs(back - t[c]) <= 1e-7 * std::max(std::abs(t[c]), 1e-3));
    }
  }
}

TEST_CASE("config validation and schedule") {
  NetConfig cfg;
  CHECK(cfg.input_channels() == 61);
  CHECK(cfg.lr_at_epoch(0) == doctest::Approx(1e-3));
  CHECK(cfg.lr_at_epoch(79) == doctest::Approx(1e-3));
  CHECK(cfg.lr_at_epoch(80) == doctest::Approx(1e-4));
  cfg.n_max = 5;
  CHECK_THROWS_AS(cfg.validate(), Error);
  cfg = NetConfig{};
  cfg.width = 3;
  CHECK_THROWS_AS(cfg.validate(), Error);
  cfg = NetConfig{};
  cfg.gap_len = 0;
  CHECK_THROWS_AS(cfg.validate(), Error);
}

TEST_CASE("training") {
  const GradientScheme scheme = generate_uniform(12, 3);
  const Dataset data = small_dataset(4, scheme, 20.0, 21);
  NetConfig cfg = small_config();
  cfg.epochs = 6;

  SUBCASE("loss falls and runs repeat exactly") {
    std::vector<EpochReport> seen;
    const Checkpoint a = train(data, &data, cfg, [&](const EpochReport& r) { seen.push_back(r); });
    REQUIRE(a.train_loss.size() == 6);
    CHECK(a.epoch == 6);
    CHECK(seen.size() == 6);
    CHECK(seen.front().epoch == 1);
    CHECK(a.train_loss.front() > a.train_loss.back());
    CHECK(std::isfinite(a.val_loss.back()));
    const Checkpoint b = train(data, &data, cfg);
    CHECK(a.train_loss == b.train_loss);
    CHECK(a.val_loss == b.val_loss);
    cfg.threads = 2;
    const Checkpoint c = train(data, nullptr, cfg);
    CHECK(a.train_loss == c.train_loss);
    CHECK(std::isnan(c.val_loss.back()));
  }
  SUBCASE("zero-tensor slices fit to zero loss") {
    Dataset zero = data;
    for (auto& s : zero.slices) {
      s.truth = TensorField::zeros(32, 32);
      s.truth.mask.assign(32 * 32, 1);
    }
    zero.noise.sigma = 0.0;
    cfg.epochs = 50;
    const Checkpoint ck = train(zero, nullptr, cfg);
    CHECK(ck.train_loss.back() < 1e-4);
    CHECK(ck.train_loss.back() < 1e-2 * ck.train_loss.front());
  }
  SUBCASE("errors") {
    Dataset empty = data;
    empty.slices.clear();
    try {
      train(empty, nullptr, cfg);
      FAIL("expected EmptyDataset");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::EmptyDataset);
    }
    Dataset few = data;
    few.pool = {0, 1, 2, 3, 4};
    CHECK_THROWS_AS(train(few, nullptr, cfg), Error);
    cfg.lr = 1e30;
    try {
      train(data, nullptr, cfg);
      FAIL("expected NonFiniteLoss");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::NonFiniteLoss);
      CHECK(std::string(e.what()).find("epoch") != std::string::npos);
    }
  }
}

TEST_CASE("inference accepts any subset size up to n_max") {
  const GradientScheme scheme = generate_uniform(24, 4);
  const Dataset data = small_dataset(2, scheme, 20.0, 41);
  NetConfig cfg = small_config();
  cfg.n_max = 20;
  cfg.epochs = 1;
  const Checkpoint ck = train(data, nullptr, cfg);
  const DwiVolume v = synthesize_dwi(data.slices[0].truth, scheme, data.noise, 0);

  for (int d : {6, 8, 12, 20}) {
    // Directions beyond the training pool are allowed.
    std::vector<int> subset(static_cast<std::size_t>(d));
    std::iota(subset.begin(), subset.end(), 24 - d);
    const TensorField f = infer(v, subset, ck);
    CHECK(f.nx == 32);
    for (std::size_t i = 0; i < f.size(); ++i) {
      for (double t : f.tensors[i].to_array()) CHECK(std::isfinite(t));
      if (!v.mask[i]) CHECK(f.tensors[i] == DiffusionTensor6{});
    }
  }
  std::vector<int> too_many(21, 0);
  std::iota(too_many.begin(), too_many.end(), 0);
  try {
    infer(v, too_many, ck);
    FAIL("expected SubsetOutOfRange");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::SubsetOutOfRange);
  }
  const std::vector<int> bad{0, 1, 2, 3, 4, 24};
  CHECK_THROWS_AS(infer(v, bad, ck), Error);
  const std::vector<int> five{0, 1, 2, 3, 4};
  CHECK_THROWS_AS(infer(v, five, ck), Error);
}

TEST_CASE("overfit checkpoint reproduces its slice and uses direction labels") {
  const GradientScheme scheme = generate_uniform(8, 4);
  const TensorField truth = make_tensor_field(small_phantom(31, Layout::Bundles));
  Dataset one;
  one.scheme = scheme;
  one.pool = {0, 1, 2, 3, 4, 5, 6, 7};
  one.noise = NoiseModel{1000.0, 0.0};
  one.slices.push_back(TrainingSlice{truth, std::nullopt});

  NetConfig cfg = small_config();
  cfg.width = 16;
  cfg.batch = 1;
  cfg.epochs = 1500;
  cfg.lr = 2e-3;
  cfg.decay_every = 1125;
  cfg.antipodal_augment = false;
  const Checkpoint ck = train(one, nullptr, cfg);
  const DwiVolume v = synthesize_dwi(truth, scheme, one.noise, 0);
  const std::vector<int> subset{0, 1, 2, 3, 4, 5, 6, 7};

  const TensorField fit = infer(v, subset, ck);
  CHECK(tensor_nrmse(fit, truth) < 0.05);

  DwiVolume relabelled = v;
  std::swap(relabelled.scheme.directions[0], relabelled.scheme.directions[5]);
  std::swap(relabelled.scheme.directions[2], relabelled.scheme.directions[7]);
  const TensorField moved = infer(relabelled, subset, ck);
  double change = 0.0;
  for (std::size_t i = 0; i < fit.size(); ++i) {
    const auto x = fit.tensors[i].to_array(), y = moved.tensors[i].to_array();
    for (int k = 0; k < 6; ++k) change += std::abs(x[k] - y[k]);
  }
  CHECK(change / static_cast<double>(6 * fit.size()) > 1e-6);
}
