#include "flexdti/flexdti_net.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <string>
#include <thread>

#include "flexdti/error.hpp"
#include "flexdti/nn/adam.hpp"
#include "flexdti/random.hpp"
#include "flexdti/scheme.hpp"

namespace flexdti {

namespace {

using nn::Array4;
using nn::Shape4;
using nn::Var;

constexpr std::uint64_t kTagInit = 0x494e4954;
constexpr std::uint64_t kTagShuffle = 0x53485546;
constexpr std::uint64_t kTagBatch = 0x42415443;
constexpr std::uint64_t kTagSample = 0x53414d50;
constexpr std::uint64_t kTagVal = 0x56414c49;

void require_config(bool ok, const std::string& what) {
  if (!ok) throw Error(ErrorCode::InvalidArgument, "NetConfig: " + what);
}

std::string level_name(const char* stage, int level, int conv) {
  return "unet." + std::string(stage) + std::to_string(level) + ".conv" + std::to_string(conv);
}

int dyn_offset(int layer) {
  int off = 0;
  for (int l = 0; l < layer; ++l) off += kDynLayerWeights[l] + kDynLayerBiases[l];
  return off;
}

template <typename T>
struct PsiVars {
  Var conv_w, conv_b, fc1_w, fc1_b, fc2_w, fc2_b;
};

template <typename T>
PsiVars<T> psi_vars(nn::BasicGraph<T>& g) {
  return {g.param("psi.conv.w"), g.param("psi.conv.b"), g.param("psi.fc1.w"),
          g.param("psi.fc1.b"),  g.param("psi.fc2.w"),  g.param("psi.fc2.b")};
}

template <typename T>
Var generate_with(nn::BasicGraph<T>& g, const PsiVars<T>& p, Var dw, const UnitDirection& dir, const NetConfig& cfg) {
  const Var gap = g.band_gap(dw, cfg.gap_len);
  nn::BasicArray4<T> gv(Shape4{1, 3, 1, 1});
  gv[0] = static_cast<T>(dir.x());
  gv[1] = static_cast<T>(dir.y());
  gv[2] = static_cast<T>(dir.z());
  const Var parts[] = {gap, g.input(std::move(gv))};
  const Var joined = g.concat_channels(parts);
  const Var seq = g.reshape(joined, Shape4{1, 1, 1, cfg.gap_len + 3});
  Var h = g.relu(g.conv1d(seq, p.conv_w, p.conv_b));
  h = g.relu(g.dense(h, p.fc1_w, p.fc1_b));
  return g.dense(h, p.fc2_w, p.fc2_b);
}

template <typename T>
Var conv_relu(nn::BasicGraph<T>& g, Var x, const std::string& name) {
  return g.relu(g.conv2d(x, g.param(name + ".w"), g.param(name + ".b")));
}

void check_direction_count(std::size_t d, int n_max) {
  if (d < 6) throw Error(ErrorCode::TooFewDirections, "need at least 6 directions, got " + std::to_string(d));
  if (d > static_cast<std::size_t>(n_max)) {
    throw Error(ErrorCode::TooManyDirections,
                "got " + std::to_string(d) + " directions, n_max is " + std::to_string(n_max));
  }
}

Array4 plane_from(std::span<const double> values, int nx, int ny, double scale) {
  Array4 a(Shape4{1, 1, ny, nx});
  for (std::size_t i = 0; i < values.size(); ++i) {
    a[i] = static_cast<float>(std::clamp(values[i] * scale, 0.0, 3.0));
  }
  return a;
}

Array4 mask_array(const Mask& mask, int nx, int ny) {
  Array4 a(Shape4{1, 1, ny, nx});
  for (std::size_t i = 0; i < mask.size(); ++i) a[i] = mask[i] ? 1.0f : 0.0f;
  return a;
}

struct SampleResult {
  double loss = 0.0;
  nn::Gradients<float> grads;
};

// One training draw: picks the acquisition for `subset`, runs the network and
// backpropagates the masked loss.
SampleResult run_sample(const Dataset& set, std::size_t slice_index, std::span<const int> subset,
                        const nn::ParamStore& params, const NetConfig& cfg, std::uint64_t key) {
  const TrainingSlice& s = set.slices[slice_index];
  Rng rng(key);
  std::vector<UnitDirection> dirs;
  dirs.reserve(subset.size());
  for (int k : subset) {
    const UnitDirection& g = set.scheme.directions.at(static_cast<std::size_t>(k));
    dirs.push_back(cfg.antipodal_augment && rng.uniform() < 0.5 ? g.flipped() : g);
  }

  NormalizedSlice norm;
  std::vector<int> planes;
  if (s.dwi) {
    norm = normalize_inputs(*s.dwi);
    planes.assign(subset.begin(), subset.end());
  } else {
    norm = normalize_inputs(synthesize_dwi(s.truth, set.scheme.subset(subset), set.noise, rng.next()));
    planes.resize(subset.size());
    std::iota(planes.begin(), planes.end(), 0);
  }

  nn::Graph g(&params);
  const Var out = build_network(g, norm, planes, dirs, cfg);
  const Var target = g.input(scaled_tensor_maps(s.truth));
  const Var loss = g.masked_mse_loss(out, target, mask_array(s.truth.mask, s.truth.nx, s.truth.ny));
  g.backward(loss);
  return {static_cast<double>(g.value(loss)[0]), g.param_gradients()};
}

void check_dataset(const Dataset& set, const NetConfig& cfg, const char* what) {
  if (set.slices.empty()) throw Error(ErrorCode::EmptyDataset, std::string(what) + " set has no slices");
  if (set.pool.size() < 6) {
    throw Error(ErrorCode::NotEnoughDirections, std::string(what) + " pool needs at least 6 directions");
  }
  const int nx = set.slices.front().truth.nx;
  const int ny = set.slices.front().truth.ny;
  for (const auto& s : set.slices) {
    if (s.truth.nx != nx || s.truth.ny != ny) {
      throw Error(ErrorCode::ShapeMismatch, std::string(what) + " slices differ in size");
    }
    if (s.dwi && (s.dwi->nx != nx || s.dwi->ny != ny || s.dwi->scheme.size() != set.scheme.size())) {
      throw Error(ErrorCode::ShapeMismatch, std::string(what) + " stored acquisition does not match the set");
    }
  }
  const int div = 1 << cfg.depth;
  if (nx % div != 0 || ny % div != 0) {
    throw Error(ErrorCode::OddSpatialDims, "slice size " + std::to_string(nx) + "x" + std::to_string(ny) +
                                               " is not divisible by " + std::to_string(div));
  }
}

int max_draw(const Dataset& set, const NetConfig& cfg) {
  return std::min<int>(cfg.n_max, static_cast<int>(set.pool.size()));
}

}  // namespace

void NetConfig::validate() const {
  require_config(n_max >= 6, "n_max must be at least 6");
  require_config(gap_len >= 1, "gap_len must be at least 1");
  require_config(width >= 4, "width must be at least 4");
  require_config(depth >= 1 && depth <= 6, "depth must be in [1, 6]");
  require_config(psi_channels >= 1 && psi_hidden >= 1, "psi widths must be positive");
  require_config(lr > 0.0 && std::isfinite(lr), "lr must be positive");
  require_config(lr_decay > 0.0 && lr_decay <= 1.0, "lr_decay must be in (0, 1]");
  require_config(decay_every >= 1, "decay_every must be at least 1");
  require_config(epochs >= 1, "epochs must be at least 1");
  require_config(batch >= 1, "batch must be at least 1");
  require_config(threads >= 1, "threads must be at least 1");
}

double NetConfig::lr_at_epoch(int epoch) const {
  return lr * std::pow(lr_decay, static_cast<double>(epoch / decay_every));
}

std::span<const float> DynKernelParams::weights(int layer) const {
  return std::span<const float>(values).subspan(static_cast<std::size_t>(dyn_offset(layer)),
                                                static_cast<std::size_t>(kDynLayerWeights.at(layer)));
}

std::span<const float> DynKernelParams::biases(int layer) const {
  return std::span<const float>(values).subspan(static_cast<std::size_t>(dyn_offset(layer) + kDynLayerWeights[layer]),
                                                static_cast<std::size_t>(kDynLayerBiases.at(layer)));
}

NormalizedSlice normalize_inputs(const DwiVolume& v) {
  const std::vector<double> s0 = v.s0_image();
  double sum = 0.0;
  std::size_t count = 0;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (v.mask[i]) {
      sum += s0[i];
      ++count;
    }
  }
  if (count == 0) throw Error(ErrorCode::ZeroB0Mean, "mask is empty");
  const double mean = sum / static_cast<double>(count);
  if (!(mean > 0.0)) throw Error(ErrorCode::ZeroB0Mean, "mean b0 over the mask is not positive");

  NormalizedSlice out;
  out.nx = v.nx;
  out.ny = v.ny;
  const double scale = 1.0 / mean;
  out.b0 = plane_from(s0, v.nx, v.ny, scale);
  out.dwi.reserve(v.dwi.size());
  for (const auto& plane : v.dwi) out.dwi.push_back(plane_from(plane, v.nx, v.ny, scale));
  out.mask = mask_array(v.mask, v.nx, v.ny);
  return out;
}

nn::ParamStore init_params(const NetConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  nn::ParamStore p;
  Rng rng(hash_key({seed, kTagInit}));
  auto normal_fill = [&](std::size_t idx, double stddev) {
    for (float& v : p.mutable_values(idx)) v = static_cast<float>(stddev * rng.normal());
  };
  auto conv = [&](const std::string& name, int ci, int co) {
    normal_fill(p.add(name + ".w", Shape4{co, ci, 3, 3}), std::sqrt(2.0 / (9.0 * ci)));
    p.add(name + ".b", Shape4{co, 1, 1, 1});
  };

  const int seq = cfg.gap_len + 3;
  normal_fill(p.add("psi.conv.w", Shape4{cfg.psi_channels, 1, 1, 3}), std::sqrt(2.0 / 3.0));
  p.add("psi.conv.b", Shape4{cfg.psi_channels, 1, 1, 1});
  const int fc1_in = cfg.psi_channels * seq;
  normal_fill(p.add("psi.fc1.w", Shape4{cfg.psi_hidden, fc1_in, 1, 1}), std::sqrt(2.0 / fc1_in));
  p.add("psi.fc1.b", Shape4{cfg.psi_hidden, 1, 1, 1});
  // The last layer starts near a fixed He-initialised kernel (its bias) so that
  // early training sees well-scaled features; the direction-dependent part grows from there.
  normal_fill(p.add("psi.fc2.w", Shape4{kDynParamCount, cfg.psi_hidden, 1, 1}), 0.1 / std::sqrt(cfg.psi_hidden));
  const std::size_t fc2_b = p.add("psi.fc2.b", Shape4{kDynParamCount, 1, 1, 1});
  {
    auto b = p.mutable_values(fc2_b);
    for (int layer = 0; layer < 3; ++layer) {
      const double fan_in = layer == 0 ? 9.0 : 27.0;
      const int off = dyn_offset(layer);
      for (int k = 0; k < kDynLayerWeights[layer]; ++k) {
        b[static_cast<std::size_t>(off + k)] = static_cast<float>(std::sqrt(2.0 / fan_in) * rng.normal());
      }
    }
  }

  int channels = cfg.input_channels();
  for (int l = 0; l < cfg.depth; ++l) {
    const int out = cfg.width << l;
    conv(level_name("enc", l, 1), channels, out);
    conv(level_name("enc", l, 2), out, out);
    channels = out;
  }
  const int mid = cfg.width << cfg.depth;
  conv("unet.mid.conv1", channels, mid);
  conv("unet.mid.conv2", mid, mid);
  channels = mid;
  for (int l = cfg.depth - 1; l >= 0; --l) {
    const int out = cfg.width << l;
    conv(level_name("dec", l, 1), channels + out, out);
    conv(level_name("dec", l, 2), out, out);
    channels = out;
  }
  normal_fill(p.add("unet.head.w", Shape4{6, channels, 3, 3}), std::sqrt(1.0 / (9.0 * channels)));
  p.add("unet.head.b", Shape4{6, 1, 1, 1});
  return p;
}

template <typename T>
Var generate_dyn_params(nn::BasicGraph<T>& g, Var dw, const UnitDirection& dir, const NetConfig& cfg) {
  return generate_with(g, psi_vars(g), dw, dir, cfg);
}

template <typename T>
Var dyn_conv_apply(nn::BasicGraph<T>& g, Var dw, Var omega) {
  if (g.value(omega).size() != static_cast<std::size_t>(kDynParamCount)) {
    throw Error(ErrorCode::ShapeMismatch, "dynamic kernel needs 198 values");
  }
  if (g.value(dw).shape().c != 1) throw Error(ErrorCode::ShapeMismatch, "dynamic convolution input must have 1 channel");
  Var x = dw;
  for (int layer = 0; layer < 3; ++layer) {
    const auto off = static_cast<std::size_t>(dyn_offset(layer));
    const int ci = layer == 0 ? 1 : kFeatureChannels;
    const Var w = g.slice(omega, off, Shape4{kFeatureChannels, ci, 3, 3});
    const Var b = g.slice(omega, off + static_cast<std::size_t>(kDynLayerWeights[layer]),
                          Shape4{kFeatureChannels, 1, 1, 1});
    x = g.conv2d(x, w, b);
    if (layer < 2) x = g.relu(x);
  }
  return x;
}

template <typename T>
Var assemble_input(nn::BasicGraph<T>& g, std::span<const Var> features, Var b0, int n_max) {
  check_direction_count(features.size(), n_max);
  std::vector<Var> parts;
  parts.reserve(static_cast<std::size_t>(n_max) + 1);
  parts.push_back(b0);
  for (int slot = 0; slot < n_max; ++slot) parts.push_back(features[static_cast<std::size_t>(slot) % features.size()]);
  return g.concat_channels(parts);
}

template <typename T>
Var unet_forward(nn::BasicGraph<T>& g, Var stack, const NetConfig& cfg) {
  const Shape4& s = g.value(stack).shape();
  const int div = 1 << cfg.depth;
  if (s.h % div != 0 || s.w % div != 0) {
    throw Error(ErrorCode::OddSpatialDims,
                "input " + s.str() + " is not divisible by " + std::to_string(div) + " in both spatial dims");
  }
  std::vector<Var> skips;
  Var x = stack;
  for (int l = 0; l < cfg.depth; ++l) {
    x = conv_relu(g, x, level_name("enc", l, 1));
    x = conv_relu(g, x, level_name("enc", l, 2));
    skips.push_back(x);
    x = g.maxpool2(x);
  }
  x = conv_relu(g, x, "unet.mid.conv1");
  x = conv_relu(g, x, "unet.mid.conv2");
  for (int l = cfg.depth - 1; l >= 0; --l) {
    const Var parts[] = {g.upsample2(x), skips[static_cast<std::size_t>(l)]};
    x = g.concat_channels(parts);
    x = conv_relu(g, x, level_name("dec", l, 1));
    x = conv_relu(g, x, level_name("dec", l, 2));
  }
  return g.conv2d(x, g.param("unet.head.w"), g.param("unet.head.b"));
}

template <typename T>
Var build_network(nn::BasicGraph<T>& g, const NormalizedSlice& slice, std::span<const int> subset,
                  std::span<const UnitDirection> directions, const NetConfig& cfg) {
  check_direction_count(subset.size(), cfg.n_max);
  if (directions.size() != subset.size()) {
    throw Error(ErrorCode::ShapeMismatch, "one direction per selected plane is required");
  }
  const PsiVars<T> psi = psi_vars(g);
  std::vector<Var> features;
  features.reserve(subset.size());
  for (std::size_t k = 0; k < subset.size(); ++k) {
    const int idx = subset[k];
    if (idx < 0 || static_cast<std::size_t>(idx) >= slice.dwi.size()) {
      throw Error(ErrorCode::SubsetOutOfRange, "plane index " + std::to_string(idx) + " out of range");
    }
    const Var dw = g.input(slice.dwi[static_cast<std::size_t>(idx)].template cast<T>());
    const Var omega = generate_with(g, psi, dw, directions[k], cfg);
    features.push_back(dyn_conv_apply(g, dw, omega));
  }
  const Var b0 = g.input(slice.b0.template cast<T>());
  return unet_forward(g, assemble_input<T>(g, features, b0, cfg.n_max), cfg);
}

#define FLEXDTI_INSTANTIATE(T)                                                                                     \
  template Var generate_dyn_params<T>(nn::BasicGraph<T>&, Var, const UnitDirection&, const NetConfig&);           \
  template Var dyn_conv_apply<T>(nn::BasicGraph<T>&, Var, Var);                                                   \
  template Var assemble_input<T>(nn::BasicGraph<T>&, std::span<const Var>, Var, int);                             \
  template Var unet_forward<T>(nn::BasicGraph<T>&, Var, const NetConfig&);                                        \
  template Var build_network<T>(nn::BasicGraph<T>&, const NormalizedSlice&, std::span<const int>,                 \
                                std::span<const UnitDirection>, const NetConfig&);
FLEXDTI_INSTANTIATE(float)
FLEXDTI_INSTANTIATE(double)
#undef FLEXDTI_INSTANTIATE

DynKernelParams generate_dyn_params(const nn::Array4& dw, const UnitDirection& dir, const nn::ParamStore& theta,
                                    const NetConfig& cfg) {
  nn::Graph g(&theta);
  const Var omega = generate_dyn_params(g, g.input(dw), dir, cfg);
  DynKernelParams k;
  const auto& v = g.value(omega);
  std::copy_n(v.data(), kDynParamCount, k.values.begin());
  return k;
}

nn::Array4 dyn_conv_apply(const nn::Array4& dw, const DynKernelParams& k) {
  nn::Graph g;
  const Var omega = g.input(Array4(Shape4{1, kDynParamCount, 1, 1}, std::vector<float>(k.values.begin(), k.values.end())));
  return g.value(dyn_conv_apply(g, g.input(dw), omega));
}

nn::Array4 assemble_input(std::span<const nn::Array4> features, const nn::Array4& b0, int n_max) {
  check_direction_count(features.size(), n_max);
  nn::Graph g;
  std::vector<Var> vars;
  for (const auto& f : features) vars.push_back(g.input(f));
  return g.value(assemble_input<float>(g, vars, g.input(b0), n_max));
}

nn::Array4 forward(const nn::Array4& stack, const nn::ParamStore& theta, const NetConfig& cfg) {
  nn::Graph g(&theta);
  return g.value(unet_forward(g, g.input(stack), cfg));
}

nn::Array4 scaled_tensor_maps(const TensorField& field) {
  Array4 out(Shape4{1, 6, field.ny, field.nx});
  const std::size_t plane = field.size();
  for (std::size_t i = 0; i < plane; ++i) {
    const auto t = field.tensors[i].to_array();
    for (std::size_t c = 0; c < 6; ++c) out[c * plane + i] = static_cast<float>(t[c] * kTensorScale);
  }
  return out;
}

double validation_loss(const Dataset& set, const nn::ParamStore& params, const NetConfig& cfg) {
  check_dataset(set, cfg, "validation");
  const int d_max = max_draw(set, cfg);
  double total = 0.0;
  for (std::size_t i = 0; i < set.slices.size(); ++i) {
    const TrainingSlice& s = set.slices[i];
    Rng rng(hash_key({cfg.seed, kTagVal, i}));
    const int d = rng.integer(6, d_max);
    const std::vector<int> subset = sample_subset(set.pool, d, rng.next());
    std::vector<UnitDirection> dirs;
    for (int k : subset) dirs.push_back(set.scheme.directions.at(static_cast<std::size_t>(k)));

    NormalizedSlice norm;
    std::vector<int> planes;
    if (s.dwi) {
      norm = normalize_inputs(*s.dwi);
      planes = subset;
    } else {
      norm = normalize_inputs(
          synthesize_dwi(s.truth, set.scheme.subset(subset), set.noise, hash_key({set.noise_seed, i})));
      planes.resize(subset.size());
      std::iota(planes.begin(), planes.end(), 0);
    }
    nn::Graph g(&params);
    const Var out = build_network(g, norm, planes, dirs, cfg);
    const Var loss =
        g.masked_mse_loss(out, g.input(scaled_tensor_maps(s.truth)), mask_array(s.truth.mask, s.truth.nx, s.truth.ny));
    total += static_cast<double>(g.value(loss)[0]);
  }
  return total / static_cast<double>(set.slices.size());
}

Checkpoint train(const Dataset& train_set, const Dataset* val_set, const NetConfig& cfg, const ProgressFn& progress) {
  cfg.validate();
  check_dataset(train_set, cfg, "training");
  if (val_set != nullptr) check_dataset(*val_set, cfg, "validation");

  Checkpoint ck;
  ck.config = cfg;
  ck.params = init_params(cfg, cfg.seed);
  nn::AdamState<float> adam;

  const std::size_t n = train_set.slices.size();
  const std::size_t batch = static_cast<std::size_t>(cfg.batch);
  const std::size_t batches = (n + batch - 1) / batch;
  const int d_max = max_draw(train_set, cfg);

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    const double lr = cfg.lr_at_epoch(epoch);
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng(hash_key({cfg.seed, kTagShuffle, static_cast<std::uint64_t>(epoch)})).shuffle(order);

    double epoch_loss = 0.0;
    for (std::size_t bi = 0; bi < batches; ++bi) {
      Rng brng(hash_key({cfg.seed, kTagBatch, static_cast<std::uint64_t>(epoch), bi}));
      const int d = brng.integer(6, d_max);
      const std::vector<int> subset = sample_subset(train_set.pool, d, brng.next());
      const std::size_t first = bi * batch;
      const std::size_t count = std::min(batch, n - first);

      std::vector<SampleResult> results(count);
      auto work = [&](std::size_t j) {
        results[j] = run_sample(train_set, order[first + j], subset, ck.params, cfg,
                                hash_key({cfg.seed, kTagSample, static_cast<std::uint64_t>(epoch), bi, j}));
      };
      const std::size_t workers = std::min<std::size_t>(static_cast<std::size_t>(cfg.threads), count);
      if (workers <= 1) {
        for (std::size_t j = 0; j < count; ++j) work(j);
      } else {
        std::vector<std::exception_ptr> errors(workers);
        std::vector<std::thread> pool;
        for (std::size_t t = 0; t < workers; ++t) {
          pool.emplace_back([&, t] {
            try {
              for (std::size_t j = t; j < count; j += workers) work(j);
            } catch (...) {
              errors[t] = std::current_exception();
            }
          });
        }
        for (auto& th : pool) th.join();
        for (auto& e : errors) {
          if (e) std::rethrow_exception(e);
        }
      }

      nn::Gradients<float> grads = ck.params.zero_like();
      double batch_loss = 0.0;
      for (const auto& r : results) {
        batch_loss += r.loss;
        for (std::size_t p = 0; p < grads.size(); ++p) {
          auto dst = grads[p].values();
          auto src = r.grads[p].values();
          for (std::size_t k = 0; k < dst.size(); ++k) dst[k] += src[k];
        }
      }
      const float inv = 1.0f / static_cast<float>(count);
      for (auto& gr : grads) {
        for (float& v : gr.values()) v *= inv;
      }
      batch_loss /= static_cast<double>(count);
      bool finite = std::isfinite(batch_loss);
      for (const auto& gr : grads) finite = finite && gr.all_finite();
      if (!finite) {
        std::ostringstream msg;
        msg << "non-finite loss or gradient at epoch " << epoch + 1 << ", batch " << bi + 1 << " (d=" << d
            << ", loss=" << batch_loss << ", lr=" << lr << ")";
        throw Error(ErrorCode::NonFiniteLoss, msg.str());
      }
      nn::adam_step(ck.params, grads, adam, lr);
      epoch_loss += batch_loss;
    }

    EpochReport rep;
    rep.epoch = epoch + 1;
    rep.lr = lr;
    rep.train_loss = epoch_loss / static_cast<double>(batches);
    rep.val_loss = val_set != nullptr ? validation_loss(*val_set, ck.params, cfg) : std::nan("");
    ck.epoch = rep.epoch;
    ck.train_loss.push_back(rep.train_loss);
    ck.val_loss.push_back(rep.val_loss);
    if (progress) progress(rep);
  }
  return ck;
}

TensorField infer(const DwiVolume& v, std::span<const int> subset, const Checkpoint& ckpt) {
  const NetConfig& cfg = ckpt.config;
  if (subset.size() < 6 || subset.size() > static_cast<std::size_t>(cfg.n_max)) {
    throw Error(ErrorCode::SubsetOutOfRange, "subset size " + std::to_string(subset.size()) + " outside [6, " +
                                                 std::to_string(cfg.n_max) + "]");
  }
  std::vector<UnitDirection> dirs;
  for (int k : subset) {
    if (k < 0 || static_cast<std::size_t>(k) >= v.scheme.size() || static_cast<std::size_t>(k) >= v.dwi.size()) {
      throw Error(ErrorCode::SubsetOutOfRange, "direction index " + std::to_string(k) + " out of range");
    }
    dirs.push_back(v.scheme.directions[static_cast<std::size_t>(k)]);
  }
  const NormalizedSlice norm = normalize_inputs(v);
  nn::Graph g(&ckpt.params);
  const Array4& out = g.value(build_network(g, norm, subset, dirs, cfg));

  TensorField field = TensorField::zeros(v.nx, v.ny);
  field.mask = v.mask;
  const std::size_t plane = field.size();
  for (std::size_t i = 0; i < plane; ++i) {
    if (!v.mask[i]) continue;
    std::array<double, 6> t{};
    for (std::size_t c = 0; c < 6; ++c) t[c] = static_cast<double>(out[c * plane + i]) / kTensorScale;
    field.tensors[i] = DiffusionTensor6::from_array(t);
  }
  return field;
}

}  // namespace flexdti
