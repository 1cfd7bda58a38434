#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "flexdti/nn/graph.hpp"
#include "flexdti/nn/param_store.hpp"
#include "flexdti/phantom.hpp"
#include "flexdti/tensor_field.hpp"

namespace flexdti {

/// Weights and biases generated per direction for the three dynamic layers:
/// (3,1,3,3)+3, (3,3,3,3)+3, (3,3,3,3)+3.
inline constexpr std::array<int, 3> kDynLayerWeights{27, 81, 81};
inline constexpr std::array<int, 3> kDynLayerBiases{3, 3, 3};
inline constexpr int kDynParamCount = 198;
inline constexpr int kFeatureChannels = 3;
/// Network targets are tensors in mm^2/s times this factor.
inline constexpr double kTensorScale = 1000.0;

struct NetConfig {
  int n_max = 20;
  int gap_len = 10;
  int depth = 3;
  int width = 16;
  int psi_channels = 4;
  int psi_hidden = 64;
  double lr = 1e-3;
  double lr_decay = 0.1;
  int decay_every = 80;
  int epochs = 100;
  int batch = 16;
  std::uint64_t seed = 0;
  /// Worker threads for per-sample graph evaluation; results do not depend on it.
  int threads = 1;
  /// Randomly negate training directions (g and -g encode the same measurement).
  bool antipodal_augment = true;

  /// Throws InvalidArgument.
  void validate() const;
  int input_channels() const noexcept { return kFeatureChannels * n_max + 1; }
  double lr_at_epoch(int epoch) const;
};

/// 198 generated values with per-layer views.
struct DynKernelParams {
  std::array<float, kDynParamCount> values{};

  std::span<const float> weights(int layer) const;
  std::span<const float> biases(int layer) const;
};

/// One slice with b0 and DW planes divided by the masked mean b0 and clipped
/// to [0, 3]. Planes are (1, 1, ny, nx).
struct NormalizedSlice {
  int nx = 0;
  int ny = 0;
  nn::Array4 b0;
  std::vector<nn::Array4> dwi;
  nn::Array4 mask;
};

/// Throws ZeroB0Mean when the mask is empty or its mean b0 is not positive.
NormalizedSlice normalize_inputs(const DwiVolume& v);

/// Fresh parameters: generator (psi.*) and U-Net (unet.*) He-initialised.
nn::ParamStore init_params(const NetConfig& cfg, std::uint64_t seed);

// Graph-level building blocks. All expect batch size 1.

/// GAP(dw) || g -> conv1d + ReLU -> dense + ReLU -> dense(198). Returns (1, 198, 1, 1).
template <typename T>
nn::Var generate_dyn_params(nn::BasicGraph<T>& g, nn::Var dw, const UnitDirection& dir, const NetConfig& cfg);

/// conv(1->3) ReLU conv(3->3) ReLU conv(3->3) with kernels sliced from `omega`.
template <typename T>
nn::Var dyn_conv_apply(nn::BasicGraph<T>& g, nn::Var dw, nn::Var omega);

/// [b0, f_1 .. f_d, then f_1, f_2, ... cyclically until n_max direction slots].
template <typename T>
nn::Var assemble_input(nn::BasicGraph<T>& g, std::span<const nn::Var> features, nn::Var b0, int n_max);

/// U-Net on the assembled stack; returns (1, 6, h, w) in scaled tensor units.
template <typename T>
nn::Var unet_forward(nn::BasicGraph<T>& g, nn::Var stack, const NetConfig& cfg);

/// Full network for the selected directions of one normalised slice.
template <typename T>
nn::Var build_network(nn::BasicGraph<T>& g, const NormalizedSlice& slice, std::span<const int> subset,
                      std::span<const UnitDirection> directions, const NetConfig& cfg);

// Value-level wrappers.

DynKernelParams generate_dyn_params(const nn::Array4& dw, const UnitDirection& dir, const nn::ParamStore& theta,
                                    const NetConfig& cfg);
nn::Array4 dyn_conv_apply(const nn::Array4& dw, const DynKernelParams& k);
/// Throws TooFewDirections / TooManyDirections.
nn::Array4 assemble_input(std::span<const nn::Array4> features, const nn::Array4& b0, int n_max);
/// Throws OddSpatialDims when h or w is not divisible by 2^depth.
nn::Array4 forward(const nn::Array4& stack, const nn::ParamStore& theta, const NetConfig& cfg);

/// Six scaled tensor maps (1, 6, ny, nx) for a field.
nn::Array4 scaled_tensor_maps(const TensorField& field);

struct TrainingSlice {
  TensorField truth;
  /// Stored acquisition; when absent, signals are synthesised per draw.
  std::optional<DwiVolume> dwi;
};

struct Dataset {
  std::vector<TrainingSlice> slices;
  GradientScheme scheme;
  std::vector<int> pool;  // direction indices subsets are drawn from
  NoiseModel noise;
  std::uint64_t noise_seed = 0;
};

struct Checkpoint {
  NetConfig config;
  nn::ParamStore params;
  int epoch = 0;
  std::vector<double> train_loss;
  std::vector<double> val_loss;
};

struct EpochReport {
  int epoch = 0;  // 1-based
  double lr = 0.0;
  double train_loss = 0.0;
  double val_loss = 0.0;
};

using ProgressFn = std::function<void(const EpochReport&)>;

/// Adam on the masked MSE between network output and scaled ground truth.
/// Each batch draws d ~ U{6..n_max} and a d-subset of the pool.
/// Throws EmptyDataset, NonFiniteLoss.
Checkpoint train(const Dataset& train_set, const Dataset* val_set, const NetConfig& cfg,
                 const ProgressFn& progress = {});

/// Mean masked MSE of `params` over `set`, each slice with a seeded subset.
double validation_loss(const Dataset& set, const nn::ParamStore& params, const NetConfig& cfg);

/// Tensors in mm^2/s for the selected directions; masked-out voxels are zero.
/// Throws SubsetOutOfRange.
TensorField infer(const DwiVolume& v, std::span<const int> subset, const Checkpoint& ckpt);

}  // namespace flexdti
