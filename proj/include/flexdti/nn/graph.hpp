#pragma once

#include <cstddef>
#include <deque>
#include <functional>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "flexdti/nn/array4.hpp"
#include "flexdti/nn/param_store.hpp"

namespace flexdti::nn {

/// Handle to a node in a BasicGraph.
struct Var {
  std::size_t id = 0;
};

/// Tape-style reverse-mode graph. Nodes are appended in evaluation order, so
/// creation order is a topological order. Values are computed eagerly.
///
/// Parameter leaves are bound to a BasicParamStore; after backward(),
/// param_gradients() returns one gradient per store entry (zero when unused).
/// A graph is single-use: build, backward once, read gradients.
template <typename T>
class BasicGraph {
 public:
  using Array = BasicArray4<T>;

  explicit BasicGraph(const BasicParamStore<T>* params = nullptr) : params_(params) {}
  BasicGraph(const BasicGraph&) = delete;
  BasicGraph& operator=(const BasicGraph&) = delete;

  Var input(Array value, bool requires_grad = false);
  /// Leaf holding a copy of a store parameter. Throws UnknownName.
  Var param(std::string_view name);

  /// 3x3, stride 1, zero padding 1. w: (c_out, c_in, 3, 3); b: c_out values.
  Var conv2d(Var x, Var w, Var b);
  /// Kernel 3, padding 1 along width. x: (n, c_in, 1, len); w: (c_out, c_in, 1, 3).
  Var conv1d(Var x, Var w, Var b);
  Var relu(Var x);
  /// Max over disjoint 2x2 blocks; ties route to the first element in scan order.
  Var maxpool2(Var x);
  /// Nearest-neighbour 2x upsampling.
  Var upsample2(Var x);
  Var concat_channels(std::span<const Var> xs);
  /// (n, 1, h, w) -> (n, bands, 1, 1): mean over `bands` contiguous row bands.
  Var band_gap(Var x, int bands);
  /// Per-sample affine map. x: n samples of `in` values; w: (out, in, 1, 1); b: out values.
  Var dense(Var x, Var w, Var b);
  /// Same data, new shape with equal element count.
  Var reshape(Var x, Shape4 shape);
  /// Contiguous run of the flattened data starting at `offset`, given `shape`.
  Var slice(Var x, std::size_t offset, Shape4 shape);
  /// Mean squared difference over all elements. Returns a (1,1,1,1) node.
  Var mse_loss(Var pred, Var target);
  /// Mean squared difference over voxels where mask (n, 1, h, w) is non-zero,
  /// all channels included.
  Var masked_mse_loss(Var pred, Var target, const Array& mask);

  /// References stay valid while the graph lives.
  const Array& value(Var v) const { return nodes_.at(v.id).value; }
  /// Gradient of the last backward() loss; zeros if the node was not reached.
  Array grad(Var v) const;
  std::size_t size() const noexcept { return nodes_.size(); }

  /// Throws ShapeMismatch if `loss` is not a scalar, DisconnectedLoss if no
  /// differentiable leaf reaches it.
  void backward(Var loss);

  Gradients<T> param_gradients() const;
  /// Adds this graph's parameter gradients into `into` (aligned with the store).
  void accumulate_param_gradients(Gradients<T>& into) const;

 private:
  struct Node {
    Array value;
    Array grad;
    bool requires_grad = false;
    bool has_grad = false;
    std::vector<std::size_t> inputs;
    std::optional<std::size_t> param_index;
    std::function<void()> backward;
  };

  Var push(Array value, std::vector<std::size_t> inputs);
  Array& grad_buffer(std::size_t id);
  bool needs_grad(std::size_t id) const { return nodes_[id].requires_grad; }
  Var conv_generic(Var x, Var w, Var b, int kh, int kw);

  const BasicParamStore<T>* params_;
  std::deque<Node> nodes_;
};

using Graph = BasicGraph<float>;
using Graphd = BasicGraph<double>;

extern template class BasicGraph<float>;
extern template class BasicGraph<double>;

}  // namespace flexdti::nn
