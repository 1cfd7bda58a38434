#include "flexdti/nn/graph.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <memory>
#include <string>

#include "flexdti/error.hpp"

namespace flexdti::nn {

namespace {

template <typename T>
using MatR = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

void require(bool ok, const std::string& what) {
  if (!ok) throw Error(ErrorCode::ShapeMismatch, what);
}

// Columns for a same-padded (kh x kw) correlation: rows (c, ky, kx), columns (y, x).
template <typename T>
void im2col(const T* x, int channels, int h, int w, int kh, int kw, T* cols) {
  const int ph = kh / 2, pw = kw / 2;
  const std::size_t plane = static_cast<std::size_t>(h) * w;
  for (int c = 0; c < channels; ++c) {
    const T* xc = x + c * plane;
    for (int ky = 0; ky < kh; ++ky) {
      for (int kx = 0; kx < kw; ++kx) {
        T* row = cols + ((static_cast<std::size_t>(c) * kh + ky) * kw + kx) * plane;
        const int x0 = std::max(0, pw - kx), x1 = std::min(w, w + pw - kx);
        for (int y = 0; y < h; ++y) {
          T* dst = row + static_cast<std::size_t>(y) * w;
          const int sy = y + ky - ph;
          if (sy < 0 || sy >= h) {
            std::fill(dst, dst + w, T(0));
            continue;
          }
          const T* src = xc + static_cast<std::size_t>(sy) * w + (kx - pw);
          std::fill(dst, dst + x0, T(0));
          std::copy(src + x0, src + x1, dst + x0);
          std::fill(dst + x1, dst + w, T(0));
        }
      }
    }
  }
}

template <typename T>
void col2im_add(const T* cols, int channels, int h, int w, int kh, int kw, T* x) {
  const int ph = kh / 2, pw = kw / 2;
  const std::size_t plane = static_cast<std::size_t>(h) * w;
  for (int c = 0; c < channels; ++c) {
    T* xc = x + c * plane;
    for (int ky = 0; ky < kh; ++ky) {
      for (int kx = 0; kx < kw; ++kx) {
        const T* row = cols + ((static_cast<std::size_t>(c) * kh + ky) * kw + kx) * plane;
        const int x0 = std::max(0, pw - kx), x1 = std::min(w, w + pw - kx);
        for (int y = 0; y < h; ++y) {
          const int sy = y + ky - ph;
          if (sy < 0 || sy >= h) continue;
          const T* src = row + static_cast<std::size_t>(y) * w;
          T* dst = xc + static_cast<std::size_t>(sy) * w + (kx - pw);
          for (int xx = x0; xx < x1; ++xx) dst[xx] += src[xx];
        }
      }
    }
  }
}

}  // namespace

template <typename T>
Var BasicGraph<T>::push(Array value, std::vector<std::size_t> inputs) {
  Node node;
  node.value = std::move(value);
  for (std::size_t i : inputs) node.requires_grad = node.requires_grad || nodes_[i].requires_grad;
  node.inputs = std::move(inputs);
  nodes_.push_back(std::move(node));
  return Var{nodes_.size() - 1};
}

template <typename T>
typename BasicGraph<T>::Array& BasicGraph<T>::grad_buffer(std::size_t id) {
  Node& n = nodes_[id];
  if (!n.has_grad) {
    n.grad = Array(n.value.shape());
    n.has_grad = true;
  }
  return n.grad;
}

template <typename T>
Var BasicGraph<T>::input(Array value, bool requires_grad) {
  Var v = push(std::move(value), {});
  nodes_[v.id].requires_grad = requires_grad;
  return v;
}

template <typename T>
Var BasicGraph<T>::param(std::string_view name) {
  if (!params_) throw Error(ErrorCode::UnknownName, "graph has no parameter store");
  const std::size_t idx = params_->index_of(name);
  Var v = push(params_->value(idx), {});
  nodes_[v.id].requires_grad = true;
  nodes_[v.id].param_index = idx;
  return v;
}

template <typename T>
Var BasicGraph<T>::conv_generic(Var xv, Var wv, Var bv, int kh, int kw) {
  const Shape4 xs = value(xv).shape(), ws = value(wv).shape();
  require(ws.c == xs.c && ws.h == kh && ws.w == kw,
          "conv kernel " + ws.str() + " does not fit input " + xs.str());
  require(value(bv).size() == static_cast<std::size_t>(ws.n), "conv bias needs " + std::to_string(ws.n) + " values");
  const int co = ws.n, ci = xs.c, h = xs.h, w = xs.w;
  const Eigen::Index K = static_cast<Eigen::Index>(ci) * kh * kw;
  const Eigen::Index P = static_cast<Eigen::Index>(h) * w;

  Array out(Shape4{xs.n, co, h, w});
  AlignedVector<T> cols(static_cast<std::size_t>(K * P));
  {
    const Array& x = value(xv);
    Eigen::Map<const MatR<T>> W(value(wv).data(), co, K);
    const T* bias = value(bv).data();
    for (int s = 0; s < xs.n; ++s) {
      im2col(x.data() + s * xs.per_sample(), ci, h, w, kh, kw, cols.data());
      Eigen::Map<const MatR<T>> C(cols.data(), K, P);
      Eigen::Map<MatR<T>> O(out.data() + s * out.shape().per_sample(), co, P);
      O.noalias() = W * C;
      for (int o = 0; o < co; ++o) O.row(o).array() += bias[o];
    }
  }
  Var y = push(std::move(out), {xv.id, wv.id, bv.id});
  nodes_[y.id].backward = [this, xv, wv, bv, y, kh, kw, co, ci, h, w, K, P]() {
    const Array& gy = nodes_[y.id].grad;
    const Array& x = nodes_[xv.id].value;
    const Shape4 xs = x.shape();
    Eigen::Map<const MatR<T>> W(nodes_[wv.id].value.data(), co, K);
    const bool want_x = needs_grad(xv.id), want_w = needs_grad(wv.id), want_b = needs_grad(bv.id);
    AlignedVector<T> cols(static_cast<std::size_t>(K * P)), dcols;
    if (want_x) dcols.resize(cols.size());
    for (int s = 0; s < xs.n; ++s) {
      Eigen::Map<const MatR<T>> G(gy.data() + s * gy.shape().per_sample(), co, P);
      if (want_w) {
        im2col(x.data() + s * xs.per_sample(), ci, h, w, kh, kw, cols.data());
        Eigen::Map<const MatR<T>> C(cols.data(), K, P);
        Eigen::Map<MatR<T>> dW(grad_buffer(wv.id).data(), co, K);
        dW.noalias() += G * C.transpose();
      }
      if (want_b) {
        T* db = grad_buffer(bv.id).data();
        for (int o = 0; o < co; ++o) db[o] += G.row(o).sum();
      }
      if (want_x) {
        Eigen::Map<MatR<T>> DC(dcols.data(), K, P);
        DC.noalias() = W.transpose() * G;
        col2im_add(dcols.data(), ci, h, w, kh, kw, grad_buffer(xv.id).data() + s * xs.per_sample());
      }
    }
  };
  return y;
}

template <typename T>
Var BasicGraph<T>::conv2d(Var x, Var w, Var b) {
  require(value(w).shape().h == 3 && value(w).shape().w == 3, "conv2d needs a 3x3 kernel");
  return conv_generic(x, w, b, 3, 3);
}

template <typename T>
Var BasicGraph<T>::conv1d(Var x, Var w, Var b) {
  require(value(x).shape().h == 1, "conv1d input must have height 1");
  require(value(w).shape().h == 1 && value(w).shape().w == 3, "conv1d needs a (c_out, c_in, 1, 3) kernel");
  return conv_generic(x, w, b, 1, 3);
}

template <typename T>
Var BasicGraph<T>::relu(Var xv) {
  Array out = value(xv);
  for (T& v : out.values()) v = v > T(0) ? v : T(0);
  Var y = push(std::move(out), {xv.id});
  nodes_[y.id].backward = [this, xv, y]() {
    if (!needs_grad(xv.id)) return;
    const Array& x = nodes_[xv.id].value;
    const Array& gy = nodes_[y.id].grad;
    Array& gx = grad_buffer(xv.id);
    for (std::size_t i = 0; i < x.size(); ++i) {
      if (x[i] > T(0)) gx[i] += gy[i];
    }
  };
  return y;
}

template <typename T>
Var BasicGraph<T>::maxpool2(Var xv) {
  const Shape4 xs = value(xv).shape();
  if (xs.h % 2 != 0 || xs.w % 2 != 0) {
    throw Error(ErrorCode::OddSpatialDims, "maxpool2 needs even spatial dims, got " + xs.str());
  }
  const Shape4 os{xs.n, xs.c, xs.h / 2, xs.w / 2};
  Array out(os);
  auto argmax = std::make_shared<std::vector<std::size_t>>(os.count());
  const Array& x = value(xv);
  std::size_t k = 0;
  for (int n = 0; n < xs.n; ++n) {
    for (int c = 0; c < xs.c; ++c) {
      for (int y = 0; y < os.h; ++y) {
        for (int xx = 0; xx < os.w; ++xx, ++k) {
          std::size_t best = x.offset(n, c, 2 * y, 2 * xx);
          for (std::size_t cand : {x.offset(n, c, 2 * y, 2 * xx + 1), x.offset(n, c, 2 * y + 1, 2 * xx),
                                   x.offset(n, c, 2 * y + 1, 2 * xx + 1)}) {
            if (x[cand] > x[best]) best = cand;
          }
          out[k] = x[best];
          (*argmax)[k] = best;
        }
      }
    }
  }
  Var y = push(std::move(out), {xv.id});
  nodes_[y.id].backward = [this, xv, y, argmax]() {
    if (!needs_grad(xv.id)) return;
    const Array& gy = nodes_[y.id].grad;
    Array& gx = grad_buffer(xv.id);
    for (std::size_t i = 0; i < gy.size(); ++i) gx[(*argmax)[i]] += gy[i];
  };
  return y;
}

template <typename T>
Var BasicGraph<T>::upsample2(Var xv) {
  const Shape4 xs = value(xv).shape();
  const Shape4 os{xs.n, xs.c, xs.h * 2, xs.w * 2};
  Array out(os);
  const Array& x = value(xv);
  for (int n = 0; n < os.n; ++n)
    for (int c = 0; c < os.c; ++c)
      for (int y = 0; y < os.h; ++y)
        for (int xx = 0; xx < os.w; ++xx) out.at(n, c, y, xx) = x.at(n, c, y / 2, xx / 2);
  Var y = push(std::move(out), {xv.id});
  nodes_[y.id].backward = [this, xv, y]() {
    if (!needs_grad(xv.id)) return;
    const Array& gy = nodes_[y.id].grad;
    Array& gx = grad_buffer(xv.id);
    const Shape4 os = gy.shape();
    for (int n = 0; n < os.n; ++n)
      for (int c = 0; c < os.c; ++c)
        for (int y2 = 0; y2 < os.h; ++y2)
          for (int x2 = 0; x2 < os.w; ++x2) gx.at(n, c, y2 / 2, x2 / 2) += gy.at(n, c, y2, x2);
  };
  return y;
}

template <typename T>
Var BasicGraph<T>::concat_channels(std::span<const Var> xs) {
  require(!xs.empty(), "concat_channels needs at least one input");
  const Shape4 first = value(xs[0]).shape();
  int channels = 0;
  for (Var v : xs) {
    const Shape4 s = value(v).shape();
    require(s.n == first.n && s.h == first.h && s.w == first.w,
            "concat_channels shape " + s.str() + " incompatible with " + first.str());
    channels += s.c;
  }
  const Shape4 os{first.n, channels, first.h, first.w};
  Array out(os);
  const std::size_t plane = os.plane();
  std::vector<std::size_t> ids;
  for (int n = 0; n < os.n; ++n) {
    T* dst = out.data() + n * os.per_sample();
    for (Var v : xs) {
      const Array& a = value(v);
      const std::size_t len = static_cast<std::size_t>(a.shape().c) * plane;
      std::copy_n(a.data() + n * a.shape().per_sample(), len, dst);
      dst += len;
    }
  }
  for (Var v : xs) ids.push_back(v.id);
  std::vector<Var> parts(xs.begin(), xs.end());
  Var y = push(std::move(out), ids);
  nodes_[y.id].backward = [this, parts, y]() {
    const Array& gy = nodes_[y.id].grad;
    const Shape4 os = gy.shape();
    for (int n = 0; n < os.n; ++n) {
      const T* src = gy.data() + n * os.per_sample();
      for (Var v : parts) {
        const Shape4 s = nodes_[v.id].value.shape();
        const std::size_t len = static_cast<std::size_t>(s.c) * os.plane();
        if (needs_grad(v.id)) {
          T* dst = grad_buffer(v.id).data() + n * s.per_sample();
          for (std::size_t i = 0; i < len; ++i) dst[i] += src[i];
        }
        src += len;
      }
    }
  };
  return y;
}

template <typename T>
Var BasicGraph<T>::band_gap(Var xv, int bands) {
  const Shape4 xs = value(xv).shape();
  require(xs.c == 1, "band_gap expects a single-channel image, got " + xs.str());
  if (bands < 1 || xs.h < bands) {
    throw Error(ErrorCode::ImageTooSmall,
                "band_gap needs height >= " + std::to_string(bands) + ", got " + std::to_string(xs.h));
  }
  Array out(Shape4{xs.n, bands, 1, 1});
  const Array& x = value(xv);
  for (int n = 0; n < xs.n; ++n) {
    for (int k = 0; k < bands; ++k) {
      const int r0 = k * xs.h / bands, r1 = (k + 1) * xs.h / bands;
      double sum = 0.0;
      for (int r = r0; r < r1; ++r)
        for (int c = 0; c < xs.w; ++c) sum += x.at(n, 0, r, c);
      out.at(n, k, 0, 0) = static_cast<T>(sum / (static_cast<double>(r1 - r0) * xs.w));
    }
  }
  Var y = push(std::move(out), {xv.id});
  nodes_[y.id].backward = [this, xv, y, bands]() {
    if (!needs_grad(xv.id)) return;
    const Array& gy = nodes_[y.id].grad;
    Array& gx = grad_buffer(xv.id);
    const Shape4 xs = gx.shape();
    for (int n = 0; n < xs.n; ++n) {
      for (int k = 0; k < bands; ++k) {
        const int r0 = k * xs.h / bands, r1 = (k + 1) * xs.h / bands;
        const T g = gy.at(n, k, 0, 0) / static_cast<T>((r1 - r0) * xs.w);
        for (int r = r0; r < r1; ++r)
          for (int c = 0; c < xs.w; ++c) gx.at(n, 0, r, c) += g;
      }
    }
  };
  return y;
}

template <typename T>
Var BasicGraph<T>::dense(Var xv, Var wv, Var bv) {
  const Shape4 xs = value(xv).shape(), ws = value(wv).shape();
  const auto in = static_cast<Eigen::Index>(xs.per_sample());
  require(ws.c == in && ws.h == 1 && ws.w == 1,
          "dense weight " + ws.str() + " does not fit " + std::to_string(in) + " inputs");
  require(value(bv).size() == static_cast<std::size_t>(ws.n), "dense bias needs " + std::to_string(ws.n) + " values");
  const Eigen::Index out_n = ws.n;
  Array out(Shape4{xs.n, ws.n, 1, 1});
  {
    Eigen::Map<const MatR<T>> X(value(xv).data(), xs.n, in);
    Eigen::Map<const MatR<T>> W(value(wv).data(), out_n, in);
    Eigen::Map<MatR<T>> Y(out.data(), xs.n, out_n);
    Y.noalias() = X * W.transpose();
    const T* b = value(bv).data();
    for (int s = 0; s < xs.n; ++s)
      for (Eigen::Index o = 0; o < out_n; ++o) Y(s, o) += b[o];
  }
  Var y = push(std::move(out), {xv.id, wv.id, bv.id});
  nodes_[y.id].backward = [this, xv, wv, bv, y, in, out_n]() {
    const int n = nodes_[xv.id].value.shape().n;
    Eigen::Map<const MatR<T>> G(nodes_[y.id].grad.data(), n, out_n);
    if (needs_grad(wv.id)) {
      Eigen::Map<const MatR<T>> X(nodes_[xv.id].value.data(), n, in);
      Eigen::Map<MatR<T>> dW(grad_buffer(wv.id).data(), out_n, in);
      dW.noalias() += G.transpose() * X;
    }
    if (needs_grad(bv.id)) {
      T* db = grad_buffer(bv.id).data();
      for (Eigen::Index o = 0; o < out_n; ++o) db[o] += G.col(o).sum();
    }
    if (needs_grad(xv.id)) {
      Eigen::Map<const MatR<T>> W(nodes_[wv.id].value.data(), out_n, in);
      Eigen::Map<MatR<T>> dX(grad_buffer(xv.id).data(), n, in);
      dX.noalias() += G * W;
    }
  };
  return y;
}

template <typename T>
Var BasicGraph<T>::reshape(Var xv, Shape4 shape) {
  require(shape.count() == value(xv).size(), "reshape " + value(xv).shape().str() + " -> " + shape.str());
  const Array& x = value(xv);
  Array out(shape, std::vector<T>(x.values().begin(), x.values().end()));
  Var y = push(std::move(out), {xv.id});
  nodes_[y.id].backward = [this, xv, y]() {
    if (!needs_grad(xv.id)) return;
    const Array& gy = nodes_[y.id].grad;
    Array& gx = grad_buffer(xv.id);
    for (std::size_t i = 0; i < gy.size(); ++i) gx[i] += gy[i];
  };
  return y;
}

template <typename T>
Var BasicGraph<T>::slice(Var xv, std::size_t offset, Shape4 shape) {
  const std::size_t len = shape.count();
  require(offset + len <= value(xv).size(), "slice past the end of " + value(xv).shape().str());
  const T* src = value(xv).data() + offset;
  Array out(shape, std::vector<T>(src, src + len));
  Var y = push(std::move(out), {xv.id});
  nodes_[y.id].backward = [this, xv, y, offset]() {
    if (!needs_grad(xv.id)) return;
    const Array& gy = nodes_[y.id].grad;
    Array& gx = grad_buffer(xv.id);
    for (std::size_t i = 0; i < gy.size(); ++i) gx[offset + i] += gy[i];
  };
  return y;
}

template <typename T>
Var BasicGraph<T>::mse_loss(Var pred, Var target) {
  const Array& p = value(pred);
  const Array& t = value(target);
  require(p.shape() == t.shape(), "mse_loss shapes " + p.shape().str() + " vs " + t.shape().str());
  double sum = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double d = static_cast<double>(p[i]) - static_cast<double>(t[i]);
    sum += d * d;
  }
  const double count = static_cast<double>(p.size());
  Var y = push(Array(Shape4{1, 1, 1, 1}, static_cast<T>(sum / count)), {pred.id, target.id});
  nodes_[y.id].backward = [this, pred, target, y, count]() {
    const T g = nodes_[y.id].grad[0];
    const Array& p = nodes_[pred.id].value;
    const Array& t = nodes_[target.id].value;
    const T scale = static_cast<T>(2.0 / count);
    if (needs_grad(pred.id)) {
      Array& gp = grad_buffer(pred.id);
      for (std::size_t i = 0; i < p.size(); ++i) gp[i] += g * scale * (p[i] - t[i]);
    }
    if (needs_grad(target.id)) {
      Array& gt = grad_buffer(target.id);
      for (std::size_t i = 0; i < p.size(); ++i) gt[i] -= g * scale * (p[i] - t[i]);
    }
  };
  return y;
}

template <typename T>
Var BasicGraph<T>::masked_mse_loss(Var pred, Var target, const Array& mask) {
  const Array& p = value(pred);
  const Array& t = value(target);
  const Shape4 s = p.shape();
  require(s == t.shape(), "masked_mse_loss shapes " + s.str() + " vs " + t.shape().str());
  require(mask.shape() == Shape4{s.n, 1, s.h, s.w}, "mask shape " + mask.shape().str() + " does not fit " + s.str());
  double sum = 0.0;
  std::size_t voxels = 0;
  for (int n = 0; n < s.n; ++n) {
    for (std::size_t i = 0; i < s.plane(); ++i) {
      if (mask[n * s.plane() + i] == T(0)) continue;
      ++voxels;
      for (int c = 0; c < s.c; ++c) {
        const std::size_t k = (static_cast<std::size_t>(n) * s.c + c) * s.plane() + i;
        const double d = static_cast<double>(p[k]) - static_cast<double>(t[k]);
        sum += d * d;
      }
    }
  }
  if (voxels == 0) throw Error(ErrorCode::EmptyMask, "loss mask selects no voxels");
  const double count = static_cast<double>(voxels) * s.c;
  Var y = push(Array(Shape4{1, 1, 1, 1}, static_cast<T>(sum / count)), {pred.id, target.id});
  nodes_[y.id].backward = [this, pred, target, y, count, mask]() {
    const T g = nodes_[y.id].grad[0] * static_cast<T>(2.0 / count);
    const Array& p = nodes_[pred.id].value;
    const Array& t = nodes_[target.id].value;
    const Shape4 s = p.shape();
    const bool want_p = needs_grad(pred.id), want_t = needs_grad(target.id);
    for (int n = 0; n < s.n; ++n) {
      for (std::size_t i = 0; i < s.plane(); ++i) {
        if (mask[n * s.plane() + i] == T(0)) continue;
        for (int c = 0; c < s.c; ++c) {
          const std::size_t k = (static_cast<std::size_t>(n) * s.c + c) * s.plane() + i;
          if (want_p) grad_buffer(pred.id)[k] += g * (p[k] - t[k]);
          if (want_t) grad_buffer(target.id)[k] -= g * (p[k] - t[k]);
        }
      }
    }
  };
  return y;
}

template <typename T>
typename BasicGraph<T>::Array BasicGraph<T>::grad(Var v) const {
  const Node& n = nodes_.at(v.id);
  return n.has_grad ? n.grad : Array(n.value.shape());
}

template <typename T>
void BasicGraph<T>::backward(Var loss) {
  if (nodes_.at(loss.id).value.size() != 1) {
    throw Error(ErrorCode::ShapeMismatch, "backward needs a scalar loss, got " + nodes_[loss.id].value.shape().str());
  }
  if (!nodes_[loss.id].requires_grad) {
    throw Error(ErrorCode::DisconnectedLoss, "no parameter or differentiable input reaches the loss");
  }
  std::vector<bool> reachable(nodes_.size(), false);
  reachable[loss.id] = true;
  for (std::size_t id = loss.id + 1; id-- > 0;) {
    if (!reachable[id]) continue;
    for (std::size_t in : nodes_[id].inputs) reachable[in] = true;
  }
  for (Node& n : nodes_) {
    n.has_grad = false;
    n.grad = Array();
  }
  grad_buffer(loss.id)[0] = T(1);
  for (std::size_t id = loss.id + 1; id-- > 0;) {
    Node& n = nodes_[id];
    if (!reachable[id] || !n.requires_grad || !n.has_grad || !n.backward) continue;
    n.backward();
  }
}

template <typename T>
Gradients<T> BasicGraph<T>::param_gradients() const {
  Gradients<T> out = params_ ? params_->zero_like() : Gradients<T>{};
  accumulate_param_gradients(out);
  return out;
}

template <typename T>
void BasicGraph<T>::accumulate_param_gradients(Gradients<T>& into) const {
  for (const Node& n : nodes_) {
    if (!n.param_index || !n.has_grad) continue;
    Array& dst = into.at(*n.param_index);
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += n.grad[i];
  }
}

template class BasicGraph<float>;
template class BasicGraph<double>;

}  // namespace flexdti::nn
