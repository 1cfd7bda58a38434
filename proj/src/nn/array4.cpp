#include "flexdti/nn/array4.hpp"

#include <algorithm>
#include <cmath>

#include "flexdti/error.hpp"

namespace flexdti::nn {

std::string Shape4::str() const {
  return "(" + std::to_string(n) + "," + std::to_string(c) + "," + std::to_string(h) + "," + std::to_string(w) + ")";
}

template <typename T>
BasicArray4<T>::BasicArray4(Shape4 shape, T fill) : shape_(shape), data_(shape.count(), fill) {
  if (shape.n < 0 || shape.c < 0 || shape.h < 0 || shape.w < 0) {
    throw Error(ErrorCode::ShapeMismatch, "negative extent in shape " + shape.str());
  }
}

template <typename T>
BasicArray4<T>::BasicArray4(Shape4 shape, std::vector<T> data) : shape_(shape), data_(data.begin(), data.end()) {
  if (data_.size() != shape.count()) {
    throw Error(ErrorCode::ShapeMismatch,
                "shape " + shape.str() + " needs " + std::to_string(shape.count()) + " values, got " +
                    std::to_string(data_.size()));
  }
}

template <typename T>
void BasicArray4<T>::fill(T v) noexcept {
  std::fill(data_.begin(), data_.end(), v);
}

template <typename T>
bool BasicArray4<T>::all_finite() const noexcept {
  return std::all_of(data_.begin(), data_.end(), [](T v) { return std::isfinite(v); });
}

template class BasicArray4<float>;
template class BasicArray4<double>;

}  // namespace flexdti::nn
