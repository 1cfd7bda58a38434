#pragma once

#include <cstddef>
#include <new>
#include <span>
#include <string>
#include <vector>

namespace flexdti::nn {

/// (batch, channel, height, width), row-major with width fastest.
struct Shape4 {
  int n = 1, c = 1, h = 1, w = 1;

  std::size_t count() const noexcept {
    return static_cast<std::size_t>(n) * static_cast<std::size_t>(c) * static_cast<std::size_t>(h) *
           static_cast<std::size_t>(w);
  }
  std::size_t per_sample() const noexcept { return count() / static_cast<std::size_t>(n); }
  std::size_t plane() const noexcept { return static_cast<std::size_t>(h) * static_cast<std::size_t>(w); }
  bool operator==(const Shape4&) const = default;
  std::string str() const;
};

/// Cache-line aligned storage. Vectorised kernels peel unaligned heads, which
/// changes summation order, so alignment is fixed to keep results reproducible.
template <typename T>
struct AlignedAllocator {
  using value_type = T;
  static constexpr std::align_val_t kAlign{64};

  AlignedAllocator() noexcept = default;
  template <typename U>
  AlignedAllocator(const AlignedAllocator<U>&) noexcept {}

  T* allocate(std::size_t n) { return static_cast<T*>(::operator new(n * sizeof(T), kAlign)); }
  void deallocate(T* p, std::size_t) noexcept { ::operator delete(p, kAlign); }

  template <typename U>
  bool operator==(const AlignedAllocator<U>&) const noexcept {
    return true;
  }
};

template <typename T>
using AlignedVector = std::vector<T, AlignedAllocator<T>>;

/// Dense 4-D array of T.
template <typename T>
class BasicArray4 {
 public:
  using value_type = T;

  BasicArray4() = default;
  explicit BasicArray4(Shape4 shape, T fill = T(0));
  BasicArray4(Shape4 shape, std::vector<T> data);

  const Shape4& shape() const noexcept { return shape_; }
  std::size_t size() const noexcept { return data_.size(); }
  T* data() noexcept { return data_.data(); }
  const T* data() const noexcept { return data_.data(); }
  std::span<T> values() noexcept { return data_; }
  std::span<const T> values() const noexcept { return data_; }

  std::size_t offset(int n, int c, int h, int w) const noexcept {
    return ((static_cast<std::size_t>(n) * shape_.c + c) * shape_.h + h) * shape_.w + w;
  }
  T& at(int n, int c, int h, int w) noexcept { return data_[offset(n, c, h, w)]; }
  T at(int n, int c, int h, int w) const noexcept { return data_[offset(n, c, h, w)]; }
  T& operator[](std::size_t i) noexcept { return data_[i]; }
  T operator[](std::size_t i) const noexcept { return data_[i]; }

  void fill(T v) noexcept;
  bool all_finite() const noexcept;

  template <typename U>
  BasicArray4<U> cast() const {
    std::vector<U> out(data_.size());
    for (std::size_t i = 0; i < data_.size(); ++i) out[i] = static_cast<U>(data_[i]);
    return BasicArray4<U>(shape_, std::move(out));
  }

 private:
  Shape4 shape_{1, 1, 1, 0};
  AlignedVector<T> data_;
};

using Array4 = BasicArray4<float>;
using Array4d = BasicArray4<double>;

extern template class BasicArray4<float>;
extern template class BasicArray4<double>;

}  // namespace flexdti::nn
