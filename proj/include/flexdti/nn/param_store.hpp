#pragma once

#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "flexdti/nn/array4.hpp"

namespace flexdti::nn {

/// Named parameter tensors in insertion order. Shapes are fixed at creation.
template <typename T>
class BasicParamStore {
 public:
  /// Throws DuplicateName.
  std::size_t add(std::string name, Shape4 shape, T fill = T(0));
  /// Throws UnknownName.
  std::size_t index_of(std::string_view name) const;
  bool contains(std::string_view name) const { return index_.find(std::string(name)) != index_.end(); }

  std::size_t size() const noexcept { return values_.size(); }
  const std::string& name(std::size_t i) const { return names_.at(i); }
  const Shape4& shape(std::size_t i) const { return values_.at(i).shape(); }
  const BasicArray4<T>& value(std::size_t i) const { return values_.at(i); }
  const BasicArray4<T>& value(std::string_view name) const { return values_[index_of(name)]; }
  std::span<T> mutable_values(std::size_t i) { return values_.at(i).values(); }
  std::span<T> mutable_values(std::string_view name) { return values_[index_of(name)].values(); }
  /// Replaces the contents of parameter i; throws ShapeMismatch if shapes differ.
  void assign(std::size_t i, const BasicArray4<T>& v);

  std::size_t total_count() const noexcept;
  /// One zero array per parameter, aligned with the store.
  std::vector<BasicArray4<T>> zero_like() const;

  template <typename U>
  BasicParamStore<U> cast() const {
    BasicParamStore<U> out;
    for (std::size_t i = 0; i < values_.size(); ++i) {
      const std::size_t k = out.add(names_[i], values_[i].shape());
      out.assign(k, values_[i].template cast<U>());
    }
    return out;
  }

 private:
  std::vector<std::string> names_;
  std::vector<BasicArray4<T>> values_;
  std::map<std::string, std::size_t, std::less<>> index_;
};

using ParamStore = BasicParamStore<float>;
using ParamStored = BasicParamStore<double>;

template <typename T>
using Gradients = std::vector<BasicArray4<T>>;

extern template class BasicParamStore<float>;
extern template class BasicParamStore<double>;

}  // namespace flexdti::nn
