#include "flexdti/nn/param_store.hpp"

#include "flexdti/error.hpp"

namespace flexdti::nn {

template <typename T>
std::size_t BasicParamStore<T>::add(std::string name, Shape4 shape, T fill) {
  if (index_.count(name)) throw Error(ErrorCode::DuplicateName, "parameter '" + name + "' already exists");
  const std::size_t i = values_.size();
  index_.emplace(name, i);
  names_.push_back(std::move(name));
  values_.emplace_back(shape, fill);
  return i;
}

template <typename T>
std::size_t BasicParamStore<T>::index_of(std::string_view name) const {
  const auto it = index_.find(name);
  if (it == index_.end()) throw Error(ErrorCode::UnknownName, "no parameter named '" + std::string(name) + "'");
  return it->second;
}

template <typename T>
void BasicParamStore<T>::assign(std::size_t i, const BasicArray4<T>& v) {
  if (!(values_.at(i).shape() == v.shape())) {
    throw Error(ErrorCode::ShapeMismatch, "parameter '" + names_[i] + "' has shape " + values_[i].shape().str() +
                                              ", got " + v.shape().str());
  }
  values_[i] = v;
}

template <typename T>
std::size_t BasicParamStore<T>::total_count() const noexcept {
  std::size_t n = 0;
  for (const auto& v : values_) n += v.size();
  return n;
}

template <typename T>
std::vector<BasicArray4<T>> BasicParamStore<T>::zero_like() const {
  std::vector<BasicArray4<T>> out;
  out.reserve(values_.size());
  for (const auto& v : values_) out.emplace_back(v.shape());
  return out;
}

template class BasicParamStore<float>;
template class BasicParamStore<double>;

}  // namespace flexdti::nn
