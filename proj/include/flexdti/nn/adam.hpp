#pragma once

#include <cstdint>
#include <vector>

#include "flexdti/nn/param_store.hpp"

namespace flexdti::nn {

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// First and second moments per parameter element plus the step count.
template <typename T>
struct AdamState {
  std::vector<std::vector<T>> m;
  std::vector<std::vector<T>> v;
  std::int64_t step = 0;
};

/// One bias-corrected Adam update of every parameter in `params`.
template <typename T>
void adam_step(BasicParamStore<T>& params, const Gradients<T>& grads, AdamState<T>& state, double lr,
               const AdamConfig& cfg = {});

extern template void adam_step<float>(BasicParamStore<float>&, const Gradients<float>&, AdamState<float>&, double,
                                      const AdamConfig&);
extern template void adam_step<double>(BasicParamStore<double>&, const Gradients<double>&, AdamState<double>&,
                                       double, const AdamConfig&);

}  // namespace flexdti::nn
