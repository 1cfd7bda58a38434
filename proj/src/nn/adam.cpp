#include "flexdti/nn/adam.hpp"

#include <cmath>

#include "flexdti/error.hpp"

namespace flexdti::nn {

template <typename T>
void adam_step(BasicParamStore<T>& params, const Gradients<T>& grads, AdamState<T>& state, double lr,
               const AdamConfig& cfg) {
  if (grads.size() != params.size()) throw Error(ErrorCode::ShapeMismatch, "gradient count differs from parameters");
  if (state.m.size() != params.size()) {
    state.m.assign(params.size(), {});
    state.v.assign(params.size(), {});
    for (std::size_t i = 0; i < params.size(); ++i) {
      state.m[i].assign(params.value(i).size(), T(0));
      state.v[i].assign(params.value(i).size(), T(0));
    }
    state.step = 0;
  }
  ++state.step;
  const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.step));
  const T b1 = static_cast<T>(cfg.beta1), b2 = static_cast<T>(cfg.beta2);
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (!(grads[i].shape() == params.shape(i))) {
      throw Error(ErrorCode::ShapeMismatch, "gradient shape differs for '" + params.name(i) + "'");
    }
    auto p = params.mutable_values(i);
    auto& m = state.m[i];
    auto& v = state.v[i];
    for (std::size_t k = 0; k < p.size(); ++k) {
      const T g = grads[i][k];
      m[k] = b1 * m[k] + (T(1) - b1) * g;
      v[k] = b2 * v[k] + (T(1) - b2) * g * g;
      const double mhat = static_cast<double>(m[k]) / c1;
      const double vhat = static_cast<double>(v[k]) / c2;
      p[k] -= static_cast<T>(lr * mhat / (std::sqrt(vhat) + cfg.eps));
    }
  }
}

template void adam_step<float>(BasicParamStore<float>&, const Gradients<float>&, AdamState<float>&, double,
                               const AdamConfig&);
template void adam_step<double>(BasicParamStore<double>&, const Gradients<double>&, AdamState<double>&, double,
                                const AdamConfig&);

}  // namespace flexdti::nn
