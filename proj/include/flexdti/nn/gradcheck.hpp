#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

#include "flexdti/nn/graph.hpp"
#include "flexdti/random.hpp"

namespace flexdti::nn {

struct GradCheckReport {
  /// ||analytic - numeric|| / max(||analytic||, ||numeric||) over all checked entries.
  double relative_error = 0.0;
  double max_abs_diff = 0.0;
  std::size_t entries = 0;
};

/// Central-difference check of every parameter gradient produced by `build`,
/// which must add a scalar loss to the graph it is given and return it.
/// With max_entries_per_param > 0 a seeded random subset of each tensor is checked.
template <typename T, typename Build>
GradCheckReport check_gradients(BasicParamStore<T>& params, Build&& build, double step,
                                std::size_t max_entries_per_param = 0, std::uint64_t seed = 0) {
  Gradients<T> analytic;
  {
    BasicGraph<T> g(&params);
    const Var loss = build(g);
    g.backward(loss);
    analytic = g.param_gradients();
  }
  auto loss_at = [&]() {
    BasicGraph<T> g(&params);
    return static_cast<double>(g.value(build(g))[0]);
  };

  Rng rng(seed);
  std::vector<double> a, n;
  for (std::size_t i = 0; i < params.size(); ++i) {
    const std::size_t count = params.value(i).size();
    std::vector<std::size_t> entries(count);
    for (std::size_t k = 0; k < count; ++k) entries[k] = k;
    if (max_entries_per_param > 0 && count > max_entries_per_param) {
      rng.shuffle(entries);
      entries.resize(max_entries_per_param);
      std::sort(entries.begin(), entries.end());
    }
    for (std::size_t k : entries) {
      auto values = params.mutable_values(i);
      const T saved = values[k];
      values[k] = static_cast<T>(saved + step);
      const double plus = loss_at();
      values[k] = static_cast<T>(saved - step);
      const double minus = loss_at();
      values[k] = saved;
      // Use the perturbation actually representable in T.
      const double h2 = static_cast<double>(static_cast<T>(saved + step)) - static_cast<double>(static_cast<T>(saved - step));
      a.push_back(static_cast<double>(analytic[i][k]));
      n.push_back((plus - minus) / h2);
    }
  }

  GradCheckReport r;
  r.entries = a.size();
  double diff2 = 0.0, a2 = 0.0, n2 = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) {
    const double d = a[k] - n[k];
    diff2 += d * d;
    a2 += a[k] * a[k];
    n2 += n[k] * n[k];
    r.max_abs_diff = std::max(r.max_abs_diff, std::abs(d));
  }
  const double scale = std::max({std::sqrt(a2), std::sqrt(n2), 1e-30});
  r.relative_error = std::sqrt(diff2) / scale;
  return r;
}

}  // namespace flexdti::nn
