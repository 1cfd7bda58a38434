#pragma once

#include <cstddef>
#include <cstdint>
#include <string_view>
#include <vector>

#include "flexdti/tensor_core.hpp"

namespace flexdti {

using Mask = std::vector<std::uint8_t>;

/// One 2-D slice of tensors, row-major (index = y * nx + x).
struct TensorField {
  int nx = 0;
  int ny = 0;
  std::vector<DiffusionTensor6> tensors;
  Mask mask;

  static TensorField zeros(int nx, int ny);
  std::size_t size() const noexcept { return static_cast<std::size_t>(nx) * static_cast<std::size_t>(ny); }
  std::size_t index(int x, int y) const noexcept { return static_cast<std::size_t>(y) * nx + x; }
  std::size_t masked_count() const noexcept;
};

/// Per-voxel scalar maps for one slice. Masked-out voxels are zero.
struct DtiMaps {
  int nx = 0;
  int ny = 0;
  std::vector<double> fa, md, ad, rd;
  std::vector<Rgb> dec;
  Mask mask;

  const std::vector<double>& by_name(std::string_view name) const;
};

DtiMaps compute_maps(const TensorField& field);

}  // namespace flexdti
