#include "flexdti/tensor_field.hpp"

#include <algorithm>
#include <string>

#include "flexdti/error.hpp"

namespace flexdti {

TensorField TensorField::zeros(int nx, int ny) {
  if (nx <= 0 || ny <= 0) throw Error(ErrorCode::InvalidArgument, "field dims must be positive");
  TensorField f;
  f.nx = nx;
  f.ny = ny;
  f.tensors.assign(f.size(), DiffusionTensor6{});
  f.mask.assign(f.size(), 0);
  return f;
}

std::size_t TensorField::masked_count() const noexcept {
  return static_cast<std::size_t>(std::count_if(mask.begin(), mask.end(), [](std::uint8_t m) { return m != 0; }));
}

const std::vector<double>& DtiMaps::by_name(std::string_view name) const {
  if (name == "fa") return fa;
  if (name == "md") return md;
  if (name == "ad") return ad;
  if (name == "rd") return rd;
  throw Error(ErrorCode::UnknownName, "no scalar map named '" + std::string(name) + "'");
}

DtiMaps compute_maps(const TensorField& field) {
  DtiMaps m;
  m.nx = field.nx;
  m.ny = field.ny;
  m.mask = field.mask;
  const std::size_t n = field.size();
  m.fa.assign(n, 0.0);
  m.md.assign(n, 0.0);
  m.ad.assign(n, 0.0);
  m.rd.assign(n, 0.0);
  m.dec.assign(n, Rgb{});
  for (std::size_t i = 0; i < n; ++i) {
    if (!field.mask[i]) continue;
    const EigenSystem e = eig_sym3(field.tensors[i]);
    const DtiScalars s = derive_maps(e);
    m.fa[i] = s.fa;
    m.md[i] = s.md;
    m.ad[i] = s.ad;
    m.rd[i] = s.rd;
    m.dec[i] = dec_color(e, s.fa);
  }
  return m;
}

}  // namespace flexdti
