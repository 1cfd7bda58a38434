#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <optional>

#include "flexdti/error.hpp"
#include "flexdti/flexdti_net.hpp"
#include "flexdti/io_formats.hpp"
#include "flexdti/lls_fit.hpp"
#include "flexdti/metrics.hpp"
#include "flexdti/phantom.hpp"
#include "flexdti/scheme.hpp"
#include "flexdti/tensor_core.hpp"

namespace py = pybind11;
using namespace flexdti;

namespace {

using DArray = py::array_t<double, py::array::c_style | py::array::forcecast>;
using MaskArray = py::array_t<std::uint8_t, py::array::c_style | py::array::forcecast>;

std::vector<UnitDirection> directions_from(const DArray& a) {
  if (a.ndim() != 2 || a.shape(1) != 3) throw py::value_error("directions must have shape (n, 3)");
  std::vector<UnitDirection> out;
  auto r = a.unchecked<2>();
  for (py::ssize_t i = 0; i < a.shape(0); ++i) out.push_back(UnitDirection::normalize(r(i, 0), r(i, 1), r(i, 2)));
  return out;
}

DArray directions_to(const std::vector<UnitDirection>& dirs) {
  DArray a({static_cast<py::ssize_t>(dirs.size()), py::ssize_t{3}});
  auto w = a.mutable_unchecked<2>();
  for (std::size_t i = 0; i < dirs.size(); ++i) {
    for (int c = 0; c < 3; ++c) w(static_cast<py::ssize_t>(i), c) = dirs[i][c];
  }
  return a;
}

TensorField field_from(const DArray& tensors, const MaskArray& mask) {
  if (tensors.ndim() != 3 || tensors.shape(2) != 6) throw py::value_error("tensors must have shape (ny, nx, 6)");
  const int ny = static_cast<int>(tensors.shape(0)), nx = static_cast<int>(tensors.shape(1));
  if (mask.ndim() != 2 || mask.shape(0) != ny || mask.shape(1) != nx) throw py::value_error("mask must be (ny, nx)");
  TensorField f = TensorField::zeros(nx, ny);
  const double* t = tensors.data();
  for (std::size_t i = 0; i < f.size(); ++i) {
    f.tensors[i] = DiffusionTensor6::from_array({t[6 * i], t[6 * i + 1], t[6 * i + 2], t[6 * i + 3], t[6 * i + 4], t[6 * i + 5]});
    f.mask[i] = mask.data()[i] != 0;
  }
  return f;
}

DArray tensors_to(const TensorField& f) {
  DArray a({static_cast<py::ssize_t>(f.ny), static_cast<py::ssize_t>(f.nx), py::ssize_t{6}});
  double* d = a.mutable_data();
  for (std::size_t i = 0; i < f.size(); ++i) {
    const auto t = f.tensors[i].to_array();
    std::copy(t.begin(), t.end(), d + 6 * i);
  }
  return a;
}

MaskArray mask_to(const Mask& m, int nx, int ny) {
  MaskArray a({static_cast<py::ssize_t>(ny), static_cast<py::ssize_t>(nx)});
  std::copy(m.begin(), m.end(), a.mutable_data());
  return a;
}

DArray image_to(const std::vector<double>& v, int nx, int ny) {
  DArray a({static_cast<py::ssize_t>(ny), static_cast<py::ssize_t>(nx)});
  std::copy(v.begin(), v.end(), a.mutable_data());
  return a;
}

DwiVolume volume_from(const DArray& b0, const DArray& dwi, const DArray& dirs, double b, const MaskArray& mask) {
  if (b0.ndim() != 2 || dwi.ndim() != 3) throw py::value_error("b0 must be (ny, nx) and dwi (n, ny, nx)");
  DwiVolume v;
  v.ny = static_cast<int>(b0.shape(0));
  v.nx = static_cast<int>(b0.shape(1));
  if (dwi.shape(1) != v.ny || dwi.shape(2) != v.nx || mask.ndim() != 2 || mask.shape(0) != v.ny ||
      mask.shape(1) != v.nx) {
    throw py::value_error("b0, dwi and mask sizes differ");
  }
  v.scheme.b = BValue(b);
  v.scheme.directions = directions_from(dirs);
  if (static_cast<py::ssize_t>(v.scheme.size()) != dwi.shape(0)) throw py::value_error("one direction per dwi plane");
  const std::size_t n = v.size();
  v.b0.emplace_back(b0.data(), b0.data() + n);
  for (py::ssize_t k = 0; k < dwi.shape(0); ++k) v.dwi.emplace_back(dwi.data() + k * n, dwi.data() + (k + 1) * n);
  v.mask.assign(mask.data(), mask.data() + n);
  return v;
}

py::dict maps_to(const DtiMaps& m) {
  py::dict d;
  for (const char* name : {"fa", "md", "ad", "rd"}) d[name] = image_to(m.by_name(name), m.nx, m.ny);
  DArray dec({static_cast<py::ssize_t>(m.ny), static_cast<py::ssize_t>(m.nx), py::ssize_t{3}});
  double* p = dec.mutable_data();
  for (std::size_t i = 0; i < m.dec.size(); ++i) {
    p[3 * i] = m.dec[i].r;
    p[3 * i + 1] = m.dec[i].g;
    p[3 * i + 2] = m.dec[i].b;
  }
  d["dec"] = dec;
  return d;
}

std::span<const double> flat(const DArray& a) { return {a.data(), static_cast<std::size_t>(a.size())}; }
std::span<const std::uint8_t> flat(const MaskArray& a) { return {a.data(), static_cast<std::size_t>(a.size())}; }

void check_same(const DArray& a, const DArray& b, const MaskArray& m) {
  if (a.size() != b.size() || a.size() != m.size()) throw py::value_error("est, ref and mask must have equal sizes");
}

}  // namespace

PYBIND11_MODULE(_flexdti, m) {
  m.doc() = "DTI reconstruction by LLS and a dynamic-convolution U-Net on synthetic phantoms";

  py::register_exception<Error>(m, "FlexDtiError", PyExc_RuntimeError);

  m.def("generate_uniform", [](int n, std::uint64_t seed) { return directions_to(generate_uniform(n, seed).directions); },
        py::arg("n"), py::arg("seed") = 0, "n antipodally uniform unit directions as an (n, 3) array");
  m.def("condition_number", [](const DArray& dirs) { return condition_number(directions_from(dirs)); },
        py::arg("directions"));
  m.def("min_line_angle_deg", [](const DArray& dirs) { return min_line_angle_deg(directions_from(dirs)); },
        py::arg("directions"));

  m.def(
      "eig_sym3",
      [](const std::array<double, 6>& t) {
        const EigenSystem e = eig_sym3(DiffusionTensor6::from_array(t));
        std::vector<std::array<double, 3>> vecs;
        for (const auto& v : e.vectors) vecs.push_back(v.vec());
        return py::make_tuple(e.values, vecs);
      },
      py::arg("tensor"), "Eigenvalues (descending) and eigenvectors of (xx, yy, zz, xy, xz, yz)");

  m.def(
      "make_phantom",
      [](int nx, int ny, const std::string& layout, std::uint64_t seed) {
        PhantomSpec spec;
        spec.nx = nx;
        spec.ny = ny;
        spec.layout = layout_from_string(layout);
        spec.seed = seed;
        const TensorField f = make_tensor_field(spec);
        return py::make_tuple(tensors_to(f), mask_to(f.mask, nx, ny));
      },
      py::arg("nx") = 64, py::arg("ny") = 64, py::arg("layout") = "mixed", py::arg("seed") = 0,
      "Ground-truth tensors (ny, nx, 6) in mm^2/s and mask (ny, nx)");

  m.def(
      "synthesize",
      [](const DArray& tensors, const MaskArray& mask, const DArray& dirs, double b, double s0, double sigma,
         std::uint64_t seed) {
        GradientScheme s;
        s.b = BValue(b);
        s.directions = directions_from(dirs);
        const DwiVolume v = synthesize_dwi(field_from(tensors, mask), s, NoiseModel{s0, sigma}, seed);
        DArray dwi({static_cast<py::ssize_t>(v.dwi.size()), static_cast<py::ssize_t>(v.ny), static_cast<py::ssize_t>(v.nx)});
        for (std::size_t k = 0; k < v.dwi.size(); ++k) std::copy(v.dwi[k].begin(), v.dwi[k].end(), dwi.mutable_data() + k * v.size());
        return py::make_tuple(image_to(v.s0_image(), v.nx, v.ny), dwi);
      },
      py::arg("tensors"), py::arg("mask"), py::arg("directions"), py::arg("b") = 1000.0, py::arg("s0") = 1000.0,
      py::arg("sigma") = 0.0, py::arg("seed") = 0, "Returns (b0, dwi) with dwi shaped (n, ny, nx)");

  m.def(
      "fit_lls",
      [](const DArray& b0, const DArray& dwi, const DArray& dirs, double b, const MaskArray& mask,
         std::optional<std::vector<int>> subset) {
        const DwiVolume v = volume_from(b0, dwi, dirs, b, mask);
        const FitReport r = subset ? fit_volume(v, std::span<const int>(*subset)) : fit_volume(v);
        return tensors_to(r.fitted);
      },
      py::arg("b0"), py::arg("dwi"), py::arg("directions"), py::arg("b"), py::arg("mask"),
      py::arg("subset") = std::nullopt);

  m.def("compute_maps", [](const DArray& tensors, const MaskArray& mask) { return maps_to(compute_maps(field_from(tensors, mask))); },
        py::arg("tensors"), py::arg("mask"), "FA, MD, AD, RD and DEC maps");

  m.def("psnr", [](const DArray& e, const DArray& r, const MaskArray& mk) { check_same(e, r, mk); return psnr(flat(e), flat(r), flat(mk)); });
  m.def("ssim", [](const DArray& e, const DArray& r, const MaskArray& mk) { check_same(e, r, mk); return ssim(flat(e), flat(r), flat(mk)); });
  m.def("nrmse", [](const DArray& e, const DArray& r, const MaskArray& mk) { check_same(e, r, mk); return nrmse(flat(e), flat(r), flat(mk)); });

  m.def(
      "read_volume",
      [](const std::filesystem::path& path) {
        const VolumeFile v = read_volume(path);
        py::array_t<float> data({static_cast<py::ssize_t>(v.plane_count()), static_cast<py::ssize_t>(v.slices),
                                 static_cast<py::ssize_t>(v.height), static_cast<py::ssize_t>(v.width)});
        std::copy(v.data.begin(), v.data.end(), data.mutable_data());
        py::list groups;
        for (const auto& g : v.groups) groups.append(py::make_tuple(g.role, g.count));
        return py::make_tuple(data, groups);
      },
      py::arg("path"), "Returns (data[planes, slices, h, w], [(role, count), ...])");
  m.def(
      "write_volume",
      [](const std::filesystem::path& path, py::array_t<float, py::array::c_style | py::array::forcecast> data,
         const std::vector<std::pair<std::string, int>>& groups) {
        if (data.ndim() != 4) throw py::value_error("data must be (planes, slices, h, w)");
        VolumeFile v;
        v.slices = static_cast<int>(data.shape(1));
        v.height = static_cast<int>(data.shape(2));
        v.width = static_cast<int>(data.shape(3));
        for (const auto& [role, count] : groups) v.groups.push_back({role, count});
        v.data.assign(data.data(), data.data() + data.size());
        write_volume(path, v);
      },
      py::arg("path"), py::arg("data"), py::arg("groups"));

  py::class_<Checkpoint>(m, "Checkpoint")
      .def_property_readonly("epoch", [](const Checkpoint& c) { return c.epoch; })
      .def_property_readonly("train_loss", [](const Checkpoint& c) { return c.train_loss; })
      .def_property_readonly("val_loss", [](const Checkpoint& c) { return c.val_loss; })
      .def_property_readonly("n_max", [](const Checkpoint& c) { return c.config.n_max; })
      .def_property_readonly("parameter_count", [](const Checkpoint& c) { return c.params.total_count(); })
      .def("save", [](const Checkpoint& c, const std::filesystem::path& p) { save_checkpoint(p, c); });
  m.def("load_checkpoint", [](const std::filesystem::path& p) { return load_checkpoint(p); }, py::arg("path"));

  m.def(
      "train_on_phantoms",
      [](const std::vector<std::pair<DArray, MaskArray>>& truths, const DArray& dirs, int train_pool, double sigma,
         int epochs, int batch, int width, int depth, int n_max, std::uint64_t seed) {
        Dataset ds;
        ds.scheme.directions = directions_from(dirs);
        ds.noise.sigma = sigma;
        ds.noise_seed = seed;
        for (int i = 0; i < train_pool; ++i) ds.pool.push_back(i);
        for (const auto& [t, mk] : truths) ds.slices.push_back({field_from(t, mk), std::nullopt});
        NetConfig cfg;
        cfg.epochs = epochs;
        cfg.batch = batch;
        cfg.width = width;
        cfg.depth = depth;
        cfg.n_max = n_max;
        cfg.seed = seed;
        py::gil_scoped_release release;
        return train(ds, nullptr, cfg);
      },
      py::arg("truths"), py::arg("directions"), py::arg("train_pool"), py::arg("sigma") = 50.0, py::arg("epochs") = 1,
      py::arg("batch") = 4, py::arg("width") = 16, py::arg("depth") = 3, py::arg("n_max") = 20, py::arg("seed") = 0,
      "Train on (tensors, mask) ground-truth slices with signals synthesised per draw");

  m.def(
      "infer",
      [](const Checkpoint& ck, const DArray& b0, const DArray& dwi, const DArray& dirs, double b, const MaskArray& mask,
         const std::vector<int>& subset) { return tensors_to(infer(volume_from(b0, dwi, dirs, b, mask), subset, ck)); },
      py::arg("checkpoint"), py::arg("b0"), py::arg("dwi"), py::arg("directions"), py::arg("b"), py::arg("mask"),
      py::arg("subset"), "Network tensor estimate (ny, nx, 6) from the selected directions");
}
