#include "flexdti/io_formats.hpp"

#include <algorithm>
#include <bit>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <optional>
#include <sstream>

#include "flexdti/error.hpp"

namespace flexdti {

namespace {

using nlohmann::json;

void append_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xffu));
}

std::uint32_t read_u32(std::string_view bytes, std::size_t pos) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(bytes[pos + i])) << (8 * i);
  return v;
}

void append_floats(std::string& out, std::span<const float> values) {
  out.reserve(out.size() + values.size() * 4);
  for (float f : values) append_u32(out, std::bit_cast<std::uint32_t>(f));
}

void read_floats(std::string_view bytes, std::size_t pos, std::span<float> out) {
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::bit_cast<float>(read_u32(bytes, pos + 4 * i));
}

// Shared framing: magic, u32 LE length, JSON text. Returns the parsed header and payload offset.
std::pair<json, std::size_t> read_frame(std::string_view bytes, std::string_view magic) {
  if (bytes.size() < magic.size() || bytes.substr(0, magic.size()) != magic) {
    throw Error(ErrorCode::BadMagic, "expected magic " + std::string(magic));
  }
  if (bytes.size() < magic.size() + 4) throw Error(ErrorCode::PayloadTruncated, "missing header length");
  const std::size_t len = read_u32(bytes, magic.size());
  const std::size_t start = magic.size() + 4;
  if (bytes.size() - start < len) throw Error(ErrorCode::PayloadTruncated, "header extends past end of file");
  json header;
  try {
    header = json::parse(bytes.substr(start, len));
  } catch (const json::exception& e) {
    throw Error(ErrorCode::HeaderJsonInvalid, e.what());
  }
  if (!header.is_object()) throw Error(ErrorCode::HeaderJsonInvalid, "header must be a JSON object");
  return {std::move(header), start + len};
}

std::string frame(std::string_view magic, const json& header) {
  const std::string text = header.dump();
  std::string out(magic);
  append_u32(out, static_cast<std::uint32_t>(text.size()));
  out += text;
  return out;
}

template <typename F>
auto header_field(F&& f) {
  try {
    return f();
  } catch (const json::exception& e) {
    throw Error(ErrorCode::HeaderJsonInvalid, e.what());
  }
}

bool valid_role(std::string_view r) { return r == "b0" || r == "dwi" || r == "mask" || r == "tensor"; }

std::string format_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

std::vector<std::string> tokens(std::string_view line) {
  std::vector<std::string> out;
  std::istringstream in{std::string(line)};
  std::string t;
  while (in >> t) out.push_back(t);
  return out;
}

double parse_number(const std::string& t) {
  double v = 0.0;
  const char* first = t.data();
  if (!t.empty() && t.front() == '+') ++first;
  const auto res = std::from_chars(first, t.data() + t.size(), v);
  if (res.ec != std::errc() || res.ptr != t.data() + t.size()) {
    throw Error(ErrorCode::InvalidArgument, "not a number: '" + t + "'");
  }
  return v;
}

std::uint8_t to_byte(double unit) {
  const double c = std::clamp(unit, 0.0, 1.0);
  return static_cast<std::uint8_t>(std::floor(c * 255.0 + 0.5));
}

template <typename T>
T get_checked(const json& j, const char* key) {
  try {
    return j.get<T>();
  } catch (const json::exception&) {
    throw Error(ErrorCode::InvalidArgument, std::string("config key '") + key + "' has the wrong type");
  }
}

json loss_array(const std::vector<double>& v) {
  json a = json::array();
  for (double x : v) a.push_back(std::isfinite(x) ? json(x) : json(nullptr));
  return a;
}

std::vector<double> loss_vector(const json& a) {
  std::vector<double> v;
  for (const auto& x : a) v.push_back(x.is_null() ? std::nan("") : x.get<double>());
  return v;
}

}  // namespace

int VolumeFile::plane_count() const noexcept {
  int n = 0;
  for (const auto& g : groups) n += g.count;
  return n;
}

int VolumeFile::first_plane(std::string_view role) const {
  int p = 0;
  for (const auto& g : groups) {
    if (g.role == role) return p;
    p += g.count;
  }
  throw Error(ErrorCode::InvalidArgument, "volume has no '" + std::string(role) + "' planes");
}

std::span<const float> VolumeFile::image(int plane, int slice) const {
  const std::size_t n = image_size();
  return std::span<const float>(data).subspan((static_cast<std::size_t>(plane) * slices + slice) * n, n);
}

std::span<float> VolumeFile::image(int plane, int slice) {
  const std::size_t n = image_size();
  return std::span<float>(data).subspan((static_cast<std::size_t>(plane) * slices + slice) * n, n);
}

std::string encode_volume(const VolumeFile& v) {
  const std::size_t expected = static_cast<std::size_t>(v.plane_count()) * v.slices * v.image_size();
  if (v.data.size() != expected) {
    throw Error(ErrorCode::ShapeMismatch, "volume data has " + std::to_string(v.data.size()) + " values, expected " +
                                              std::to_string(expected));
  }
  json planes = json::array();
  for (const auto& g : v.groups) planes.push_back({{"count", g.count}, {"role", g.role}});
  const json header = {{"dims", {v.height, v.width, v.slices}},
                       {"dtype", "f32le"},
                       {"order", "row-major, plane-major"},
                       {"planes", planes}};
  std::string out = frame(kVolumeMagic, header);
  append_floats(out, v.data);
  return out;
}

VolumeFile decode_volume(std::string_view bytes) {
  auto [header, pos] = read_frame(bytes, kVolumeMagic);
  VolumeFile v;
  header_field([&] {
    const auto& dims = header.at("dims");
    if (!dims.is_array() || dims.size() != 3) throw Error(ErrorCode::HeaderJsonInvalid, "dims must have 3 entries");
    v.height = dims[0].get<int>();
    v.width = dims[1].get<int>();
    v.slices = dims[2].get<int>();
    if (header.at("dtype").get<std::string>() != "f32le") throw Error(ErrorCode::HeaderJsonInvalid, "dtype must be f32le");
    if (header.at("order").get<std::string>() != "row-major, plane-major") {
      throw Error(ErrorCode::HeaderJsonInvalid, "unsupported order");
    }
    for (const auto& p : header.at("planes")) {
      PlaneGroup g{p.at("role").get<std::string>(), p.at("count").get<int>()};
      if (!valid_role(g.role) || g.count < 1) throw Error(ErrorCode::HeaderJsonInvalid, "bad plane group");
      v.groups.push_back(std::move(g));
    }
    return 0;
  });
  if (v.height < 1 || v.width < 1 || v.slices < 1) throw Error(ErrorCode::HeaderJsonInvalid, "dims must be positive");
  const std::size_t count = static_cast<std::size_t>(v.plane_count()) * v.slices * v.image_size();
  const std::size_t have = bytes.size() - pos;
  if (have < count * 4) {
    throw Error(ErrorCode::PayloadTruncated, "payload has " + std::to_string(have) + " bytes, expected " +
                                                 std::to_string(count * 4));
  }
  if (have > count * 4) throw Error(ErrorCode::PayloadTruncated, "payload is longer than the header declares");
  v.data.resize(count);
  read_floats(bytes, pos, v.data);
  return v;
}

void write_volume(const std::filesystem::path& path, const VolumeFile& v) { write_file(path, encode_volume(v)); }

VolumeFile read_volume(const std::filesystem::path& path) { return decode_volume(read_file(path)); }

VolumeFile volume_from_dwi(std::span<const DwiVolume> slices) {
  if (slices.empty()) throw Error(ErrorCode::InvalidArgument, "no slices to store");
  const DwiVolume& first = slices.front();
  VolumeFile v;
  v.height = first.ny;
  v.width = first.nx;
  v.slices = static_cast<int>(slices.size());
  v.groups = {{"b0", first.scheme.n_b0}, {"dwi", static_cast<int>(first.scheme.size())}, {"mask", 1}};
  v.data.assign(static_cast<std::size_t>(v.plane_count()) * v.slices * v.image_size(), 0.0f);
  for (int s = 0; s < v.slices; ++s) {
    const DwiVolume& d = slices[static_cast<std::size_t>(s)];
    if (d.nx != first.nx || d.ny != first.ny || d.b0.size() != first.b0.size() || d.dwi.size() != first.dwi.size()) {
      throw Error(ErrorCode::ShapeMismatch, "slices differ in size or plane count");
    }
    int p = 0;
    for (const auto& plane : d.b0) std::ranges::transform(plane, v.image(p++, s).begin(), [](double x) { return static_cast<float>(x); });
    for (const auto& plane : d.dwi) std::ranges::transform(plane, v.image(p++, s).begin(), [](double x) { return static_cast<float>(x); });
    std::ranges::transform(d.mask, v.image(p, s).begin(), [](std::uint8_t m) { return m ? 1.0f : 0.0f; });
  }
  return v;
}

std::vector<DwiVolume> dwi_from_volume(const VolumeFile& v, const GradientScheme& scheme) {
  int n_b0 = 0, n_dwi = 0, n_mask = 0;
  for (const auto& g : v.groups) {
    if (g.role == "b0") n_b0 += g.count;
    if (g.role == "dwi") n_dwi += g.count;
    if (g.role == "mask") n_mask += g.count;
  }
  if (n_b0 != scheme.n_b0 || n_dwi != static_cast<int>(scheme.size()) || n_mask != 1) {
    throw Error(ErrorCode::ShapeMismatch, "volume planes (b0 " + std::to_string(n_b0) + ", dwi " +
                                              std::to_string(n_dwi) + ") do not match the gradient table (b0 " +
                                              std::to_string(scheme.n_b0) + ", dwi " + std::to_string(scheme.size()) +
                                              ")");
  }
  const int b0p = v.first_plane("b0");
  const int dwp = v.first_plane("dwi");
  const int mp = v.first_plane("mask");
  std::vector<DwiVolume> out;
  for (int s = 0; s < v.slices; ++s) {
    DwiVolume d;
    d.nx = v.width;
    d.ny = v.height;
    d.scheme = scheme;
    auto plane = [&](int p) {
      const auto img = v.image(p, s);
      return std::vector<double>(img.begin(), img.end());
    };
    for (int k = 0; k < n_b0; ++k) d.b0.push_back(plane(b0p + k));
    for (int k = 0; k < n_dwi; ++k) d.dwi.push_back(plane(dwp + k));
    const auto m = v.image(mp, s);
    d.mask.resize(m.size());
    std::ranges::transform(m, d.mask.begin(), [](float x) { return static_cast<std::uint8_t>(x != 0.0f); });
    out.push_back(std::move(d));
  }
  return out;
}

VolumeFile volume_from_tensors(std::span<const TensorField> fields) {
  if (fields.empty()) throw Error(ErrorCode::InvalidArgument, "no slices to store");
  VolumeFile v;
  v.height = fields.front().ny;
  v.width = fields.front().nx;
  v.slices = static_cast<int>(fields.size());
  v.groups = {{"tensor", 6}, {"mask", 1}};
  v.data.assign(static_cast<std::size_t>(v.plane_count()) * v.slices * v.image_size(), 0.0f);
  for (int s = 0; s < v.slices; ++s) {
    const TensorField& f = fields[static_cast<std::size_t>(s)];
    if (f.nx != v.width || f.ny != v.height) throw Error(ErrorCode::ShapeMismatch, "slices differ in size");
    for (std::size_t i = 0; i < f.size(); ++i) {
      const auto t = f.tensors[i].to_array();
      for (int c = 0; c < 6; ++c) v.image(c, s)[i] = static_cast<float>(t[static_cast<std::size_t>(c)]);
      v.image(6, s)[i] = f.mask[i] ? 1.0f : 0.0f;
    }
  }
  return v;
}

std::vector<TensorField> tensors_from_volume(const VolumeFile& v) {
  const int tp = v.first_plane("tensor");
  const int mp = v.first_plane("mask");
  std::vector<TensorField> out;
  for (int s = 0; s < v.slices; ++s) {
    TensorField f = TensorField::zeros(v.width, v.height);
    for (std::size_t i = 0; i < f.size(); ++i) {
      std::array<double, 6> t{};
      for (int c = 0; c < 6; ++c) t[static_cast<std::size_t>(c)] = v.image(tp + c, s)[i];
      f.tensors[i] = DiffusionTensor6::from_array(t);
      f.mask[i] = v.image(mp, s)[i] != 0.0f;
    }
    out.push_back(std::move(f));
  }
  return out;
}

std::string format_bvals(const GradientScheme& s) {
  std::string out;
  for (int i = 0; i < s.n_b0; ++i) out += (out.empty() ? "" : " ") + std::string("0");
  const std::string b = format_double(s.b.value());
  for (std::size_t i = 0; i < s.size(); ++i) out += (out.empty() ? "" : " ") + b;
  return out + "\n";
}

std::string format_bvecs(const GradientScheme& s) {
  std::string out;
  for (int axis = 0; axis < 3; ++axis) {
    std::string line;
    for (int i = 0; i < s.n_b0; ++i) line += (line.empty() ? "" : " ") + std::string("0");
    for (const auto& d : s.directions) line += (line.empty() ? "" : " ") + format_double(d[axis]);
    out += line + "\n";
  }
  return out;
}

GradientScheme parse_bvals_bvecs(std::string_view bvals, std::string_view bvecs) {
  const std::vector<std::string> b_tokens = tokens(bvals);
  std::vector<std::vector<std::string>> rows;
  {
    std::istringstream in{std::string(bvecs)};
    std::string line;
    while (std::getline(in, line)) {
      auto t = tokens(line);
      if (!t.empty()) rows.push_back(std::move(t));
    }
  }
  if (rows.size() != 3) {
    throw Error(ErrorCode::ColumnCountMismatch, "bvecs must have 3 non-empty lines, found " + std::to_string(rows.size()));
  }
  const std::size_t n = b_tokens.size();
  for (const auto& r : rows) {
    if (r.size() != n) {
      throw Error(ErrorCode::ColumnCountMismatch, "bvals has " + std::to_string(n) + " entries but a bvecs line has " +
                                                      std::to_string(r.size()));
    }
  }

  GradientScheme s;
  s.n_b0 = 0;
  std::optional<double> shell;
  for (std::size_t i = 0; i < n; ++i) {
    const double b = parse_number(b_tokens[i]);
    if (!(b >= 0.0) || !std::isfinite(b)) throw Error(ErrorCode::InvalidArgument, "b-value must be non-negative");
    if (b == 0.0) {
      ++s.n_b0;
      continue;
    }
    if (shell && std::abs(b - *shell) > 1e-6 * *shell) {
      throw Error(ErrorCode::MultiShell, "found b-values " + format_double(*shell) + " and " + format_double(b) +
                                             "; only a single shell is supported");
    }
    shell = b;
    const double x = parse_number(rows[0][i]), y = parse_number(rows[1][i]), z = parse_number(rows[2][i]);
    const double norm = std::sqrt(x * x + y * y + z * z);
    if (!(std::abs(norm - 1.0) <= 1e-3)) {
      throw Error(ErrorCode::NonUnitDirection, "gradient " + std::to_string(i) + " has norm " + format_double(norm));
    }
    s.directions.push_back(std::abs(norm - 1.0) <= UnitDirection::kNormTolerance ? UnitDirection::from(x, y, z)
                                                                                  : UnitDirection::normalize(x, y, z));
  }
  if (s.n_b0 < 1) throw Error(ErrorCode::InvalidArgument, "gradient table has no b=0 entry");
  if (s.directions.empty()) throw Error(ErrorCode::InvalidArgument, "gradient table has no diffusion-weighted entry");
  s.b = BValue(*shell);
  return s;
}

void write_bvals_bvecs(const GradientScheme& s, const std::filesystem::path& bvals,
                       const std::filesystem::path& bvecs) {
  write_file(bvals, format_bvals(s));
  write_file(bvecs, format_bvecs(s));
}

GradientScheme read_bvals_bvecs(const std::filesystem::path& bvals, const std::filesystem::path& bvecs) {
  return parse_bvals_bvecs(read_file(bvals), read_file(bvecs));
}

NetConfig net_config_from_json(const json& j) {
  if (!j.is_object()) throw Error(ErrorCode::InvalidArgument, "network config must be a JSON object");
  NetConfig c;
  for (const auto& [key, value] : j.items()) {
    const char* k = key.c_str();
    if (key == "n_max") c.n_max = get_checked<int>(value, k);
    else if (key == "gap_len") c.gap_len = get_checked<int>(value, k);
    else if (key == "depth") c.depth = get_checked<int>(value, k);
    else if (key == "width") c.width = get_checked<int>(value, k);
    else if (key == "psi_channels") c.psi_channels = get_checked<int>(value, k);
    else if (key == "psi_hidden") c.psi_hidden = get_checked<int>(value, k);
    else if (key == "lr") c.lr = get_checked<double>(value, k);
    else if (key == "lr_decay") c.lr_decay = get_checked<double>(value, k);
    else if (key == "decay_every") c.decay_every = get_checked<int>(value, k);
    else if (key == "epochs") c.epochs = get_checked<int>(value, k);
    else if (key == "batch") c.batch = get_checked<int>(value, k);
    else if (key == "seed") c.seed = get_checked<std::uint64_t>(value, k);
    else if (key == "threads") c.threads = get_checked<int>(value, k);
    else if (key == "antipodal_augment") c.antipodal_augment = get_checked<bool>(value, k);
    else throw Error(ErrorCode::InvalidArgument, "unknown network config key '" + key + "'");
  }
  c.validate();
  return c;
}

json net_config_to_json(const NetConfig& c) {
  return {{"n_max", c.n_max},         {"gap_len", c.gap_len},
          {"depth", c.depth},         {"width", c.width},
          {"psi_channels", c.psi_channels}, {"psi_hidden", c.psi_hidden},
          {"lr", c.lr},               {"lr_decay", c.lr_decay},
          {"decay_every", c.decay_every},   {"epochs", c.epochs},
          {"batch", c.batch},         {"seed", c.seed},
          {"threads", c.threads},     {"antipodal_augment", c.antipodal_augment}};
}

std::string encode_checkpoint(const Checkpoint& ck) {
  json params = json::array();
  std::size_t offset = 0;
  for (std::size_t i = 0; i < ck.params.size(); ++i) {
    const auto& s = ck.params.shape(i);
    const std::size_t count = s.count();
    params.push_back({{"count", count}, {"name", ck.params.name(i)}, {"offset", offset}, {"shape", {s.n, s.c, s.h, s.w}}});
    offset += count * 4;
  }
  const json manifest = {{"blob_bytes", offset},
                         {"config", net_config_to_json(ck.config)},
                         {"epoch", ck.epoch},
                         {"params", params},
                         {"train_loss", loss_array(ck.train_loss)},
                         {"val_loss", loss_array(ck.val_loss)}};
  std::string out = frame(kCheckpointMagic, manifest);
  for (std::size_t i = 0; i < ck.params.size(); ++i) append_floats(out, ck.params.value(i).values());
  return out;
}

Checkpoint decode_checkpoint(std::string_view bytes) {
  auto [manifest, pos] = read_frame(bytes, kCheckpointMagic);
  Checkpoint ck;
  struct Entry {
    std::string name;
    nn::Shape4 shape;
    std::size_t offset, count;
  };
  std::vector<Entry> entries;
  std::size_t blob_bytes = 0;
  header_field([&] {
    try {
      ck.config = net_config_from_json(manifest.at("config"));
    } catch (const Error& e) {
      throw Error(ErrorCode::HeaderJsonInvalid, e.what());
    }
    ck.epoch = manifest.at("epoch").get<int>();
    ck.train_loss = loss_vector(manifest.at("train_loss"));
    ck.val_loss = loss_vector(manifest.at("val_loss"));
    blob_bytes = manifest.at("blob_bytes").get<std::size_t>();
    for (const auto& p : manifest.at("params")) {
      const auto& sh = p.at("shape");
      if (!sh.is_array() || sh.size() != 4) throw Error(ErrorCode::ManifestShapeMismatch, "shape needs 4 entries");
      entries.push_back({p.at("name").get<std::string>(),
                         nn::Shape4{sh[0].get<int>(), sh[1].get<int>(), sh[2].get<int>(), sh[3].get<int>()},
                         p.at("offset").get<std::size_t>(), p.at("count").get<std::size_t>()});
    }
    return 0;
  });

  if (bytes.size() - pos != blob_bytes) {
    throw Error(ErrorCode::ManifestShapeMismatch, "blob section has " + std::to_string(bytes.size() - pos) +
                                                      " bytes, manifest declares " + std::to_string(blob_bytes));
  }
  std::size_t end = 0;
  for (const auto& e : entries) {
    const auto& s = e.shape;
    if (s.n < 1 || s.c < 1 || s.h < 1 || s.w < 1 || s.count() != e.count) {
      throw Error(ErrorCode::ManifestShapeMismatch, "parameter '" + e.name + "' shape does not match its count");
    }
    if (e.offset < end || e.offset % 4 != 0 || e.offset + e.count * 4 > blob_bytes) {
      throw Error(ErrorCode::ManifestShapeMismatch, "parameter '" + e.name + "' has an invalid offset");
    }
    end = e.offset + e.count * 4;
  }
  if (!entries.empty()) {
    const nn::ParamStore expected = init_params(ck.config, 0);
    bool ok = expected.size() == entries.size();
    for (std::size_t i = 0; ok && i < entries.size(); ++i) {
      const auto& a = expected.shape(i);
      const auto& b = entries[i].shape;
      ok = expected.name(i) == entries[i].name && a.n == b.n && a.c == b.c && a.h == b.h && a.w == b.w;
    }
    if (!ok) throw Error(ErrorCode::ManifestShapeMismatch, "parameters do not match the network configuration");
  }
  for (const auto& e : entries) {
    const std::size_t idx = ck.params.add(e.name, e.shape);
    read_floats(bytes, pos + e.offset, ck.params.mutable_values(idx));
  }
  return ck;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ck) { write_file(path, encode_checkpoint(ck)); }

Checkpoint load_checkpoint(const std::filesystem::path& path) { return decode_checkpoint(read_file(path)); }

std::string render_gray(std::span<const double> map, std::span<const std::uint8_t> mask, int nx, int ny, Window w) {
  if (!(w.hi > w.lo) || !std::isfinite(w.lo) || !std::isfinite(w.hi)) {
    throw Error(ErrorCode::BadWindow, "window [" + format_double(w.lo) + ", " + format_double(w.hi) + "] is empty");
  }
  const std::size_t n = static_cast<std::size_t>(nx) * static_cast<std::size_t>(ny);
  if (map.size() != n || mask.size() != n) throw Error(ErrorCode::ShapeMismatch, "map size does not match dims");
  std::string out = "P5\n" + std::to_string(nx) + " " + std::to_string(ny) + "\n255\n";
  for (std::size_t i = 0; i < n; ++i) {
    out.push_back(static_cast<char>(mask[i] ? to_byte((map[i] - w.lo) / (w.hi - w.lo)) : 0));
  }
  return out;
}

std::string render_dec(std::span<const Rgb> colors, std::span<const std::uint8_t> mask, int nx, int ny) {
  const std::size_t n = static_cast<std::size_t>(nx) * static_cast<std::size_t>(ny);
  if (colors.size() != n || mask.size() != n) throw Error(ErrorCode::ShapeMismatch, "map size does not match dims");
  std::string out = "P6\n" + std::to_string(nx) + " " + std::to_string(ny) + "\n255\n";
  for (std::size_t i = 0; i < n; ++i) {
    const Rgb& c = colors[i];
    for (double v : {c.r, c.g, c.b}) out.push_back(static_cast<char>(mask[i] ? to_byte(v) : 0));
  }
  return out;
}

std::string loss_csv_header() { return "epoch,lr,train_loss,val_loss"; }

std::string loss_csv_row(const EpochReport& r) {
  char buf[128];
  std::snprintf(buf, sizeof buf, "%d,%.6g,%.9g,%.9g", r.epoch, r.lr, r.train_loss, r.val_loss);
  return buf;
}

void write_file(const std::filesystem::path& path, std::string_view bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::IoError, "cannot open " + path.string() + " for writing");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error(ErrorCode::IoError, "failed writing " + path.string());
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoError, "cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace flexdti
