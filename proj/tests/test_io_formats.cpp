#include <doctest.h>

#include <openssl/sha.h>

#include <cmath>
#include <cstring>
#include <filesystem>
#include <numeric>

#include <unistd.h>

#include "flexdti/error.hpp"
#include "flexdti/io_formats.hpp"
#include "flexdti/random.hpp"
#include "flexdti/scheme.hpp"

using namespace flexdti;
namespace fs = std::filesystem;

namespace {

std::string sha256_hex(std::string_view bytes) {
  unsigned char digest[SHA256_DIGEST_LENGTH];
  SHA256(reinterpret_cast<const unsigned char*>(bytes.data()), bytes.size(), digest);
  static const char* hex = "0123456789abcdef";
  std::string out;
  for (unsigned char c : digest) {
    out.push_back(hex[c >> 4]);
    out.push_back(hex[c & 15]);
  }
  return out;
}

template <typename F>
ErrorCode code_of(F&& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("no error thrown");
  return ErrorCode::InvalidArgument;
}

struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() / ("flexdti_io_" + std::to_string(hash_key({reinterpret_cast<std::uintptr_t>(this),
                                                                                  static_cast<std::uint64_t>(::getpid())})));
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

VolumeFile hashed_volume() {
  VolumeFile v;
  v.height = 64;
  v.width = 64;
  v.slices = 10;
  v.groups = {{"b0", 1}, {"dwi", 6}, {"mask", 1}};
  v.data.resize(static_cast<std::size_t>(8) * 10 * 64 * 64);
  for (std::size_t i = 0; i < v.data.size(); ++i) {
    const auto k = static_cast<std::uint32_t>(static_cast<std::uint64_t>(i) * 2654435761ULL);
    v.data[i] = static_cast<float>(k) * 0x1p-32f;
  }
  return v;
}

/// Splits a framed file into its JSON header and the bytes after it.
std::pair<nlohmann::json, std::string> split_frame(const std::string& bytes) {
  std::uint32_t len = 0;
  for (int k = 0; k < 4; ++k) len |= static_cast<std::uint32_t>(static_cast<unsigned char>(bytes[8 + k])) << (8 * k);
  return {nlohmann::json::parse(bytes.substr(12, len)), bytes.substr(12 + len)};
}

std::string reframe(std::string_view magic, const nlohmann::json& header, const std::string& tail) {
  const std::string text = header.dump();
  std::string out(magic);
  const auto len = static_cast<std::uint32_t>(text.size());
  for (int k = 0; k < 4; ++k) out.push_back(static_cast<char>((len >> (8 * k)) & 0xff));
  return out + text + tail;
}

NetConfig tiny_config() {
  NetConfig cfg;
  cfg.n_max = 8;
  cfg.gap_len = 4;
  cfg.depth = 2;
  cfg.width = 4;
  cfg.psi_hidden = 8;
  cfg.epochs = 1;
  cfg.batch = 2;
  cfg.seed = 5;
  return cfg;
}

}  // namespace

TEST_CASE("volume container round trip") {
  VolumeFile one;
  one.height = one.width = one.slices = 1;
  one.groups = {{"mask", 1}};
  one.data = {-0.0f};
  const std::string bytes = encode_volume(one);
  CHECK(bytes.substr(0, 8) == "DWIV0001");
  const VolumeFile back = decode_volume(bytes);
  CHECK(back.groups == one.groups);
  CHECK(std::signbit(back.data[0]));
  CHECK(encode_volume(back) == bytes);

  Rng rng(1);
  VolumeFile v;
  v.height = 5;
  v.width = 7;
  v.slices = 3;
  v.groups = {{"b0", 2}, {"dwi", 4}, {"mask", 1}};
  v.data.resize(static_cast<std::size_t>(7) * 3 * 35);
  for (float& x : v.data) x = static_cast<float>(rng.normal() * 1e3);
  v.data[4] = std::numeric_limits<float>::denorm_min();
  v.data[9] = std::numeric_limits<float>::infinity();
  const VolumeFile r = decode_volume(encode_volume(v));
  REQUIRE(r.data.size() == v.data.size());
  CHECK(std::memcmp(r.data.data(), v.data.data(), v.data.size() * 4) == 0);
  CHECK(r.plane_count() == 7);
  CHECK(r.first_plane("dwi") == 2);
  CHECK(r.first_plane("mask") == 6);
  CHECK(r.image(3, 2)[0] == v.data[static_cast<std::size_t>((3 * 3 + 2) * 35)]);
  CHECK(code_of([&] { r.first_plane("tensor"); }) == ErrorCode::InvalidArgument);
}

TEST_CASE("volume container bytes are stable") {
  const std::string bytes = encode_volume(hashed_volume());
  CHECK(bytes.size() == 1310886);
  CHECK(sha256_hex(bytes) == "9086b8a8339abd62fe9d9422842af90310b3100569adc1d88f1c86a5e906ede1");
  const auto [header, payload] = split_frame(bytes);
  CHECK(header.dump() ==
        R"({"dims":[64,64,10],"dtype":"f32le","order":"row-major, plane-major","planes":[{"count":1,"role":"b0"},{"count":6,"role":"dwi"},{"count":1,"role":"mask"}]})");
  // Little-endian regardless of host: 0.5f is 00 00 00 3f.
  VolumeFile half;
  half.height = half.width = half.slices = 1;
  half.groups = {{"mask", 1}};
  half.data = {0.5f};
  const std::string hb = encode_volume(half);
  CHECK(hb.substr(hb.size() - 4) == std::string("\x00\x00\x00\x3f", 4));
}

TEST_CASE("volume container errors") {
  const std::string good = encode_volume(hashed_volume());
  CHECK(code_of([&] { decode_volume(good.substr(0, good.size() - 1)); }) == ErrorCode::PayloadTruncated);
  CHECK(code_of([&] { decode_volume(good + "x"); }) == ErrorCode::PayloadTruncated);
  CHECK(code_of([&] { decode_volume("DWIV0002" + good.substr(8)); }) == ErrorCode::BadMagic);
  CHECK(code_of([&] { decode_volume("DWI"); }) == ErrorCode::BadMagic);
  CHECK(code_of([&] { decode_volume(good.substr(0, 20)); }) != ErrorCode::InvalidArgument);

  auto [header, payload] = split_frame(good);
  CHECK(code_of([&] { decode_volume(reframe(kVolumeMagic, nlohmann::json{{"dims", {1, 1}}}, payload)); }) ==
        ErrorCode::HeaderJsonInvalid);
  auto bad_role = header;
  bad_role["planes"][0]["role"] = "t2";
  CHECK(code_of([&] { decode_volume(reframe(kVolumeMagic, bad_role, payload)); }) == ErrorCode::HeaderJsonInvalid);
  auto bad_dtype = header;
  bad_dtype["dtype"] = "f64le";
  CHECK(code_of([&] { decode_volume(reframe(kVolumeMagic, bad_dtype, payload)); }) == ErrorCode::HeaderJsonInvalid);
  std::string garbage = good.substr(0, 12) + std::string(good.size() - 12, '{');
  CHECK(code_of([&] { decode_volume(garbage); }) == ErrorCode::HeaderJsonInvalid);

  TempDir tmp;
  CHECK(code_of([&] { read_volume(tmp.path / "missing.dwiv"); }) == ErrorCode::IoError);
  write_volume(tmp.path / "v.dwiv", hashed_volume());
  CHECK(read_file(tmp.path / "v.dwiv") == good);
}

TEST_CASE("acquisitions and tensor fields survive the container") {
  PhantomSpec spec;
  spec.nx = 32;
  spec.ny = 40;
  const auto fields = make_phantom_stack(spec, 2);
  const GradientScheme scheme = generate_uniform(9, 3);
  std::vector<DwiVolume> dwis;
  for (std::size_t i = 0; i < fields.size(); ++i) dwis.push_back(synthesize_dwi(fields[i], scheme, NoiseModel{}, i));

  const VolumeFile v = decode_volume(encode_volume(volume_from_dwi(dwis)));
  CHECK(v.height == 40);
  CHECK(v.width == 32);
  const auto back = dwi_from_volume(v, scheme);
  REQUIRE(back.size() == 2);
  for (std::size_t s = 0; s < 2; ++s) {
    CHECK(back[s].mask == dwis[s].mask);
    for (std::size_t p = 0; p < 9; ++p)
      for (std::size_t i = 0; i < back[s].size(); i += 17)
        CHECK(back[s].dwi[p][i] == static_cast<double>(static_cast<float>(dwis[s].dwi[p][i])));
  }
  CHECK(code_of([&] { dwi_from_volume(v, generate_uniform(8, 3)); }) == ErrorCode::ShapeMismatch);

  const auto tf = tensors_from_volume(decode_volume(encode_volume(volume_from_tensors(fields))));
  REQUIRE(tf.size() == 2);
  CHECK(tf[1].mask == fields[1].mask);
  for (std::size_t i = 0; i < tf[1].size(); i += 13) {
    const auto a = tf[1].tensors[i].to_array(), b = fields[1].tensors[i].to_array();
    for (int k = 0; k < 6; ++k) CHECK(a[k] == static_cast<double>(static_cast<float>(b[k])));
  }
}

TEST_CASE("gradient tables") {
  GradientScheme s = generate_uniform(30, 9);
  s.n_b0 = 2;
  s.b = BValue(1000.0);
  const std::string bvals = format_bvals(s);
  CHECK(bvals.rfind("0 0 1000 1000", 0) == 0);
  CHECK(bvals.back() == '\n');
  const GradientScheme r = parse_bvals_bvecs(bvals, format_bvecs(s));
  CHECK(r.n_b0 == 2);
  CHECK(r.b == s.b);
  REQUIRE(r.size() == 30);
  for (std::size_t i = 0; i < 30; ++i)
    for (int a = 0; a < 3; ++a) CHECK(std::abs(r.directions[i][a] - s.directions[i][a]) < 1e-9);
  CHECK(format_bvecs(r) == format_bvecs(s));

  SUBCASE("whitespace and b0 columns anywhere") {
    const GradientScheme w = parse_bvals_bvecs("  700\t0\n 700  700 0 700 700 700 \n\n",
                                               "1 0 0 0 0 0.6 0.8 0\n\n0 0 1 0 0 0.8 0 0.6\n   0 0 0 1 0 0 0.6 0.8\n");
    CHECK(w.n_b0 == 2);
    CHECK(w.size() == 6);
    CHECK(w.b.value() == 700.0);
    CHECK(w.directions[1] == UnitDirection::from(0, 1, 0));
  }
  SUBCASE("near-unit vectors are renormalised") {
    const GradientScheme w = parse_bvals_bvecs("0 1000 1000 1000 1000 1000 1000", "0 1.0005 0 0 0.70710678 0.70710678 0\n"
                                               "0 0 1 0 0.70710678 0 0.70710678\n"
                                               "0 0 0 1 0 0.70710678 0.70710678\n");
    CHECK(w.directions[0] == UnitDirection::from(1, 0, 0));
    CHECK(w.directions[3].x() == doctest::Approx(std::sqrt(0.5)).epsilon(1e-12));
    CHECK(std::hypot(w.directions[3].x(), w.directions[3].y()) == doctest::Approx(1.0).epsilon(1e-15));
  }
  SUBCASE("errors") {
    CHECK(code_of([] { parse_bvals_bvecs("0 1000", "0 0.9\n0 0\n0 0\n"); }) == ErrorCode::NonUnitDirection);
    CHECK(code_of([] { parse_bvals_bvecs("0 1000 1000", "0 1\n0 0\n0 0\n"); }) == ErrorCode::ColumnCountMismatch);
    CHECK(code_of([] { parse_bvals_bvecs("0 1000", "0 1\n0 0\n"); }) == ErrorCode::ColumnCountMismatch);
    CHECK(code_of([] { parse_bvals_bvecs("0 1000 2000", "0 1 0\n0 0 1\n0 0 0\n"); }) == ErrorCode::MultiShell);
    CHECK(code_of([] { parse_bvals_bvecs("1000 1000", "1 0\n0 1\n0 0\n"); }) == ErrorCode::InvalidArgument);
    CHECK(code_of([] { parse_bvals_bvecs("0 abc", "0 1\n0 0\n0 0\n"); }) == ErrorCode::InvalidArgument);
    CHECK(code_of([] { parse_bvals_bvecs("0 -5", "0 1\n0 0\n0 0\n"); }) == ErrorCode::InvalidArgument);
  }
  SUBCASE("files") {
    TempDir tmp;
    write_bvals_bvecs(s, tmp.path / "bvals", tmp.path / "bvecs");
    CHECK(read_file(tmp.path / "bvals") == bvals);
    CHECK(read_bvals_bvecs(tmp.path / "bvals", tmp.path / "bvecs").size() == 30);
  }
}

TEST_CASE("network config JSON") {
  NetConfig c = tiny_config();
  c.lr = 3.25e-4;
  c.antipodal_augment = false;
  c.seed = 0xffffffffffffULL;
  const NetConfig r = net_config_from_json(net_config_to_json(c));
  CHECK(net_config_to_json(r) == net_config_to_json(c));
  CHECK(r.lr == c.lr);
  CHECK(r.seed == c.seed);
  CHECK(net_config_from_json(nlohmann::json::object()).n_max == 20);
  CHECK(code_of([] { net_config_from_json({{"n_mx", 20}}); }) == ErrorCode::InvalidArgument);
  CHECK(code_of([] { net_config_from_json({{"n_max", "20"}}); }) == ErrorCode::InvalidArgument);
  CHECK(code_of([] { net_config_from_json({{"n_max", 4}}); }) == ErrorCode::InvalidArgument);
}

TEST_CASE("checkpoints") {
  const GradientScheme scheme = generate_uniform(10, 2);
  Dataset data;
  data.scheme = scheme;
  data.pool.resize(10);
  std::iota(data.pool.begin(), data.pool.end(), 0);
  PhantomSpec spec;
  spec.nx = spec.ny = 32;
  for (const auto& f : make_phantom_stack(spec, 2)) data.slices.push_back(TrainingSlice{f, std::nullopt});
  const Checkpoint ck = train(data, nullptr, tiny_config());

  const std::string bytes = encode_checkpoint(ck);
  CHECK(bytes.substr(0, 8) == "FDTI0001");
  const Checkpoint back = decode_checkpoint(bytes);
  CHECK(encode_checkpoint(back) == bytes);
  CHECK(back.epoch == 1);
  CHECK(back.train_loss == ck.train_loss);
  REQUIRE(back.val_loss.size() == 1);
  CHECK(std::isnan(back.val_loss[0]));
  REQUIRE(back.params.size() == ck.params.size());
  for (std::size_t i = 0; i < ck.params.size(); ++i) {
    CHECK(back.params.name(i) == ck.params.name(i));
    CHECK(std::memcmp(back.params.value(i).data(), ck.params.value(i).data(), ck.params.value(i).size() * 4) == 0);
  }

  const DwiVolume v = synthesize_dwi(data.slices[0].truth, scheme, NoiseModel{}, 3);
  const std::vector<int> subset{9, 7, 5, 3, 1, 0, 2};
  const TensorField a = infer(v, subset, ck), b = infer(v, subset, back);
  CHECK(a.tensors == b.tensors);

  TempDir tmp;
  save_checkpoint(tmp.path / "ck.fdti", ck);
  CHECK(read_file(tmp.path / "ck.fdti") == bytes);
  CHECK(load_checkpoint(tmp.path / "ck.fdti").params.total_count() == ck.params.total_count());

  auto [manifest, blobs] = split_frame(bytes);
  SUBCASE("corrupt offset") {
    auto m = manifest;
    m["params"][1]["offset"] = m["params"][1]["offset"].get<std::size_t>() - 4;
    CHECK(code_of([&] { decode_checkpoint(reframe(kCheckpointMagic, m, blobs)); }) == ErrorCode::ManifestShapeMismatch);
    m = manifest;
    m["params"][0]["offset"] = 2;
    CHECK(code_of([&] { decode_checkpoint(reframe(kCheckpointMagic, m, blobs)); }) == ErrorCode::ManifestShapeMismatch);
  }
  SUBCASE("shape does not match the count or the config") {
    auto m = manifest;
    m["params"][0]["shape"][0] = 5;
    CHECK(code_of([&] { decode_checkpoint(reframe(kCheckpointMagic, m, blobs)); }) == ErrorCode::ManifestShapeMismatch);
    m = manifest;
    m["config"]["width"] = 8;
    CHECK(code_of([&] { decode_checkpoint(reframe(kCheckpointMagic, m, blobs)); }) == ErrorCode::ManifestShapeMismatch);
  }
  SUBCASE("blob length") {
    CHECK(code_of([&] { decode_checkpoint(bytes.substr(0, bytes.size() - 4)); }) == ErrorCode::ManifestShapeMismatch);
    CHECK(code_of([&] { decode_checkpoint("FDTI0002" + bytes.substr(8)); }) == ErrorCode::BadMagic);
  }
  SUBCASE("empty parameter store") {
    Checkpoint empty;
    empty.config = tiny_config();
    const Checkpoint e = decode_checkpoint(encode_checkpoint(empty));
    CHECK(e.params.size() == 0);
    CHECK(e.epoch == 0);
    CHECK(split_frame(encode_checkpoint(empty)).first["blob_bytes"] == 0);
  }
}

TEST_CASE("map rendering") {
  SUBCASE("8x8 golden") {
    std::vector<double> map(64);
    std::vector<std::uint8_t> mask(64);
    for (int y = 0; y < 8; ++y) {
      for (int x = 0; x < 8; ++x) {
        map[static_cast<std::size_t>(y * 8 + x)] = (x + 8 * y) / 63.0;
        mask[static_cast<std::size_t>(y * 8 + x)] = x > 0 && x < 7 && y > 0 && y < 7;
      }
    }
    const std::string pgm = render_gray(map, mask, 8, 8, Window{0.0, 1.0});
    const std::string head = "P5\n8 8\n255\n";
    REQUIRE(pgm.size() == head.size() + 64);
    CHECK(pgm.substr(0, head.size()) == head);
    static const char* golden =
        "00000000000000000024282d313539000045494d515559000065696d7175790000868a8e92969a0000a6aaaeb2b6ba0000c6caced2"
        "d7db000000000000000000";
    std::string hex;
    for (std::size_t i = head.size(); i < pgm.size(); ++i) {
      char buf[3];
      std::snprintf(buf, sizeof buf, "%02x", static_cast<unsigned char>(pgm[i]));
      hex += buf;
    }
    CHECK(hex == golden);
  }
  SUBCASE("window clamping") {
    const std::vector<double> map{2.0, 2.0, -1.0, 0.5};
    const std::vector<std::uint8_t> all(4, 1);
    const std::string pgm = render_gray(map, all, 2, 2, Window{0.0, 2.0});
    CHECK(static_cast<unsigned char>(pgm[pgm.size() - 4]) == 255);
    CHECK(static_cast<unsigned char>(pgm[pgm.size() - 3]) == 255);
    CHECK(static_cast<unsigned char>(pgm[pgm.size() - 2]) == 0);
    CHECK(static_cast<unsigned char>(pgm[pgm.size() - 1]) == 64);
    CHECK(code_of([&] { render_gray(map, all, 2, 2, Window{1.0, 1.0}); }) == ErrorCode::BadWindow);
    CHECK(code_of([&] { render_gray(map, all, 4, 2, Window{}); }) == ErrorCode::ShapeMismatch);
  }
  SUBCASE("colour maps") {
    const std::vector<Rgb> colors{{1.0, 0.0, 0.5}, {0.2, 0.4, 0.6}, {1.0, 1.0, 1.0}};
    const std::vector<std::uint8_t> mask{1, 1, 0};
    const std::string ppm = render_dec(colors, mask, 3, 1);
    const std::string head = "P6\n3 1\n255\n";
    REQUIRE(ppm.size() == head.size() + 9);
    const std::string px = ppm.substr(head.size());
    const unsigned char want[9] = {255, 0, 128, 51, 102, 153, 0, 0, 0};
    for (int i = 0; i < 9; ++i) CHECK(static_cast<unsigned char>(px[static_cast<std::size_t>(i)]) == want[i]);
  }
}

TEST_CASE("loss CSV") {
  CHECK(loss_csv_header() == "epoch,lr,train_loss,val_loss");
  CHECK(loss_csv_row(EpochReport{3, 1e-4, 0.125, 0.25}) == "3,0.0001,0.125,0.25");
  CHECK(loss_csv_row(EpochReport{1, 1e-3, 0.5, std::nan("")}) == "1,0.001,0.5,nan");
}
