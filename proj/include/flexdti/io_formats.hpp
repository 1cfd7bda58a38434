#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "flexdti/flexdti_net.hpp"
#include "flexdti/phantom.hpp"
#include "flexdti/scheme.hpp"
#include "flexdti/tensor_field.hpp"

namespace flexdti {

inline constexpr std::string_view kVolumeMagic = "DWIV0001";
inline constexpr std::string_view kCheckpointMagic = "FDTI0001";

/// A run of `count` consecutive planes sharing a role: "b0", "dwi", "mask" or "tensor".
struct PlaneGroup {
  std::string role;
  int count = 0;

  bool operator==(const PlaneGroup&) const = default;
};

/// Multi-slice float volume. Payload order: plane, then slice, then rows
/// (each image row-major), so element (p, s, y, x) sits at
/// ((p * slices + s) * height + y) * width + x.
struct VolumeFile {
  int height = 0;
  int width = 0;
  int slices = 0;
  std::vector<PlaneGroup> groups;
  std::vector<float> data;

  int plane_count() const noexcept;
  std::size_t image_size() const noexcept { return static_cast<std::size_t>(height) * static_cast<std::size_t>(width); }
  /// First plane index of the first group with `role`; throws InvalidArgument if absent.
  int first_plane(std::string_view role) const;
  std::span<const float> image(int plane, int slice) const;
  std::span<float> image(int plane, int slice);
};

/// Magic, u32 LE header length, sorted-key JSON header, f32le payload.
std::string encode_volume(const VolumeFile& v);
/// Throws BadMagic, HeaderJsonInvalid, PayloadTruncated.
VolumeFile decode_volume(std::string_view bytes);
void write_volume(const std::filesystem::path& path, const VolumeFile& v);
VolumeFile read_volume(const std::filesystem::path& path);

/// Groups b0 (n_b0), dwi (directions), mask (1). All slices must share a scheme and size.
VolumeFile volume_from_dwi(std::span<const DwiVolume> slices);
/// Throws ShapeMismatch when the plane groups do not fit `scheme`.
std::vector<DwiVolume> dwi_from_volume(const VolumeFile& v, const GradientScheme& scheme);
/// Groups tensor (6: xx, yy, zz, xy, xz, yz in mm^2/s) and mask (1).
VolumeFile volume_from_tensors(std::span<const TensorField> fields);
std::vector<TensorField> tensors_from_volume(const VolumeFile& v);

/// FSL-style tables: bvals is one line (n_b0 zeros then b per direction),
/// bvecs three lines of x, y and z components.
std::string format_bvals(const GradientScheme& s);
std::string format_bvecs(const GradientScheme& s);
/// Throws ColumnCountMismatch, NonUnitDirection, MultiShell, InvalidArgument.
GradientScheme parse_bvals_bvecs(std::string_view bvals, std::string_view bvecs);
void write_bvals_bvecs(const GradientScheme& s, const std::filesystem::path& bvals,
                       const std::filesystem::path& bvecs);
GradientScheme read_bvals_bvecs(const std::filesystem::path& bvals, const std::filesystem::path& bvecs);

/// Throws InvalidArgument on unknown keys or invalid values.
NetConfig net_config_from_json(const nlohmann::json& j);
nlohmann::json net_config_to_json(const NetConfig& cfg);

/// Magic, u32 LE manifest length, sorted-key JSON manifest, f32le blobs.
std::string encode_checkpoint(const Checkpoint& ck);
/// Throws BadMagic, HeaderJsonInvalid, ManifestShapeMismatch.
Checkpoint decode_checkpoint(std::string_view bytes);
void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ck);
Checkpoint load_checkpoint(const std::filesystem::path& path);

struct Window {
  double lo = 0.0;
  double hi = 1.0;
};

/// Binary PGM (P5, maxval 255); values mapped linearly from the window and clamped.
/// Masked-out pixels are 0. Throws BadWindow when hi <= lo.
std::string render_gray(std::span<const double> map, std::span<const std::uint8_t> mask, int nx, int ny, Window w);
/// Binary PPM (P6) of colours in [0, 1] scaled by 255, rounded half up.
std::string render_dec(std::span<const Rgb> colors, std::span<const std::uint8_t> mask, int nx, int ny);

/// "epoch,lr,train_loss,val_loss"
std::string loss_csv_header();
std::string loss_csv_row(const EpochReport& r);

/// Throws IoError.
void write_file(const std::filesystem::path& path, std::string_view bytes);
std::string read_file(const std::filesystem::path& path);

}  // namespace flexdti
