#pragma once

#include <array>
#include <filesystem>
#include <span>
#include <vector>

#include "dwiratio/grid.hpp"

namespace dwiratio {

/// Single-file NIfTI-1 ("n+1"), little-endian float32, no extensions,
/// voxel data at byte offset 352, x fastest.
struct NiftiImage {
  static constexpr int kHeaderSize = 348;
  static constexpr int kVoxOffset = 352;
  static constexpr short kFloat32 = 16;

  std::vector<std::size_t> dims;               // 1 to 4 entries
  std::array<double, 3> voxel_size{1.0, 1.0, 1.0};  // mm
  std::vector<float> data;

  std::size_t volume_count() const noexcept { return dims.size() > 3 ? dims[3] : 1; }
  /// Volume t as a 3D grid (missing spatial dims are 1).
  Volume3D volume(std::size_t t) const;
  std::vector<Volume3D> volumes() const;

  static NiftiImage from_volumes(std::span<const Volume3D> vols, std::array<double, 3> voxel_size);
};

/// Serialized bytes of the image; throws InvalidSpec for non-finite values.
std::string encode_nifti(const NiftiImage& img);
/// Throws BadHeaderSize, BadMagic, UnsupportedDatatype, BadDimensions or TruncatedPayload.
NiftiImage decode_nifti(std::string_view bytes);

void write_nifti(const std::filesystem::path& path, const NiftiImage& img);
void write_nifti(const std::filesystem::path& path, const Volume3D& vol, std::array<double, 3> voxel_size);
NiftiImage read_nifti_image(const std::filesystem::path& path);

struct NiftiVolume {
  Volume3D volume;
  std::array<double, 3> voxel_size{};
};
/// Reads a 3D file (or 4D with a single volume).
NiftiVolume read_nifti(const std::filesystem::path& path);

}  // namespace dwiratio
