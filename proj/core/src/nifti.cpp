#include "dwiratio/nifti.hpp"

#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <string>

#include "dwiratio/error.hpp"
#include "dwiratio/file_util.hpp"

namespace dwiratio {

namespace {

static_assert(std::endian::native == std::endian::little, "NIfTI codec assumes a little-endian host");

// Header field offsets.
constexpr std::size_t kOffSizeofHdr = 0;
constexpr std::size_t kOffRegular = 38;
constexpr std::size_t kOffDim = 40;
constexpr std::size_t kOffDatatype = 70;
constexpr std::size_t kOffBitpix = 72;
constexpr std::size_t kOffPixdim = 76;
constexpr std::size_t kOffVoxOffset = 108;
constexpr std::size_t kOffSclSlope = 112;
constexpr std::size_t kOffSclInter = 116;
constexpr std::size_t kOffXyztUnits = 123;
constexpr std::size_t kOffDescrip = 148;
constexpr std::size_t kOffSformCode = 254;
constexpr std::size_t kOffSrowX = 280;
constexpr std::size_t kOffMagic = 344;

template <typename T>
void put(std::string& buf, std::size_t offset, T value) {
  std::memcpy(buf.data() + offset, &value, sizeof(T));
}

template <typename T>
T get(std::string_view buf, std::size_t offset) {
  T value;
  std::memcpy(&value, buf.data() + offset, sizeof(T));
  return value;
}

}  // namespace

Volume3D NiftiImage::volume(std::size_t t) const {
  const std::size_t nx = dims.size() > 0 ? dims[0] : 1;
  const std::size_t ny = dims.size() > 1 ? dims[1] : 1;
  const std::size_t nz = dims.size() > 2 ? dims[2] : 1;
  const std::size_t n = nx * ny * nz;
  std::vector<double> values(n);
  for (std::size_t i = 0; i < n; ++i) values[i] = data[t * n + i];
  return Volume3D(nx, ny, nz, std::move(values));
}

std::vector<Volume3D> NiftiImage::volumes() const {
  std::vector<Volume3D> out;
  for (std::size_t t = 0; t < volume_count(); ++t) out.push_back(volume(t));
  return out;
}

NiftiImage NiftiImage::from_volumes(std::span<const Volume3D> vols, std::array<double, 3> voxel_size) {
  if (vols.empty()) throw Error(ErrorCode::BadDimensions, "no volumes to write");
  NiftiImage img;
  img.voxel_size = voxel_size;
  img.dims = {vols[0].nx(), vols[0].ny(), vols[0].nz()};
  if (vols.size() > 1) img.dims.push_back(vols.size());
  img.data.reserve(vols.size() * vols[0].size());
  for (const auto& v : vols) {
    if (!v.same_dims(vols[0])) throw Error(ErrorCode::BadDimensions, "volumes differ in size");
    for (double x : v.values()) img.data.push_back(static_cast<float>(x));
  }
  return img;
}

std::string encode_nifti(const NiftiImage& img) {
  if (img.dims.empty() || img.dims.size() > 4) throw Error(ErrorCode::BadDimensions, "need 1 to 4 dimensions");
  std::size_t count = 1;
  for (auto d : img.dims) {
    if (d < 1 || d > 32767) throw Error(ErrorCode::BadDimensions, "dimension out of range: " + std::to_string(d));
    count *= d;
  }
  if (count != img.data.size()) {
    throw Error(ErrorCode::BadDimensions, "dims describe " + std::to_string(count) + " voxels, payload has " +
                                              std::to_string(img.data.size()));
  }
  for (float v : img.data) {
    if (!std::isfinite(v)) throw Error(ErrorCode::InvalidSpec, "non-finite voxel value");
  }

  std::string buf(NiftiImage::kVoxOffset, '\0');
  put<std::int32_t>(buf, kOffSizeofHdr, NiftiImage::kHeaderSize);
  buf[kOffRegular] = 'r';
  put<std::int16_t>(buf, kOffDim, static_cast<std::int16_t>(img.dims.size()));
  for (std::size_t i = 0; i < 7; ++i) {
    const std::int16_t d = i < img.dims.size() ? static_cast<std::int16_t>(img.dims[i]) : 1;
    put<std::int16_t>(buf, kOffDim + 2 * (i + 1), d);
  }
  put<std::int16_t>(buf, kOffDatatype, NiftiImage::kFloat32);
  put<std::int16_t>(buf, kOffBitpix, 32);
  put<float>(buf, kOffPixdim, 1.0f);  // qfac
  for (std::size_t i = 0; i < 7; ++i) {
    const float p = i < 3 ? static_cast<float>(img.voxel_size[i]) : 1.0f;
    put<float>(buf, kOffPixdim + 4 * (i + 1), p);
  }
  put<float>(buf, kOffVoxOffset, static_cast<float>(NiftiImage::kVoxOffset));
  put<float>(buf, kOffSclSlope, 1.0f);
  put<float>(buf, kOffSclInter, 0.0f);
  buf[kOffXyztUnits] = 2 | 8;  // mm, s
  const char descrip[] = "dwiratio";
  std::memcpy(buf.data() + kOffDescrip, descrip, sizeof descrip - 1);
  // Scanner-anchored sform: diagonal voxel size, no rotation.
  put<std::int16_t>(buf, kOffSformCode, 1);
  for (std::size_t r = 0; r < 3; ++r) {
    put<float>(buf, kOffSrowX + 16 * r + 4 * r, static_cast<float>(img.voxel_size[r]));
  }
  std::memcpy(buf.data() + kOffMagic, "n+1\0", 4);

  const std::size_t payload = img.data.size() * sizeof(float);
  buf.resize(NiftiImage::kVoxOffset + payload);
  std::memcpy(buf.data() + NiftiImage::kVoxOffset, img.data.data(), payload);
  return buf;
}

NiftiImage decode_nifti(std::string_view bytes) {
  if (bytes.size() < static_cast<std::size_t>(NiftiImage::kHeaderSize)) {
    throw Error(ErrorCode::BadHeaderSize,
                "sizeof_hdr: file holds " + std::to_string(bytes.size()) + " bytes, header needs 348");
  }
  const auto sizeof_hdr = get<std::int32_t>(bytes, kOffSizeofHdr);
  if (sizeof_hdr != NiftiImage::kHeaderSize) {
    const bool swapped = __builtin_bswap32(static_cast<std::uint32_t>(sizeof_hdr)) == 348u;
    throw Error(ErrorCode::BadHeaderSize, "sizeof_hdr = " + std::to_string(sizeof_hdr) +
                                              (swapped ? " (big-endian files are not supported)" : ""));
  }
  if (std::memcmp(bytes.data() + kOffMagic, "n+1\0", 4) != 0) {
    throw Error(ErrorCode::BadMagic, "magic is not \"n+1\\0\" (single-file NIfTI-1)");
  }
  const auto datatype = get<std::int16_t>(bytes, kOffDatatype);
  const auto bitpix = get<std::int16_t>(bytes, kOffBitpix);
  if (datatype != NiftiImage::kFloat32 || bitpix != 32) {
    throw Error(ErrorCode::UnsupportedDatatype, "datatype = " + std::to_string(datatype) + ", bitpix = " +
                                                    std::to_string(bitpix) + " (only float32, code 16)");
  }

  const auto ndim = get<std::int16_t>(bytes, kOffDim);
  if (ndim < 1 || ndim > 4) {
    throw Error(ErrorCode::BadDimensions, "dim[0] = " + std::to_string(ndim) + " (supported: 1 to 4)");
  }
  NiftiImage img;
  std::size_t count = 1;
  for (int i = 1; i <= ndim; ++i) {
    const auto d = get<std::int16_t>(bytes, kOffDim + 2 * static_cast<std::size_t>(i));
    if (d < 1) throw Error(ErrorCode::BadDimensions, "dim[" + std::to_string(i) + "] = " + std::to_string(d));
    img.dims.push_back(static_cast<std::size_t>(d));
    count *= static_cast<std::size_t>(d);
  }
  for (std::size_t i = 0; i < 3; ++i) {
    const float p = get<float>(bytes, kOffPixdim + 4 * (i + 1));
    img.voxel_size[i] = (std::isfinite(p) && p > 0.0f) ? static_cast<double>(p) : 1.0;
  }

  const float vox_offset = get<float>(bytes, kOffVoxOffset);
  if (!(vox_offset >= static_cast<float>(NiftiImage::kVoxOffset)) || vox_offset != std::floor(vox_offset) ||
      vox_offset > 1e9f) {
    throw Error(ErrorCode::BadHeaderSize, "vox_offset = " + std::to_string(vox_offset) + " (must be >= 352)");
  }
  const auto offset = static_cast<std::size_t>(vox_offset);
  const std::size_t payload = count * sizeof(float);
  if (bytes.size() < offset || bytes.size() - offset < payload) {
    throw Error(ErrorCode::TruncatedPayload, "dims need " + std::to_string(payload) + " payload bytes, file has " +
                                                 std::to_string(bytes.size() > offset ? bytes.size() - offset : 0));
  }
  img.data.resize(count);
  std::memcpy(img.data.data(), bytes.data() + offset, payload);

  const float slope = get<float>(bytes, kOffSclSlope);
  const float inter = get<float>(bytes, kOffSclInter);
  if (std::isfinite(slope) && std::isfinite(inter) && slope != 0.0f && (slope != 1.0f || inter != 0.0f)) {
    for (float& v : img.data) v = v * slope + inter;
  }
  return img;
}

void write_nifti(const std::filesystem::path& path, const NiftiImage& img) {
  atomic_write_file(path, encode_nifti(img));
}

void write_nifti(const std::filesystem::path& path, const Volume3D& vol, std::array<double, 3> voxel_size) {
  write_nifti(path, NiftiImage::from_volumes(std::span<const Volume3D>(&vol, 1), voxel_size));
}

NiftiImage read_nifti_image(const std::filesystem::path& path) { return decode_nifti(read_file(path)); }

NiftiVolume read_nifti(const std::filesystem::path& path) {
  auto img = read_nifti_image(path);
  if (img.volume_count() != 1) {
    throw Error(ErrorCode::BadDimensions,
                path.string() + " holds " + std::to_string(img.volume_count()) + " volumes, expected 1");
  }
  return {img.volume(0), img.voxel_size};
}

}  // namespace dwiratio
