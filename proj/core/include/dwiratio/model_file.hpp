#pragma once

#include <filesystem>
#include <string>
#include <string_view>

#include "dwiratio/network.hpp"

namespace dwiratio {

/// Binary container for network parameters:
///   8-byte magic "DWRMODEL", u32 version (1), u32 tensor count,
///   per tensor: u32 rank then rank x u32 extents,
///   then every tensor's values as little-endian float64.
inline constexpr std::string_view kModelMagic = "DWRMODEL";
inline constexpr std::uint32_t kModelVersion = 1;

std::string encode_model(const ConvNetParams& params);
/// Throws BadMagic, ParseError (version), ShapeMismatch or TruncatedPayload.
ConvNetParams decode_model(std::string_view bytes);

void save_model(const ConvNetParams& params, const std::filesystem::path& path);
ConvNetParams load_model(const std::filesystem::path& path);

}  // namespace dwiratio
