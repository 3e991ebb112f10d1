#pragma once

#include <filesystem>
#include <string>
#include <string_view>

#include "dwiratio/diffusion.hpp"

namespace dwiratio {

/// Tolerance on |g| for diffusion-weighted columns; vectors inside it are renormalized.
inline constexpr double kDirectionNormTolerance = 1e-3;

/// FSL text: bval is one row of b-values, bvec three rows (x, y, z).
/// Throws ParseError, ColumnCountMismatch or NonUnitDirection.
GradientScheme parse_scheme(std::string_view bval_text, std::string_view bvec_text);
GradientScheme read_scheme(const std::filesystem::path& bval_path, const std::filesystem::path& bvec_path);

struct SchemeText {
  std::string bval;
  std::string bvec;
};
/// b = 0 columns are written as zero vectors.
SchemeText format_scheme(const GradientScheme& scheme);
void write_scheme(const GradientScheme& scheme, const std::filesystem::path& bval_path,
                  const std::filesystem::path& bvec_path);

}  // namespace dwiratio
