#pragma once

#include <filesystem>
#include <string>
#include <string_view>

namespace dwiratio {

/// Writes to a sibling temporary file, then renames over `path`. Throws IoFailure.
void atomic_write_file(const std::filesystem::path& path, std::string_view bytes);

/// Whole-file read. Throws IoFailure.
std::string read_file(const std::filesystem::path& path);

/// Shortest decimal text that parses back to the same double ("inf", "-inf", "nan" for non-finite).
std::string format_double(double v);

}  // namespace dwiratio
