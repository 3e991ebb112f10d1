#pragma once

#include <ostream>
#include <span>
#include <string>

namespace dwiratio::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 1;
inline constexpr int kExitDataError = 2;

/// Environment variable that overrides the configured output directory (--out still wins).
inline constexpr const char* kOutputDirEnv = "DWIRATIO_OUTPUT_DIR";

/// Runs one subcommand. `args` excludes the program name.
int dispatch(std::span<const std::string> args, std::ostream& out, std::ostream& err);

}  // namespace dwiratio::cli
