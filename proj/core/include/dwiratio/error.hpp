#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace dwiratio {

enum class ErrorCode {
  // diffusion
  ZeroDirection,
  RankDeficientScheme,
  NonPositiveS0,
  LengthMismatch,
  NonPositiveInput,
  // losses
  DimMismatch,
  // phantom / dataset
  InvalidSpec,
  NonDivisibleDim,
  DegenerateB0,
  InvalidSplit,
  // trainer
  StaleCache,
  ShapeMismatch,
  EmptyDataset,
  // io
  IoFailure,
  BadMagic,
  BadHeaderSize,
  UnsupportedDatatype,
  BadDimensions,
  TruncatedPayload,
  ColumnCountMismatch,
  NonUnitDirection,
  ParseError,
  InvalidConfig,
};

std::string_view error_name(ErrorCode code) noexcept;

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& detail)
      : std::runtime_error(std::string(error_name(code)) + ": " + detail), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace dwiratio
