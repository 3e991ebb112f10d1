#include "dwiratio/error.hpp"

namespace dwiratio {

std::string_view error_name(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::ZeroDirection: return "ZeroDirection";
    case ErrorCode::RankDeficientScheme: return "RankDeficientScheme";
    case ErrorCode::NonPositiveS0: return "NonPositiveS0";
    case ErrorCode::LengthMismatch: return "LengthMismatch";
    case ErrorCode::NonPositiveInput: return "NonPositiveInput";
    case ErrorCode::DimMismatch: return "DimMismatch";
    case ErrorCode::InvalidSpec: return "InvalidSpec";
    case ErrorCode::NonDivisibleDim: return "NonDivisibleDim";
    case ErrorCode::DegenerateB0: return "DegenerateB0";
    case ErrorCode::InvalidSplit: return "InvalidSplit";
    case ErrorCode::StaleCache: return "StaleCache";
    case ErrorCode::ShapeMismatch: return "ShapeMismatch";
    case ErrorCode::EmptyDataset: return "EmptyDataset";
    case ErrorCode::IoFailure: return "IoFailure";
    case ErrorCode::BadMagic: return "BadMagic";
    case ErrorCode::BadHeaderSize: return "BadHeaderSize";
    case ErrorCode::UnsupportedDatatype: return "UnsupportedDatatype";
    case ErrorCode::BadDimensions: return "BadDimensions";
    case ErrorCode::TruncatedPayload: return "TruncatedPayload";
    case ErrorCode::ColumnCountMismatch: return "ColumnCountMismatch";
    case ErrorCode::NonUnitDirection: return "NonUnitDirection";
    case ErrorCode::ParseError: return "ParseError";
    case ErrorCode::InvalidConfig: return "InvalidConfig";
  }
  return "UnknownError";
}

}  // namespace dwiratio
