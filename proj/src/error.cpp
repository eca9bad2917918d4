#include "spdsemg/error.hpp"

namespace spdsemg {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::InvalidInput: return "InvalidInput";
    case ErrorCode::NotPositiveDefinite: return "NotPositiveDefinite";
    case ErrorCode::RankDeficient: return "RankDeficient";
    case ErrorCode::InvalidDiagonal: return "InvalidDiagonal";
    case ErrorCode::WindowTooLong: return "WindowTooLong";
    case ErrorCode::TrainingDiverged: return "TrainingDiverged";
    case ErrorCode::OdeDiverged: return "OdeDiverged";
    case ErrorCode::DegenerateInput: return "DegenerateInput";
    case ErrorCode::FormatError: return "FormatError";
    case ErrorCode::UnsupportedVersion: return "UnsupportedVersion";
    case ErrorCode::ConfigError: return "ConfigError";
  }
  return "Unknown";
}

}  // namespace spdsemg
