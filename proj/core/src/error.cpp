#include "cbfmeta/error.hpp"

namespace cbfmeta {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::SamplingBudgetExceeded: return "SamplingBudgetExceeded";
    case ErrorCode::WrongKind: return "WrongKind";
    case ErrorCode::InsufficientNeighbors: return "InsufficientNeighbors";
    case ErrorCode::FormatMismatch: return "FormatMismatch";
    case ErrorCode::NumericalBreakdown: return "NumericalBreakdown";
    case ErrorCode::DomainError: return "DomainError";
    case ErrorCode::NearSingularNorm: return "NearSingularNorm";
    case ErrorCode::EmptyTask: return "EmptyTask";
    case ErrorCode::DegenerateRow: return "DegenerateRow";
    case ErrorCode::IllConditioned: return "IllConditioned";
    case ErrorCode::NonFiniteLoss: return "NonFiniteLoss";
    case ErrorCode::ConfigInvalid: return "ConfigInvalid";
    case ErrorCode::ArtifactWriteFailure: return "ArtifactWriteFailure";
    case ErrorCode::OutOfBounds: return "OutOfBounds";
  }
  return "Unknown";
}

}  // namespace cbfmeta
