#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace cbfmeta {

enum class ErrorCode {
  SamplingBudgetExceeded,
  WrongKind,
  InsufficientNeighbors,
  FormatMismatch,
  NumericalBreakdown,
  DomainError,
  NearSingularNorm,
  EmptyTask,
  DegenerateRow,
  IllConditioned,
  NonFiniteLoss,
  ConfigInvalid,
  ArtifactWriteFailure,
  OutOfBounds,
};

std::string_view to_string(ErrorCode code);

/// Every recoverable failure in the library is reported as an Error carrying
/// a machine-readable code; the CLI maps it to its error JSON.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace cbfmeta
