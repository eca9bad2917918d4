#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace spdsemg {

enum class ErrorCode {
  InvalidInput,
  NotPositiveDefinite,
  RankDeficient,
  InvalidDiagonal,
  WindowTooLong,
  TrainingDiverged,
  OdeDiverged,
  DegenerateInput,
  FormatError,
  UnsupportedVersion,
  ConfigError,
};

std::string_view to_string(ErrorCode code);

/// Exception type thrown by every module. The code identifies the failure
/// class so callers (and the CLI) can react without parsing messages.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& what) {
  throw Error(code, what);
}

inline void require(bool ok, ErrorCode code, const std::string& what) {
  if (!ok) fail(code, what);
}

}  // namespace spdsemg
