#pragma once

#include <stdexcept>
#include <string>

namespace tvlab {

/// Shape / index mismatch in a tensor or model operation.
struct DimensionError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// A documented precondition or invariant was violated by the caller.
struct ContractError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Bad configuration value (names the offending key where possible).
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// File-level failure: missing file, bad magic, truncation. Carries a byte
/// offset when the failure is positional.
struct IoError : std::runtime_error {
  explicit IoError(const std::string& msg, long long offset = -1)
      : std::runtime_error(offset >= 0 ? msg + " (offset " + std::to_string(offset) + ")"
                                       : msg),
        offset_(offset) {}
  long long offset() const { return offset_; }

 private:
  long long offset_;
};

}  // namespace tvlab
