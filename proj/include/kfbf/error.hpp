#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace kfbf {

/// Base for every error raised by the library. The CLI maps the concrete
/// subclasses onto process exit codes.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Tensor or matrix shapes that do not agree.
class DimensionError : public Error {
 public:
  using Error::Error;
};

/// Non-finite values where finite ones are required.
class NumericError : public Error {
 public:
  using Error::Error;
};

/// A violated precondition on a public operation (bad argument, K or N_T
/// mismatch between model and data, non-scalar loss, ...).
class ContractError : public Error {
 public:
  using Error::Error;
};

/// Malformed dataset / checkpoint / config file. Carries the byte offset at
/// which the problem was detected.
class FormatError : public Error {
 public:
  FormatError(const std::string& what, std::uint64_t offset)
      : Error(what + " (at byte offset " + std::to_string(offset) + ")"), offset_(offset) {}

  std::uint64_t offset() const noexcept { return offset_; }

 private:
  std::uint64_t offset_;
};

}  // namespace kfbf
