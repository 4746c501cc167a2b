#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace ddmech {

enum class ErrorKind {
  NonSpd,
  Singular,
  DomainError,
  DegenerateRange,
  DivideByZero,
  NonFinite,
  DegenerateElement,
  NoConvergence,
  NotConverged,
  DimensionMismatch,
  MeshMismatch,
  InvalidArgument,
  Io,
};

std::string_view to_string(ErrorKind kind);

/// Single exception type for the library; callers dispatch on kind().
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(std::string(to_string(kind)) + ": " + what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

}  // namespace ddmech
