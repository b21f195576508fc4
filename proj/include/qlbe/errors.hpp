#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace qlbe {

enum class ErrorKind {
  InvalidArgument,
  ZeroAxis,
  OffShell,
  CutoffTooSmall,
  QuadratureNotConverged,
  UnsupportedVariant,
  SingularQ,
  OffPlane,
  StepTooLarge,
  EnvelopeExceeded,
  FitIllConditioned,
  GridTooSmall,
  StepUnstable,
  WrongModel,
  RoutesDisagree,
  Config,
};

std::string_view to_string(ErrorKind kind);

// True for failures of a numerical procedure (as opposed to bad input).
bool is_numerical(ErrorKind kind);

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(std::string(to_string(kind)) + ": " + what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& what) { throw Error(kind, what); }

}  // namespace qlbe
