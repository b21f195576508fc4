#include "qlbe/errors.hpp"

namespace qlbe {

std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::InvalidArgument: return "InvalidArgument";
    case ErrorKind::ZeroAxis: return "ZeroAxis";
    case ErrorKind::OffShell: return "OffShell";
    case ErrorKind::CutoffTooSmall: return "CutoffTooSmall";
    case ErrorKind::QuadratureNotConverged: return "QuadratureNotConverged";
    case ErrorKind::UnsupportedVariant: return "UnsupportedVariant";
    case ErrorKind::SingularQ: return "SingularQ";
    case ErrorKind::OffPlane: return "OffPlane";
    case ErrorKind::StepTooLarge: return "StepTooLarge";
    case ErrorKind::EnvelopeExceeded: return "EnvelopeExceeded";
    case ErrorKind::FitIllConditioned: return "FitIllConditioned";
    case ErrorKind::GridTooSmall: return "GridTooSmall";
    case ErrorKind::StepUnstable: return "StepUnstable";
    case ErrorKind::WrongModel: return "WrongModel";
    case ErrorKind::RoutesDisagree: return "RoutesDisagree";
    case ErrorKind::Config: return "Config";
  }
  return "Unknown";
}

bool is_numerical(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::QuadratureNotConverged:
    case ErrorKind::CutoffTooSmall:
    case ErrorKind::StepTooLarge:
    case ErrorKind::EnvelopeExceeded:
    case ErrorKind::FitIllConditioned:
    case ErrorKind::GridTooSmall:
    case ErrorKind::StepUnstable:
    case ErrorKind::RoutesDisagree:
      return true;
    default:
      return false;
  }
}

}  // namespace qlbe
