#include "dkf/errors.hpp"

namespace dkf {

std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kInvalidArgument: return "InvalidArgument";
    case ErrorKind::kNonStationary: return "NonStationary";
    case ErrorKind::kRankDeficient: return "RankDeficient";
    case ErrorKind::kSingularInnovation: return "SingularInnovation";
    case ErrorKind::kJacobianUnavailable: return "JacobianUnavailable";
    case ErrorKind::kCholeskyFailure: return "CholeskyFailure";
    case ErrorKind::kInvalidPosterior: return "InvalidPosterior";
    case ErrorKind::kNoConvergence: return "NoConvergence";
    case ErrorKind::kFitFailure: return "FitFailure";
    case ErrorKind::kInsufficientData: return "InsufficientData";
    case ErrorKind::kDegenerateDensity: return "DegenerateDensity";
    case ErrorKind::kZeroVariance: return "ZeroVariance";
    case ErrorKind::kSchemaMismatch: return "SchemaMismatch";
    case ErrorKind::kNonFinite: return "NonFinite";
    case ErrorKind::kEmptyAfterLag: return "EmptyAfterLag";
    case ErrorKind::kIoError: return "IoError";
  }
  return "Unknown";
}

}  // namespace dkf
