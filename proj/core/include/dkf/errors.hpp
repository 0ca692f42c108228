#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace dkf {

enum class ErrorKind {
  kInvalidArgument,
  kNonStationary,
  kRankDeficient,
  kSingularInnovation,
  kJacobianUnavailable,
  kCholeskyFailure,
  kInvalidPosterior,
  kNoConvergence,
  kFitFailure,
  kInsufficientData,
  kDegenerateDensity,
  kZeroVariance,
  kSchemaMismatch,
  kNonFinite,
  kEmptyAfterLag,
  kIoError,
};

std::string_view to_string(ErrorKind kind);

// Every failure raised by the library carries a machine-readable kind so the
// CLI can print a stable error line.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(message), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

// Raised by run_filter when a step fails; keeps the failing time index.
class FilterStepError : public Error {
 public:
  FilterStepError(ErrorKind kind, const std::string& message, long time_index)
      : Error(kind, message), time_index_(time_index) {}

  long time_index() const noexcept { return time_index_; }

 private:
  long time_index_;
};

// NonFinite ingestion errors keep the 1-based data row number.
class NonFiniteError : public Error {
 public:
  NonFiniteError(const std::string& message, long row)
      : Error(ErrorKind::kNonFinite, message), row_(row) {}

  long row() const noexcept { return row_; }

 private:
  long row_;
};

}  // namespace dkf
