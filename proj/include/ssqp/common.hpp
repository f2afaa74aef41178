#pragma once

#include <Eigen/Dense>

#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

namespace ssqp {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;
using Index = Eigen::Index;

inline constexpr double kInf = std::numeric_limits<double>::infinity();

/// Error categories shared by the C++ exceptions and the C API status codes.
enum class ErrorCode {
  InvalidArgument,
  DimensionMismatch,
  NonFiniteValue,
  TolTooLarge,
  NoExactOracle,
  InvalidStepSize,
  TooLarge,
  EgmfcqFailure,
  QpFailure,
  NoConvergence,
  EmptyAccumulator,
  SingularH,
  NoAnalyticMoments,
  DomainError,
  NegativeVariance,
  NotPositiveDefinite,
  InvalidTrueParameter,
  InfeasibleGrossBound,
  UnknownBenchmark,
  NoAnalyticSolution,
  EmptyRecords,
  RaggedRows,
  NonNumericCell,
  EmptyFile,
  EmptySeries,
  NaNGuard,
  ConfigError,
  IoError,
};

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(what), code_(code) {}
  ErrorCode code() const { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& what) {
  throw Error(code, what);
}

inline void require(bool cond, ErrorCode code, const std::string& what) {
  if (!cond) fail(code, what);
}

inline bool all_finite(const Vector& v) { return v.allFinite(); }
inline bool all_finite(const Matrix& m) { return m.allFinite(); }

}  // namespace ssqp
