#pragma once

#include "ssqp/common.hpp"
#include "ssqp/problem.hpp"

namespace ssqp {

/// Strongly convex quadratic subproblem
///   min 0.5 d^T B d + g^T d   s.t.  A d = b,  lb <= d <= ub,
/// with B symmetric and bounds possibly infinite.
struct QpProblem {
  Matrix B;   // d x d, symmetric
  Vector g;   // d
  Matrix A;   // me x d (me may be 0)
  Vector b;   // me
  Vector lb;  // d, -inf allowed
  Vector ub;  // d, +inf allowed

  Index dim() const { return g.size(); }
  Index num_eq() const { return b.size(); }
  void validate() const;
};

enum class QpStatus {
  Optimal,
  Infeasible,
  RankDeficient,
  IterationLimit,
  IndefiniteReduced,
};

const char* to_string(QpStatus status);

struct QpSolution {
  Vector d;
  Vector lambda;    // me
  Vector mu_lower;  // >= 0, nonzero only on active.at_lower
  Vector mu_upper;  // >= 0, nonzero only on active.at_upper
  ActiveSets active;
  QpStatus status = QpStatus::IterationLimit;
  double objective = 0.0;
  int iterations = 0;
};

/// Primal active-set solve. Exact active sets and the multipliers of the
/// final working set are reported; RankDeficient flags dependent active
/// constraint gradients. Infeasible means the equality/box system is empty
/// at the configured tolerance, signalling the caller to relax. A warm
/// working set (typically the previous subproblem's answer) skips phase 1
/// when its restricted solution is already box-feasible.
QpSolution solve_qp(const QpProblem& qp, double tol = 1e-9,
                    int max_iter = 500, const ActiveSets* warm = nullptr);

struct BclsResult {
  Vector z;
  double value = 0.0;  // minimal ||Mz - y||^2
};

/// Bound-constrained least squares: min ||Mz - y||^2 over lb <= z <= ub.
/// Equal bounds pin a variable. The free-set normal equations carry a 1e-12
/// Tikhonov ridge so semidefinite Gram systems resolve deterministically.
BclsResult solve_bcls(const Matrix& M, const Vector& y, const Vector& lb,
                      const Vector& ub);

/// Exhaustive active-set enumeration; ground-truth oracle for small
/// problems (d <= 6). Infinite bounds are never enumerated as active.
QpSolution brute_force_qp(const QpProblem& qp);

}  // namespace ssqp
