#pragma once

#include <functional>
#include <vector>

#include "ssqp/common.hpp"
#include "ssqp/rng.hpp"

namespace ssqp {

/// Equality constraint evaluation: value c(x), Jacobian and the per-row
/// Hessians used when assembling the Lagrangian curvature.
struct ConstraintEval {
  Vector value;                 // m
  Matrix jacobian;              // m x d
  std::vector<Matrix> hessians; // m matrices, each d x d
};

/// One stochastic objective sample: F(x; zeta) with its derivatives.
struct SampleEval {
  double value = 0.0;
  Vector grad;
  Matrix hess;
};

/// Population (or full-batch empirical) objective quantities.
struct ExactEval {
  double value = 0.0;
  Vector grad;
  Matrix hess;
};

using ConstraintOracle = std::function<ConstraintEval(const Vector&)>;
using SampleOracle = std::function<SampleEval(const Vector&, RngStream&)>;
using ExactOracle = std::function<ExactEval(const Vector&)>;

/// A constrained stochastic problem: minimize E[F(x; zeta)] subject to
/// c(x) = 0 and elementwise bounds lower <= x <= upper (entries may be
/// infinite). Oracles must be pure; sampling randomness enters only through
/// the stream passed to the sample oracle. Immutable after construction and
/// safe to share across threads.
struct ProblemSpec {
  Index d = 0;
  Index m = 0;
  Vector lower;  // d, -inf allowed
  Vector upper;  // d, +inf allowed
  ConstraintOracle constraint_oracle;  // required when m > 0
  SampleOracle sample_oracle;
  ExactOracle exact_oracle;  // optional; empty when unavailable

  bool has_exact() const { return static_cast<bool>(exact_oracle); }
  void validate() const;
};

/// Primal-dual triple (x, lambda, mu1, mu2); mu entries at infinite bounds
/// are pinned to zero.
struct PrimalDual {
  Vector x;
  Vector lambda;
  Vector mu_lower;
  Vector mu_upper;

  static PrimalDual zeros(Index d, Index m) {
    PrimalDual pd;
    pd.x = Vector::Zero(d);
    pd.lambda = Vector::Zero(m);
    pd.mu_lower = Vector::Zero(d);
    pd.mu_upper = Vector::Zero(d);
    return pd;
  }
};

/// Sorted index sets of bound-active coordinates.
struct ActiveSets {
  std::vector<Index> at_lower;
  std::vector<Index> at_upper;

  Index total() const {
    return static_cast<Index>(at_lower.size() + at_upper.size());
  }
  bool operator==(const ActiveSets& other) const = default;
};

/// Evaluates the equality constraints and validates output shapes.
ConstraintEval eval_constraints(const ProblemSpec& p, const Vector& x);

/// Bound-activity detection: i is lower-active when x_i - lower_i <= tol and
/// upper-active when upper_i - x_i <= tol. tol = 0 gives the exact sets; a
/// positive tol gives the epsilon-neighborhood guess of the true active set.
ActiveSets active_sets(const Vector& x, const Vector& lower,
                       const Vector& upper, double tol);

/// Jacobian of the active constraints: rows of J_c, then -e_i for
/// lower-active i, then +e_i for upper-active i.
Matrix active_jacobian(const Matrix& constraint_jacobian,
                       const ActiveSets& active, Index d);

/// Gradient of the Lagrangian in x: g + J_c(x)^T lambda - mu1 + mu2.
Vector lagrangian_gradient(const ProblemSpec& p, const PrimalDual& pd,
                           const Vector& g);

/// Stacked KKT residual (stationarity; c(x); mu1 .* (l - x); mu2 .* (x - u)).
/// Hadamard blocks skip infinite-bound coordinates, where mu is pinned to 0.
Vector kkt_residual(const ProblemSpec& p, const PrimalDual& pd,
                    const Vector& g);

/// Penalized merit f(x) + rho * ||c(x)||; requires the exact oracle.
double merit(const ProblemSpec& p, const Vector& x, double rho);

struct FiniteDifferenceReport {
  double max_grad_rel_err = 0.0;
  double max_hess_rel_err = 0.0;
};

/// Central-difference validation of the analytic oracles (objective gradient
/// and Hessian, constraint Jacobian and Hessians) at x with step h.
FiniteDifferenceReport finite_difference_check(const ProblemSpec& p,
                                               const Vector& x, double h);

}  // namespace ssqp
