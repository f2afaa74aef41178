#pragma once

#include "ssqp/common.hpp"
#include "ssqp/problem.hpp"

namespace ssqp {

/// Running mean and raw second moment of the stochastic gradients seen so
/// far; divide-by-count normalization throughout.
struct CovarianceAccumulator {
  long count = 0;
  Vector mean;
  Matrix second_moment;  // sum of outer products

  void accumulate(const Vector& grad_sample);
  static CovarianceAccumulator merged(const CovarianceAccumulator& a,
                                      const CovarianceAccumulator& b);
};

Matrix sample_covariance(const CovarianceAccumulator& acc);

/// Plug-in sandwich: H is the bordered matrix of the averaged Hessian and
/// the active-constraint Jacobian, Sigma the zero-padded gradient
/// covariance, Omega = H^-1 Sigma H^-1.
struct PluginCovariance {
  Matrix H;
  Matrix Sigma;
  Matrix Omega;
  ActiveSets active;
};

PluginCovariance plugin_omega(const Matrix& hess_step,
                              const Matrix& jac_active,
                              const Matrix& cov_grad,
                              const ActiveSets& active = {});

/// Ground-truth sandwich assembled from population moments, plus the
/// normality scaling constant (0.5 below the critical stepsize exponent,
/// iota1/(2 iota1 - 1) at it).
struct OracleCovariance {
  Matrix H;
  Matrix Sigma;
  Matrix Omega;
  double eta = 0.5;
};

OracleCovariance oracle_omega(const Matrix& hess_lagrangian,
                              const Matrix& jac_active,
                              const Matrix& cov_grad, double b1, double iota1);

/// Inverse standard-normal CDF, absolute error <= 1e-8.
double normal_quantile(double prob);

/// Inverse chi-squared CDF, absolute error <= 1e-8.
double chi2_quantile(int dof, double prob);

/// Regularized lower incomplete gamma P(a, x); exposed for validation.
double regularized_gamma_p(double a, double x);

struct Interval {
  double lo = 0.0;
  double hi = 0.0;
  double length() const { return hi - lo; }
  bool contains(double v) const { return lo <= v && v <= hi; }
};

/// Two-sided interval for the functional v^T w with variance
/// alpha_bar * v^T Omega v.
Interval confidence_interval(const Vector& w, const Matrix& omega,
                             double alpha_bar, const Vector& v, double level);

/// Two-sided p-value for v^T w* = null_value under the same variance.
double two_sided_p_value(const Vector& w, const Matrix& omega,
                         double alpha_bar, const Vector& v,
                         double null_value);

struct RegionCheck {
  bool inside = false;
  double statistic = 0.0;
  Index rank = 0;
  Index dof_used = 0;
  bool rank_mismatch = false;
};

/// Ellipsoidal confidence-region membership via the pseudo-inverse
/// quadratic form; dof defaults to the primal dimension and falls back to
/// the estimated rank when they disagree.
RegionCheck region_membership(const Vector& w_cand, const Vector& w_k,
                              const Matrix& omega, double alpha_bar,
                              double level, Index expected_dof = -1);

}  // namespace ssqp
