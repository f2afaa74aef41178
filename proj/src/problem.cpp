#include "ssqp/problem.hpp"

#include <algorithm>
#include <cmath>

namespace ssqp {

void ProblemSpec::validate() const {
  require(d >= 1, ErrorCode::InvalidArgument, "ProblemSpec: d must be >= 1");
  require(m >= 0, ErrorCode::InvalidArgument, "ProblemSpec: m must be >= 0");
  require(lower.size() == d && upper.size() == d,
          ErrorCode::DimensionMismatch, "ProblemSpec: bound sizes != d");
  for (Index i = 0; i < d; ++i) {
    require(lower[i] < upper[i], ErrorCode::InvalidArgument,
            "ProblemSpec: lower must be strictly below upper (encode equal "
            "bounds as an equality constraint)");
  }
  require(m == 0 || static_cast<bool>(constraint_oracle),
          ErrorCode::InvalidArgument,
          "ProblemSpec: constraint oracle missing with m > 0");
  require(static_cast<bool>(sample_oracle), ErrorCode::InvalidArgument,
          "ProblemSpec: sample oracle missing");
}

ConstraintEval eval_constraints(const ProblemSpec& p, const Vector& x) {
  require(x.size() == p.d, ErrorCode::DimensionMismatch,
          "eval_constraints: x has wrong length");
  require(all_finite(x), ErrorCode::NonFiniteValue,
          "eval_constraints: x must be finite");
  if (p.m == 0) {
    ConstraintEval out;
    out.value = Vector::Zero(0);
    out.jacobian = Matrix::Zero(0, p.d);
    return out;
  }
  ConstraintEval out = p.constraint_oracle(x);
  require(out.value.size() == p.m, ErrorCode::DimensionMismatch,
          "constraint oracle: value has wrong length");
  require(out.jacobian.rows() == p.m && out.jacobian.cols() == p.d,
          ErrorCode::DimensionMismatch,
          "constraint oracle: Jacobian has wrong shape");
  require(static_cast<Index>(out.hessians.size()) == p.m,
          ErrorCode::DimensionMismatch,
          "constraint oracle: wrong number of Hessians");
  for (const Matrix& h : out.hessians) {
    require(h.rows() == p.d && h.cols() == p.d, ErrorCode::DimensionMismatch,
            "constraint oracle: Hessian has wrong shape");
    require(all_finite(h), ErrorCode::NonFiniteValue,
            "constraint oracle: non-finite Hessian");
  }
  require(all_finite(out.value) && all_finite(out.jacobian),
          ErrorCode::NonFiniteValue, "constraint oracle: non-finite output");
  return out;
}

ActiveSets active_sets(const Vector& x, const Vector& lower,
                       const Vector& upper, double tol) {
  const Index d = x.size();
  require(lower.size() == d && upper.size() == d,
          ErrorCode::DimensionMismatch, "active_sets: size mismatch");
  require(tol >= 0.0, ErrorCode::InvalidArgument,
          "active_sets: tol must be nonnegative");
  for (Index i = 0; i < d; ++i) {
    if (std::isfinite(lower[i]) && std::isfinite(upper[i])) {
      require(tol < 0.5 * (upper[i] - lower[i]), ErrorCode::TolTooLarge,
              "active_sets: tol would admit a coordinate in both sets");
    }
  }
  ActiveSets out;
  for (Index i = 0; i < d; ++i) {
    if (std::isfinite(lower[i]) && x[i] - lower[i] <= tol) {
      out.at_lower.push_back(i);
    }
    if (std::isfinite(upper[i]) && upper[i] - x[i] <= tol) {
      out.at_upper.push_back(i);
    }
  }
  return out;
}

Matrix active_jacobian(const Matrix& constraint_jacobian,
                       const ActiveSets& active, Index d) {
  const Index m = constraint_jacobian.rows();
  Matrix jac = Matrix::Zero(m + active.total(), d);
  jac.topRows(m) = constraint_jacobian;
  Index row = m;
  for (Index i : active.at_lower) jac(row++, i) = -1.0;
  for (Index i : active.at_upper) jac(row++, i) = 1.0;
  return jac;
}

Vector lagrangian_gradient(const ProblemSpec& p, const PrimalDual& pd,
                           const Vector& g) {
  require(g.size() == p.d && pd.x.size() == p.d,
          ErrorCode::DimensionMismatch, "lagrangian_gradient: size mismatch");
  require(pd.lambda.size() == p.m, ErrorCode::DimensionMismatch,
          "lagrangian_gradient: lambda size mismatch");
  Vector out = g - pd.mu_lower + pd.mu_upper;
  if (p.m > 0) {
    const ConstraintEval ce = eval_constraints(p, pd.x);
    out += ce.jacobian.transpose() * pd.lambda;
  }
  return out;
}

Vector kkt_residual(const ProblemSpec& p, const PrimalDual& pd,
                    const Vector& g) {
  const Index d = p.d;
  const Index m = p.m;
  Vector res(d + m + 2 * d);
  res.head(d) = lagrangian_gradient(p, pd, g);
  if (m > 0) {
    res.segment(d, m) = eval_constraints(p, pd.x).value;
  }
  for (Index i = 0; i < d; ++i) {
    const bool fin_lo = std::isfinite(p.lower[i]);
    const bool fin_up = std::isfinite(p.upper[i]);
    res[d + m + i] = fin_lo ? pd.mu_lower[i] * (p.lower[i] - pd.x[i]) : 0.0;
    res[d + m + d + i] = fin_up ? pd.mu_upper[i] * (pd.x[i] - p.upper[i]) : 0.0;
  }
  require(all_finite(res), ErrorCode::NonFiniteValue,
          "kkt_residual: non-finite entries");
  return res;
}

double merit(const ProblemSpec& p, const Vector& x, double rho) {
  require(rho > 0.0, ErrorCode::InvalidArgument, "merit: rho must be > 0");
  require(p.has_exact(), ErrorCode::NoExactOracle,
          "merit: exact oracle unavailable");
  const double f = p.exact_oracle(x).value;
  double cnorm = 0.0;
  if (p.m > 0) cnorm = eval_constraints(p, x).value.norm();
  return f + rho * cnorm;
}

namespace {

double rel_err(const Vector& approx, const Vector& exact) {
  const double scale = std::max(1.0, exact.lpNorm<Eigen::Infinity>());
  return (approx - exact).lpNorm<Eigen::Infinity>() / scale;
}

double rel_err(const Matrix& approx, const Matrix& exact) {
  if (exact.size() == 0) return 0.0;
  const double scale = std::max(1.0, exact.cwiseAbs().maxCoeff());
  return (approx - exact).cwiseAbs().maxCoeff() / scale;
}

}  // namespace

FiniteDifferenceReport finite_difference_check(const ProblemSpec& p,
                                               const Vector& x, double h) {
  require(h > 0.0 && h <= 1e-3, ErrorCode::InvalidStepSize,
          "finite_difference_check: h must be in (0, 1e-3]");
  require(p.has_exact(), ErrorCode::NoExactOracle,
          "finite_difference_check: exact oracle required");
  const Index d = p.d;
  FiniteDifferenceReport report;

  const ExactEval base = p.exact_oracle(x);
  Vector grad_fd(d);
  Matrix hess_fd(d, d);
  for (Index i = 0; i < d; ++i) {
    Vector xp = x, xm = x;
    xp[i] += h;
    xm[i] -= h;
    const ExactEval ep = p.exact_oracle(xp);
    const ExactEval em = p.exact_oracle(xm);
    grad_fd[i] = (ep.value - em.value) / (2.0 * h);
    hess_fd.col(i) = (ep.grad - em.grad) / (2.0 * h);
  }
  report.max_grad_rel_err = rel_err(grad_fd, base.grad);
  report.max_hess_rel_err =
      rel_err(Matrix(0.5 * (hess_fd + hess_fd.transpose())), base.hess);

  if (p.m > 0) {
    const ConstraintEval ce = eval_constraints(p, x);
    Matrix jac_fd(p.m, d);
    std::vector<Matrix> hess_c_fd(p.m, Matrix(d, d));
    for (Index i = 0; i < d; ++i) {
      Vector xp = x, xm = x;
      xp[i] += h;
      xm[i] -= h;
      const ConstraintEval cp = eval_constraints(p, xp);
      const ConstraintEval cm = eval_constraints(p, xm);
      jac_fd.col(i) = (cp.value - cm.value) / (2.0 * h);
      for (Index r = 0; r < p.m; ++r) {
        hess_c_fd[r].col(i) =
            (cp.jacobian.row(r) - cm.jacobian.row(r)).transpose() / (2.0 * h);
      }
    }
    report.max_grad_rel_err =
        std::max(report.max_grad_rel_err, rel_err(jac_fd, ce.jacobian));
    for (Index r = 0; r < p.m; ++r) {
      const Matrix sym = 0.5 * (hess_c_fd[r] + hess_c_fd[r].transpose());
      report.max_hess_rel_err =
          std::max(report.max_hess_rel_err, rel_err(sym, ce.hessians[r]));
    }
  }
  return report;
}

}  // namespace ssqp
