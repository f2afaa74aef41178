#include "ssqp/engine.hpp"

#include <algorithm>
#include <cmath>

namespace ssqp {

namespace {

constexpr double kFeasFactor = 1e-16;  // relaxation check: value <= this * max(1,||y||^2)

double feasibility_value(const ConstraintEval& ce, double theta,
                         const Vector& x, const ProblemSpec& p) {
  const Vector target = -theta * ce.value;
  const BclsResult r =
      solve_bcls(ce.jacobian, target, p.lower - x, p.upper - x);
  return r.value - kFeasFactor * std::max(1.0, target.squaredNorm());
}

double select_theta_impl(const ConstraintEval& ce, const ProblemSpec& p,
                         const Vector& x, const SsqpConfig& cfg) {
  double theta = 1.0;
  while (theta >= cfg.theta_min * (1.0 - 1e-12)) {
    if (feasibility_value(ce, theta, x, p) <= 0.0) return theta;
    theta *= cfg.tau;
  }
  fail(ErrorCode::EgmfcqFailure,
       "select_theta: relaxation dropped below theta_min; constraint "
       "qualification appears to fail near the current iterate");
}

Matrix assemble_curvature(const Matrix& hess_avg, const Vector& lambda,
                          const ConstraintEval& ce) {
  Matrix m = hess_avg;
  for (Index i = 0; i < lambda.size(); ++i) m += lambda[i] * ce.hessians[i];
  return 0.5 * (m + m.transpose());
}

// Smallest eigenvalue of Z' M Z with Z an orthonormal basis of the null
// space of (J_c; bound rows). The bound rows are unit vectors, so they only
// delete coordinates; the factorization runs on the surviving columns of
// the constraint Jacobian.
double min_reduced_eigenvalue(const Matrix& m, const Matrix& jac_c,
                              const ActiveSets& eps_sets) {
  const Index d = m.rows();
  std::vector<char> dropped(d, 0);
  for (Index i : eps_sets.at_lower) dropped[i] = 1;
  for (Index i : eps_sets.at_upper) dropped[i] = 1;
  std::vector<Index> keep;
  keep.reserve(d);
  for (Index i = 0; i < d; ++i) {
    if (!dropped[i]) keep.push_back(i);
  }
  const Index nk = static_cast<Index>(keep.size());
  if (nk == 0) return kInf;

  Matrix m_kk(nk, nk);
  for (Index r = 0; r < nk; ++r)
    for (Index c = 0; c < nk; ++c) m_kk(r, c) = m(keep[r], keep[c]);

  if (jac_c.rows() == 0) {
    return Eigen::SelfAdjointEigenSolver<Matrix>(m_kk, Eigen::EigenvaluesOnly)
        .eigenvalues()
        .minCoeff();
  }
  Matrix jac_k(jac_c.rows(), nk);
  for (Index c = 0; c < nk; ++c) jac_k.col(c) = jac_c.col(keep[c]);
  Eigen::ColPivHouseholderQR<Matrix> qr(jac_k.transpose());
  qr.setThreshold(1e-10);
  const Index nz = nk - qr.rank();
  if (nz == 0) return kInf;  // null space trivial, nothing to floor
  const Matrix q_full = qr.householderQ();
  const Matrix z = q_full.rightCols(nz);
  const Matrix reduced = z.transpose() * m_kk * z;
  return Eigen::SelfAdjointEigenSolver<Matrix>(reduced, Eigen::EigenvaluesOnly)
      .eigenvalues()
      .minCoeff();
}

Matrix cap_spectrum(const Matrix& m, double kappa_max) {
  // Gershgorin screen avoids the eigendecomposition in the common case.
  double bound = 0.0;
  for (Index i = 0; i < m.rows(); ++i) bound = std::max(bound, m.row(i).cwiseAbs().sum());
  if (bound <= kappa_max) return m;
  Eigen::SelfAdjointEigenSolver<Matrix> es(m);
  if (es.eigenvalues().maxCoeff() <= kappa_max) return m;
  const Vector capped = es.eigenvalues().cwiseMin(kappa_max);
  return es.eigenvectors() * capped.asDiagonal() * es.eigenvectors().transpose();
}

}  // namespace

void SsqpConfig::validate(bool for_inference) const {
  require(iota1 > 0 && iota2 > 0 && iota3 > 0, ErrorCode::ConfigError,
          "SsqpConfig: schedule scales must be positive");
  require(b1 > 0 && b1 <= 1 && b2 > 0 && b2 <= 1 && b3 > 0 && b3 <= 1,
          ErrorCode::ConfigError,
          "SsqpConfig: schedule exponents must lie in (0, 1]");
  require(tau > 0 && tau < 1, ErrorCode::ConfigError,
          "SsqpConfig: tau must lie in (0, 1)");
  require(psi >= 0 && p_adapt >= 1, ErrorCode::ConfigError,
          "SsqpConfig: psi >= 0 and p_adapt >= 1 required");
  require(theta_min > 0 && eps_active > 0 && omega > 0 && kappa_max > 0,
          ErrorCode::ConfigError,
          "SsqpConfig: theta_min, eps_active, omega, kappa_max must be > 0");
  if (for_inference) {
    require(b2 > 0.5 && b2 < b1, ErrorCode::ConfigError,
            "SsqpConfig: inference requires 0.5 < b2 < b1");
    require(b3 > 0.5, ErrorCode::ConfigError,
            "SsqpConfig: inference requires b3 > 0.5");
  }
}

Schedules schedules(long k, const SsqpConfig& cfg) {
  require(k >= 0, ErrorCode::InvalidArgument, "schedules: k must be >= 0");
  const double base = static_cast<double>(k + 1);
  Schedules out;
  out.alpha = cfg.iota1 * std::pow(base, -cfg.b1);
  out.beta = std::min(1.0, cfg.iota2 * std::pow(base, -cfg.b2));
  out.gamma = std::min(1.0, cfg.iota3 * std::pow(base, -cfg.b3));
  return out;
}

double select_theta(const ProblemSpec& p, const Vector& x,
                    const SsqpConfig& cfg) {
  if (p.m == 0) return 1.0;
  const ConstraintEval ce = eval_constraints(p, x);
  return select_theta_impl(ce, p, x, cfg);
}

void update_averages(Vector& grad_avg, Matrix& hess_avg,
                     const Vector& grad_sample, const Matrix& hess_sample,
                     double beta, double gamma) {
  require(beta > 0 && beta <= 1 && gamma > 0 && gamma <= 1,
          ErrorCode::InvalidArgument,
          "update_averages: weights must lie in (0, 1]");
  if (grad_avg.size() == 0) {
    grad_avg = grad_sample;
  } else {
    grad_avg = (1.0 - beta) * grad_avg + beta * grad_sample;
  }
  if (hess_avg.size() == 0) {
    hess_avg = hess_sample;
  } else {
    hess_avg = (1.0 - gamma) * hess_avg + gamma * hess_sample;
  }
}

HessianBuild build_hessian(const Matrix& hess_avg, const Vector& lambda,
                           const ConstraintEval& constraints, const Vector& x,
                           const ProblemSpec& p, const SsqpConfig& cfg) {
  HessianBuild out;
  if (cfg.hessian_mode == HessianMode::Identity) {
    out.B = Matrix::Identity(p.d, p.d);
    out.shift_delta = 0.0;
    return out;
  }
  const Matrix m = assemble_curvature(hess_avg, lambda, constraints);
  const ActiveSets eps_sets =
      active_sets(x, p.lower, p.upper, cfg.eps_active);
  const double lam_min =
      min_reduced_eigenvalue(m, constraints.jacobian, eps_sets);
  out.shift_delta = std::max(0.0, cfg.omega - lam_min);
  out.B = m;
  if (out.shift_delta > 0.0) out.B.diagonal().array() += out.shift_delta;
  out.B = cap_spectrum(out.B, cfg.kappa_max);
  return out;
}

double adaptive_stepsize(double alpha, const SsqpConfig& cfg,
                         RngStream& rng) {
  require(alpha > 0.0, ErrorCode::InvalidArgument,
          "adaptive_stepsize: alpha must be positive");
  if (cfg.stepsize_mode == StepsizeMode::Deterministic || cfg.psi == 0.0) {
    return alpha;
  }
  return alpha + rng.uniform() * cfg.psi * std::pow(alpha, cfg.p_adapt);
}

StepReport ssqp_step(const ProblemSpec& p, SsqpState& state,
                     const SsqpConfig& cfg) {
  const Index d = p.d;
  for (Index i = 0; i < d; ++i) {
    require(state.pd.x[i] >= p.lower[i] && state.pd.x[i] <= p.upper[i],
            ErrorCode::InvalidArgument, "ssqp_step: iterate left the box");
    require(state.pd.mu_lower[i] >= 0.0 && state.pd.mu_upper[i] >= 0.0,
            ErrorCode::InvalidArgument, "ssqp_step: negative multiplier");
  }

  const Schedules sch = schedules(state.iter, cfg);
  const ConstraintEval ce = eval_constraints(p, state.pd.x);
  double theta =
      p.m == 0 ? 1.0 : select_theta_impl(ce, p, state.pd.x, cfg);

  StepReport report;
  report.theta = theta;

  const SampleEval sample = p.sample_oracle(state.pd.x, state.rng);
  require(all_finite(sample.grad) && all_finite(sample.hess),
          ErrorCode::NonFiniteValue, "ssqp_step: non-finite sample");
  report.grad_sample = sample.grad;
  update_averages(state.grad_avg, state.hess_avg, sample.grad, sample.hess,
                  sch.beta, sch.gamma);

  QpProblem qp;
  qp.g = state.grad_avg;
  qp.A = ce.jacobian;
  qp.b = -theta * ce.value;
  qp.lb = p.lower - state.pd.x;
  qp.ub = p.upper - state.pd.x;

  // Hessian ladder: reduced-shift convexification, then a full-space shift,
  // then the identity.
  const HessianBuild hb =
      build_hessian(state.hess_avg, state.pd.lambda, ce, state.pd.x, p, cfg);
  report.shift_delta = hb.shift_delta;
  qp.B = hb.B;

  const ActiveSets* warm = state.iter > 0 ? &state.last_active : nullptr;
  QpSolution qsol = solve_qp(qp, 1e-9, 500, warm);
  if (qsol.status == QpStatus::IndefiniteReduced &&
      cfg.hessian_mode == HessianMode::Averaged) {
    const Matrix m = assemble_curvature(state.hess_avg, state.pd.lambda, ce);
    const double lam_min =
        Eigen::SelfAdjointEigenSolver<Matrix>(m, Eigen::EigenvaluesOnly)
            .eigenvalues()
            .minCoeff();
    const double shift = std::max(0.0, cfg.omega - lam_min);
    qp.B = m;
    qp.B.diagonal().array() += shift;
    qp.B = cap_spectrum(qp.B, cfg.kappa_max);
    report.shift_delta = shift;
    report.hessian_stage = 1;
    qsol = solve_qp(qp, 1e-9, 500, warm);
    if (qsol.status == QpStatus::IndefiniteReduced) {
      qp.B = Matrix::Identity(d, d);
      report.shift_delta = 0.0;
      report.hessian_stage = 2;
      qsol = solve_qp(qp, 1e-9, 500, warm);
    }
  }
  if (qsol.status == QpStatus::Infeasible) {
    // Rounding right at the feasibility tolerance; retry one notch down.
    theta *= cfg.tau;
    report.theta = theta;
    qp.b = -theta * ce.value;
    qsol = solve_qp(qp, 1e-9, 500, warm);
  }
  if (qsol.status != QpStatus::Optimal &&
      qsol.status != QpStatus::RankDeficient) {
    fail(ErrorCode::QpFailure,
         std::string("ssqp_step: subproblem failed with status ") +
             to_string(qsol.status));
  }

  double alpha_bar = adaptive_stepsize(sch.alpha, cfg, state.rng);
  require(alpha_bar >= sch.alpha - 1e-15 &&
              alpha_bar <=
                  sch.alpha + cfg.psi * std::pow(sch.alpha, cfg.p_adapt) + 1e-15,
          ErrorCode::InvalidArgument,
          "ssqp_step: stepsize left the safeguard interval");
  alpha_bar = std::min(alpha_bar, 1.0);

  report.delta_x = qsol.d;
  report.lambda_sub = qsol.lambda;
  report.mu_lower_sub = qsol.mu_lower;
  report.mu_upper_sub = qsol.mu_upper;
  report.alpha_bar = alpha_bar;
  report.qp_status = qsol.status;
  report.active = qsol.active;

  state.pd.x += alpha_bar * qsol.d;
  state.pd.x = state.pd.x.cwiseMax(p.lower).cwiseMin(p.upper);
  state.pd.lambda =
      (1.0 - alpha_bar) * state.pd.lambda + alpha_bar * qsol.lambda;
  state.pd.mu_lower =
      (1.0 - alpha_bar) * state.pd.mu_lower + alpha_bar * qsol.mu_lower;
  state.pd.mu_upper =
      (1.0 - alpha_bar) * state.pd.mu_upper + alpha_bar * qsol.mu_upper;
  state.theta_last = theta;
  state.last_active = qsol.active;
  state.iter += 1;
  return report;
}

DualLeastSquares dual_least_squares(const ProblemSpec& p, const Vector& x,
                                    const Vector& g) {
  const Index d = p.d;
  const Index m = p.m;
  Matrix jac = Matrix::Zero(0, d);
  if (m > 0) jac = eval_constraints(p, x).jacobian;

  std::vector<Index> lo_idx, up_idx;
  for (Index i = 0; i < d; ++i) {
    if (std::isfinite(p.lower[i])) lo_idx.push_back(i);
    if (std::isfinite(p.upper[i])) up_idx.push_back(i);
  }
  const Index n1 = static_cast<Index>(lo_idx.size());
  const Index n2 = static_cast<Index>(up_idx.size());
  const Index nv = m + n1 + n2;
  const Index rows = d + n1 + n2;

  Matrix sys = Matrix::Zero(rows, nv);
  Vector target = Vector::Zero(rows);
  target.head(d) = -g;
  if (m > 0) sys.topLeftCorner(d, m) = jac.transpose();
  for (Index j = 0; j < n1; ++j) {
    sys(lo_idx[j], m + j) = -1.0;
    sys(d + j, m + j) = p.lower[lo_idx[j]] - x[lo_idx[j]];
  }
  for (Index j = 0; j < n2; ++j) {
    sys(up_idx[j], m + n1 + j) = 1.0;
    sys(d + n1 + j, m + n1 + j) = x[up_idx[j]] - p.upper[up_idx[j]];
  }

  Vector lb = Vector::Zero(nv);
  lb.head(m).setConstant(-kInf);
  const Vector ub = Vector::Constant(nv, kInf);
  const BclsResult r = solve_bcls(sys, target, lb, ub);

  DualLeastSquares out;
  out.lambda = r.z.head(m);
  out.mu_lower = Vector::Zero(d);
  out.mu_upper = Vector::Zero(d);
  for (Index j = 0; j < n1; ++j) out.mu_lower[lo_idx[j]] = r.z[m + j];
  for (Index j = 0; j < n2; ++j) out.mu_upper[up_idx[j]] = r.z[m + n1 + j];
  out.objective = r.value;
  return out;
}

SsqpState run(const ProblemSpec& p, const PrimalDual& init,
              const SsqpConfig& cfg, long iterations, std::uint64_t seed,
              const StepObserver& observer) {
  p.validate();
  cfg.validate();
  require(iterations >= 0, ErrorCode::InvalidArgument,
          "run: iterations must be >= 0");
  for (Index i = 0; i < p.d; ++i) {
    require(init.x[i] >= p.lower[i] && init.x[i] <= p.upper[i],
            ErrorCode::InvalidArgument, "run: init.x outside the box");
  }
  SsqpState state(init, RngStream(seed));
  for (long k = 0; k < iterations; ++k) {
    try {
      const StepReport report = ssqp_step(p, state, cfg);
      if (observer) observer(k, state, report);
    } catch (const Error& e) {
      fail(e.code(), "run: iteration " + std::to_string(k) + ": " + e.what());
    }
  }
  return state;
}

PrimalDual m_estimate(const ProblemSpec& p_empirical, const SsqpConfig& cfg,
                      double tol, int max_iter, const PrimalDual* init) {
  const ProblemSpec& p = p_empirical;
  require(p.has_exact(), ErrorCode::NoExactOracle,
          "m_estimate: exact (full-batch) oracle required");
  require(tol > 0.0, ErrorCode::InvalidArgument, "m_estimate: tol must be > 0");
  const Index d = p.d;

  PrimalDual pd = init ? *init : PrimalDual::zeros(d, p.m);
  if (!init) {
    for (Index i = 0; i < d; ++i) {
      double v = 0.0;
      if (std::isfinite(p.lower[i]) && std::isfinite(p.upper[i])) {
        v = 0.5 * (p.lower[i] + p.upper[i]);
      } else if (std::isfinite(p.lower[i])) {
        v = p.lower[i];
      } else if (std::isfinite(p.upper[i])) {
        v = p.upper[i];
      }
      pd.x[i] = v;
    }
  }
  pd.x = pd.x.cwiseMax(p.lower).cwiseMin(p.upper);

  ActiveSets warm_set;
  for (int it = 0; it < max_iter; ++it) {
    const ConstraintEval ce = eval_constraints(p, pd.x);
    const ExactEval ee = p.exact_oracle(pd.x);
    const double theta =
        p.m == 0 ? 1.0 : select_theta_impl(ce, p, pd.x, cfg);

    QpProblem qp;
    qp.g = ee.grad;
    qp.A = ce.jacobian;
    qp.b = -theta * ce.value;
    qp.lb = p.lower - pd.x;
    qp.ub = p.upper - pd.x;
    const HessianBuild hb =
        build_hessian(ee.hess, pd.lambda, ce, pd.x, p, cfg);
    qp.B = hb.B;
    const ActiveSets* warm = it > 0 ? &warm_set : nullptr;
    QpSolution qsol = solve_qp(qp, 1e-9, 500, warm);
    if (qsol.status == QpStatus::IndefiniteReduced) {
      const Matrix m = assemble_curvature(ee.hess, pd.lambda, ce);
      const double lam_min =
          Eigen::SelfAdjointEigenSolver<Matrix>(m, Eigen::EigenvaluesOnly)
              .eigenvalues()
              .minCoeff();
      qp.B = m;
      qp.B.diagonal().array() += std::max(0.0, cfg.omega - lam_min);
      qsol = solve_qp(qp, 1e-9, 500, warm);
    }
    if (qsol.status != QpStatus::Optimal &&
        qsol.status != QpStatus::RankDeficient) {
      fail(ErrorCode::QpFailure,
           std::string("m_estimate: subproblem failed with status ") +
               to_string(qsol.status));
    }

    warm_set = qsol.active;
    const double rho = 10.0 * qsol.lambda.norm() + 1.0;
    const double merit_now = merit(p, pd.x, rho);
    double step = 1.0;
    for (int h = 0; h < 40; ++h) {
      const Vector cand = (pd.x + step * qsol.d)
                              .cwiseMax(p.lower)
                              .cwiseMin(p.upper);
      if (merit(p, cand, rho) <=
          merit_now + 1e-12 * (1.0 + std::abs(merit_now))) {
        break;
      }
      step *= 0.5;
    }

    pd.x = (pd.x + step * qsol.d).cwiseMax(p.lower).cwiseMin(p.upper);
    pd.lambda = (1.0 - step) * pd.lambda + step * qsol.lambda;
    pd.mu_lower = (1.0 - step) * pd.mu_lower + step * qsol.mu_lower;
    pd.mu_upper = (1.0 - step) * pd.mu_upper + step * qsol.mu_upper;

    const double cnorm =
        p.m == 0 ? 0.0 : eval_constraints(p, pd.x).value.norm();
    const DualLeastSquares dls =
        dual_least_squares(p, pd.x, p.exact_oracle(pd.x).grad);
    if (dls.objective <= tol * tol && cnorm <= tol) return pd;
  }
  fail(ErrorCode::NoConvergence,
       "m_estimate: no convergence within the iteration budget");
}

}  // namespace ssqp
