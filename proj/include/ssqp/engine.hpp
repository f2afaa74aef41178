#pragma once

#include <functional>

#include "ssqp/common.hpp"
#include "ssqp/problem.hpp"
#include "ssqp/qp.hpp"
#include "ssqp/rng.hpp"

namespace ssqp {

enum class HessianMode { Averaged, Identity };
enum class StepsizeMode { Deterministic, UniformRandom };

/// Tuning constants of the online estimator. The power-law schedules are
/// alpha_k = iota1 (k+1)^-b1, beta_k = iota2 (k+1)^-b2, gamma_k =
/// iota3 (k+1)^-b3; the defaults are the ones used throughout the
/// experiments. Inference requires 0.5 < b2 < b1.
struct SsqpConfig {
  double iota1 = 1.0;
  double b1 = 0.751;
  double iota2 = 1.0;
  double b2 = 0.501;
  double iota3 = 1.0;
  double b3 = 1.0;
  double tau = 0.5;       // relaxation backtracking factor, in (0,1)
  double psi = 1.0;       // stepsize safeguard width
  double p_adapt = 2.0;   // stepsize safeguard exponent, >= 1
  double theta_min = 1e-8;   // below this the relaxation declares failure
  double eps_active = 1e-2;  // bound-activity guess radius
  double omega = 1e-2;       // reduced-Hessian floor
  double kappa_max = 1e6;    // spectral ceiling for the step Hessian
  HessianMode hessian_mode = HessianMode::Averaged;
  StepsizeMode stepsize_mode = StepsizeMode::Deterministic;

  void validate(bool for_inference = false) const;
};

struct Schedules {
  double alpha = 0.0;
  double beta = 0.0;
  double gamma = 0.0;
};

/// Full online state: iterate, moving averages and the random stream.
struct SsqpState {
  long iter = 0;
  PrimalDual pd;
  Vector grad_avg;   // empty until the first step
  Matrix hess_avg;
  double theta_last = 1.0;
  ActiveSets last_active;  // warm start for the next subproblem
  RngStream rng;

  SsqpState(const PrimalDual& init, RngStream stream)
      : pd(init), rng(stream) {}
};

/// Per-step record: the subproblem answer, relaxation and stepsize actually
/// applied, and the raw gradient sample for covariance accumulation.
struct StepReport {
  Vector delta_x;
  Vector lambda_sub;
  Vector mu_lower_sub;
  Vector mu_upper_sub;
  double theta = 1.0;
  double alpha_bar = 0.0;
  double shift_delta = 0.0;
  int hessian_stage = 0;  // 0 reduced shift, 1 full-space shift, 2 identity
  QpStatus qp_status = QpStatus::Optimal;
  ActiveSets active;   // of x_k + delta_x, as reported by the subproblem
  Vector grad_sample;  // nabla F(x_k; zeta_k)
};

Schedules schedules(long k, const SsqpConfig& cfg);

/// Largest theta in {1, tau, tau^2, ...} making the linearized constraints
/// feasible within the box; throws EgmfcqFailure below cfg.theta_min.
double select_theta(const ProblemSpec& p, const Vector& x,
                    const SsqpConfig& cfg);

/// In-place moving averages: g <- (1-beta) g + beta grad, likewise for the
/// Hessian with gamma. Empty averages are initialized to the sample.
void update_averages(Vector& grad_avg, Matrix& hess_avg,
                     const Vector& grad_sample, const Matrix& hess_sample,
                     double beta, double gamma);

struct HessianBuild {
  Matrix B;
  double shift_delta = 0.0;
};

/// Lagrangian-curvature estimate, convexified so the reduced Hessian on the
/// null space of the epsilon-active constraint Jacobian clears cfg.omega,
/// with the spectrum capped at cfg.kappa_max.
HessianBuild build_hessian(const Matrix& hess_avg, const Vector& lambda,
                           const ConstraintEval& constraints, const Vector& x,
                           const ProblemSpec& p, const SsqpConfig& cfg);

/// Safeguarded stepsize in [alpha, alpha + psi alpha^p].
double adaptive_stepsize(double alpha, const SsqpConfig& cfg, RngStream& rng);

/// One full iteration; mutates the state and returns the step record.
StepReport ssqp_step(const ProblemSpec& p, SsqpState& state,
                     const SsqpConfig& cfg);

struct DualLeastSquares {
  Vector lambda;
  Vector mu_lower;
  Vector mu_upper;
  double objective = 0.0;  // squared KKT residual at the optimal multipliers
};

/// Best-certificate multipliers: minimize the squared KKT residual over
/// lambda free and mu >= 0 (infinite-bound entries pinned to zero).
DualLeastSquares dual_least_squares(const ProblemSpec& p, const Vector& x,
                                    const Vector& g);

using StepObserver =
    std::function<void(long k, const SsqpState&, const StepReport&)>;

/// K iterations from init; the observer fires after every step.
SsqpState run(const ProblemSpec& p, const PrimalDual& init,
              const SsqpConfig& cfg, long iterations, std::uint64_t seed,
              const StepObserver& observer = {});

/// Deterministic full-batch SQP on a problem whose exact oracle returns
/// empirical quantities; iterates until the dual least-squares residual and
/// the constraint violation both drop below tol.
PrimalDual m_estimate(const ProblemSpec& p_empirical, const SsqpConfig& cfg,
                      double tol, int max_iter,
                      const PrimalDual* init = nullptr);

}  // namespace ssqp
