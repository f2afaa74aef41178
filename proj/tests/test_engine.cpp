#include <doctest.h>

#include <cmath>

#include "oracles.hpp"
#include "ssqp/engine.hpp"
#include "ssqp/model_zoo.hpp"

using namespace ssqp;

namespace {

// Replaces the sample oracle with the exact one; the engine then runs its
// deterministic counterpart.
ProblemSpec noise_free(const ZooProblem& zp) {
  ProblemSpec p = zp.problem;
  const ExactOracle exact = p.exact_oracle;
  p.sample_oracle = [exact](const Vector& x, RngStream&) {
    const ExactEval ee = exact(x);
    SampleEval out;
    out.value = ee.value;
    out.grad = ee.grad;
    out.hess = ee.hess;
    return out;
  };
  return p;
}

Vector vec1(double v) { return Vector::Constant(1, v); }

}  // namespace

TEST_CASE("schedules") {
  const SsqpConfig cfg;
  SUBCASE("start at one") {
    const Schedules s = schedules(0, cfg);
    CHECK(s.alpha == doctest::Approx(1.0));
    CHECK(s.beta == doctest::Approx(1.0));
    CHECK(s.gamma == doctest::Approx(1.0));
  }
  SUBCASE("hundredth step") {
    const Schedules s = schedules(99, cfg);
    CHECK(s.alpha == doctest::Approx(0.0315).epsilon(2e-3));
    CHECK(s.beta == doctest::Approx(0.0995).epsilon(2e-3));
    CHECK(s.gamma == doctest::Approx(0.01).epsilon(1e-12));
  }
  SUBCASE("strictly decreasing") {
    for (long k = 0; k < 50; ++k) {
      CHECK(schedules(k + 1, cfg).alpha < schedules(k, cfg).alpha);
    }
  }
}

TEST_CASE("select_theta on the circle problem") {
  const ZooProblem zp = make_benchmark("circle", NoisySpec{});
  SsqpConfig cfg;

  CHECK(select_theta(zp.problem, vec1(2.0), cfg) == doctest::Approx(1.0));
  CHECK(select_theta(zp.problem, vec1(1.0), cfg) == doctest::Approx(1.0));
  CHECK(select_theta(zp.problem, vec1(0.5), cfg) == doctest::Approx(0.5));
}

TEST_CASE("select_theta fails when no relaxation can help") {
  // c(x) = 1 with zero Jacobian: no z satisfies theta + 0 = 0 for theta > 0.
  ProblemSpec p;
  p.d = 1;
  p.m = 1;
  p.lower = vec1(-1.0);
  p.upper = vec1(1.0);
  p.constraint_oracle = [](const Vector&) {
    ConstraintEval ce;
    ce.value = Vector::Ones(1);
    ce.jacobian = Matrix::Zero(1, 1);
    ce.hessians.assign(1, Matrix::Zero(1, 1));
    return ce;
  };
  p.sample_oracle = [](const Vector&, RngStream&) { return SampleEval{}; };
  SsqpConfig cfg;
  try {
    select_theta(p, vec1(0.0), cfg);
    FAIL("expected EgmfcqFailure");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::EgmfcqFailure);
  }
}

TEST_CASE("update_averages") {
  SUBCASE("weight one copies the sample") {
    Vector g = Vector::Constant(2, 5.0);
    Matrix q = Matrix::Identity(2, 2);
    Vector gs(2);
    gs << 1.0, 2.0;
    const Matrix qs = 3.0 * Matrix::Identity(2, 2);
    update_averages(g, q, gs, qs, 1.0, 1.0);
    CHECK((g - gs).norm() == 0.0);
    CHECK((q - qs).norm() == 0.0);
  }
  SUBCASE("convex combination") {
    Vector g(2);
    g << 1.0, 0.0;
    Matrix q = Matrix::Zero(2, 2);
    Vector gs(2);
    gs << 0.0, 1.0;
    update_averages(g, q, gs, Matrix::Zero(2, 2), 0.5, 0.5);
    CHECK(g[0] == doctest::Approx(0.5));
    CHECK(g[1] == doctest::Approx(0.5));
  }
  SUBCASE("empty averages initialize to the sample") {
    Vector g;
    Matrix q;
    Vector gs = Vector::Ones(3);
    update_averages(g, q, gs, Matrix::Ones(3, 3), 0.25, 0.25);
    CHECK((g - gs).norm() == 0.0);
  }
}

TEST_CASE("build_hessian convexification") {
  SsqpConfig cfg;
  cfg.omega = 0.1;

  SUBCASE("already convex stays untouched") {
    ProblemSpec p;
    p.d = 2;
    p.m = 0;
    p.lower = Vector::Constant(2, -kInf);
    p.upper = Vector::Constant(2, kInf);
    p.sample_oracle = [](const Vector&, RngStream&) { return SampleEval{}; };
    ConstraintEval ce;
    ce.value = Vector::Zero(0);
    ce.jacobian = Matrix::Zero(0, 2);
    const HessianBuild hb = build_hessian(2.0 * Matrix::Identity(2, 2),
                                          Vector::Zero(0), ce,
                                          Vector::Zero(2), p, cfg);
    CHECK(hb.shift_delta == 0.0);
    CHECK((hb.B - 2.0 * Matrix::Identity(2, 2)).norm() == 0.0);
  }

  ProblemSpec p;
  p.d = 2;
  p.m = 1;
  p.lower = Vector::Constant(2, -kInf);
  p.upper = Vector::Constant(2, kInf);
  p.constraint_oracle = [](const Vector& x) {
    ConstraintEval ce;
    ce.value = Vector::Constant(1, x[0]);
    ce.jacobian = (Matrix(1, 2) << 1.0, 0.0).finished();
    ce.hessians.assign(1, Matrix::Zero(2, 2));
    return ce;
  };
  p.sample_oracle = [](const Vector&, RngStream&) { return SampleEval{}; };
  const ConstraintEval ce = eval_constraints(p, Vector::Zero(2));

  SUBCASE("indefiniteness outside the null space is tolerated") {
    Matrix q(2, 2);
    q << -1.0, 0.0, 0.0, 2.0;
    const HessianBuild hb =
        build_hessian(q, Vector::Zero(1), ce, Vector::Zero(2), p, cfg);
    CHECK(hb.shift_delta == 0.0);
    CHECK(hb.B(0, 0) == doctest::Approx(-1.0));
  }
  SUBCASE("reduced curvature below the floor is shifted") {
    Matrix q(2, 2);
    q << 1.0, 0.0, 0.0, -1.0;
    const HessianBuild hb =
        build_hessian(q, Vector::Zero(1), ce, Vector::Zero(2), p, cfg);
    CHECK(hb.shift_delta == doctest::Approx(1.1));
    CHECK(hb.B(0, 0) == doctest::Approx(2.1));
    CHECK(hb.B(1, 1) == doctest::Approx(0.1));
  }
  SUBCASE("identity mode skips the analysis") {
    SsqpConfig id_cfg = cfg;
    id_cfg.hessian_mode = HessianMode::Identity;
    const HessianBuild hb = build_hessian(Matrix::Zero(2, 2), Vector::Zero(1),
                                          ce, Vector::Zero(2), p, id_cfg);
    CHECK((hb.B - Matrix::Identity(2, 2)).norm() == 0.0);
    CHECK(hb.shift_delta == 0.0);
  }
  SUBCASE("spectrum is capped") {
    SsqpConfig cap_cfg = cfg;
    cap_cfg.kappa_max = 10.0;
    const HessianBuild hb =
        build_hessian(100.0 * Matrix::Identity(2, 2), Vector::Zero(1), ce,
                      Vector::Zero(2), p, cap_cfg);
    CHECK(hb.B(0, 0) == doctest::Approx(10.0));
    CHECK(hb.B(1, 1) == doctest::Approx(10.0));
  }
}

TEST_CASE("adaptive_stepsize") {
  SsqpConfig cfg;
  RngStream rng(3u);
  SUBCASE("deterministic mode returns alpha") {
    CHECK(adaptive_stepsize(0.1, cfg, rng) == 0.1);
  }
  SUBCASE("uniform mode stays within the safeguard") {
    cfg.stepsize_mode = StepsizeMode::UniformRandom;
    for (int i = 0; i < 200; ++i) {
      const double a = adaptive_stepsize(0.1, cfg, rng);
      CHECK(a >= 0.1);
      CHECK(a <= 0.1 + 1.0 * 0.01 + 1e-15);
    }
  }
  SUBCASE("zero adaptivity width collapses to alpha") {
    cfg.stepsize_mode = StepsizeMode::UniformRandom;
    cfg.psi = 0.0;
    CHECK(adaptive_stepsize(0.1, cfg, rng) == 0.1);
  }
}

TEST_CASE("ssqp_step is a fixed point at the solved KKT triple") {
  const ZooProblem zp = make_benchmark("circle", NoisySpec{});
  const ProblemSpec p = noise_free(zp);
  SsqpConfig cfg;
  PrimalDual init = PrimalDual::zeros(1, 1);
  init.x = vec1(2.0);
  init.lambda = vec1(-0.5);
  SsqpState state(init, RngStream(1u));
  const StepReport report = ssqp_step(p, state, cfg);
  CHECK(report.delta_x.norm() <= 1e-12);
  CHECK(report.lambda_sub[0] == doctest::Approx(-0.5).epsilon(1e-12));
  CHECK(state.pd.x[0] == doctest::Approx(2.0).epsilon(1e-12));
  CHECK(report.theta == 1.0);
}

TEST_CASE("ssqp_step reproduces the hand-solved first iteration") {
  const ZooProblem zp = make_benchmark("circle", NoisySpec{});
  const ProblemSpec p = noise_free(zp);
  SsqpConfig cfg;
  cfg.hessian_mode = HessianMode::Identity;
  PrimalDual init = PrimalDual::zeros(1, 1);
  init.x = vec1(1.0);
  SsqpState state(init, RngStream(1u));
  const StepReport report = ssqp_step(p, state, cfg);
  CHECK(report.theta == doctest::Approx(1.0));
  CHECK(report.delta_x[0] == doctest::Approx(1.5));
  CHECK(report.lambda_sub[0] == doctest::Approx(-0.75));
  CHECK(report.alpha_bar == doctest::Approx(1.0));
  CHECK(state.pd.x[0] == doctest::Approx(2.5));
}

TEST_CASE("ssqp_step equals a direct subproblem solve on the same averages") {
  const ZooProblem zp =
      make_benchmark("circle", NoisySpec{NoiseKind::Gaussian, 1e-2, 3});
  SsqpConfig cfg;
  PrimalDual init = PrimalDual::zeros(1, 1);
  init.x = vec1(1.5);
  SsqpState state(init, RngStream(77u));

  // Pre-draw the sample with a cloned stream to replicate the averages.
  RngStream clone = state.rng;
  const SampleEval sample = zp.problem.sample_oracle(state.pd.x, clone);
  const ConstraintEval ce = eval_constraints(zp.problem, state.pd.x);
  const Vector x0 = state.pd.x;

  const StepReport report = ssqp_step(zp.problem, state, cfg);

  QpProblem qp;
  qp.g = sample.grad;  // beta_0 = 1 makes the average equal the sample
  Vector g_avg = Vector();
  Matrix q_avg = Matrix();
  update_averages(g_avg, q_avg, sample.grad, sample.hess, 1.0, 1.0);
  const HessianBuild hb =
      build_hessian(q_avg, Vector::Zero(1), ce, x0, zp.problem, cfg);
  qp.B = hb.B;
  qp.g = g_avg;
  qp.A = ce.jacobian;
  qp.b = -report.theta * ce.value;
  qp.lb = zp.problem.lower - x0;
  qp.ub = zp.problem.upper - x0;
  const QpSolution direct = solve_qp(qp);
  REQUIRE(direct.status == QpStatus::Optimal);
  CHECK(direct.d[0] == report.delta_x[0]);
  CHECK(direct.lambda[0] == report.lambda_sub[0]);
}

TEST_CASE("inactive bound multipliers decay by the exact recurrence") {
  const ZooProblem zp = make_benchmark("circle", NoisySpec{});
  const ProblemSpec p = noise_free(zp);
  SsqpConfig cfg;
  PrimalDual init = PrimalDual::zeros(1, 1);
  init.x = vec1(1.5);
  init.mu_lower = vec1(0.2);
  init.mu_upper = vec1(0.1);
  SsqpState state(init, RngStream(1u));
  double mu_lo = 0.2, mu_up = 0.1;
  for (int k = 0; k < 5; ++k) {
    const StepReport report = ssqp_step(p, state, cfg);
    REQUIRE(report.active.total() == 0);
    mu_lo = (1.0 - report.alpha_bar) * mu_lo;
    mu_up = (1.0 - report.alpha_bar) * mu_up;
    CHECK(state.pd.mu_lower[0] == mu_lo);
    CHECK(state.pd.mu_upper[0] == mu_up);
  }
}

TEST_CASE("dual_least_squares") {
  SUBCASE("stationary unconstrained point needs no multipliers") {
    ProblemSpec p;
    p.d = 2;
    p.m = 0;
    p.lower = Vector::Constant(2, -kInf);
    p.upper = Vector::Constant(2, kInf);
    p.sample_oracle = [](const Vector&, RngStream&) { return SampleEval{}; };
    const DualLeastSquares dls =
        dual_least_squares(p, Vector::Zero(2), Vector::Zero(2));
    CHECK(dls.objective == doctest::Approx(0.0));
    CHECK(dls.mu_lower.norm() == 0.0);
  }
  SUBCASE("boundary benchmark certificate") {
    const ZooProblem zp = make_benchmark("boundary", NoisySpec{});
    Vector x(2);
    x << 0.6, 0.4;
    Vector g(2);
    g << 1.2, 0.8;
    const DualLeastSquares dls = dual_least_squares(zp.problem, x, g);
    CHECK(dls.lambda[0] == doctest::Approx(-0.8).epsilon(1e-8));
    CHECK(dls.mu_lower[0] == doctest::Approx(0.4).epsilon(1e-8));
    CHECK(dls.mu_lower[1] == doctest::Approx(0.0).epsilon(1e-8));
    CHECK(dls.objective == doctest::Approx(0.0).epsilon(1e-12));
  }
  SUBCASE("matches a dense grid search in one dimension") {
    const ZooProblem zp = make_benchmark("circle", NoisySpec{});
    const Vector x = vec1(1.2);
    const Vector g = vec1(0.4);  // f'(1.2) = 0.4, away from stationarity
    const DualLeastSquares dls = dual_least_squares(zp.problem, x, g);
    // KKT residual squared over (lambda free, mu identically zero far from
    // bounds): grid over lambda and mu_lower.
    const double jac = 2.0 * 1.2;
    const double oracle = testing::grid_min_2d(
        [&](double lambda, double mu) {
          const double stat = g[0] + jac * lambda - mu;
          const double comp = mu * (0.0 - 1.2);
          return stat * stat + comp * comp;
        },
        -2.0, 2.0, 0.0, 2.0, 800);
    CHECK(dls.objective == doctest::Approx(oracle).epsilon(1e-4));
  }
}

TEST_CASE("run") {
  const ZooProblem zp = make_benchmark("circle", NoisySpec{});
  SsqpConfig cfg;
  PrimalDual init = PrimalDual::zeros(1, 1);
  init.x = vec1(1.5);

  SUBCASE("zero iterations returns the initial state") {
    const SsqpState state = run(noise_free(zp), init, cfg, 0, 9u);
    CHECK(state.pd.x[0] == 1.5);
    CHECK(state.iter == 0);
  }
  SUBCASE("noise-free convergence to the constrained solution") {
    const SsqpState state = run(noise_free(zp), init, cfg, 10000, 9u);
    CHECK(std::abs(state.pd.x[0] - 2.0) <= 1e-3);
    CHECK(std::abs(state.pd.lambda[0] + 0.5) <= 1e-2);
  }
  SUBCASE("identical seeds give identical trajectories") {
    const SsqpState a = run(zp.problem, init, cfg, 500, 33u);
    const SsqpState b = run(zp.problem, init, cfg, 500, 33u);
    CHECK(a.pd.x[0] == b.pd.x[0]);
    CHECK(a.pd.lambda[0] == b.pd.lambda[0]);
  }
  SUBCASE("step errors carry the iteration index") {
    ProblemSpec bad;
    bad.d = 1;
    bad.m = 1;
    bad.lower = vec1(-1.0);
    bad.upper = vec1(1.0);
    bad.constraint_oracle = [](const Vector&) {
      ConstraintEval ce;
      ce.value = Vector::Ones(1);
      ce.jacobian = Matrix::Zero(1, 1);
      ce.hessians.assign(1, Matrix::Zero(1, 1));
      return ce;
    };
    bad.sample_oracle = [](const Vector&, RngStream&) {
      SampleEval out;
      out.value = 0.0;
      out.grad = Vector::Zero(1);
      out.hess = Matrix::Zero(1, 1);
      return out;
    };
    PrimalDual bad_init = PrimalDual::zeros(1, 1);
    try {
      run(bad, bad_init, cfg, 10, 1u);
      FAIL("expected failure");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::EgmfcqFailure);
      CHECK(std::string(e.what()).find("iteration 0") != std::string::npos);
    }
  }
}

TEST_CASE("theta stays at one near a qualified solution") {
  const ZooProblem zp = make_benchmark("circle", NoisySpec{NoiseKind::Gaussian, 1e-2, 3});
  SsqpConfig cfg;
  PrimalDual init = PrimalDual::zeros(1, 1);
  init.x = vec1(1.5);
  long ones_in_tail = 0;
  long tail = 0;
  const long total = 4000;
  run(zp.problem, init, cfg, total, 21u,
      [&](long k, const SsqpState&, const StepReport& rep) {
        if (k >= total - total / 10) {
          ++tail;
          if (rep.theta == 1.0) ++ones_in_tail;
        }
      });
  CHECK(ones_in_tail == tail);
}

TEST_CASE("m_estimate") {
  SsqpConfig cfg;
  SUBCASE("quadratic objective with one linear equality is exact quickly") {
    ProblemSpec p;
    p.d = 2;
    p.m = 1;
    p.lower = Vector::Constant(2, -kInf);
    p.upper = Vector::Constant(2, kInf);
    p.constraint_oracle = [](const Vector& x) {
      ConstraintEval ce;
      ce.value = Vector::Constant(1, x[0] + x[1] - 1.0);
      ce.jacobian = Matrix::Ones(1, 2);
      ce.hessians.assign(1, Matrix::Zero(2, 2));
      return ce;
    };
    p.exact_oracle = [](const Vector& x) {
      ExactEval out;
      out.value = x.squaredNorm();
      out.grad = 2.0 * x;
      out.hess = 2.0 * Matrix::Identity(2, 2);
      return out;
    };
    p.sample_oracle = [exact = p.exact_oracle](const Vector& x, RngStream&) {
      const ExactEval ee = exact(x);
      return SampleEval{ee.value, ee.grad, ee.hess};
    };
    const PrimalDual pd = m_estimate(p, cfg, 1e-10, 10);
    CHECK(pd.x[0] == doctest::Approx(0.5).epsilon(1e-9));
    CHECK(pd.x[1] == doctest::Approx(0.5).epsilon(1e-9));
    CHECK(pd.lambda[0] == doctest::Approx(-1.0).epsilon(1e-8));
  }
  SUBCASE("circle benchmark recovers the hand-solved KKT point") {
    const ZooProblem zp = make_benchmark("circle", NoisySpec{});
    const PrimalDual pd = m_estimate(zp.problem, cfg, 1e-10, 50);
    CHECK(pd.x[0] == doctest::Approx(2.0).epsilon(1e-8));
    CHECK(pd.lambda[0] == doctest::Approx(-0.5).epsilon(1e-8));
  }
  SUBCASE("empirical simplex regression matches the normal-equations QP") {
    RngStream rng(8u);
    const Index d = 3;
    const Index n = 200;
    Matrix a_rows(n, d);
    Vector b(n);
    const Vector x_true = glm_true_parameter(d, GlmConstraint::Simplex);
    for (Index i = 0; i < n; ++i) {
      for (Index j = 0; j < d; ++j) a_rows(i, j) = rng.normal() + (j == 0);
      b[i] = a_rows.row(i).dot(x_true) + rng.normal();
    }
    const Matrix gram = a_rows.transpose() * a_rows / double(n);
    const Vector rhs = a_rows.transpose() * b / double(n);

    ProblemSpec p;
    p.d = d;
    p.m = 1;
    p.lower = Vector::Zero(d);
    p.upper = Vector::Constant(d, kInf);
    p.constraint_oracle = [d](const Vector& x) {
      ConstraintEval ce;
      ce.value = Vector::Constant(1, x.sum() - 1.0);
      ce.jacobian = Matrix::Ones(1, d);
      ce.hessians.assign(1, Matrix::Zero(d, d));
      return ce;
    };
    p.exact_oracle = [gram, rhs](const Vector& x) {
      ExactEval out;
      out.value = 0.5 * x.dot(gram * x) - rhs.dot(x);
      out.grad = gram * x - rhs;
      out.hess = gram;
      return out;
    };
    p.sample_oracle = [exact = p.exact_oracle](const Vector& x, RngStream&) {
      const ExactEval ee = exact(x);
      return SampleEval{ee.value, ee.grad, ee.hess};
    };
    const PrimalDual pd = m_estimate(p, cfg, 1e-9, 100);

    QpProblem qp;
    qp.B = gram;
    qp.g = -rhs;
    qp.A = Matrix::Ones(1, d);
    qp.b = Vector::Ones(1);
    qp.lb = Vector::Zero(d);
    qp.ub = Vector::Constant(d, kInf);
    const QpSolution oracle = brute_force_qp(qp);
    REQUIRE(oracle.status == QpStatus::Optimal);
    CHECK((pd.x - oracle.d).lpNorm<Eigen::Infinity>() <= 1e-6);
  }
  SUBCASE("reports no convergence on a hopeless budget") {
    const ZooProblem zp = make_benchmark("ridge3", NoisySpec{});
    try {
      m_estimate(zp.problem, cfg, 1e-14, 1);
      FAIL("expected NoConvergence");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::NoConvergence);
    }
  }
}

TEST_CASE("safeguarded stepsizes stay in the interval across a run") {
  const ZooProblem zp = make_benchmark("circle", NoisySpec{NoiseKind::Gaussian, 1e-2, 3});
  SsqpConfig cfg;
  cfg.stepsize_mode = StepsizeMode::UniformRandom;
  PrimalDual init = PrimalDual::zeros(1, 1);
  init.x = vec1(1.5);
  run(zp.problem, init, cfg, 2000, 17u,
      [&cfg](long k, const SsqpState&, const StepReport& rep) {
        const double alpha = schedules(k, cfg).alpha;
        CHECK(rep.alpha_bar >= alpha - 1e-15);
        CHECK(rep.alpha_bar <=
              std::min(1.0, alpha + cfg.psi * std::pow(alpha, cfg.p_adapt)) +
                  1e-15);
      });
}
