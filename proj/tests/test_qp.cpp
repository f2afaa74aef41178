#include <doctest.h>

#include "ssqp/qp.hpp"
#include "ssqp/rng.hpp"

using namespace ssqp;

namespace {

QpProblem box_qp(const Matrix& B, const Vector& g, const Vector& lb,
                 const Vector& ub) {
  QpProblem qp;
  qp.B = B;
  qp.g = g;
  qp.A = Matrix::Zero(0, g.size());
  qp.b = Vector::Zero(0);
  qp.lb = lb;
  qp.ub = ub;
  return qp;
}

QpProblem random_instance(RngStream& rng) {
  const Index d = 1 + static_cast<Index>(rng.uniform() * 4.0) % 4;
  const Index me =
      std::min<Index>(d - 1, static_cast<Index>(rng.uniform() * 3.0) % 3);
  QpProblem qp;
  Matrix l(d, d);
  for (Index i = 0; i < d; ++i)
    for (Index j = 0; j < d; ++j) l(i, j) = rng.normal();
  qp.B = l.transpose() * l + 0.1 * Matrix::Identity(d, d);
  qp.g = Vector(d);
  qp.A = Matrix(me, d);
  qp.lb = Vector(d);
  qp.ub = Vector(d);
  for (Index i = 0; i < d; ++i) qp.g[i] = rng.normal();
  for (Index i = 0; i < me; ++i)
    for (Index j = 0; j < d; ++j) qp.A(i, j) = rng.normal();
  for (Index i = 0; i < d; ++i) {
    qp.lb[i] = -0.2 - std::abs(rng.normal());
    qp.ub[i] = qp.lb[i] + 0.4 + 2.0 * std::abs(rng.normal());
  }
  Vector inside(d);
  for (Index i = 0; i < d; ++i) {
    inside[i] = qp.lb[i] + rng.uniform() * (qp.ub[i] - qp.lb[i]);
  }
  qp.b = qp.A * inside;
  return qp;
}

void check_kkt(const QpProblem& qp, const QpSolution& sol, double tol) {
  const Index d = qp.dim();
  Vector stat = qp.B * sol.d + qp.g - sol.mu_lower + sol.mu_upper;
  if (qp.num_eq() > 0) stat += qp.A.transpose() * sol.lambda;
  CHECK(stat.lpNorm<Eigen::Infinity>() <= tol);
  if (qp.num_eq() > 0) {
    CHECK((qp.A * sol.d - qp.b).lpNorm<Eigen::Infinity>() <= tol);
  }
  for (Index i = 0; i < d; ++i) {
    CHECK(sol.d[i] >= qp.lb[i] - tol);
    CHECK(sol.d[i] <= qp.ub[i] + tol);
    CHECK(sol.mu_lower[i] >= -tol);
    CHECK(sol.mu_upper[i] >= -tol);
    CHECK(std::abs(sol.mu_lower[i] * (sol.d[i] - qp.lb[i])) <= tol);
    CHECK(std::abs(sol.mu_upper[i] * (qp.ub[i] - sol.d[i])) <= tol);
  }
}

}  // namespace

TEST_CASE("solve_qp clamps the unconstrained minimizer at a bound") {
  const QpProblem qp = box_qp(Matrix::Identity(1, 1), Vector::Constant(1, 0.5),
                              Vector::Zero(1), Vector::Ones(1));
  const QpSolution sol = solve_qp(qp);
  REQUIRE(sol.status == QpStatus::Optimal);
  CHECK(sol.d[0] == doctest::Approx(0.0));
  CHECK(sol.mu_lower[0] == doctest::Approx(0.5));
  CHECK(sol.mu_upper[0] == doctest::Approx(0.0));
  CHECK(sol.active.at_lower == std::vector<Index>{0});
}

TEST_CASE("solve_qp projects onto the mean-zero subspace") {
  QpProblem qp;
  qp.B = Matrix::Identity(2, 2);
  qp.g = Vector(2);
  qp.g << 1.0, -1.0;
  qp.A = Matrix::Ones(1, 2);
  qp.b = Vector::Zero(1);
  qp.lb = Vector::Constant(2, -kInf);
  qp.ub = Vector::Constant(2, kInf);
  const QpSolution sol = solve_qp(qp);
  REQUIRE(sol.status == QpStatus::Optimal);
  CHECK(sol.d[0] == doctest::Approx(-1.0));
  CHECK(sol.d[1] == doctest::Approx(1.0));
  CHECK(sol.lambda[0] == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(sol.active.total() == 0);
}

TEST_CASE("solve_qp flags an empty linearized system") {
  QpProblem qp;
  qp.B = Matrix::Identity(1, 1);
  qp.g = Vector::Zero(1);
  qp.A = Matrix::Zero(1, 1);  // 0 * d = 1 is unsatisfiable
  qp.b = Vector::Ones(1);
  qp.lb = Vector::Constant(1, -1.0);
  qp.ub = Vector::Constant(1, 1.0);
  CHECK(solve_qp(qp).status == QpStatus::Infeasible);
}

TEST_CASE("solve_qp reports an indefinite reduced Hessian") {
  Matrix b(2, 2);
  b << 1.0, 0.0, 0.0, -1.0;
  const QpProblem qp = box_qp(b, Vector::Ones(2),
                              Vector::Constant(2, -kInf),
                              Vector::Constant(2, kInf));
  CHECK(solve_qp(qp).status == QpStatus::IndefiniteReduced);
}

TEST_CASE("solve_qp reports dependent equality gradients") {
  QpProblem qp;
  qp.B = Matrix::Identity(2, 2);
  qp.g = Vector::Zero(2);
  qp.A = Matrix(2, 2);
  qp.A << 1.0, 0.0, 1.0, 0.0;
  qp.b = Vector::Constant(2, 0.25);
  qp.lb = Vector::Constant(2, -1.0);
  qp.ub = Vector::Constant(2, 1.0);
  const QpSolution sol = solve_qp(qp);
  CHECK(sol.status == QpStatus::RankDeficient);
  CHECK(sol.d[0] == doctest::Approx(0.25));
}

TEST_CASE("solve_bcls closed forms") {
  SUBCASE("coordinatewise clamp") {
    Vector y(2);
    y << 1.0, -1.0;
    const BclsResult r =
        solve_bcls(Matrix::Identity(2, 2), y, Vector::Zero(2),
                   Vector::Constant(2, kInf));
    CHECK(r.z[0] == doctest::Approx(1.0));
    CHECK(r.z[1] == doctest::Approx(0.0));
    CHECK(r.value == doctest::Approx(1.0));
  }
  SUBCASE("one-dimensional saturation") {
    const BclsResult r = solve_bcls(Matrix::Identity(1, 1) * 1.0,
                                    Vector::Constant(1, 3.75),
                                    Vector::Constant(1, -0.5),
                                    Vector::Constant(1, 2.5));
    CHECK(r.z[0] == doctest::Approx(2.5));
    CHECK(r.value == doctest::Approx(1.5625));
  }
  SUBCASE("attainable residual") {
    const BclsResult r = solve_bcls(Matrix::Identity(1, 1) * 2.0,
                                    Vector::Constant(1, 3.0),
                                    Vector::Zero(1),
                                    Vector::Constant(1, 10.0));
    CHECK(r.z[0] == doctest::Approx(1.5));
    CHECK(r.value == doctest::Approx(0.0).epsilon(1e-12));
  }
  SUBCASE("pinned variables stay pinned") {
    Matrix m(2, 2);
    m << 1.0, 0.0, 0.0, 1.0;
    Vector y(2);
    y << 5.0, 1.0;
    Vector lb(2), ub(2);
    lb << 2.0, -kInf;
    ub << 2.0, kInf;
    const BclsResult r = solve_bcls(m, y, lb, ub);
    CHECK(r.z[0] == doctest::Approx(2.0));
    CHECK(r.z[1] == doctest::Approx(1.0));
    CHECK(r.value == doctest::Approx(9.0));
  }
}

TEST_CASE("solve_bcls value is invariant under row permutation and sign flip") {
  RngStream rng(99u);
  for (int trial = 0; trial < 50; ++trial) {
    const Index rows = 3 + static_cast<Index>(rng.uniform() * 3.0) % 3;
    const Index n = 2 + static_cast<Index>(rng.uniform() * 2.0) % 2;
    Matrix m(rows, n);
    Vector y(rows);
    for (Index i = 0; i < rows; ++i) {
      y[i] = rng.normal();
      for (Index j = 0; j < n; ++j) m(i, j) = rng.normal();
    }
    Vector lb(n), ub(n);
    for (Index j = 0; j < n; ++j) {
      lb[j] = -std::abs(rng.normal());
      ub[j] = std::abs(rng.normal());
    }
    const double base = solve_bcls(m, y, lb, ub).value;

    Matrix mp(rows, n);
    Vector yp(rows);
    for (Index i = 0; i < rows; ++i) {
      mp.row(i) = m.row(rows - 1 - i);
      yp[i] = y[rows - 1 - i];
    }
    CHECK(solve_bcls(mp, yp, lb, ub).value ==
          doctest::Approx(base).epsilon(1e-9));

    const Matrix mneg = -m;
    const Vector lbneg = -ub;
    const Vector ubneg = -lb;
    CHECK(solve_bcls(mneg, y, lbneg, ubneg).value ==
          doctest::Approx(base).epsilon(1e-9));
  }
}

TEST_CASE("brute force oracle agrees with the closed forms") {
  SUBCASE("clamped bound case") {
    const QpProblem qp = box_qp(Matrix::Identity(1, 1),
                                Vector::Constant(1, 0.5), Vector::Zero(1),
                                Vector::Ones(1));
    const QpSolution sol = brute_force_qp(qp);
    REQUIRE(sol.status == QpStatus::Optimal);
    CHECK(sol.d[0] == doctest::Approx(0.0));
    CHECK(sol.mu_lower[0] == doctest::Approx(0.5));
  }
  SUBCASE("degenerate tie keeps the primal unique") {
    const QpProblem qp = box_qp(Matrix::Identity(2, 2), Vector::Zero(2),
                                Vector::Zero(2), Vector::Ones(2));
    const QpSolution bf = brute_force_qp(qp);
    const QpSolution as = solve_qp(qp);
    REQUIRE(bf.status == QpStatus::Optimal);
    REQUIRE(as.status == QpStatus::Optimal);
    CHECK((bf.d - as.d).lpNorm<Eigen::Infinity>() <= 1e-12);
    CHECK(bf.d.lpNorm<Eigen::Infinity>() <= 1e-12);
  }
  SUBCASE("strictly interior optimum has zero multipliers") {
    Vector g(2);
    g << -0.5, 0.25;
    const QpProblem qp = box_qp(Matrix::Identity(2, 2), g,
                                Vector::Constant(2, -1.0),
                                Vector::Constant(2, 1.0));
    const QpSolution sol = brute_force_qp(qp);
    REQUIRE(sol.status == QpStatus::Optimal);
    CHECK(sol.mu_lower.norm() == 0.0);
    CHECK(sol.mu_upper.norm() == 0.0);
    CHECK(sol.active.total() == 0);
  }
  SUBCASE("rejects large problems") {
    const QpProblem qp = box_qp(Matrix::Identity(7, 7), Vector::Zero(7),
                                Vector::Zero(7), Vector::Ones(7));
    CHECK_THROWS_AS(brute_force_qp(qp), Error);
  }
}

TEST_CASE("solve_qp matches brute force on random instances") {
  RngStream rng(4242u);
  for (int trial = 0; trial < 300; ++trial) {
    const QpProblem qp = random_instance(rng);
    const QpSolution fast = solve_qp(qp);
    const QpSolution oracle = brute_force_qp(qp);
    REQUIRE(fast.status == QpStatus::Optimal);
    REQUIRE(oracle.status == QpStatus::Optimal);
    CHECK((fast.d - oracle.d).lpNorm<Eigen::Infinity>() <= 1e-8);
    CHECK(std::abs(fast.objective - oracle.objective) <= 1e-10);
    check_kkt(qp, fast, 1e-9);
  }
}

TEST_CASE("solve_qp is stable in the gradient") {
  RngStream rng(7u);
  for (int trial = 0; trial < 50; ++trial) {
    QpProblem qp = random_instance(rng);
    const QpSolution sol1 = solve_qp(qp);
    QpProblem qp2 = qp;
    for (Index i = 0; i < qp.dim(); ++i) qp2.g[i] += 0.1 * rng.normal();
    const QpSolution sol2 = solve_qp(qp2);
    REQUIRE(sol1.status == QpStatus::Optimal);
    REQUIRE(sol2.status == QpStatus::Optimal);
    const double lam_min =
        Eigen::SelfAdjointEigenSolver<Matrix>(qp.B, Eigen::EigenvaluesOnly)
            .eigenvalues()
            .minCoeff();
    CHECK((sol1.d - sol2.d).norm() <=
          (qp.g - qp2.g).norm() / lam_min + 1e-9);
  }
}

TEST_CASE("solve_qp handles one-sided infinite boxes") {
  QpProblem qp;
  qp.B = Matrix::Identity(3, 3);
  qp.g = Vector(3);
  qp.g << 2.0, -3.0, 0.5;
  qp.A = Matrix::Zero(0, 3);
  qp.b = Vector::Zero(0);
  qp.lb = Vector(3);
  qp.lb << 0.0, -kInf, -kInf;
  qp.ub = Vector(3);
  qp.ub << kInf, 1.0, kInf;
  const QpSolution sol = solve_qp(qp);
  REQUIRE(sol.status == QpStatus::Optimal);
  CHECK(sol.d[0] == doctest::Approx(0.0));   // clamped at lower
  CHECK(sol.d[1] == doctest::Approx(1.0));   // clamped at upper
  CHECK(sol.d[2] == doctest::Approx(-0.5));  // interior
  CHECK(sol.mu_lower[0] == doctest::Approx(2.0));
  CHECK(sol.mu_upper[1] == doctest::Approx(2.0));
}
