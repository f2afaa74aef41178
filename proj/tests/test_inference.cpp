#include <doctest.h>

#include "oracles.hpp"
#include "ssqp/inference.hpp"
#include "ssqp/rng.hpp"

using namespace ssqp;

TEST_CASE("covariance accumulator") {
  SUBCASE("single observation has zero covariance") {
    CovarianceAccumulator acc;
    Vector g(2);
    g << 3.0, -1.0;
    acc.accumulate(g);
    CHECK(sample_covariance(acc).norm() <= 1e-14);
  }
  SUBCASE("two symmetric observations") {
    CovarianceAccumulator acc;
    Vector a(2), b(2);
    a << 1.0, 0.0;
    b << -1.0, 0.0;
    acc.accumulate(a);
    acc.accumulate(b);
    const Matrix cov = sample_covariance(acc);
    CHECK(cov(0, 0) == doctest::Approx(1.0));
    CHECK(cov(1, 1) == doctest::Approx(0.0));
    CHECK(cov(0, 1) == doctest::Approx(0.0));
  }
  SUBCASE("matches the batch two-pass formula") {
    RngStream rng(13u);
    CovarianceAccumulator acc;
    std::vector<Vector> samples;
    for (int i = 0; i < 100; ++i) {
      Vector g(3);
      for (Index j = 0; j < 3; ++j) g[j] = rng.normal() + j;
      samples.push_back(g);
      acc.accumulate(g);
    }
    const Matrix batch = testing::batch_covariance(samples);
    CHECK((sample_covariance(acc) - batch).cwiseAbs().maxCoeff() <= 1e-12);
  }
  SUBCASE("empty accumulator is rejected") {
    CovarianceAccumulator acc;
    CHECK_THROWS_AS(sample_covariance(acc), Error);
  }
  SUBCASE("merge is associative and order-insensitive") {
    RngStream rng(29u);
    std::vector<Vector> samples;
    for (int i = 0; i < 60; ++i) {
      Vector g(2);
      g << rng.normal(), rng.normal() * 2.0;
      samples.push_back(g);
    }
    CovarianceAccumulator a, b, c, whole;
    for (int i = 0; i < 20; ++i) a.accumulate(samples[i]);
    for (int i = 20; i < 40; ++i) b.accumulate(samples[i]);
    for (int i = 40; i < 60; ++i) c.accumulate(samples[i]);
    for (const Vector& s : samples) whole.accumulate(s);
    const CovarianceAccumulator ab_c = CovarianceAccumulator::merged(
        CovarianceAccumulator::merged(a, b), c);
    const CovarianceAccumulator a_bc = CovarianceAccumulator::merged(
        a, CovarianceAccumulator::merged(b, c));
    CHECK((sample_covariance(ab_c) - sample_covariance(whole))
              .cwiseAbs()
              .maxCoeff() <= 1e-12);
    CHECK((sample_covariance(ab_c) - sample_covariance(a_bc))
              .cwiseAbs()
              .maxCoeff() <= 1e-12);
  }
  SUBCASE("sample covariance stays positive semidefinite") {
    RngStream rng(31u);
    CovarianceAccumulator acc;
    for (int i = 0; i < 50; ++i) {
      Vector g(3);
      for (Index j = 0; j < 3; ++j) g[j] = 5.0 * rng.normal();
      acc.accumulate(g);
    }
    const Vector evals =
        Eigen::SelfAdjointEigenSolver<Matrix>(sample_covariance(acc),
                                              Eigen::EigenvaluesOnly)
            .eigenvalues();
    CHECK(evals.minCoeff() >= -1e-10);
  }
}

TEST_CASE("plugin sandwich") {
  SUBCASE("no constraints, identity pieces") {
    const PluginCovariance pc = plugin_omega(
        Matrix::Identity(2, 2), Matrix::Zero(0, 2), Matrix::Identity(2, 2));
    CHECK((pc.Omega - Matrix::Identity(2, 2)).norm() <= 1e-12);
  }
  SUBCASE("zero gradient covariance gives a zero sandwich") {
    const PluginCovariance pc = plugin_omega(
        2.0 * Matrix::Identity(2, 2), Matrix::Ones(1, 2), Matrix::Zero(2, 2));
    CHECK(pc.Omega.norm() <= 1e-14);
  }
  SUBCASE("sandwich identity H Omega H = Sigma") {
    RngStream rng(17u);
    Matrix l(3, 3);
    for (Index i = 0; i < 3; ++i)
      for (Index j = 0; j < 3; ++j) l(i, j) = rng.normal();
    const Matrix hess = l * l.transpose() + Matrix::Identity(3, 3);
    Matrix jac(1, 3);
    jac << 1.0, 1.0, 1.0;
    Matrix cov = l.transpose() * l + 0.5 * Matrix::Identity(3, 3);
    const PluginCovariance pc = plugin_omega(hess, jac, cov);
    const Matrix recovered = pc.H * pc.Omega * pc.H;
    CHECK((recovered - pc.Sigma).norm() <= 1e-8 * std::max(1.0, pc.Sigma.norm()));
  }
  SUBCASE("singular KKT matrix is reported") {
    Matrix jac(2, 2);
    jac << 1.0, 0.0, 1.0, 0.0;  // dependent rows
    try {
      plugin_omega(Matrix::Identity(2, 2), jac, Matrix::Identity(2, 2));
      FAIL("expected SingularH");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::SingularH);
    }
  }
}

TEST_CASE("oracle sandwich and the normality scaling") {
  SUBCASE("identity pieces") {
    const OracleCovariance oc =
        oracle_omega(Matrix::Identity(2, 2), Matrix::Zero(0, 2),
                     Matrix::Identity(2, 2), 0.751, 1.0);
    CHECK((oc.Omega - Matrix::Identity(2, 2)).norm() <= 1e-12);
    CHECK(oc.eta == 0.5);
  }
  SUBCASE("critical stepsize exponent") {
    const OracleCovariance oc =
        oracle_omega(Matrix::Identity(1, 1), Matrix::Zero(0, 1),
                     Matrix::Identity(1, 1), 1.0, 1.0);
    CHECK(oc.eta == doctest::Approx(1.0));
  }
  SUBCASE("bordered blocks place the Jacobian correctly") {
    Matrix jac(1, 2);
    jac << 2.0, -1.0;
    const OracleCovariance oc = oracle_omega(
        3.0 * Matrix::Identity(2, 2), jac, Matrix::Identity(2, 2), 0.751, 1.0);
    CHECK(oc.H(0, 2) == doctest::Approx(2.0));
    CHECK(oc.H(2, 1) == doctest::Approx(-1.0));
    CHECK(oc.H(2, 2) == doctest::Approx(0.0));
  }
}

TEST_CASE("quantiles agree with quadrature oracles") {
  // Frozen expectations computed from the quadrature oracles in oracles.hpp.
  CHECK(normal_quantile(0.975) == doctest::Approx(1.959963985).epsilon(1e-7));
  CHECK(normal_quantile(0.975) ==
        doctest::Approx(testing::normal_quantile_quadrature(0.975))
            .epsilon(1e-7));
  CHECK(normal_quantile(0.5) == doctest::Approx(0.0).epsilon(1e-9));

  CHECK(chi2_quantile(1, 0.95) == doctest::Approx(3.841458821).epsilon(1e-7));
  const double z975 = normal_quantile(0.975);
  CHECK(chi2_quantile(1, 0.95) == doctest::Approx(z975 * z975).epsilon(1e-7));
  CHECK(chi2_quantile(5, 0.95) == doctest::Approx(11.0704977).epsilon(1e-7));
  CHECK(chi2_quantile(5, 0.95) ==
        doctest::Approx(testing::chi2_quantile_quadrature(5, 0.95))
            .epsilon(1e-6));
  CHECK(chi2_quantile(3, 0.9) ==
        doctest::Approx(testing::chi2_quantile_quadrature(3, 0.9))
            .epsilon(1e-6));

  CHECK_THROWS_AS(normal_quantile(0.0), Error);
  CHECK_THROWS_AS(normal_quantile(1.0), Error);
  CHECK_THROWS_AS(chi2_quantile(0, 0.5), Error);
}

TEST_CASE("confidence intervals") {
  SUBCASE("half width matches the frozen normal quantile") {
    const Vector w = Vector::Zero(1);
    const Matrix omega = Matrix::Identity(1, 1);
    const Vector v = Vector::Ones(1);
    const Interval iv = confidence_interval(w, omega, 0.01, v, 0.95);
    CHECK(iv.lo == doctest::Approx(-0.19600).epsilon(1e-4));
    CHECK(iv.hi == doctest::Approx(0.19600).epsilon(1e-4));
  }
  SUBCASE("higher levels nest") {
    Vector w(2);
    w << 0.3, -0.2;
    Matrix omega(2, 2);
    omega << 2.0, 0.3, 0.3, 1.0;
    Vector v(2);
    v << 1.0, 1.0;
    const Interval i95 = confidence_interval(w, omega, 0.05, v, 0.95);
    const Interval i99 = confidence_interval(w, omega, 0.05, v, 0.99);
    CHECK(i99.lo < i95.lo);
    CHECK(i99.hi > i95.hi);
  }
  SUBCASE("negative variance beyond tolerance is rejected") {
    const Vector w = Vector::Zero(1);
    const Matrix omega = -Matrix::Identity(1, 1);
    const Vector v = Vector::Ones(1);
    CHECK_THROWS_AS(confidence_interval(w, omega, 1.0, v, 0.95), Error);
  }
}

TEST_CASE("two-sided p-values") {
  const Vector w = Vector::Constant(1, 0.3);
  const Matrix omega = Matrix::Identity(1, 1);
  const Vector v = Vector::Ones(1);
  SUBCASE("the point estimate itself is never rejected") {
    CHECK(two_sided_p_value(w, omega, 0.01, v, 0.3) == doctest::Approx(1.0));
  }
  SUBCASE("the CI boundary maps to one minus the level") {
    const Interval iv = confidence_interval(w, omega, 0.01, v, 0.95);
    CHECK(two_sided_p_value(w, omega, 0.01, v, iv.hi) ==
          doctest::Approx(0.05).epsilon(1e-6));
    CHECK(two_sided_p_value(w, omega, 0.01, v, iv.lo) ==
          doctest::Approx(0.05).epsilon(1e-6));
  }
  SUBCASE("far nulls are strongly rejected") {
    CHECK(two_sided_p_value(w, omega, 0.01, v, 5.0) < 1e-10);
  }
}

TEST_CASE("region membership") {
  SUBCASE("center is always inside") {
    Vector w(2);
    w << 1.0, 2.0;
    const RegionCheck rc = region_membership(w, w, Matrix::Identity(2, 2),
                                             0.01, 0.95, 2);
    CHECK(rc.inside);
    CHECK(rc.statistic == doctest::Approx(0.0));
  }
  SUBCASE("one-dimensional boundary") {
    const Matrix omega = Matrix::Identity(1, 1);
    const Vector w_k = Vector::Zero(1);
    const double boundary = std::sqrt(0.01 * chi2_quantile(1, 0.95));
    CHECK(boundary == doctest::Approx(0.19600).epsilon(1e-4));
    CHECK(region_membership(Vector::Constant(1, boundary - 1e-4), w_k, omega,
                            0.01, 0.95, 1)
              .inside);
    CHECK(!region_membership(Vector::Constant(1, boundary + 1e-4), w_k, omega,
                             0.01, 0.95, 1)
               .inside);
  }
  SUBCASE("null-space deviations do not change the statistic") {
    Matrix omega = Matrix::Zero(2, 2);
    omega(0, 0) = 1.0;
    const Vector w_k = Vector::Zero(2);
    Vector in_range(2), mixed(2);
    in_range << 0.1, 0.0;
    mixed << 0.1, 5.0;  // second coordinate lies in the null space
    const RegionCheck a =
        region_membership(in_range, w_k, omega, 0.01, 0.95);
    const RegionCheck b = region_membership(mixed, w_k, omega, 0.01, 0.95);
    CHECK(a.statistic == doctest::Approx(b.statistic));
    CHECK(b.rank == 1);
  }
  SUBCASE("rank fallback is flagged") {
    Matrix omega = Matrix::Zero(3, 3);
    omega(0, 0) = 1.0;
    omega(1, 1) = 1.0;
    const Vector w = Vector::Zero(3);
    const RegionCheck rc = region_membership(w, w, omega, 0.5, 0.9, 3);
    CHECK(rc.rank == 2);
    CHECK(rc.rank_mismatch);
    CHECK(rc.dof_used == 2);
  }
}
