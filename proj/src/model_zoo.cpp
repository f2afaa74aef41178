#include "ssqp/model_zoo.hpp"

#include <algorithm>
#include <cmath>
#include <memory>

#include "ssqp/qp.hpp"

namespace ssqp {

namespace {

constexpr Index kQmcPoints = 1 << 14;

double sigmoid(double t) {
  if (t >= 0.0) return 1.0 / (1.0 + std::exp(-t));
  const double e = std::exp(t);
  return e / (1.0 + e);
}

// log(1 + exp(-s)) without overflow at either tail.
double log1p_exp_neg(double s) {
  if (s < -30.0) return -s;
  if (s > 30.0) return std::exp(-s);
  return std::log1p(std::exp(-s));
}

// Fast inverse normal CDF (rational approximation with one Halley
// refinement); used only to map the lattice onto Gaussian covariates.
double fast_normal_inverse(double p) {
  static const double a[] = {-3.969683028665376e+01, 2.209460984245205e+02,
                             -2.759285104469687e+02, 1.383577518672690e+02,
                             -3.066479806614716e+01, 2.506628277459239e+00};
  static const double b[] = {-5.447609879822406e+01, 1.615858368580409e+02,
                             -1.556989798598866e+02, 6.680131188771972e+01,
                             -1.328068155288572e+01};
  static const double c[] = {-7.784894002430293e-03, -3.223964580411365e-01,
                             -2.400758277161838e+00, -2.549732539343734e+00,
                             4.374664141464968e+00,  2.938163982698783e+00};
  static const double e[] = {7.784695709041462e-03, 3.224671290700398e-01,
                             2.445134137142996e+00, 3.754408661907416e+00};
  const double plow = 0.02425;
  double x;
  if (p < plow) {
    const double q = std::sqrt(-2.0 * std::log(p));
    x = (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
        ((((e[0] * q + e[1]) * q + e[2]) * q + e[3]) * q + 1.0);
  } else if (p <= 1.0 - plow) {
    const double q = p - 0.5;
    const double r = q * q;
    x = (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) *
        q /
        (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
  } else {
    const double q = std::sqrt(-2.0 * std::log(1.0 - p));
    x = -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
        ((((e[0] * q + e[1]) * q + e[2]) * q + e[3]) * q + 1.0);
  }
  // One Halley step against the exact CDF.
  const double err = 0.5 * std::erfc(-x * M_SQRT1_2) - p;
  const double pdf = std::exp(-0.5 * x * x) / std::sqrt(2.0 * M_PI);
  const double u = err / pdf;
  return x - u / (1.0 + 0.5 * x * u);
}

const double kPrimes[] = {2,  3,  5,  7,  11, 13, 17, 19, 23, 29,
                          31, 37, 41, 43, 47, 53, 59, 61, 67, 71,
                          73, 79, 83, 89, 97, 101, 103, 107, 109, 113,
                          127, 131};

// Kronecker lattice mapped through the inverse normal CDF; deterministic,
// so the population surrogate is identical across runs and platforms.
std::shared_ptr<Matrix> gaussian_lattice(Index d, const Vector& mean,
                                         const Matrix& chol_lower) {
  require(d <= static_cast<Index>(sizeof(kPrimes) / sizeof(kPrimes[0])),
          ErrorCode::InvalidArgument, "QMC lattice: dimension too large");
  auto points = std::make_shared<Matrix>(kQmcPoints, d);
  Vector z(d);
  for (Index i = 0; i < kQmcPoints; ++i) {
    for (Index j = 0; j < d; ++j) {
      const double alpha = std::sqrt(kPrimes[j]);
      double u = std::fmod(0.5 + (i + 1) * alpha, 1.0);
      u = std::min(std::max(u, 1e-12), 1.0 - 1e-12);
      z[j] = fast_normal_inverse(u);
    }
    points->row(i) = (mean + chol_lower * z).transpose();
  }
  return points;
}

ConstraintOracle simplex_constraint(Index d) {
  return [d](const Vector& x) {
    ConstraintEval ce;
    ce.value = Vector::Constant(1, x.sum() - 1.0);
    ce.jacobian = Matrix::Ones(1, d);
    ce.hessians.assign(1, Matrix::Zero(d, d));
    return ce;
  };
}

}  // namespace

void NoisySpec::validate() const {
  if (kind == NoiseKind::Gaussian) {
    require(sigma2 > 0.0, ErrorCode::InvalidArgument,
            "NoisySpec: sigma2 must be positive");
  } else {
    require(df >= 3, ErrorCode::InvalidArgument,
            "NoisySpec: Student-t noise needs df >= 3 for finite variance");
  }
}

Matrix covariance_matrix(CovStructure structure, Index d, double r) {
  require(d >= 1, ErrorCode::InvalidArgument, "covariance_matrix: d >= 1");
  Matrix cov = Matrix::Identity(d, d);
  switch (structure) {
    case CovStructure::Identity:
      break;
    case CovStructure::Toeplitz:
      require(r > -1.0 && r < 1.0, ErrorCode::InvalidArgument,
              "covariance_matrix: Toeplitz needs r in (-1, 1)");
      for (Index i = 0; i < d; ++i)
        for (Index j = 0; j < d; ++j)
          cov(i, j) = std::pow(r, std::abs(static_cast<double>(i - j)));
      break;
    case CovStructure::EquiCorr:
      require(r > 0.0 && r < 1.0, ErrorCode::InvalidArgument,
              "covariance_matrix: EquiCorr needs r in (0, 1)");
      cov.setConstant(r);
      cov.diagonal().setOnes();
      break;
  }
  Eigen::LLT<Matrix> llt(cov);
  require(llt.info() == Eigen::Success, ErrorCode::NotPositiveDefinite,
          "covariance_matrix: matrix is not positive definite");
  return cov;
}

Vector glm_true_parameter(Index d, GlmConstraint constraint) {
  Vector x(d);
  const Index half = (d + 1) / 2;
  for (Index i = 0; i < d; ++i) {
    x[i] = (i < half ? 3.0 : 1.0) / (2.0 * static_cast<double>(d));
  }
  if (constraint == GlmConstraint::Simplex) x /= x.sum();
  return x;
}

ZooProblem make_glm(const GlmSpec& spec) {
  const Index d = spec.d;
  require(d >= 2, ErrorCode::InvalidArgument, "make_glm: d must be >= 2");

  const Matrix cov = covariance_matrix(spec.cov_structure, d, spec.cov_r);
  const Matrix chol = Eigen::LLT<Matrix>(cov).matrixL();
  Vector mean(d);
  const Index half = (d + 1) / 2;
  for (Index i = 0; i < d; ++i) mean[i] = i < half ? 1.0 : -1.0;
  const Vector x_true = glm_true_parameter(d, spec.constraint);

  ZooProblem zp;
  zp.problem.d = d;
  zp.x_true = x_true;
  zp.mu_a = mean;

  switch (spec.constraint) {
    case GlmConstraint::Simplex: {
      zp.problem.m = 1;
      zp.problem.lower = Vector::Zero(d);
      zp.problem.upper = Vector::Constant(d, kInf);
      zp.problem.constraint_oracle = simplex_constraint(d);
      require(std::abs(x_true.sum() - 1.0) <= 1e-12 && x_true.minCoeff() >= 0,
              ErrorCode::InvalidTrueParameter,
              "make_glm: x_true violates the simplex constraint");
      break;
    }
    case GlmConstraint::NonnegativeSubset: {
      zp.problem.m = 0;
      zp.problem.lower = Vector::Constant(d, -kInf);
      zp.problem.upper = Vector::Constant(d, kInf);
      for (Index i : spec.nonneg_indices) {
        require(i >= 0 && i < d, ErrorCode::InvalidArgument,
                "make_glm: nonneg index out of range");
        zp.problem.lower[i] = 0.0;
        require(x_true[i] >= 0.0, ErrorCode::InvalidTrueParameter,
                "make_glm: x_true violates a sign constraint");
      }
      break;
    }
    case GlmConstraint::None: {
      zp.problem.m = 0;
      zp.problem.lower = Vector::Constant(d, -kInf);
      zp.problem.upper = Vector::Constant(d, kInf);
      break;
    }
  }

  const GlmKind kind = spec.kind;
  zp.problem.sample_oracle = [d, kind, mean, chol, x_true](
                                 const Vector& x, RngStream& rng) {
    Vector z(d);
    for (Index j = 0; j < d; ++j) z[j] = rng.normal();
    const Vector a = mean + chol * z;
    const double t = a.dot(x);
    const double t_star = a.dot(x_true);
    SampleEval out;
    switch (kind) {
      case GlmKind::Linear: {
        const double b = t_star + rng.normal();
        const double r = t - b;
        out.value = 0.5 * r * r;
        out.grad = r * a;
        out.hess = a * a.transpose();
        break;
      }
      case GlmKind::Logistic: {
        const double b = rng.uniform() < sigmoid(t_star) ? 1.0 : -1.0;
        const double bt = b * t;
        out.value = log1p_exp_neg(bt);
        out.grad = (-b * sigmoid(-bt)) * a;
        out.hess = (sigmoid(t) * sigmoid(-t)) * (a * a.transpose());
        break;
      }
      case GlmKind::Poisson: {
        const double b =
            static_cast<double>(rng.poisson(std::exp(t_star)));
        const double et = std::exp(t);
        out.value = -(b * t - et);
        out.grad = (et - b) * a;
        out.hess = et * (a * a.transpose());
        break;
      }
    }
    return out;
  };

  if (kind == GlmKind::Linear) {
    const Matrix second_moment = cov + mean * mean.transpose();
    zp.problem.exact_oracle = [second_moment, x_true](const Vector& x) {
      const Vector diff = x - x_true;
      ExactEval out;
      out.value = 0.5 * diff.dot(second_moment * diff) + 0.5;
      out.grad = second_moment * diff;
      out.hess = second_moment;
      return out;
    };
  } else {
    // Population surrogate: the response integral is closed-form given the
    // covariate, so only the Gaussian covariate is integrated numerically.
    auto lattice = gaussian_lattice(d, mean, chol);
    zp.problem.exact_oracle = [lattice, x_true, kind](const Vector& x) {
      const Index n = lattice->rows();
      const Index d_loc = x.size();
      ExactEval out;
      out.value = 0.0;
      out.grad = Vector::Zero(d_loc);
      out.hess = Matrix::Zero(d_loc, d_loc);
      const Vector proj = (*lattice) * x;
      const Vector proj_star = (*lattice) * x_true;
      for (Index i = 0; i < n; ++i) {
        const auto a = lattice->row(i);
        const double t = proj[i];
        const double ts = proj_star[i];
        if (kind == GlmKind::Logistic) {
          const double s_star = sigmoid(ts);
          const double lp = log1p_exp_neg(t);
          const double lm = log1p_exp_neg(-t);
          out.value += s_star * lp + (1.0 - s_star) * lm;
          const double gcoef = sigmoid(t) - s_star;
          const double hcoef = sigmoid(t) * sigmoid(-t);
          out.grad += gcoef * a.transpose();
          out.hess += hcoef * (a.transpose() * a);
        } else {
          const double et = std::exp(t);
          const double es = std::exp(ts);
          out.value += -(es * t - et);
          out.grad += (et - es) * a.transpose();
          out.hess += et * (a.transpose() * a);
        }
      }
      const double inv = 1.0 / static_cast<double>(n);
      out.value *= inv;
      out.grad *= inv;
      out.hess *= inv;
      return out;
    };
  }

  // The population score vanishes at the generating parameter for every
  // correctly specified model here, and the losses are convex, so a
  // feasible interior x_true is the constrained minimizer with zero
  // multipliers. Closed-form moments are only on hand for the linear model.
  if (kind != GlmKind::Linear) {
    PrimalDual pd = PrimalDual::zeros(d, zp.problem.m);
    pd.x = x_true;
    zp.solution = pd;
  } else {
    const Matrix second_moment = cov + mean * mean.transpose();
    if (spec.constraint == GlmConstraint::Simplex) {
      QpProblem pop;
      pop.B = second_moment;
      pop.g = -second_moment * x_true;
      pop.A = Matrix::Ones(1, d);
      pop.b = Vector::Ones(1);
      pop.lb = Vector::Zero(d);
      pop.ub = Vector::Constant(d, kInf);
      const QpSolution sol = d <= 6 ? brute_force_qp(pop) : solve_qp(pop);
      if (sol.status == QpStatus::Optimal) {
        PrimalDual pd;
        pd.x = sol.d;
        pd.lambda = sol.lambda;
        pd.mu_lower = sol.mu_lower;
        pd.mu_upper = sol.mu_upper;
        zp.solution = pd;
        AnalyticMoments am;
        am.hess_lagrangian = second_moment;
        const ActiveSets active =
            active_sets(sol.d, pop.lb, pop.ub, 0.0);
        ActiveSets strict;  // only strictly complementary coordinates
        for (Index i : active.at_lower) {
          if (sol.mu_lower[i] > 1e-12) strict.at_lower.push_back(i);
        }
        am.jac_active = active_jacobian(Matrix::Ones(1, d), strict, d);
        am.cov_grad = second_moment;  // E[eps^2 a a^T] with unit noise
        zp.moments = am;
      }
    } else {
      PrimalDual pd = PrimalDual::zeros(d, 0);
      pd.x = x_true;
      zp.solution = pd;
      AnalyticMoments am;
      am.hess_lagrangian = second_moment;
      am.jac_active = Matrix::Zero(0, d);
      am.cov_grad = second_moment;
      zp.moments = am;
    }
  }

  switch (kind) {
    case GlmKind::Linear: zp.name = "glm_linear"; break;
    case GlmKind::Logistic: zp.name = "glm_logistic"; break;
    case GlmKind::Poisson: zp.name = "glm_poisson"; break;
  }
  return zp;
}

Vector portfolio_encode(const Vector& weights, double gross_bound) {
  const Index d = weights.size();
  Vector vars(2 * d + 1);
  for (Index i = 0; i < d; ++i) {
    vars[i] = std::max(weights[i], 0.0);
    vars[d + i] = std::max(-weights[i], 0.0);
  }
  vars[2 * d] = gross_bound - weights.lpNorm<1>();
  return vars;
}

Vector portfolio_decode(const Vector& vars, Index assets) {
  require(vars.size() == 2 * assets + 1, ErrorCode::DimensionMismatch,
          "portfolio_decode: wrong variable dimension");
  return vars.head(assets) - vars.segment(assets, assets);
}

ZooProblem make_portfolio(const PortfolioSpec& spec, const Matrix& returns) {
  require(spec.gross_bound >= 1.0, ErrorCode::InfeasibleGrossBound,
          "make_portfolio: gross bound below 1 leaves no feasible weights");
  require(spec.eta1 > 0.0 && spec.eta2 > 0.0, ErrorCode::InvalidArgument,
          "make_portfolio: eta1 and eta2 must be positive");
  const Index d = spec.d;
  require(returns.cols() == d && returns.rows() >= 2,
          ErrorCode::DimensionMismatch,
          "make_portfolio: returns window must be T x d with T >= 2");
  const Index dim = portfolio_var_dim(d);

  ZooProblem zp;
  zp.problem.d = dim;
  zp.problem.m = 2;
  zp.problem.lower = Vector::Zero(dim);
  zp.problem.upper = Vector::Constant(dim, kInf);

  const double c = spec.gross_bound;
  zp.problem.constraint_oracle = [d, dim, c](const Vector& v) {
    ConstraintEval ce;
    ce.value = Vector(2);
    ce.value[0] = v.head(d).sum() - v.segment(d, d).sum() - 1.0;
    ce.value[1] = v.head(2 * d).sum() + v[2 * d] - c;
    ce.jacobian = Matrix::Zero(2, dim);
    ce.jacobian.row(0).head(d).setOnes();
    ce.jacobian.row(0).segment(d, d).setConstant(-1.0);
    ce.jacobian.row(1).setOnes();
    ce.hessians.assign(2, Matrix::Zero(dim, dim));
    return ce;
  };

  const auto window = std::make_shared<Matrix>(returns);
  const PortfolioModel model = spec.model;
  const double eta1 = spec.eta1;
  const double eta2 = spec.eta2;

  auto lift = [d, dim](double value, const Vector& gx, const Matrix& hx) {
    SampleEval out;
    out.value = value;
    out.grad = Vector::Zero(dim);
    out.grad.head(d) = gx;
    out.grad.segment(d, d) = -gx;
    out.hess = Matrix::Zero(dim, dim);
    out.hess.topLeftCorner(d, d) = hx;
    out.hess.block(0, d, d, d) = -hx;
    out.hess.block(d, 0, d, d) = -hx;
    out.hess.block(d, d, d, d) = hx;
    return out;
  };

  zp.problem.sample_oracle = [window, model, eta1, eta2, d, lift](
                                 const Vector& v, RngStream& rng) {
    const Index rows = window->rows();
    const Vector x = v.head(d) - v.segment(d, d);
    const auto draw_row = [&]() -> Vector {
      const Index i = static_cast<Index>(rng.uniform() * rows) % rows;
      return window->row(i).transpose();
    };
    switch (model) {
      case PortfolioModel::GMV: {
        const Vector w = draw_row() - draw_row();
        const double t = x.dot(w);
        return lift(0.5 * t * t, t * w, w * w.transpose());
      }
      case PortfolioModel::MV: {
        const Vector zeta = draw_row();
        const Vector w = zeta - draw_row();
        const double t = x.dot(w);
        return lift(-x.dot(zeta) + 0.5 * t * t, -zeta + t * w,
                    w * w.transpose());
      }
      case PortfolioModel::EXP: {
        const Vector zeta = draw_row();
        const double e = std::exp(-eta1 * x.dot(zeta));
        return lift(e, (-eta1 * e) * zeta,
                    (eta1 * eta1 * e) * (zeta * zeta.transpose()));
      }
      case PortfolioModel::LOG: {
        const Vector zeta = draw_row();
        const double s = x.dot(zeta) + eta2;
        require(s > 0.0, ErrorCode::NonFiniteValue,
                "portfolio LOG objective left the log domain");
        return lift(-std::log(s), (-1.0 / s) * zeta,
                    (1.0 / (s * s)) * (zeta * zeta.transpose()));
      }
    }
    fail(ErrorCode::InvalidArgument, "make_portfolio: unknown model");
  };

  zp.problem.exact_oracle = [window, model, eta1, eta2, d, lift](
                                const Vector& v) {
    const Index rows = window->rows();
    const Vector x = v.head(d) - v.segment(d, d);
    const Vector mean = window->colwise().mean().transpose();
    double value = 0.0;
    Vector gx = Vector::Zero(d);
    Matrix hx = Matrix::Zero(d, d);
    if (model == PortfolioModel::GMV || model == PortfolioModel::MV) {
      Matrix cov = (window->transpose() * (*window)) /
                       static_cast<double>(rows) -
                   mean * mean.transpose();
      cov = 0.5 * (cov + cov.transpose());
      value = x.dot(cov * x);
      gx = 2.0 * cov * x;
      hx = 2.0 * cov;
      if (model == PortfolioModel::MV) {
        value -= x.dot(mean);
        gx -= mean;
      }
    } else {
      for (Index i = 0; i < rows; ++i) {
        const Vector zeta = window->row(i).transpose();
        if (model == PortfolioModel::EXP) {
          const double e = std::exp(-eta1 * x.dot(zeta));
          value += e;
          gx += (-eta1 * e) * zeta;
          hx += (eta1 * eta1 * e) * (zeta * zeta.transpose());
        } else {
          const double s = x.dot(zeta) + eta2;
          require(s > 0.0, ErrorCode::NonFiniteValue,
                  "portfolio LOG objective left the log domain");
          value += -std::log(s);
          gx += (-1.0 / s) * zeta;
          hx += (1.0 / (s * s)) * (zeta * zeta.transpose());
        }
      }
      const double inv = 1.0 / static_cast<double>(rows);
      value *= inv;
      gx *= inv;
      hx *= inv;
    }
    const SampleEval lifted = lift(value, gx, hx);
    ExactEval out;
    out.value = lifted.value;
    out.grad = lifted.grad;
    out.hess = lifted.hess;
    return out;
  };

  switch (model) {
    case PortfolioModel::GMV: zp.name = "portfolio_gmv"; break;
    case PortfolioModel::MV: zp.name = "portfolio_mv"; break;
    case PortfolioModel::EXP: zp.name = "portfolio_exp"; break;
    case PortfolioModel::LOG: zp.name = "portfolio_log"; break;
  }
  return zp;
}

namespace {

struct DeterministicBenchmark {
  ProblemSpec problem;  // exact oracle only; sample oracle added by caller
  PrimalDual solution;
  Matrix hess_lagrangian;
  Matrix jac_active;
};

DeterministicBenchmark circle_benchmark() {
  DeterministicBenchmark b;
  b.problem.d = 1;
  b.problem.m = 1;
  b.problem.lower = Vector::Zero(1);
  b.problem.upper = Vector::Constant(1, 3.0);
  b.problem.constraint_oracle = [](const Vector& x) {
    ConstraintEval ce;
    ce.value = Vector::Constant(1, x[0] * x[0] - 4.0);
    ce.jacobian = Matrix::Constant(1, 1, 2.0 * x[0]);
    ce.hessians.assign(1, Matrix::Constant(1, 1, 2.0));
    return ce;
  };
  b.problem.exact_oracle = [](const Vector& x) {
    ExactEval out;
    const double r = x[0] - 1.0;
    out.value = r * r;
    out.grad = Vector::Constant(1, 2.0 * r);
    out.hess = Matrix::Constant(1, 1, 2.0);
    return out;
  };
  b.solution = PrimalDual::zeros(1, 1);
  b.solution.x[0] = 2.0;
  b.solution.lambda[0] = -0.5;
  b.hess_lagrangian = Matrix::Constant(1, 1, 2.0 + (-0.5) * 2.0);
  b.jac_active = Matrix::Constant(1, 1, 4.0);
  return b;
}

DeterministicBenchmark boundary_benchmark() {
  DeterministicBenchmark b;
  b.problem.d = 2;
  b.problem.m = 1;
  b.problem.lower = Vector(2);
  b.problem.lower << 0.6, -kInf;
  b.problem.upper = Vector::Constant(2, kInf);
  b.problem.constraint_oracle = [](const Vector& x) {
    ConstraintEval ce;
    ce.value = Vector::Constant(1, x[0] + x[1] - 1.0);
    ce.jacobian = Matrix::Ones(1, 2);
    ce.hessians.assign(1, Matrix::Zero(2, 2));
    return ce;
  };
  b.problem.exact_oracle = [](const Vector& x) {
    ExactEval out;
    out.value = x.squaredNorm();
    out.grad = 2.0 * x;
    out.hess = 2.0 * Matrix::Identity(2, 2);
    return out;
  };
  b.solution = PrimalDual::zeros(2, 1);
  b.solution.x << 0.6, 0.4;
  b.solution.lambda[0] = -0.8;
  b.solution.mu_lower[0] = 0.4;
  b.hess_lagrangian = 2.0 * Matrix::Identity(2, 2);
  b.jac_active = Matrix(2, 2);
  b.jac_active << 1.0, 1.0, -1.0, 0.0;
  return b;
}

// min 0.5 (x-z)' D (x-z) s.t. 0.5 (||x||^2 - 1) = 0, box [-2, 2]^3, with
// D = diag(1, 2, 3) and z placed so the solution and multiplier are exact.
DeterministicBenchmark ridge3_benchmark() {
  DeterministicBenchmark b;
  const Matrix diag_d = (Vector(3) << 1.0, 2.0, 3.0).finished().asDiagonal();
  Vector x_star(3);
  x_star << 2.0 / 3.0, 2.0 / 3.0, 1.0 / 3.0;
  const double lambda_star = 0.5;
  const Vector z = x_star + lambda_star * diag_d.inverse() * x_star;

  b.problem.d = 3;
  b.problem.m = 1;
  b.problem.lower = Vector::Constant(3, -2.0);
  b.problem.upper = Vector::Constant(3, 2.0);
  b.problem.constraint_oracle = [](const Vector& x) {
    ConstraintEval ce;
    ce.value = Vector::Constant(1, 0.5 * (x.squaredNorm() - 1.0));
    ce.jacobian = x.transpose();
    ce.hessians.assign(1, Matrix::Identity(3, 3));
    return ce;
  };
  b.problem.exact_oracle = [diag_d, z](const Vector& x) {
    ExactEval out;
    const Vector r = x - z;
    out.value = 0.5 * r.dot(diag_d * r);
    out.grad = diag_d * r;
    out.hess = diag_d;
    return out;
  };
  b.solution = PrimalDual::zeros(3, 1);
  b.solution.x = x_star;
  b.solution.lambda[0] = lambda_star;
  b.hess_lagrangian = diag_d + lambda_star * Matrix::Identity(3, 3);
  b.jac_active = x_star.transpose();
  return b;
}

}  // namespace

ZooProblem make_benchmark(const std::string& name, const NoisySpec& noise) {
  noise.validate();
  DeterministicBenchmark base;
  if (name == "circle") base = circle_benchmark();
  else if (name == "boundary") base = boundary_benchmark();
  else if (name == "ridge3") base = ridge3_benchmark();
  else fail(ErrorCode::UnknownBenchmark, "make_benchmark: unknown name " + name);

  ZooProblem zp;
  zp.name = name;
  zp.problem = base.problem;
  const Index d = zp.problem.d;
  const ExactOracle exact = base.problem.exact_oracle;
  const NoisySpec ns = noise;
  zp.problem.sample_oracle = [exact, ns, d](const Vector& x, RngStream& rng) {
    const ExactEval ee = exact(x);
    const auto draw = [&]() {
      return ns.kind == NoiseKind::Gaussian
                 ? std::sqrt(ns.sigma2) * rng.normal()
                 : rng.student_t(ns.df);
    };
    SampleEval out;
    out.value = ee.value;
    out.grad = ee.grad;
    out.hess = ee.hess;
    for (Index i = 0; i < d; ++i) out.grad[i] += draw();
    for (Index i = 0; i < d; ++i) {
      for (Index j = i; j < d; ++j) {
        const double e = draw();
        out.hess(i, j) += e;
        if (j != i) out.hess(j, i) += e;
      }
    }
    return out;
  };

  zp.solution = base.solution;
  AnalyticMoments am;
  am.hess_lagrangian = base.hess_lagrangian;
  am.jac_active = base.jac_active;
  const double var = noise.kind == NoiseKind::Gaussian
                         ? noise.sigma2
                         : static_cast<double>(noise.df) / (noise.df - 2);
  am.cov_grad = var * Matrix::Identity(d, d);
  zp.moments = am;
  return zp;
}

PrimalDual analytic_solution(const ZooProblem& zp) {
  require(zp.solution.has_value(), ErrorCode::NoAnalyticSolution,
          "analytic_solution: none registered for " + zp.name);
  return *zp.solution;
}

AnalyticMoments analytic_moments(const ZooProblem& zp) {
  require(zp.moments.has_value(), ErrorCode::NoAnalyticMoments,
          "analytic_moments: none registered for " + zp.name);
  return *zp.moments;
}

}  // namespace ssqp
