#pragma once

#include <optional>
#include <string>

#include "ssqp/common.hpp"
#include "ssqp/problem.hpp"

namespace ssqp {

enum class GlmKind { Linear, Logistic, Poisson };
enum class CovStructure { Identity, Toeplitz, EquiCorr };
enum class GlmConstraint { Simplex, NonnegativeSubset, None };

struct GlmSpec {
  GlmKind kind = GlmKind::Linear;
  Index d = 5;
  CovStructure cov_structure = CovStructure::Identity;
  double cov_r = 0.0;  // Toeplitz/EquiCorr parameter
  GlmConstraint constraint = GlmConstraint::Simplex;
  std::vector<Index> nonneg_indices;  // for NonnegativeSubset
};

enum class PortfolioModel { GMV, MV, EXP, LOG };

struct PortfolioSpec {
  PortfolioModel model = PortfolioModel::GMV;
  Index d = 30;             // assets
  double gross_bound = 3.0; // c
  double eta1 = 0.1;        // exponential-utility risk aversion
  double eta2 = 15.0;       // logarithmic-utility shift
};

enum class NoiseKind { Gaussian, StudentT };

struct NoisySpec {
  NoiseKind kind = NoiseKind::Gaussian;
  double sigma2 = 1e-2;  // Gaussian variance
  int df = 3;            // Student-t degrees of freedom

  void validate() const;
};

/// Population moment pieces for the ground-truth sandwich.
struct AnalyticMoments {
  Matrix hess_lagrangian;  // d x d, at the solution
  Matrix jac_active;       // active-constraint Jacobian at the solution
  Matrix cov_grad;         // Cov(nabla F(x*; zeta))
};

/// A constructed experiment problem plus whatever ground truth it admits.
struct ZooProblem {
  std::string name;
  ProblemSpec problem;
  Vector x_true;  // generating parameter (GLMs); empty otherwise
  Vector mu_a;    // covariate mean / contrast direction (GLMs)
  std::optional<PrimalDual> solution;
  std::optional<AnalyticMoments> moments;
};

/// Identity / Toeplitz(r) / equi-correlation(r) covariance, verified
/// positive definite.
Matrix covariance_matrix(CovStructure structure, Index d, double r);

/// Generating parameter: the first ceil(d/2) entries carry the larger
/// weight 3/(2d), the rest 1/(2d); rescaled onto the simplex when that
/// constraint is requested.
Vector glm_true_parameter(Index d, GlmConstraint constraint);

ZooProblem make_glm(const GlmSpec& spec);

/// Slack-reformulated portfolio problem over (p, n, s) with x = p - n;
/// samples are uniform redraws from the rows of the given window and the
/// exact oracle averages the window.
ZooProblem make_portfolio(const PortfolioSpec& spec, const Matrix& returns);

/// Decision-variable dimension of the slack reformulation.
inline Index portfolio_var_dim(Index assets) { return 2 * assets + 1; }

/// Encode weights into (p, n, s); decode recovers x = p - n.
Vector portfolio_encode(const Vector& weights, double gross_bound);
Vector portfolio_decode(const Vector& vars, Index assets);

/// Named noise-injected benchmarks: circle, boundary, ridge3.
ZooProblem make_benchmark(const std::string& name, const NoisySpec& noise);

/// The exact primal-dual solution when one is known.
PrimalDual analytic_solution(const ZooProblem& zp);

/// Ground-truth moments when they are known in closed form.
AnalyticMoments analytic_moments(const ZooProblem& zp);

}  // namespace ssqp
