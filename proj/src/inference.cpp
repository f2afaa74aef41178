#include "ssqp/inference.hpp"

#include <cmath>

namespace ssqp {

void CovarianceAccumulator::accumulate(const Vector& grad_sample) {
  if (count == 0) {
    mean = Vector::Zero(grad_sample.size());
    second_moment = Matrix::Zero(grad_sample.size(), grad_sample.size());
  }
  require(grad_sample.size() == mean.size(), ErrorCode::DimensionMismatch,
          "CovarianceAccumulator: dimension changed");
  count += 1;
  mean += (grad_sample - mean) / static_cast<double>(count);
  second_moment.noalias() += grad_sample * grad_sample.transpose();
}

CovarianceAccumulator CovarianceAccumulator::merged(
    const CovarianceAccumulator& a, const CovarianceAccumulator& b) {
  if (a.count == 0) return b;
  if (b.count == 0) return a;
  require(a.mean.size() == b.mean.size(), ErrorCode::DimensionMismatch,
          "CovarianceAccumulator: merge dimension mismatch");
  CovarianceAccumulator out;
  out.count = a.count + b.count;
  const double wa = static_cast<double>(a.count) / out.count;
  out.mean = wa * a.mean + (1.0 - wa) * b.mean;
  out.second_moment = a.second_moment + b.second_moment;
  return out;
}

Matrix sample_covariance(const CovarianceAccumulator& acc) {
  require(acc.count >= 1, ErrorCode::EmptyAccumulator,
          "sample_covariance: no observations");
  Matrix cov = acc.second_moment / static_cast<double>(acc.count) -
               acc.mean * acc.mean.transpose();
  return 0.5 * (cov + cov.transpose());
}

namespace {

Matrix bordered_kkt(const Matrix& hess, const Matrix& jac) {
  const Index d = hess.rows();
  const Index r = jac.rows();
  Matrix h = Matrix::Zero(d + r, d + r);
  h.topLeftCorner(d, d) = 0.5 * (hess + hess.transpose());
  if (r > 0) {
    h.topRightCorner(d, r) = jac.transpose();
    h.bottomLeftCorner(r, d) = jac;
  }
  return h;
}

Matrix padded_sigma(const Matrix& cov_grad, Index total) {
  Matrix s = Matrix::Zero(total, total);
  s.topLeftCorner(cov_grad.rows(), cov_grad.cols()) =
      0.5 * (cov_grad + cov_grad.transpose());
  return s;
}

Matrix sandwich(const Matrix& h, const Matrix& sigma) {
  Eigen::SelfAdjointEigenSolver<Matrix> es(h);
  const Vector evals = es.eigenvalues();
  const double abs_max = evals.cwiseAbs().maxCoeff();
  const double abs_min = evals.cwiseAbs().minCoeff();
  require(abs_min > abs_max / 1e12, ErrorCode::SingularH,
          "plug-in covariance: KKT matrix numerically singular (constraint "
          "qualification failure at the current active set)");
  const Matrix hinv = es.eigenvectors() *
                      evals.cwiseInverse().asDiagonal() *
                      es.eigenvectors().transpose();
  Matrix omega = hinv * sigma * hinv;
  return 0.5 * (omega + omega.transpose());
}

}  // namespace

PluginCovariance plugin_omega(const Matrix& hess_step,
                              const Matrix& jac_active,
                              const Matrix& cov_grad,
                              const ActiveSets& active) {
  require(hess_step.rows() == cov_grad.rows(), ErrorCode::DimensionMismatch,
          "plugin_omega: Hessian/covariance dimension mismatch");
  PluginCovariance out;
  out.H = bordered_kkt(hess_step, jac_active);
  out.Sigma = padded_sigma(cov_grad, out.H.rows());
  out.Omega = sandwich(out.H, out.Sigma);
  out.active = active;
  return out;
}

OracleCovariance oracle_omega(const Matrix& hess_lagrangian,
                              const Matrix& jac_active,
                              const Matrix& cov_grad, double b1,
                              double iota1) {
  require(b1 > 0 && b1 <= 1, ErrorCode::InvalidArgument,
          "oracle_omega: b1 must lie in (0, 1]");
  OracleCovariance out;
  out.H = bordered_kkt(hess_lagrangian, jac_active);
  out.Sigma = padded_sigma(cov_grad, out.H.rows());
  out.Omega = sandwich(out.H, out.Sigma);
  if (b1 < 1.0) {
    out.eta = 0.5;
  } else {
    require(iota1 > 0.5, ErrorCode::InvalidArgument,
            "oracle_omega: b1 = 1 requires iota1 > 0.5");
    out.eta = iota1 / (2.0 * iota1 - 1.0);
  }
  return out;
}

namespace {

// Regularized lower incomplete gamma by series / continued fraction.
double gamma_p_series(double a, double x) {
  double term = 1.0 / a;
  double sum = term;
  double ap = a;
  for (int n = 0; n < 500; ++n) {
    ap += 1.0;
    term *= x / ap;
    sum += term;
    if (std::abs(term) < std::abs(sum) * 1e-16) break;
  }
  return sum * std::exp(-x + a * std::log(x) - std::lgamma(a));
}

double gamma_q_contfrac(double a, double x) {
  const double tiny = 1e-300;
  double b = x + 1.0 - a;
  double c = 1.0 / tiny;
  double d = 1.0 / b;
  double h = d;
  for (int i = 1; i < 500; ++i) {
    const double an = -static_cast<double>(i) * (static_cast<double>(i) - a);
    b += 2.0;
    d = an * d + b;
    if (std::abs(d) < tiny) d = tiny;
    c = b + an / c;
    if (std::abs(c) < tiny) c = tiny;
    d = 1.0 / d;
    const double delta = d * c;
    h *= delta;
    if (std::abs(delta - 1.0) < 1e-16) break;
  }
  return h * std::exp(-x + a * std::log(x) - std::lgamma(a));
}

}  // namespace

double regularized_gamma_p(double a, double x) {
  require(a > 0.0 && x >= 0.0, ErrorCode::DomainError,
          "regularized_gamma_p: need a > 0, x >= 0");
  if (x == 0.0) return 0.0;
  if (x < a + 1.0) return gamma_p_series(a, x);
  return 1.0 - gamma_q_contfrac(a, x);
}

double normal_quantile(double prob) {
  require(prob > 0.0 && prob < 1.0, ErrorCode::DomainError,
          "normal_quantile: prob must lie in (0, 1)");
  const auto cdf = [](double z) { return 0.5 * std::erfc(-z * M_SQRT1_2); };
  double lo = -40.0, hi = 40.0;
  for (int i = 0; i < 200; ++i) {
    const double mid = 0.5 * (lo + hi);
    if (cdf(mid) < prob) lo = mid;
    else hi = mid;
    if (hi - lo < 1e-13) break;
  }
  return 0.5 * (lo + hi);
}

double chi2_quantile(int dof, double prob) {
  require(dof >= 1, ErrorCode::DomainError, "chi2_quantile: dof must be >= 1");
  require(prob > 0.0 && prob < 1.0, ErrorCode::DomainError,
          "chi2_quantile: prob must lie in (0, 1)");
  const double a = 0.5 * static_cast<double>(dof);
  const auto cdf = [a](double x) { return regularized_gamma_p(a, 0.5 * x); };
  double hi = 1.0;
  while (cdf(hi) < prob && hi < 1e8) hi *= 2.0;
  double lo = 0.0;
  for (int i = 0; i < 200; ++i) {
    const double mid = 0.5 * (lo + hi);
    if (cdf(mid) < prob) lo = mid;
    else hi = mid;
    if (hi - lo < 1e-11 * std::max(1.0, hi)) break;
  }
  return 0.5 * (lo + hi);
}

Interval confidence_interval(const Vector& w, const Matrix& omega,
                             double alpha_bar, const Vector& v,
                             double level) {
  require(level > 0.0 && level < 1.0, ErrorCode::DomainError,
          "confidence_interval: level must lie in (0, 1)");
  require(v.size() == omega.rows() && w.size() == omega.rows(),
          ErrorCode::DimensionMismatch,
          "confidence_interval: dimension mismatch");
  require(alpha_bar >= 0.0, ErrorCode::InvalidArgument,
          "confidence_interval: alpha_bar must be nonnegative");
  double var = v.dot(omega * v);
  require(var >= -1e-12, ErrorCode::NegativeVariance,
          "confidence_interval: v' Omega v is negative");
  var = std::max(var, 0.0);
  const double z = normal_quantile(1.0 - 0.5 * (1.0 - level));
  const double half = z * std::sqrt(alpha_bar * var);
  const double center = v.dot(w);
  return Interval{center - half, center + half};
}

double two_sided_p_value(const Vector& w, const Matrix& omega,
                         double alpha_bar, const Vector& v,
                         double null_value) {
  require(v.size() == omega.rows() && w.size() == omega.rows(),
          ErrorCode::DimensionMismatch, "two_sided_p_value: size mismatch");
  double var = v.dot(omega * v);
  require(var >= -1e-12, ErrorCode::NegativeVariance,
          "two_sided_p_value: v' Omega v is negative");
  var = std::max(var, 0.0);
  const double sd = std::sqrt(alpha_bar * var);
  if (sd == 0.0) return v.dot(w) == null_value ? 1.0 : 0.0;
  const double z = std::abs(v.dot(w) - null_value) / sd;
  return std::erfc(z * M_SQRT1_2);
}

RegionCheck region_membership(const Vector& w_cand, const Vector& w_k,
                              const Matrix& omega, double alpha_bar,
                              double level, Index expected_dof) {
  require(w_cand.size() == omega.rows() && w_k.size() == omega.rows(),
          ErrorCode::DimensionMismatch, "region_membership: size mismatch");
  require(alpha_bar > 0.0, ErrorCode::InvalidArgument,
          "region_membership: alpha_bar must be positive");
  Eigen::SelfAdjointEigenSolver<Matrix> es(0.5 * (omega + omega.transpose()));
  const Vector evals = es.eigenvalues();
  const double cutoff = 1e-10 * std::max(0.0, evals.cwiseAbs().maxCoeff());

  RegionCheck out;
  Vector inv_evals = Vector::Zero(evals.size());
  for (Index i = 0; i < evals.size(); ++i) {
    if (evals[i] > cutoff) {
      inv_evals[i] = 1.0 / evals[i];
      out.rank += 1;
    }
  }
  const Vector diff = es.eigenvectors().transpose() * (w_cand - w_k);
  out.statistic = diff.dot(inv_evals.asDiagonal() * diff) / alpha_bar;
  out.dof_used = out.rank;
  if (expected_dof >= 1) {
    if (out.rank == expected_dof) {
      out.dof_used = expected_dof;
    } else {
      out.rank_mismatch = true;  // fall back to the estimated rank
    }
  }
  if (out.dof_used < 1) out.dof_used = 1;
  out.inside =
      out.statistic <= chi2_quantile(static_cast<int>(out.dof_used), level);
  return out;
}

}  // namespace ssqp
