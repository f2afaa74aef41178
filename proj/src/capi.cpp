#include "ssqp/ssqp_c.h"

#include <cstring>
#include <iostream>
#include <string>

#include "ssqp/harness.hpp"

namespace {

thread_local std::string g_last_error;

ssqp_status map_error(const ssqp::Error& e) {
  g_last_error = e.what();
  using EC = ssqp::ErrorCode;
  switch (e.code()) {
    case EC::ConfigError:
      return SSQP_ERR_CONFIG;
    case EC::IoError:
    case EC::EmptyFile:
    case EC::RaggedRows:
    case EC::NonNumericCell:
      return SSQP_ERR_IO;
    case EC::InvalidArgument:
    case EC::DimensionMismatch:
    case EC::TolTooLarge:
    case EC::InvalidStepSize:
    case EC::TooLarge:
    case EC::UnknownBenchmark:
    case EC::InvalidTrueParameter:
    case EC::InfeasibleGrossBound:
      return SSQP_ERR_ARGUMENT;
    case EC::NonFiniteValue:
    case EC::EgmfcqFailure:
    case EC::QpFailure:
    case EC::NoConvergence:
    case EC::SingularH:
    case EC::NegativeVariance:
    case EC::NotPositiveDefinite:
      return SSQP_ERR_NUMERIC;
    default:
      return SSQP_ERR_RUNTIME;
  }
}

template <typename Fn>
ssqp_status guarded(Fn&& fn) {
  try {
    return fn();
  } catch (const ssqp::Error& e) {
    return map_error(e);
  } catch (const std::exception& e) {
    g_last_error = e.what();
    return SSQP_ERR_RUNTIME;
  } catch (...) {
    g_last_error = "unknown failure";
    return SSQP_ERR_RUNTIME;
  }
}

}  // namespace

struct ssqp_problem_s {
  ssqp::ZooProblem zoo;
  ssqp::Vector init;
};

struct ssqp_run_s {
  const ssqp_problem_s* problem;
  ssqp::SsqpConfig cfg;
  ssqp::SsqpState state;
  ssqp_run_s(const ssqp_problem_s* p, const ssqp::SsqpConfig& c,
             const ssqp::PrimalDual& pd, std::uint64_t seed)
      : problem(p), cfg(c), state(pd, ssqp::RngStream(seed)) {}
};

extern "C" {

const char* ssqp_last_error(void) { return g_last_error.c_str(); }

const char* ssqp_version(void) { return "0.1.0"; }

ssqp_status ssqp_problem_benchmark(const char* name, const char* noise_kind,
                                   double noise_param, ssqp_problem** out) {
  return guarded([&]() -> ssqp_status {
    ssqp::require(name && noise_kind && out, ssqp::ErrorCode::InvalidArgument,
                  "ssqp_problem_benchmark: null argument");
    ssqp::NoisySpec noise;
    if (std::strcmp(noise_kind, "gaussian") == 0) {
      noise.kind = ssqp::NoiseKind::Gaussian;
      noise.sigma2 = noise_param;
    } else if (std::strcmp(noise_kind, "student_t") == 0) {
      noise.kind = ssqp::NoiseKind::StudentT;
      noise.df = static_cast<int>(noise_param);
    } else {
      ssqp::fail(ssqp::ErrorCode::InvalidArgument,
                 "ssqp_problem_benchmark: unknown noise kind");
    }
    auto* handle = new ssqp_problem_s;
    handle->zoo = ssqp::make_benchmark(name, noise);
    handle->init = ssqp::Vector(handle->zoo.problem.d);
    for (ssqp::Index i = 0; i < handle->zoo.problem.d; ++i) {
      const double lo = handle->zoo.problem.lower[i];
      const double hi = handle->zoo.problem.upper[i];
      handle->init[i] = std::isfinite(lo) && std::isfinite(hi)
                            ? 0.5 * (lo + hi)
                            : (std::isfinite(lo) ? lo : 0.0);
    }
    *out = handle;
    return SSQP_OK;
  });
}

ssqp_status ssqp_problem_glm(const char* kind, int d,
                             const char* cov_structure, double cov_r,
                             const char* constraint, ssqp_problem** out) {
  return guarded([&]() -> ssqp_status {
    ssqp::require(kind && cov_structure && constraint && out,
                  ssqp::ErrorCode::InvalidArgument,
                  "ssqp_problem_glm: null argument");
    ssqp::GlmSpec spec;
    spec.d = d;
    if (std::strcmp(kind, "linear") == 0) spec.kind = ssqp::GlmKind::Linear;
    else if (std::strcmp(kind, "logistic") == 0) spec.kind = ssqp::GlmKind::Logistic;
    else if (std::strcmp(kind, "poisson") == 0) spec.kind = ssqp::GlmKind::Poisson;
    else ssqp::fail(ssqp::ErrorCode::InvalidArgument, "unknown GLM kind");
    if (std::strcmp(cov_structure, "identity") == 0)
      spec.cov_structure = ssqp::CovStructure::Identity;
    else if (std::strcmp(cov_structure, "toeplitz") == 0)
      spec.cov_structure = ssqp::CovStructure::Toeplitz;
    else if (std::strcmp(cov_structure, "equicorr") == 0)
      spec.cov_structure = ssqp::CovStructure::EquiCorr;
    else ssqp::fail(ssqp::ErrorCode::InvalidArgument, "unknown covariance structure");
    spec.cov_r = cov_r;
    if (std::strcmp(constraint, "simplex") == 0)
      spec.constraint = ssqp::GlmConstraint::Simplex;
    else if (std::strcmp(constraint, "none") == 0)
      spec.constraint = ssqp::GlmConstraint::None;
    else ssqp::fail(ssqp::ErrorCode::InvalidArgument, "unknown constraint");
    auto* handle = new ssqp_problem_s;
    handle->zoo = ssqp::make_glm(spec);
    handle->init =
        spec.constraint == ssqp::GlmConstraint::Simplex
            ? ssqp::Vector(ssqp::Vector::Constant(spec.d, 1.0 / spec.d))
            : ssqp::Vector(ssqp::Vector::Zero(spec.d));
    *out = handle;
    return SSQP_OK;
  });
}

void ssqp_problem_free(ssqp_problem* p) { delete p; }

int ssqp_problem_dim(const ssqp_problem* p) {
  return p ? static_cast<int>(p->zoo.problem.d) : -1;
}

int ssqp_problem_num_eq(const ssqp_problem* p) {
  return p ? static_cast<int>(p->zoo.problem.m) : -1;
}

ssqp_status ssqp_run_create(const ssqp_problem* p, const char* const* cfg_keys,
                            const char* const* cfg_vals, int ncfg,
                            unsigned long long seed, ssqp_run** out) {
  return guarded([&]() -> ssqp_status {
    ssqp::require(p && out, ssqp::ErrorCode::InvalidArgument,
                  "ssqp_run_create: null argument");
    ssqp::require(ncfg == 0 || (cfg_keys && cfg_vals),
                  ssqp::ErrorCode::InvalidArgument,
                  "ssqp_run_create: missing config arrays");
    std::string text;
    for (int i = 0; i < ncfg; ++i) {
      text += std::string(cfg_keys[i]) + " = " + cfg_vals[i] + "\n";
    }
    ssqp::KeyValueConfig kv = ssqp::KeyValueConfig::from_string(text);
    ssqp::ExperimentConfig ec = ssqp::parse_experiment_config(kv);
    kv.ensure_all_consumed();
    ec.ssqp.validate();
    ssqp::PrimalDual pd =
        ssqp::PrimalDual::zeros(p->zoo.problem.d, p->zoo.problem.m);
    pd.x = p->init;
    *out = new ssqp_run_s(p, ec.ssqp, pd, seed);
    return SSQP_OK;
  });
}

ssqp_status ssqp_run_steps(ssqp_run* r, long iterations) {
  return guarded([&]() -> ssqp_status {
    ssqp::require(r && iterations >= 0, ssqp::ErrorCode::InvalidArgument,
                  "ssqp_run_steps: bad arguments");
    for (long k = 0; k < iterations; ++k) {
      ssqp::ssqp_step(r->problem->zoo.problem, r->state, r->cfg);
    }
    return SSQP_OK;
  });
}

ssqp_status ssqp_run_primal(const ssqp_run* r, double* out, int len) {
  return guarded([&]() -> ssqp_status {
    ssqp::require(r && out, ssqp::ErrorCode::InvalidArgument,
                  "ssqp_run_primal: null argument");
    const ssqp::Vector& x = r->state.pd.x;
    ssqp::require(len == x.size(), ssqp::ErrorCode::DimensionMismatch,
                  "ssqp_run_primal: wrong length");
    for (int i = 0; i < len; ++i) out[i] = x[i];
    return SSQP_OK;
  });
}

ssqp_status ssqp_run_duals(const ssqp_run* r, double* lambda_out, int mlen,
                           double* mu_lower_out, double* mu_upper_out,
                           int dlen) {
  return guarded([&]() -> ssqp_status {
    ssqp::require(r, ssqp::ErrorCode::InvalidArgument,
                  "ssqp_run_duals: null handle");
    const ssqp::PrimalDual& pd = r->state.pd;
    if (lambda_out) {
      ssqp::require(mlen == pd.lambda.size(),
                    ssqp::ErrorCode::DimensionMismatch,
                    "ssqp_run_duals: wrong lambda length");
      for (int i = 0; i < mlen; ++i) lambda_out[i] = pd.lambda[i];
    }
    if (mu_lower_out || mu_upper_out) {
      ssqp::require(dlen == pd.x.size(), ssqp::ErrorCode::DimensionMismatch,
                    "ssqp_run_duals: wrong mu length");
      for (int i = 0; i < dlen; ++i) {
        if (mu_lower_out) mu_lower_out[i] = pd.mu_lower[i];
        if (mu_upper_out) mu_upper_out[i] = pd.mu_upper[i];
      }
    }
    return SSQP_OK;
  });
}

ssqp_status ssqp_run_kkt_residual(const ssqp_run* r, double* out_norm) {
  return guarded([&]() -> ssqp_status {
    ssqp::require(r && out_norm, ssqp::ErrorCode::InvalidArgument,
                  "ssqp_run_kkt_residual: null argument");
    const ssqp::ProblemSpec& p = r->problem->zoo.problem;
    const ssqp::Vector g = p.has_exact()
                               ? p.exact_oracle(r->state.pd.x).grad
                               : r->state.grad_avg;
    ssqp::require(g.size() == p.d, ssqp::ErrorCode::InvalidArgument,
                  "ssqp_run_kkt_residual: no gradient available yet");
    const ssqp::DualLeastSquares dls =
        ssqp::dual_least_squares(p, r->state.pd.x, g);
    double csq = 0.0;
    if (p.m > 0)
      csq = ssqp::eval_constraints(p, r->state.pd.x).value.squaredNorm();
    *out_norm = std::sqrt(dls.objective + csq);
    return SSQP_OK;
  });
}

void ssqp_run_free(ssqp_run* r) { delete r; }

ssqp_status ssqp_qp_solve(int d, int me, const double* B, const double* g,
                          const double* A, const double* b, const double* lb,
                          const double* ub, double tol, int max_iter,
                          double* d_out, double* lambda_out,
                          double* mu_lower_out, double* mu_upper_out,
                          int* qp_status_out) {
  return guarded([&]() -> ssqp_status {
    ssqp::require(d >= 1 && me >= 0 && B && g && lb && ub,
                  ssqp::ErrorCode::InvalidArgument,
                  "ssqp_qp_solve: bad arguments");
    ssqp::require(me == 0 || (A && b), ssqp::ErrorCode::InvalidArgument,
                  "ssqp_qp_solve: equalities need A and b");
    ssqp::QpProblem qp;
    qp.B = Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic,
                                          Eigen::Dynamic, Eigen::RowMajor>>(
        B, d, d);
    qp.g = Eigen::Map<const ssqp::Vector>(g, d);
    qp.A = me > 0
               ? ssqp::Matrix(Eigen::Map<const Eigen::Matrix<
                                  double, Eigen::Dynamic, Eigen::Dynamic,
                                  Eigen::RowMajor>>(A, me, d))
               : ssqp::Matrix::Zero(0, d);
    qp.b = me > 0 ? ssqp::Vector(Eigen::Map<const ssqp::Vector>(b, me))
                  : ssqp::Vector::Zero(0);
    qp.lb = Eigen::Map<const ssqp::Vector>(lb, d);
    qp.ub = Eigen::Map<const ssqp::Vector>(ub, d);
    const ssqp::QpSolution sol =
        ssqp::solve_qp(qp, tol > 0 ? tol : 1e-9,
                       max_iter > 0 ? max_iter : 500);
    if (qp_status_out) *qp_status_out = static_cast<int>(sol.status);
    if (sol.status == ssqp::QpStatus::Optimal ||
        sol.status == ssqp::QpStatus::RankDeficient) {
      for (int i = 0; i < d; ++i) {
        if (d_out) d_out[i] = sol.d[i];
        if (mu_lower_out) mu_lower_out[i] = sol.mu_lower[i];
        if (mu_upper_out) mu_upper_out[i] = sol.mu_upper[i];
      }
      if (lambda_out)
        for (int i = 0; i < me; ++i) lambda_out[i] = sol.lambda[i];
    }
    return SSQP_OK;
  });
}

ssqp_status ssqp_cmd_run(const char* config_path, const char* out_dir,
                         long long seed_override, int quiet) {
  return guarded([&]() -> ssqp_status {
    ssqp::require(config_path, ssqp::ErrorCode::InvalidArgument,
                  "ssqp_cmd_run: config path required");
    ssqp::KeyValueConfig kv = ssqp::KeyValueConfig::from_file(config_path);
    ssqp::ExperimentConfig cfg = ssqp::parse_experiment_config(kv);
    kv.ensure_all_consumed();
    if (out_dir && *out_dir) cfg.output_dir = out_dir;
    if (seed_override >= 0)
      cfg.base_seed = static_cast<std::uint64_t>(seed_override);
    ssqp::run_single_trajectory(cfg, quiet != 0);
    return SSQP_OK;
  });
}

ssqp_status ssqp_cmd_coverage(const char* config_path, const char* out_dir,
                              long long seed_override, int workers,
                              int quiet) {
  return guarded([&]() -> ssqp_status {
    ssqp::require(config_path, ssqp::ErrorCode::InvalidArgument,
                  "ssqp_cmd_coverage: config path required");
    ssqp::KeyValueConfig kv = ssqp::KeyValueConfig::from_file(config_path);
    ssqp::ExperimentConfig cfg = ssqp::parse_experiment_config(kv);
    kv.ensure_all_consumed();
    if (out_dir && *out_dir) cfg.output_dir = out_dir;
    if (seed_override >= 0)
      cfg.base_seed = static_cast<std::uint64_t>(seed_override);
    if (workers > 0) cfg.parallel_workers = workers;
    const ssqp::ExperimentResult result = ssqp::run_experiment(cfg);
    if (!quiet) {
      std::cout << "coverage " << result.coverage.cov_rate << " avg_len "
                << result.coverage.avg_len << " len_sd "
                << result.coverage.len_sd << " n " << result.coverage.n
                << " truth " << result.truth << "\n";
    }
    return SSQP_OK;
  });
}

ssqp_status ssqp_cmd_backtest(const char* returns_csv, const char* model,
                              int window, int rebalance, const char* out_dir,
                              long long seed, long iterations, int quiet) {
  return guarded([&]() -> ssqp_status {
    ssqp::require(returns_csv && model, ssqp::ErrorCode::InvalidArgument,
                  "ssqp_cmd_backtest: returns file and model required");
    const ssqp::Matrix returns = ssqp::load_returns_csv(returns_csv);
    ssqp::PortfolioSpec spec;
    spec.d = returns.cols();
    if (std::strcmp(model, "gmv") == 0) spec.model = ssqp::PortfolioModel::GMV;
    else if (std::strcmp(model, "mv") == 0) spec.model = ssqp::PortfolioModel::MV;
    else if (std::strcmp(model, "exp") == 0) spec.model = ssqp::PortfolioModel::EXP;
    else if (std::strcmp(model, "log") == 0) spec.model = ssqp::PortfolioModel::LOG;
    else ssqp::fail(ssqp::ErrorCode::InvalidArgument,
                    "ssqp_cmd_backtest: unknown model");
    ssqp::BacktestConfig bc;
    bc.window = window;
    bc.rebalance = rebalance;
    if (iterations > 0) bc.iterations = iterations;
    if (seed >= 0) bc.base_seed = static_cast<std::uint64_t>(seed);
    if (out_dir && *out_dir) bc.output_dir = out_dir;
    const ssqp::BacktestReport report =
        ssqp::backtest(returns, spec, bc);
    if (!quiet) {
      std::cout << "cumulative_return " << report.cumulative
                << " max_drawdown " << report.drawdown << " sharpe "
                << report.sharpe_ratio << " sortino " << report.sortino_ratio
                << " windows " << report.windows.size() << "\n";
    }
    return SSQP_OK;
  });
}

ssqp_status ssqp_cmd_selftest(int quiet) {
  return guarded([&]() -> ssqp_status {
    const ssqp::SelftestReport report = ssqp::selftest(quiet != 0);
    if (!report.ok()) {
      g_last_error = "selftest failures";
      return SSQP_ERR_NUMERIC;
    }
    return SSQP_OK;
  });
}

}  // extern "C"
