#include "ssqp/harness.hpp"

#include <atomic>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <thread>

namespace ssqp {

namespace {

GlmKind parse_glm_kind(const std::string& problem) {
  if (problem == "glm_linear") return GlmKind::Linear;
  if (problem == "glm_logistic") return GlmKind::Logistic;
  if (problem == "glm_poisson") return GlmKind::Poisson;
  fail(ErrorCode::ConfigError, "unknown problem '" + problem + "'");
}

CovStructure parse_structure(const std::string& s) {
  if (s == "identity") return CovStructure::Identity;
  if (s == "toeplitz") return CovStructure::Toeplitz;
  if (s == "equicorr") return CovStructure::EquiCorr;
  fail(ErrorCode::ConfigError, "unknown covariance structure '" + s + "'");
}

const char* structure_name(CovStructure s) {
  switch (s) {
    case CovStructure::Identity: return "identity";
    case CovStructure::Toeplitz: return "toeplitz";
    case CovStructure::EquiCorr: return "equicorr";
  }
  return "?";
}

ZooProblem build_problem(const ExperimentConfig& cfg) {
  if (cfg.problem == "benchmark") {
    return make_benchmark(cfg.benchmark_name, cfg.noise);
  }
  GlmSpec spec = cfg.glm;
  spec.kind = parse_glm_kind(cfg.problem);
  return make_glm(spec);
}

Vector default_init(const ProblemSpec& p) {
  Vector x(p.d);
  for (Index i = 0; i < p.d; ++i) {
    const bool lo = std::isfinite(p.lower[i]);
    const bool hi = std::isfinite(p.upper[i]);
    if (lo && hi) x[i] = 0.5 * (p.lower[i] + p.upper[i]);
    else if (lo) x[i] = p.lower[i];
    else if (hi) x[i] = p.upper[i];
    else x[i] = 0.0;
  }
  return x;
}

Vector initial_point(const ZooProblem& zp) {
  const ProblemSpec& p = zp.problem;
  // Simplex-constrained models start at the uniform weights; that point is
  // feasible, so the relaxation stays at one from the first step.
  if (p.m == 1 && p.lower.size() > 0 && p.lower.minCoeff() == 0.0 &&
      !std::isfinite(p.upper.maxCoeff()) && zp.name.rfind("glm", 0) == 0) {
    return Vector::Constant(p.d, 1.0 / static_cast<double>(p.d));
  }
  if (zp.name == "boundary") {
    Vector x(2);
    x << 1.0, 0.0;
    return x;
  }
  if (zp.name == "ridge3") {
    Vector x(3);
    x << 1.0, 0.0, 0.0;
    return x;
  }
  return default_init(p);
}

struct RunCapture {
  CovarianceAccumulator acc;
  StepReport last;
  bool any = false;
};

SsqpState run_with_capture(const ProblemSpec& p, const PrimalDual& init,
                           const SsqpConfig& cfg, long iterations,
                           std::uint64_t seed, RunCapture& capture) {
  return run(p, init, cfg, iterations, seed,
             [&capture](long, const SsqpState&, const StepReport& report) {
               capture.acc.accumulate(report.grad_sample);
               capture.last = report;
               capture.any = true;
             });
}

Matrix plugin_omega_at(const ProblemSpec& p, const SsqpConfig& cfg,
                       const SsqpState& state, const StepReport& last,
                       const CovarianceAccumulator& acc) {
  const ConstraintEval ce = eval_constraints(p, state.pd.x);
  const Matrix jac = active_jacobian(ce.jacobian, last.active, p.d);
  const HessianBuild hb =
      build_hessian(state.hess_avg, state.pd.lambda, ce, state.pd.x, p, cfg);
  return plugin_omega(hb.B, jac, sample_covariance(acc), last.active).Omega;
}

Vector stack_primal_dual(const SsqpState& state, const ActiveSets& active) {
  const Index d = state.pd.x.size();
  const Index m = state.pd.lambda.size();
  Vector w(d + m + active.total());
  w.head(d) = state.pd.x;
  w.segment(d, m) = state.pd.lambda;
  Index at = d + m;
  for (Index i : active.at_lower) w[at++] = state.pd.mu_lower[i];
  for (Index i : active.at_upper) w[at++] = state.pd.mu_upper[i];
  return w;
}

double full_kkt_residual(const ProblemSpec& p, const SsqpState& state) {
  const Vector g = p.has_exact() ? p.exact_oracle(state.pd.x).grad
                                 : Vector(state.grad_avg);
  const DualLeastSquares dls = dual_least_squares(p, state.pd.x, g);
  double csq = 0.0;
  if (p.m > 0) csq = eval_constraints(p, state.pd.x).value.squaredNorm();
  return std::sqrt(dls.objective + csq);
}

}  // namespace

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return std::string(buf);
}

double eta_scaling(const SsqpConfig& cfg) {
  if (cfg.b1 < 1.0) return 0.5;
  return cfg.iota1 / (2.0 * cfg.iota1 - 1.0);
}

int resolve_workers(int requested) {
  if (const char* env = std::getenv("SSQP_WORKERS")) {
    const long v = std::strtol(env, nullptr, 10);
    if (v >= 1) return static_cast<int>(v);
  }
  return std::max(1, requested);
}

ExperimentConfig parse_experiment_config(KeyValueConfig& kv) {
  ExperimentConfig cfg;
  cfg.problem = kv.get_string("problem", cfg.problem);
  cfg.replications = kv.get_long("replications", cfg.replications);
  cfg.iterations = kv.get_long("iterations", cfg.iterations);
  cfg.base_seed =
      static_cast<std::uint64_t>(kv.get_long("base_seed", 1));
  cfg.target = kv.get_string("target", cfg.target);
  cfg.level = kv.get_double("level", cfg.level);
  cfg.output_dir = kv.get_string("output_dir", cfg.output_dir);
  cfg.parallel_workers =
      static_cast<int>(kv.get_long("parallel_workers", cfg.parallel_workers));
  cfg.use_oracle_omega = kv.get_bool("use_oracle_omega", false);

  cfg.glm.d = kv.get_long("glm.d", cfg.glm.d);
  cfg.glm.cov_structure =
      parse_structure(kv.get_string("glm.cov", "identity"));
  cfg.glm.cov_r = kv.get_double("glm.r", cfg.glm.cov_r);
  const std::string constraint = kv.get_string("glm.constraint", "simplex");
  if (constraint == "simplex") cfg.glm.constraint = GlmConstraint::Simplex;
  else if (constraint == "nonneg") cfg.glm.constraint = GlmConstraint::NonnegativeSubset;
  else if (constraint == "none") cfg.glm.constraint = GlmConstraint::None;
  else fail(ErrorCode::ConfigError, "unknown glm.constraint '" + constraint + "'");
  const std::string idx = kv.get_string("glm.nonneg_indices", "");
  if (!idx.empty()) {
    size_t pos = 0;
    while (pos < idx.size()) {
      size_t next = idx.find(',', pos);
      if (next == std::string::npos) next = idx.size();
      cfg.glm.nonneg_indices.push_back(
          std::strtol(idx.substr(pos, next - pos).c_str(), nullptr, 10));
      pos = next + 1;
    }
  }

  cfg.benchmark_name = kv.get_string("benchmark.name", cfg.benchmark_name);
  const std::string noise = kv.get_string("benchmark.noise", "gaussian");
  if (noise == "gaussian") cfg.noise.kind = NoiseKind::Gaussian;
  else if (noise == "student_t") cfg.noise.kind = NoiseKind::StudentT;
  else fail(ErrorCode::ConfigError, "unknown benchmark.noise '" + noise + "'");
  cfg.noise.sigma2 = kv.get_double("benchmark.sigma2", cfg.noise.sigma2);
  cfg.noise.df = static_cast<int>(kv.get_long("benchmark.df", cfg.noise.df));

  SsqpConfig& s = cfg.ssqp;
  s.iota1 = kv.get_double("ssqp.iota1", s.iota1);
  s.b1 = kv.get_double("ssqp.b1", s.b1);
  s.iota2 = kv.get_double("ssqp.iota2", s.iota2);
  s.b2 = kv.get_double("ssqp.b2", s.b2);
  s.iota3 = kv.get_double("ssqp.iota3", s.iota3);
  s.b3 = kv.get_double("ssqp.b3", s.b3);
  s.tau = kv.get_double("ssqp.tau", s.tau);
  s.psi = kv.get_double("ssqp.psi", s.psi);
  s.p_adapt = kv.get_double("ssqp.p_adapt", s.p_adapt);
  s.theta_min = kv.get_double("ssqp.theta_min", s.theta_min);
  s.eps_active = kv.get_double("ssqp.eps_active", s.eps_active);
  s.omega = kv.get_double("ssqp.omega", s.omega);
  s.kappa_max = kv.get_double("ssqp.kappa_max", s.kappa_max);
  const std::string hmode = kv.get_string("ssqp.hessian_mode", "averaged");
  if (hmode == "averaged") s.hessian_mode = HessianMode::Averaged;
  else if (hmode == "identity") s.hessian_mode = HessianMode::Identity;
  else fail(ErrorCode::ConfigError, "unknown ssqp.hessian_mode '" + hmode + "'");
  const std::string smode = kv.get_string("ssqp.stepsize_mode", "deterministic");
  if (smode == "deterministic") s.stepsize_mode = StepsizeMode::Deterministic;
  else if (smode == "uniform_random") s.stepsize_mode = StepsizeMode::UniformRandom;
  else fail(ErrorCode::ConfigError, "unknown ssqp.stepsize_mode '" + smode + "'");
  return cfg;
}

CoverageReport coverage_report(const std::vector<Interval>& intervals,
                               double truth_value) {
  require(!intervals.empty(), ErrorCode::EmptyRecords,
          "coverage_report: no records");
  CoverageReport out;
  out.n = static_cast<long>(intervals.size());
  double len_sum = 0.0;
  long covered = 0;
  for (const Interval& iv : intervals) {
    if (iv.contains(truth_value)) ++covered;
    len_sum += iv.length();
  }
  out.cov_rate = static_cast<double>(covered) / static_cast<double>(out.n);
  out.avg_len = len_sum / static_cast<double>(out.n);
  double sq = 0.0;
  for (const Interval& iv : intervals) {
    const double dlen = iv.length() - out.avg_len;
    sq += dlen * dlen;
  }
  out.len_sd = std::sqrt(sq / static_cast<double>(out.n));
  return out;
}

ExperimentResult run_experiment(const ExperimentConfig& cfg) {
  require(cfg.replications >= 1, ErrorCode::ConfigError,
          "run_experiment: replications must be >= 1");
  require(cfg.iterations >= 1, ErrorCode::ConfigError,
          "run_experiment: the interval is undefined before any "
          "accumulation (iterations must be >= 1)");
  require(cfg.level > 0.0 && cfg.level < 1.0, ErrorCode::ConfigError,
          "run_experiment: level must lie in (0, 1)");
  cfg.ssqp.validate(true);

  const ZooProblem zp = build_problem(cfg);
  const ProblemSpec& p = zp.problem;

  const PrimalDual truth_pd = analytic_solution(zp);
  // The functional direction spans the primal block or an equality
  // multiplier; bound-multiplier functionals would need the active-set
  // layout and are not exposed.
  Vector v_primal = Vector::Zero(p.d);
  Index lambda_index = -1;
  double truth = 0.0;
  if (cfg.target == "group-mean-contrast") {
    require(zp.mu_a.size() == p.d, ErrorCode::ConfigError,
            "run_experiment: group-mean-contrast needs a GLM problem");
    v_primal = zp.mu_a;
    truth = v_primal.dot(truth_pd.x);
  } else if (cfg.target.rfind("coord:", 0) == 0) {
    const long i = std::strtol(cfg.target.c_str() + 6, nullptr, 10);
    require(i >= 0 && i < p.d, ErrorCode::ConfigError,
            "run_experiment: coordinate target out of range");
    v_primal[i] = 1.0;
    truth = truth_pd.x[i];
  } else if (cfg.target.rfind("lambda:", 0) == 0) {
    const long i = std::strtol(cfg.target.c_str() + 7, nullptr, 10);
    require(i >= 0 && i < p.m, ErrorCode::ConfigError,
            "run_experiment: multiplier target out of range");
    lambda_index = i;
    truth = truth_pd.lambda[i];
  } else {
    fail(ErrorCode::ConfigError,
         "run_experiment: unknown target '" + cfg.target + "'");
  }
  const double eta = eta_scaling(cfg.ssqp);

  PrimalDual init = PrimalDual::zeros(p.d, p.m);
  init.x = initial_point(zp);

  std::vector<ReplicationRecord> records(cfg.replications);
  std::atomic<long> next_rep{0};
  const int workers = std::min<long>(resolve_workers(cfg.parallel_workers),
                                     cfg.replications);

  auto worker_fn = [&]() {
    for (;;) {
      const long r = next_rep.fetch_add(1);
      if (r >= cfg.replications) break;
      ReplicationRecord& rec = records[r];
      rec.rep = r;
      rec.seed = cfg.base_seed + static_cast<std::uint64_t>(r);
      try {
        RunCapture capture;
        const SsqpState state = run_with_capture(p, init, cfg.ssqp,
                                                 cfg.iterations, rec.seed,
                                                 capture);
        require(capture.any, ErrorCode::EmptyAccumulator,
                "run_experiment: no steps recorded");
        Matrix omega;
        if (cfg.use_oracle_omega) {
          const AnalyticMoments am = analytic_moments(zp);
          omega = oracle_omega(am.hess_lagrangian, am.jac_active, am.cov_grad,
                               cfg.ssqp.b1, cfg.ssqp.iota1)
                      .Omega;
          Vector w = Vector::Zero(omega.rows());
          w.head(p.d) = state.pd.x;
          w.segment(p.d, p.m) = state.pd.lambda;
          Vector v = Vector::Zero(omega.rows());
          v.head(p.d) = v_primal;
          if (lambda_index >= 0) v[p.d + lambda_index] = 1.0;
          rec.interval = confidence_interval(
              w, omega, eta * capture.last.alpha_bar, v, cfg.level);
        } else {
          omega = plugin_omega_at(p, cfg.ssqp, state, capture.last,
                                  capture.acc);
          const Vector w = stack_primal_dual(state, capture.last.active);
          Vector v = Vector::Zero(omega.rows());
          v.head(p.d) = v_primal;
          if (lambda_index >= 0) v[p.d + lambda_index] = 1.0;
          rec.interval = confidence_interval(
              w, omega, eta * capture.last.alpha_bar, v, cfg.level);
        }
        rec.final_kkt_residual = full_kkt_residual(p, state);
      } catch (const std::exception&) {
        rec.failed = true;
      }
    }
  };

  if (workers <= 1) {
    worker_fn();
  } else {
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (int t = 0; t < workers; ++t) pool.emplace_back(worker_fn);
    for (auto& th : pool) th.join();
  }

  ExperimentResult result;
  result.records = std::move(records);
  result.truth = truth;
  std::vector<Interval> intervals;
  for (const ReplicationRecord& rec : result.records) {
    if (rec.failed) ++result.failures;
    else intervals.push_back(rec.interval);
  }
  require(!intervals.empty(), ErrorCode::EmptyRecords,
          "run_experiment: every replication failed");
  if (result.failures * 50 > cfg.replications) {  // > 2%
    std::cerr << "warning: " << result.failures << " of " << cfg.replications
              << " replications failed and were excluded\n";
  }
  result.coverage = coverage_report(intervals, truth);

  if (!cfg.output_dir.empty()) {
    std::filesystem::create_directories(cfg.output_dir);
    {
      std::ofstream out(cfg.output_dir + "/replications.csv");
      out << "rep,seed,covered,lo,hi,len,final_kkt_residual\n";
      for (const ReplicationRecord& rec : result.records) {
        if (rec.failed) continue;
        out << rec.rep << ',' << rec.seed << ','
            << (rec.interval.contains(truth) ? 1 : 0) << ','
            << format_double(rec.interval.lo) << ','
            << format_double(rec.interval.hi) << ','
            << format_double(rec.interval.length()) << ','
            << format_double(rec.final_kkt_residual) << '\n';
      }
    }
    {
      std::ofstream out(cfg.output_dir + "/summary.csv");
      out << "problem,d,structure,r,cov_rate,avg_len,len_sd,reps,K,seed\n";
      std::string structure;
      std::string rparam;
      if (cfg.problem == "benchmark") {
        structure = cfg.noise.kind == NoiseKind::Gaussian ? "gaussian"
                                                          : "student_t";
        rparam = cfg.noise.kind == NoiseKind::Gaussian
                     ? format_double(cfg.noise.sigma2)
                     : std::to_string(cfg.noise.df);
        out << cfg.benchmark_name;
      } else {
        structure = structure_name(cfg.glm.cov_structure);
        rparam = format_double(cfg.glm.cov_r);
        out << cfg.problem;
      }
      out << ',' << p.d << ',' << structure << ',' << rparam << ','
          << format_double(result.coverage.cov_rate) << ','
          << format_double(result.coverage.avg_len) << ','
          << format_double(result.coverage.len_sd) << ','
          << result.coverage.n << ',' << cfg.iterations << ','
          << cfg.base_seed << '\n';
    }
  }
  return result;
}

SsqpState run_single_trajectory(const ExperimentConfig& cfg, bool quiet) {
  require(cfg.iterations >= 1, ErrorCode::ConfigError,
          "run_single_trajectory: iterations must be >= 1");
  cfg.ssqp.validate();
  const ZooProblem zp = build_problem(cfg);
  const ProblemSpec& p = zp.problem;
  PrimalDual init = PrimalDual::zeros(p.d, p.m);
  init.x = initial_point(zp);

  std::ofstream log;
  if (!cfg.output_dir.empty()) {
    std::filesystem::create_directories(cfg.output_dir);
    log.open(cfg.output_dir + "/trajectory.csv");
    log << "k,theta,alpha_bar,qp_status,shift_delta,kkt_residual";
    for (Index i = 0; i < p.d; ++i) log << ",x" << i;
    log << '\n';
  }

  SsqpState state = run(
      p, init, cfg.ssqp, cfg.iterations, cfg.base_seed,
      [&](long k, const SsqpState& s, const StepReport& rep) {
        if (!log.is_open()) return;
        const Vector g = p.has_exact() ? p.exact_oracle(s.pd.x).grad
                                       : Vector(s.grad_avg);
        const double res = kkt_residual(p, s.pd, g).norm();
        log << k << ',' << format_double(rep.theta) << ','
            << format_double(rep.alpha_bar) << ','
            << static_cast<int>(rep.qp_status) << ','
            << format_double(rep.shift_delta) << ',' << format_double(res);
        for (Index i = 0; i < p.d; ++i)
          log << ',' << format_double(s.pd.x[i]);
        log << '\n';
      });

  const double final_res = full_kkt_residual(p, state);
  if (!quiet) {
    std::cout << "final x:";
    for (Index i = 0; i < p.d; ++i) std::cout << ' ' << state.pd.x[i];
    std::cout << "\nfinal kkt residual: " << final_res << "\n";
  }
  return state;
}

Matrix load_returns_csv(const std::string& path,
                        std::vector<std::string>* column_names) {
  std::ifstream in(path);
  require(in.good(), ErrorCode::IoError, "load_returns_csv: cannot open " + path);
  std::string line;
  require(static_cast<bool>(std::getline(in, line)), ErrorCode::EmptyFile,
          "load_returns_csv: " + path + " is empty");
  if (!line.empty() && line.back() == '\r') line.pop_back();

  std::vector<std::string> names;
  {
    size_t pos = 0;
    while (true) {
      const size_t next = line.find(',', pos);
      names.push_back(line.substr(pos, next == std::string::npos
                                           ? std::string::npos
                                           : next - pos));
      if (next == std::string::npos) break;
      pos = next + 1;
    }
  }
  const size_t cols = names.size();
  require(cols >= 1, ErrorCode::EmptyFile, "load_returns_csv: no columns");

  std::vector<double> cells;
  long rows = 0;
  long lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    size_t pos = 0;
    size_t col = 0;
    while (true) {
      const size_t next = line.find(',', pos);
      const std::string cell = line.substr(
          pos, next == std::string::npos ? std::string::npos : next - pos);
      require(col < cols, ErrorCode::RaggedRows,
              "load_returns_csv: line " + std::to_string(lineno) +
                  " has too many columns");
      char* end = nullptr;
      const double v = std::strtod(cell.c_str(), &end);
      require(end != cell.c_str() && *end == '\0', ErrorCode::NonNumericCell,
              "load_returns_csv: non-numeric cell at line " +
                  std::to_string(lineno) + ", column " +
                  std::to_string(col + 1));
      cells.push_back(v);
      ++col;
      if (next == std::string::npos) break;
      pos = next + 1;
    }
    require(col == cols, ErrorCode::RaggedRows,
            "load_returns_csv: line " + std::to_string(lineno) +
                " has too few columns");
    ++rows;
  }
  require(rows >= 1, ErrorCode::EmptyFile,
          "load_returns_csv: no data rows in " + path);
  Matrix out(rows, static_cast<Index>(cols));
  for (long r = 0; r < rows; ++r)
    for (size_t c = 0; c < cols; ++c)
      out(r, static_cast<Index>(c)) = cells[r * cols + c];
  if (column_names) *column_names = names;
  return out;
}

double cumulative_return(const std::vector<double>& returns) {
  require(!returns.empty(), ErrorCode::EmptySeries, "cumulative_return: empty");
  double wealth = 1.0;
  for (double r : returns) wealth *= 1.0 + r;
  return wealth - 1.0;
}

double max_drawdown(const std::vector<double>& returns) {
  require(!returns.empty(), ErrorCode::EmptySeries, "max_drawdown: empty");
  double wealth = 1.0;
  double peak = 1.0;
  double dd = 0.0;
  for (double r : returns) {
    wealth *= 1.0 + r;
    peak = std::max(peak, wealth);
    dd = std::max(dd, (peak - wealth) / peak);
  }
  return dd;
}

namespace {

double sample_sd(const std::vector<double>& xs) {
  const size_t n = xs.size();
  double mean = 0.0;
  for (double x : xs) mean += x;
  mean /= static_cast<double>(n);
  double sq = 0.0;
  for (double x : xs) sq += (x - mean) * (x - mean);
  return std::sqrt(sq / static_cast<double>(n - 1));
}

}  // namespace

double sharpe(const std::vector<double>& returns) {
  require(!returns.empty(), ErrorCode::EmptySeries, "sharpe: empty");
  require(returns.size() >= 2, ErrorCode::NaNGuard,
          "sharpe: undefined for fewer than two returns");
  double mean = 0.0;
  for (double r : returns) mean += r;
  mean /= static_cast<double>(returns.size());
  const double sd = sample_sd(returns);
  require(sd > 0.0, ErrorCode::NaNGuard, "sharpe: zero return dispersion");
  return mean / sd;
}

double sortino(const std::vector<double>& returns) {
  require(!returns.empty(), ErrorCode::EmptySeries, "sortino: empty");
  double mean = 0.0;
  std::vector<double> losses;
  for (double r : returns) {
    mean += r;
    if (r < 0.0) losses.push_back(r);
  }
  mean /= static_cast<double>(returns.size());
  if (losses.size() < 2) return kInf;  // no measurable downside dispersion
  const double sd = sample_sd(losses);
  if (sd == 0.0) return kInf;
  return mean / sd;
}

BacktestReport backtest(const Matrix& returns, const PortfolioSpec& spec,
                        const BacktestConfig& cfg) {
  const Index T = returns.rows();
  require(T > cfg.window + cfg.rebalance, ErrorCode::InvalidArgument,
          "backtest: need more periods than window + rebalance");
  require(returns.cols() == spec.d, ErrorCode::DimensionMismatch,
          "backtest: returns width must match the asset count");

  BacktestReport report;
  const double eta = eta_scaling(cfg.ssqp);
  long window_index = 0;
  for (Index start = cfg.window; start < T;
       start += cfg.rebalance, ++window_index) {
    const Matrix train = returns.middleRows(start - cfg.window, cfg.window);
    const ZooProblem zp = make_portfolio(spec, train);
    const ProblemSpec& p = zp.problem;

    PrimalDual init = PrimalDual::zeros(p.d, p.m);
    init.x = portfolio_encode(
        Vector::Constant(spec.d, 1.0 / static_cast<double>(spec.d)),
        spec.gross_bound);

    RunCapture capture;
    const SsqpState state = run_with_capture(
        p, init, cfg.ssqp, cfg.iterations,
        cfg.base_seed + static_cast<std::uint64_t>(window_index), capture);
    const PrimalDual batch =
        m_estimate(p, cfg.ssqp, 1e-8, 200, &init);

    BacktestWindow w;
    w.start = start;
    w.weights = portfolio_decode(state.pd.x, spec.d);
    w.weights_batch = portfolio_decode(batch.x, spec.d);
    w.objective_online = p.exact_oracle(state.pd.x).value;
    w.objective_batch = p.exact_oracle(batch.x).value;
    w.objective_gap = std::abs(w.objective_online - w.objective_batch) /
                      std::max(1e-12, std::abs(w.objective_batch));
    w.sum_residual = std::abs(w.weights.sum() - 1.0);
    w.gross_excess =
        std::max(0.0, w.weights.lpNorm<1>() - spec.gross_bound);

    w.weight_bands = Vector::Zero(spec.d);
    try {
      const Matrix omega =
          plugin_omega_at(p, cfg.ssqp, state, capture.last, capture.acc);
      for (Index i = 0; i < spec.d; ++i) {
        Vector v = Vector::Zero(omega.rows());
        v[i] = 1.0;
        v[spec.d + i] = -1.0;
        const double var = std::max(0.0, v.dot(omega * v));
        w.weight_bands[i] = std::sqrt(eta * capture.last.alpha_bar * var);
      }
    } catch (const Error&) {
      // Degenerate active set; bands stay at zero for this window.
    }

    const Index hold_end = std::min<Index>(start + cfg.rebalance, T);
    for (Index t = start; t < hold_end; ++t) {
      report.held_out_returns.push_back(
          returns.row(t).transpose().dot(w.weights));
    }
    report.windows.push_back(std::move(w));
  }

  report.cumulative = cumulative_return(report.held_out_returns);
  report.drawdown = max_drawdown(report.held_out_returns);
  report.sharpe_ratio = sharpe(report.held_out_returns);
  report.sortino_ratio = sortino(report.held_out_returns);

  if (!cfg.output_dir.empty()) {
    std::filesystem::create_directories(cfg.output_dir);
    {
      std::ofstream out(cfg.output_dir + "/windows.csv");
      out << "window,start,objective_online,objective_batch,objective_gap,"
             "sum_residual,gross_excess\n";
      for (size_t i = 0; i < report.windows.size(); ++i) {
        const BacktestWindow& w = report.windows[i];
        out << i << ',' << w.start << ','
            << format_double(w.objective_online) << ','
            << format_double(w.objective_batch) << ','
            << format_double(w.objective_gap) << ','
            << format_double(w.sum_residual) << ','
            << format_double(w.gross_excess) << '\n';
      }
    }
    {
      std::ofstream out(cfg.output_dir + "/weights.csv");
      out << "window,asset,weight,band,weight_batch\n";
      for (size_t i = 0; i < report.windows.size(); ++i) {
        const BacktestWindow& w = report.windows[i];
        for (Index a = 0; a < spec.d; ++a) {
          out << i << ',' << a << ',' << format_double(w.weights[a]) << ','
              << format_double(w.weight_bands[a]) << ','
              << format_double(w.weights_batch[a]) << '\n';
        }
      }
    }
    {
      std::ofstream out(cfg.output_dir + "/metrics.csv");
      out << "cumulative_return,max_drawdown,sharpe,sortino\n";
      out << format_double(report.cumulative) << ','
          << format_double(report.drawdown) << ','
          << format_double(report.sharpe_ratio) << ','
          << format_double(report.sortino_ratio) << '\n';
    }
  }
  return report;
}

SelftestReport selftest(bool quiet) {
  SelftestReport report;
  RngStream rng(20240401ULL);

  // Random strongly convex QPs against exhaustive enumeration.
  for (int trial = 0; trial < 1000; ++trial) {
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

    ++report.qp_total;
    const QpSolution fast = solve_qp(qp);
    const QpSolution oracle = brute_force_qp(qp);
    bool ok = fast.status == QpStatus::Optimal &&
              oracle.status == QpStatus::Optimal;
    if (ok) {
      ok = (fast.d - oracle.d).lpNorm<Eigen::Infinity>() <= 1e-8 &&
           std::abs(fast.objective - oracle.objective) <= 1e-10;
      const Vector stat = qp.B * fast.d + qp.g +
                          (me > 0 ? Vector(qp.A.transpose() * fast.lambda)
                                  : Vector(Vector::Zero(d))) -
                          fast.mu_lower + fast.mu_upper;
      ok = ok && stat.lpNorm<Eigen::Infinity>() <= 1e-9;
      if (me > 0) {
        ok = ok && (qp.A * fast.d - qp.b).lpNorm<Eigen::Infinity>() <= 1e-9;
      }
      ok = ok && fast.mu_lower.minCoeff() >= -1e-9 &&
           fast.mu_upper.minCoeff() >= -1e-9;
    }
    if (ok) ++report.qp_passed;
    else if (!quiet) {
      std::cerr << "selftest: QP mismatch on trial " << trial << "\n";
    }
  }

  // Finite differences across the model zoo.
  std::vector<std::pair<ZooProblem, double>> checks;
  {
    GlmSpec g;
    g.kind = GlmKind::Linear;
    g.d = 3;
    checks.push_back({make_glm(g), 1e-5});
    g.kind = GlmKind::Logistic;
    g.d = 4;
    g.cov_structure = CovStructure::Toeplitz;
    g.cov_r = 0.5;
    checks.push_back({make_glm(g), 1e-3});
    g.kind = GlmKind::Poisson;
    g.d = 3;
    g.cov_structure = CovStructure::EquiCorr;
    g.cov_r = 0.2;
    checks.push_back({make_glm(g), 1e-3});
    NoisySpec noise;
    checks.push_back({make_benchmark("circle", noise), 1e-5});
    checks.push_back({make_benchmark("boundary", noise), 1e-5});
    checks.push_back({make_benchmark("ridge3", noise), 1e-5});

    RngStream mkt(7ULL);
    Matrix window(40, 4);
    for (Index i = 0; i < window.size(); ++i) {
      window(i / 4, i % 4) = 0.01 * mkt.normal();
    }
    for (PortfolioModel model : {PortfolioModel::GMV, PortfolioModel::MV,
                                 PortfolioModel::EXP, PortfolioModel::LOG}) {
      PortfolioSpec ps;
      ps.model = model;
      ps.d = 4;
      checks.push_back({make_portfolio(ps, window), 1e-5});
    }
  }
  RngStream point_rng(31ULL);
  for (const auto& [zp, tol] : checks) {
    ++report.fd_total;
    bool ok = true;
    for (int point = 0; point < 5 && ok; ++point) {
      Vector x = initial_point(zp);
      for (Index i = 0; i < x.size(); ++i) {
        const double lo = std::isfinite(zp.problem.lower[i])
                              ? zp.problem.lower[i] + 0.05
                              : x[i] - 0.05;
        const double hi = std::isfinite(zp.problem.upper[i])
                              ? zp.problem.upper[i] - 0.05
                              : x[i] + 0.05;
        x[i] = lo + point_rng.uniform() * (hi - lo);
      }
      try {
        const FiniteDifferenceReport fd =
            finite_difference_check(zp.problem, x, 1e-5);
        ok = fd.max_grad_rel_err <= tol && fd.max_hess_rel_err <= 10 * tol;
        if (!ok && !quiet) {
          std::cerr << "selftest: finite differences failed for " << zp.name
                    << " (grad " << fd.max_grad_rel_err << ", hess "
                    << fd.max_hess_rel_err << ")\n";
        }
      } catch (const Error& e) {
        ok = false;
        if (!quiet) std::cerr << "selftest: " << zp.name << ": " << e.what() << "\n";
      }
    }
    if (ok) ++report.fd_passed;
  }

  if (!quiet) {
    std::cout << "qp equivalence: " << report.qp_passed << "/"
              << report.qp_total << " passed\n";
    std::cout << "finite differences: " << report.fd_passed << "/"
              << report.fd_total << " passed\n";
  }
  return report;
}

}  // namespace ssqp
