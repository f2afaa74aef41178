#pragma once

#include <string>
#include <vector>

#include "ssqp/config.hpp"
#include "ssqp/engine.hpp"
#include "ssqp/inference.hpp"
#include "ssqp/model_zoo.hpp"

namespace ssqp {

/// Everything a coverage study needs: the problem, the replication
/// protocol, the target functional and the estimator settings.
struct ExperimentConfig {
  std::string problem = "glm_linear";  // glm_* | benchmark
  GlmSpec glm;
  std::string benchmark_name = "circle";
  NoisySpec noise;
  long replications = 200;
  long iterations = 100000;
  std::uint64_t base_seed = 1;
  std::string target = "group-mean-contrast";  // or coord:<i>
  double level = 0.95;
  std::string output_dir = ".";
  int parallel_workers = 1;
  bool use_oracle_omega = false;  // test hook: oracle sandwich in the CI
  SsqpConfig ssqp;
};

/// Parses dotted keys (ssqp.b1 = ...) and rejects unknown ones by name.
ExperimentConfig parse_experiment_config(KeyValueConfig& kv);

struct CoverageReport {
  double cov_rate = 0.0;
  double avg_len = 0.0;
  double len_sd = 0.0;
  long n = 0;
};

CoverageReport coverage_report(const std::vector<Interval>& intervals,
                               double truth_value);

struct ReplicationRecord {
  long rep = 0;
  std::uint64_t seed = 0;
  bool failed = false;
  Interval interval;
  double final_kkt_residual = 0.0;
};

struct ExperimentResult {
  CoverageReport coverage;
  std::vector<ReplicationRecord> records;
  double truth = 0.0;
  long failures = 0;
};

/// Seeded Monte Carlo study; writes replications.csv and summary.csv into
/// the output directory and is byte-identical for a fixed (config, seed)
/// regardless of the worker count.
ExperimentResult run_experiment(const ExperimentConfig& cfg);

/// One seeded trajectory; streams trajectory.csv into the output directory
/// and returns the final state. Replication settings are ignored.
SsqpState run_single_trajectory(const ExperimentConfig& cfg, bool quiet);

/// Normality scaling constant for the configured stepsize schedule.
double eta_scaling(const SsqpConfig& cfg);

/// Dense returns matrix from a headered CSV; one column per asset.
Matrix load_returns_csv(const std::string& path,
                        std::vector<std::string>* column_names = nullptr);

double cumulative_return(const std::vector<double>& returns);
double max_drawdown(const std::vector<double>& returns);
double sharpe(const std::vector<double>& returns);
double sortino(const std::vector<double>& returns);  // +inf when no losses

struct BacktestWindow {
  Index start = 0;  // first out-of-sample period
  Vector weights;        // online estimate
  Vector weight_bands;   // sqrt(alpha_bar * diag variance) per asset
  Vector weights_batch;  // full-sample estimate on the same window
  double objective_online = 0.0;
  double objective_batch = 0.0;
  double objective_gap = 0.0;  // relative
  double sum_residual = 0.0;   // |1'x - 1|
  double gross_excess = 0.0;   // max(0, ||x||_1 - c)
};

struct BacktestReport {
  double cumulative = 0.0;
  double drawdown = 0.0;
  double sharpe_ratio = 0.0;
  double sortino_ratio = 0.0;
  std::vector<BacktestWindow> windows;
  std::vector<double> held_out_returns;
};

struct BacktestConfig {
  Index window = 250;
  Index rebalance = 21;
  long iterations = 20000;
  std::uint64_t base_seed = 1;
  SsqpConfig ssqp;
  std::string output_dir;  // empty: no CSV output

  // Daily-return objectives have curvature around 1e-4, so the default
  // reduced-Hessian floor would drown it out. The faster-forgetting
  // gradient average keeps mean-return estimation error from dominating a
  // window; 0.7 stays inside the valid inference range (0.5, b1).
  BacktestConfig() {
    ssqp.omega = 1e-6;
    ssqp.b2 = 0.7;
  }
};

/// Rolling train/hold evaluation of the online estimator against the
/// full-sample baseline on the same windows.
BacktestReport backtest(const Matrix& returns, const PortfolioSpec& spec,
                        const BacktestConfig& cfg);

struct SelftestReport {
  int qp_total = 0;
  int qp_passed = 0;
  int fd_total = 0;
  int fd_passed = 0;
  bool ok() const { return qp_passed == qp_total && fd_passed == fd_total; }
};

/// QP-vs-enumeration equivalence plus the finite-difference oracle suite.
SelftestReport selftest(bool quiet);

/// Worker-count resolution; the SSQP_WORKERS environment variable wins.
int resolve_workers(int requested);

/// Locale-independent formatting used for every CSV cell.
std::string format_double(double v);

}  // namespace ssqp
