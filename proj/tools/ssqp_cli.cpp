// Command-line driver for the SSQP estimation library. This tool talks to
// the shared library exclusively through the C interface.

#include <cstdio>
#include <string>

#include <CLI11.hpp>

#include "ssqp/ssqp_c.h"

namespace {

int report(ssqp_status status, bool quiet) {
  if (status == SSQP_OK) return 0;
  if (!quiet) std::fprintf(stderr, "error: %s\n", ssqp_last_error());
  return status == SSQP_ERR_CONFIG || status == SSQP_ERR_ARGUMENT ? 2 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Online constrained stochastic estimation with confidence "
               "intervals"};
  app.require_subcommand(1);

  std::string config_path;
  std::string out_dir;
  long long seed = -1;
  int workers = 0;
  bool quiet = false;
  app.add_flag("--quiet", quiet, "suppress progress output");

  auto* cmd_run = app.add_subcommand(
      "run", "single trajectory with a KKT-residual log");
  cmd_run->add_option("--config", config_path, "config file")->required();
  cmd_run->add_option("--seed", seed, "override base_seed");
  cmd_run->add_option("--out", out_dir, "output directory");

  auto* cmd_cov = app.add_subcommand(
      "coverage", "Monte Carlo coverage study (tables protocol)");
  cmd_cov->add_option("--config", config_path, "config file")->required();
  cmd_cov->add_option("--seed", seed, "override base_seed");
  cmd_cov->add_option("--out", out_dir, "output directory");
  cmd_cov->add_option("--workers", workers, "parallel replications");

  std::string returns_file;
  std::string model = "gmv";
  int window = 250;
  int rebalance = 21;
  long iterations = 0;
  auto* cmd_bt = app.add_subcommand(
      "backtest", "rolling-window portfolio backtest on a returns CSV");
  cmd_bt->add_option("--returns", returns_file, "returns CSV")->required();
  cmd_bt->add_option("--model", model, "gmv | mv | exp | log");
  cmd_bt->add_option("--window", window, "training periods per window");
  cmd_bt->add_option("--rebalance", rebalance, "holding periods per window");
  cmd_bt->add_option("--iterations", iterations, "online steps per window");
  cmd_bt->add_option("--seed", seed, "base seed");
  cmd_bt->add_option("--out", out_dir, "output directory");

  auto* cmd_self = app.add_subcommand(
      "selftest", "QP equivalence and derivative-check suites");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  if (cmd_run->parsed()) {
    return report(ssqp_cmd_run(config_path.c_str(), out_dir.c_str(), seed,
                               quiet ? 1 : 0),
                  quiet);
  }
  if (cmd_cov->parsed()) {
    return report(ssqp_cmd_coverage(config_path.c_str(), out_dir.c_str(),
                                    seed, workers, quiet ? 1 : 0),
                  quiet);
  }
  if (cmd_bt->parsed()) {
    return report(ssqp_cmd_backtest(returns_file.c_str(), model.c_str(),
                                    window, rebalance, out_dir.c_str(), seed,
                                    iterations, quiet ? 1 : 0),
                  quiet);
  }
  if (cmd_self->parsed()) {
    return report(ssqp_cmd_selftest(quiet ? 1 : 0), quiet);
  }
  return 2;
}
