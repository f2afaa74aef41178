/* C interface to the SSQP estimation library.
 *
 * All functions return an ssqp_status code; 0 is success. On failure, a
 * thread-local message is available from ssqp_last_error(). Objects are
 * opaque handles created and destroyed through this interface; handles are
 * not thread-safe, but distinct handles may be used concurrently.
 */
#ifndef SSQP_C_H
#define SSQP_C_H

#ifdef __cplusplus
extern "C" {
#endif

typedef enum ssqp_status {
  SSQP_OK = 0,
  SSQP_ERR_ARGUMENT = 1,   /* invalid argument or dimension */
  SSQP_ERR_CONFIG = 2,     /* configuration file or key error */
  SSQP_ERR_IO = 3,         /* file access error */
  SSQP_ERR_NUMERIC = 4,    /* solver or numerical failure */
  SSQP_ERR_RUNTIME = 5     /* other runtime failure */
} ssqp_status;

/* Thread-local description of the most recent failure. */
const char* ssqp_last_error(void);

const char* ssqp_version(void);

/* ---- problems ------------------------------------------------------- */

typedef struct ssqp_problem_s ssqp_problem;

/* Named noise-injected benchmark: name in {circle, boundary, ridge3},
 * noise_kind in {gaussian, student_t}; noise_param is the Gaussian variance
 * or the Student-t degrees of freedom. */
ssqp_status ssqp_problem_benchmark(const char* name, const char* noise_kind,
                                   double noise_param, ssqp_problem** out);

/* Constrained GLM: kind in {linear, logistic, poisson}, cov_structure in
 * {identity, toeplitz, equicorr}, constraint in {simplex, none}. */
ssqp_status ssqp_problem_glm(const char* kind, int d,
                             const char* cov_structure, double cov_r,
                             const char* constraint, ssqp_problem** out);

void ssqp_problem_free(ssqp_problem* p);
int ssqp_problem_dim(const ssqp_problem* p);
int ssqp_problem_num_eq(const ssqp_problem* p);

/* ---- online runs ----------------------------------------------------- */

typedef struct ssqp_run_s ssqp_run;

/* Creates an estimator state on the problem's default initial point.
 * cfg_keys/cfg_vals hold ncfg dotted configuration entries (the ssqp.*
 * keys of the config-file format); pass ncfg = 0 for defaults. */
ssqp_status ssqp_run_create(const ssqp_problem* p, const char* const* cfg_keys,
                            const char* const* cfg_vals, int ncfg,
                            unsigned long long seed, ssqp_run** out);

ssqp_status ssqp_run_steps(ssqp_run* r, long iterations);

/* Copies the current primal iterate into out (length len == dim). */
ssqp_status ssqp_run_primal(const ssqp_run* r, double* out, int len);

/* Equality multipliers (mlen == num_eq) and bound multipliers (dlen == dim). */
ssqp_status ssqp_run_duals(const ssqp_run* r, double* lambda_out, int mlen,
                           double* mu_lower_out, double* mu_upper_out,
                           int dlen);

/* Norm of the full KKT residual with least-squares certificate multipliers. */
ssqp_status ssqp_run_kkt_residual(const ssqp_run* r, double* out_norm);

void ssqp_run_free(ssqp_run* r);

/* ---- one-shot QP solve ------------------------------------------------ */

/* Solves min 0.5 d'Bd + g'd s.t. Ad = b, lb <= d <= ub. B is d*d row-major,
 * A is me*d row-major. Outputs may be NULL when not wanted. qp_status_out
 * receives 0 Optimal, 1 Infeasible, 2 RankDeficient, 3 IterationLimit,
 * 4 IndefiniteReduced. */
ssqp_status ssqp_qp_solve(int d, int me, const double* B, const double* g,
                          const double* A, const double* b, const double* lb,
                          const double* ub, double tol, int max_iter,
                          double* d_out, double* lambda_out,
                          double* mu_lower_out, double* mu_upper_out,
                          int* qp_status_out);

/* ---- config-driven drivers (CLI backends) ----------------------------- */

/* Single trajectory with a KKT-residual log. seed_override < 0 keeps the
 * config seed. */
ssqp_status ssqp_cmd_run(const char* config_path, const char* out_dir,
                         long long seed_override, int quiet);

/* Monte Carlo coverage study; workers <= 0 uses the config value. */
ssqp_status ssqp_cmd_coverage(const char* config_path, const char* out_dir,
                              long long seed_override, int workers, int quiet);

/* Rolling-window portfolio backtest over a returns CSV. model is one of
 * {gmv, mv, exp, log}. iterations <= 0 uses the default. */
ssqp_status ssqp_cmd_backtest(const char* returns_csv, const char* model,
                              int window, int rebalance, const char* out_dir,
                              long long seed, long iterations, int quiet);

/* QP equivalence and finite-difference suites; returns SSQP_OK when every
 * check passes. */
ssqp_status ssqp_cmd_selftest(int quiet);

#ifdef __cplusplus
} /* extern "C" */
#endif

#endif /* SSQP_C_H */
