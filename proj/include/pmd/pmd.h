/* C interface to the policy mirror descent library.
 *
 * Objects are opaque handles created by pmd_*_create/solve/run functions and
 * released with the matching pmd_*_free. Every fallible call returns a
 * pmd_status; on failure pmd_last_error() describes the problem. The error
 * state is per thread.
 */
#ifndef PMD_PMD_H
#define PMD_PMD_H

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#define PMD_API
#elif defined(PMD_BUILDING_LIBRARY)
#define PMD_API __attribute__((visibility("default")))
#else
#define PMD_API
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum pmd_status {
    PMD_OK = 0,
    PMD_ERR_NULL_ARGUMENT = 1,
    PMD_ERR_VALIDATION = 2,
    PMD_ERR_CONFIG = 3,
    PMD_ERR_NUMERICAL = 4,
    PMD_ERR_SINGULAR = 5,
    PMD_ERR_NONCONVERGENCE = 6,
    PMD_ERR_CYCLING = 7,
    PMD_ERR_INSTABILITY = 8,
    PMD_ERR_IO = 9,
    PMD_ERR_INTERNAL = 10
} pmd_status;

typedef struct pmd_problem pmd_problem;
typedef struct pmd_policy pmd_policy;
typedef struct pmd_value pmd_value;
typedef struct pmd_hjb pmd_hjb;
typedef struct pmd_trajectory pmd_trajectory;

PMD_API const char* pmd_version(void);
PMD_API const char* pmd_status_name(pmd_status status);
PMD_API const char* pmd_last_error(void);
/* JSON pointer of the offending config key, "" if none. */
PMD_API const char* pmd_last_error_key(void);
/* 1-based config line of the last error, 0 if unknown. */
PMD_API size_t pmd_last_error_line(void);
PMD_API size_t pmd_config_key_line(const char* text, const char* pointer);

/* ---- problems ---------------------------------------------------------- */

PMD_API pmd_status pmd_problem_from_json(const char* text, pmd_problem** out);
PMD_API void pmd_problem_free(pmd_problem* problem);
PMD_API size_t pmd_problem_n_interior(const pmd_problem* problem);
PMD_API size_t pmd_problem_n_actions(const pmd_problem* problem);
/* sup |f| over the tabulated grid x actions. */
PMD_API double pmd_problem_cost_scale(const pmd_problem* problem);
/* Copies all n_interior + 2 grid nodes into out (capacity cap). */
PMD_API pmd_status pmd_problem_nodes(const pmd_problem* problem, double* out, size_t cap);
/* Index of the interior node nearest to x. */
PMD_API pmd_status pmd_problem_nearest_interior(const pmd_problem* problem, double x, size_t* index);

/* ---- policies ---------------------------------------------------------- */

PMD_API pmd_status pmd_policy_uniform(const pmd_problem* problem, pmd_policy** out);
/* Gibbs policy of a row-major n_interior x n_actions feature. */
PMD_API pmd_status pmd_policy_from_feature(const pmd_problem* problem, const double* z,
                                           size_t rows, size_t cols, pmd_policy** out);
PMD_API void pmd_policy_free(pmd_policy* policy);

/* ---- on-policy values -------------------------------------------------- */

PMD_API pmd_status pmd_value_solve(const pmd_problem* problem, const pmd_policy* policy,
                                   double tau, pmd_value** out);
PMD_API size_t pmd_value_size(const pmd_value* value);
PMD_API pmd_status pmd_value_get(const pmd_value* value, double* out, size_t cap);
PMD_API pmd_status pmd_value_at(const pmd_problem* problem, const pmd_value* value, double x,
                                double* out);
PMD_API pmd_status pmd_value_write_csv(const pmd_problem* problem, const pmd_value* value,
                                       const char* path);
PMD_API void pmd_value_free(pmd_value* value);

/* ---- HJB --------------------------------------------------------------- */

/* tau > 0 solves the regularized equation, tau == 0 the unregularized one.
 * tol <= 0 selects the default 1e-9 (1 + sup|f|). */
PMD_API pmd_status pmd_hjb_solve(const pmd_problem* problem, double tau, double tol,
                                 size_t max_iter, pmd_hjb** out);
PMD_API double pmd_hjb_tau(const pmd_hjb* hjb);
PMD_API size_t pmd_hjb_iterations(const pmd_hjb* hjb);
PMD_API double pmd_hjb_final_residual(const pmd_hjb* hjb);
/* Copies v* on all grid nodes. */
PMD_API pmd_status pmd_hjb_values(const pmd_hjb* hjb, double* out, size_t cap);
PMD_API pmd_status pmd_hjb_value_at(const pmd_problem* problem, const pmd_hjb* hjb, double x,
                                    double* out);
/* New policy handle holding the optimal (Gibbs or one-hot) policy. */
PMD_API pmd_status pmd_hjb_policy(const pmd_hjb* hjb, pmd_policy** out);
PMD_API pmd_status pmd_hjb_write_csv(const pmd_problem* problem, const pmd_hjb* hjb,
                                     const char* path);
PMD_API pmd_status pmd_hjb_write_residuals_csv(const pmd_hjb* hjb, const char* path);
PMD_API void pmd_hjb_free(pmd_hjb* hjb);

/* ---- schedulers, flow -------------------------------------------------- */

/* Scheduler kinds: "constant" (param = tau), "horizon_constant" (param = S),
 * "inverse_linear", "inverse_sqrt", "power_law" (param = exponent). */
PMD_API pmd_status pmd_scheduler_value(const char* kind, double param, double s, double* out);

typedef struct pmd_flow_options {
    double dt;
    size_t record_every;
    const size_t* probes; /* interior node indices */
    size_t n_probes;
    int check_stability;
} pmd_flow_options;

/* z0 may be NULL for the zero feature (uniform initial policy). */
PMD_API pmd_status pmd_flow_run(const pmd_problem* problem, const double* z0, const char* kind,
                                double param, double horizon, const pmd_flow_options* options,
                                pmd_trajectory** out);
PMD_API size_t pmd_trajectory_records(const pmd_trajectory* traj);
PMD_API size_t pmd_trajectory_steps(const pmd_trajectory* traj);
/* v_reg and v_unreg receive one entry per probe; any output may be NULL. */
PMD_API pmd_status pmd_trajectory_record(const pmd_trajectory* traj, size_t record, double* s,
                                         double* tau, double* v_reg, double* v_unreg,
                                         double* kl_mass);
PMD_API pmd_status pmd_trajectory_write_csv(const pmd_trajectory* traj, const char* path);
PMD_API pmd_status pmd_trajectory_write_feature_csv(const pmd_problem* problem,
                                                    const pmd_trajectory* traj, const char* path);
/* Solves the HJB at every recorded tau and writes the three-term decomposition. */
PMD_API pmd_status pmd_trajectory_write_decomposition_csv(const pmd_problem* problem,
                                                          const pmd_trajectory* traj, double tol,
                                                          size_t max_iter, const char* path);
PMD_API void pmd_trajectory_free(pmd_trajectory* traj);
/* Reads a feature matrix written by pmd_trajectory_write_feature_csv into out
 * (row-major, n_interior x n_actions). */
PMD_API pmd_status pmd_feature_read_csv(const pmd_problem* problem, const char* path, double* out,
                                        size_t cap);

/* ---- bounds ------------------------------------------------------------ */

PMD_API pmd_status pmd_growth_integrals(const char* kind, double param, double s, int quadrature,
                                        double* log_i1, double* log_i2);
PMD_API pmd_status pmd_optimization_bound(const char* kind, double param, double s, double tau_ref,
                                          double c, int discrete, double* out);
PMD_API pmd_status pmd_total_bound(const char* kind, double param, double horizon, double c,
                                   double alpha, double* out);
PMD_API pmd_status pmd_write_growth_csv(const char* kind, double param, const double* s, size_t n,
                                        const char* path);
PMD_API pmd_status pmd_write_figure_csv(const double* betas, size_t n_betas, const double* horizons,
                                        size_t n_horizons, double c, double alpha, const char* path);

/* ---- Monte Carlo ------------------------------------------------------- */

typedef struct pmd_mc_result {
    double x0;
    double tau;
    double mean;
    double std_error;
    size_t n_paths;
    double mean_exit_time;
    double dt_sim;
    uint64_t seed;
} pmd_mc_result;

PMD_API pmd_status pmd_mc_simulate(const pmd_problem* problem, const pmd_policy* policy, double x0,
                                   double tau, size_t n_paths, double dt_sim, uint64_t seed,
                                   unsigned threads, pmd_mc_result* out);
PMD_API pmd_status pmd_mc_write_csv(const pmd_mc_result* rows, size_t n, const char* path);

/* ---- Hamiltonians ------------------------------------------------------ */

PMD_API pmd_status pmd_soft_hamiltonian(const pmd_problem* problem, double x, double u, double p,
                                        double tau, double* out);
PMD_API pmd_status pmd_hard_hamiltonian(const pmd_problem* problem, double x, double u, double p,
                                        double* value, double* argmin_action);
PMD_API pmd_status pmd_interval_quadratic_softmin(double p, double tau, double alpha, double beta,
                                                  double* out);
PMD_API pmd_status pmd_write_bias_sweep_csv(const double* taus, size_t n_taus, const double* ps,
                                            size_t n_ps, double alpha, double beta,
                                            const char* path);

#ifdef __cplusplus
}
#endif

#endif
