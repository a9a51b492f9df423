#include "pmd/pmd.h"

#include "pmd/bounds.hpp"
#include "pmd/config.hpp"
#include "pmd/error.hpp"
#include "pmd/flow.hpp"
#include "pmd/hamiltonian.hpp"
#include "pmd/hjb.hpp"
#include "pmd/montecarlo.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <memory>
#include <new>
#include <string>

struct pmd_problem {
    pmd::ControlProblem problem;
};
struct pmd_policy {
    pmd::Policy policy;
};
struct pmd_value {
    pmd::ValueField value;
};
struct pmd_hjb {
    pmd::HjbSolution solution;
};
struct pmd_trajectory {
    pmd::FlowTrajectory traj;
};

namespace {

struct ErrorState {
    std::string message;
    std::string key;
    std::size_t line = 0;
};

ErrorState& error_state() {
    thread_local ErrorState state;
    return state;
}

pmd_status fail(pmd_status status, const std::string& message, std::string key = {},
                std::size_t line = 0) {
    ErrorState& e = error_state();
    e.message = message;
    e.key = std::move(key);
    e.line = line;
    return status;
}

template <class F>
pmd_status guarded(F&& body) {
    error_state() = ErrorState{};
    try {
        body();
        return PMD_OK;
    } catch (const pmd::ConfigError& e) {
        return fail(PMD_ERR_CONFIG, e.what(), e.key(), e.line());
    } catch (const pmd::ValidationError& e) {
        return fail(PMD_ERR_VALIDATION, e.what());
    } catch (const pmd::CyclingError& e) {
        return fail(PMD_ERR_CYCLING, e.what());
    } catch (const pmd::NonConvergenceError& e) {
        return fail(PMD_ERR_NONCONVERGENCE, e.what());
    } catch (const pmd::SingularSystemError& e) {
        return fail(PMD_ERR_SINGULAR, e.what());
    } catch (const pmd::InstabilityError& e) {
        return fail(PMD_ERR_INSTABILITY, e.what());
    } catch (const pmd::NumericalError& e) {
        return fail(PMD_ERR_NUMERICAL, e.what());
    } catch (const pmd::Error& e) {
        return fail(PMD_ERR_IO, e.what());
    } catch (const std::filesystem::filesystem_error& e) {
        return fail(PMD_ERR_IO, e.what());
    } catch (const std::bad_alloc&) {
        return fail(PMD_ERR_INTERNAL, "out of memory");
    } catch (const std::exception& e) {
        return fail(PMD_ERR_INTERNAL, e.what());
    } catch (...) {
        return fail(PMD_ERR_INTERNAL, "unknown exception");
    }
}

#define PMD_REQUIRE(ptr)                                                                        \
    do {                                                                                        \
        if (!(ptr)) return fail(PMD_ERR_NULL_ARGUMENT, std::string(__func__) + ": " #ptr " is null"); \
    } while (0)

void copy_out(const std::vector<double>& src, double* out, std::size_t cap) {
    if (cap < src.size())
        throw pmd::ValidationError("output buffer holds " + std::to_string(cap) + " values, " +
                                   std::to_string(src.size()) + " required");
    std::memcpy(out, src.data(), src.size() * sizeof(double));
}

pmd::Scheduler scheduler(const char* kind, double param) {
    if (!kind) throw pmd::ValidationError("scheduler kind is null");
    return pmd::parse_scheduler(kind, param);
}

} // namespace

extern "C" {

const char* pmd_version(void) { return PMD_VERSION_STRING; }

const char* pmd_status_name(pmd_status status) {
    switch (status) {
    case PMD_OK: return "ok";
    case PMD_ERR_NULL_ARGUMENT: return "null_argument";
    case PMD_ERR_VALIDATION: return "validation";
    case PMD_ERR_CONFIG: return "config";
    case PMD_ERR_NUMERICAL: return "numerical";
    case PMD_ERR_SINGULAR: return "singular_system";
    case PMD_ERR_NONCONVERGENCE: return "non_convergence";
    case PMD_ERR_CYCLING: return "cycling";
    case PMD_ERR_INSTABILITY: return "instability";
    case PMD_ERR_IO: return "io";
    case PMD_ERR_INTERNAL: return "internal";
    }
    return "unknown";
}

const char* pmd_last_error(void) { return error_state().message.c_str(); }
const char* pmd_last_error_key(void) { return error_state().key.c_str(); }
size_t pmd_last_error_line(void) { return error_state().line; }

size_t pmd_config_key_line(const char* text, const char* pointer) {
    if (!text || !pointer) return 0;
    return pmd::locate_key_line(text, pointer);
}

pmd_status pmd_problem_from_json(const char* text, pmd_problem** out) {
    PMD_REQUIRE(text);
    PMD_REQUIRE(out);
    *out = nullptr;
    return guarded([&] { *out = new pmd_problem{pmd::parse_problem_config(text)}; });
}

void pmd_problem_free(pmd_problem* problem) { delete problem; }

size_t pmd_problem_n_interior(const pmd_problem* problem) {
    return problem ? problem->problem.n_interior() : 0;
}

size_t pmd_problem_n_actions(const pmd_problem* problem) {
    return problem ? problem->problem.n_actions() : 0;
}

double pmd_problem_cost_scale(const pmd_problem* problem) {
    return problem ? problem->problem.cost_scale() : 0.0;
}

pmd_status pmd_problem_nodes(const pmd_problem* problem, double* out, size_t cap) {
    PMD_REQUIRE(problem);
    PMD_REQUIRE(out);
    return guarded([&] { copy_out(problem->problem.grid().nodes, out, cap); });
}

pmd_status pmd_problem_nearest_interior(const pmd_problem* problem, double x, size_t* index) {
    PMD_REQUIRE(problem);
    PMD_REQUIRE(index);
    return guarded([&] {
        const pmd::Grid& g = problem->problem.grid();
        if (!(x > g.left && x < g.right))
            throw pmd::ValidationError("probe x=" + std::to_string(x) + " is not inside the domain");
        const double t = std::round((x - g.left) / g.spacing);
        const auto j = static_cast<std::size_t>(std::clamp(t, 1.0, static_cast<double>(g.n_interior)));
        *index = j - 1;
    });
}

pmd_status pmd_policy_uniform(const pmd_problem* problem, pmd_policy** out) {
    PMD_REQUIRE(problem);
    PMD_REQUIRE(out);
    *out = nullptr;
    return guarded([&] {
        *out = new pmd_policy{pmd::reference_policy(problem->problem.n_interior(), problem->problem.actions())};
    });
}

pmd_status pmd_policy_from_feature(const pmd_problem* problem, const double* z, size_t rows,
                                   size_t cols, pmd_policy** out) {
    PMD_REQUIRE(problem);
    PMD_REQUIRE(z);
    PMD_REQUIRE(out);
    *out = nullptr;
    return guarded([&] {
        if (rows != problem->problem.n_interior() || cols != problem->problem.n_actions())
            throw pmd::ValidationError("pmd_policy_from_feature: feature shape does not match the problem");
        pmd::FeatureField f(rows, cols);
        std::memcpy(f.values.data().data(), z, rows * cols * sizeof(double));
        *out = new pmd_policy{pmd::gibbs_policy(f, problem->problem.actions())};
    });
}

void pmd_policy_free(pmd_policy* policy) { delete policy; }

pmd_status pmd_value_solve(const pmd_problem* problem, const pmd_policy* policy, double tau,
                           pmd_value** out) {
    PMD_REQUIRE(problem);
    PMD_REQUIRE(policy);
    PMD_REQUIRE(out);
    *out = nullptr;
    return guarded([&] {
        *out = new pmd_value{pmd::solve_on_policy_bellman(problem->problem, policy->policy, tau)};
    });
}

size_t pmd_value_size(const pmd_value* value) { return value ? value->value.v.size() : 0; }

pmd_status pmd_value_get(const pmd_value* value, double* out, size_t cap) {
    PMD_REQUIRE(value);
    PMD_REQUIRE(out);
    return guarded([&] { copy_out(value->value.v, out, cap); });
}

pmd_status pmd_value_at(const pmd_problem* problem, const pmd_value* value, double x, double* out) {
    PMD_REQUIRE(problem);
    PMD_REQUIRE(value);
    PMD_REQUIRE(out);
    return guarded([&] { *out = value->value.at(problem->problem.grid(), x); });
}

pmd_status pmd_value_write_csv(const pmd_problem* problem, const pmd_value* value, const char* path) {
    PMD_REQUIRE(problem);
    PMD_REQUIRE(value);
    PMD_REQUIRE(path);
    return guarded([&] { pmd::write_value_csv(path, problem->problem.grid(), value->value); });
}

void pmd_value_free(pmd_value* value) { delete value; }

pmd_status pmd_hjb_solve(const pmd_problem* problem, double tau, double tol, size_t max_iter,
                         pmd_hjb** out) {
    PMD_REQUIRE(problem);
    PMD_REQUIRE(out);
    *out = nullptr;
    return guarded([&] {
        pmd::HjbOptions opts;
        opts.tol = tol;
        if (max_iter > 0) opts.max_iter = max_iter;
        if (tau == 0.0)
            *out = new pmd_hjb{pmd::solve_unregularized_hjb(problem->problem, opts)};
        else
            *out = new pmd_hjb{pmd::solve_regularized_hjb(problem->problem, tau, opts)};
    });
}

double pmd_hjb_tau(const pmd_hjb* hjb) { return hjb ? hjb->solution.tau : 0.0; }
size_t pmd_hjb_iterations(const pmd_hjb* hjb) { return hjb ? hjb->solution.iterations : 0; }
double pmd_hjb_final_residual(const pmd_hjb* hjb) { return hjb ? hjb->solution.final_residual : 0.0; }

pmd_status pmd_hjb_values(const pmd_hjb* hjb, double* out, size_t cap) {
    PMD_REQUIRE(hjb);
    PMD_REQUIRE(out);
    return guarded([&] { copy_out(hjb->solution.v_star.v, out, cap); });
}

pmd_status pmd_hjb_value_at(const pmd_problem* problem, const pmd_hjb* hjb, double x, double* out) {
    PMD_REQUIRE(problem);
    PMD_REQUIRE(hjb);
    PMD_REQUIRE(out);
    return guarded([&] { *out = hjb->solution.v_star.at(problem->problem.grid(), x); });
}

pmd_status pmd_hjb_policy(const pmd_hjb* hjb, pmd_policy** out) {
    PMD_REQUIRE(hjb);
    PMD_REQUIRE(out);
    *out = nullptr;
    return guarded([&] { *out = new pmd_policy{hjb->solution.optimal_policy}; });
}

pmd_status pmd_hjb_write_csv(const pmd_problem* problem, const pmd_hjb* hjb, const char* path) {
    PMD_REQUIRE(problem);
    PMD_REQUIRE(hjb);
    PMD_REQUIRE(path);
    return guarded([&] { pmd::write_hjb_csv(path, problem->problem, hjb->solution); });
}

pmd_status pmd_hjb_write_residuals_csv(const pmd_hjb* hjb, const char* path) {
    PMD_REQUIRE(hjb);
    PMD_REQUIRE(path);
    return guarded([&] { pmd::write_residual_history_csv(path, hjb->solution); });
}

void pmd_hjb_free(pmd_hjb* hjb) { delete hjb; }

pmd_status pmd_scheduler_value(const char* kind, double param, double s, double* out) {
    PMD_REQUIRE(out);
    return guarded([&] { *out = pmd::scheduler_value(scheduler(kind, param), s); });
}

pmd_status pmd_flow_run(const pmd_problem* problem, const double* z0, const char* kind, double param,
                        double horizon, const pmd_flow_options* options, pmd_trajectory** out) {
    PMD_REQUIRE(problem);
    PMD_REQUIRE(options);
    PMD_REQUIRE(out);
    *out = nullptr;
    return guarded([&] {
        const auto& p = problem->problem;
        pmd::FeatureField z(p.n_interior(), p.n_actions(), 0.0);
        if (z0) std::memcpy(z.values.data().data(), z0, z.values.data().size() * sizeof(double));
        pmd::FlowOptions opts;
        opts.dt = options->dt;
        opts.record_every = options->record_every;
        if (options->n_probes > 0 && !options->probes)
            throw pmd::ValidationError("pmd_flow_run: probes is null");
        opts.probes.assign(options->probes, options->probes + options->n_probes);
        opts.check_stability = options->check_stability != 0;
        *out = new pmd_trajectory{pmd::integrate_flow(p, z, scheduler(kind, param), horizon, opts)};
    });
}

size_t pmd_trajectory_records(const pmd_trajectory* traj) { return traj ? traj->traj.times.size() : 0; }
size_t pmd_trajectory_steps(const pmd_trajectory* traj) { return traj ? traj->traj.step_count : 0; }

pmd_status pmd_trajectory_record(const pmd_trajectory* traj, size_t record, double* s, double* tau,
                                 double* v_reg, double* v_unreg, double* kl_mass) {
    PMD_REQUIRE(traj);
    return guarded([&] {
        const auto& t = traj->traj;
        if (record >= t.times.size()) throw pmd::ValidationError("trajectory record out of range");
        if (s) *s = t.times[record];
        if (tau) *tau = t.taus[record];
        if (kl_mass) *kl_mass = t.kl_mass[record];
        const auto& reg = t.values_at_probe[record];
        const auto& unreg = t.unregularized_values[record];
        if (v_reg) std::memcpy(v_reg, reg.data(), reg.size() * sizeof(double));
        if (v_unreg) std::memcpy(v_unreg, unreg.data(), unreg.size() * sizeof(double));
    });
}

pmd_status pmd_trajectory_write_csv(const pmd_trajectory* traj, const char* path) {
    PMD_REQUIRE(traj);
    PMD_REQUIRE(path);
    return guarded([&] { pmd::write_trajectory_csv(path, traj->traj); });
}

pmd_status pmd_trajectory_write_feature_csv(const pmd_problem* problem, const pmd_trajectory* traj,
                                            const char* path) {
    PMD_REQUIRE(problem);
    PMD_REQUIRE(traj);
    PMD_REQUIRE(path);
    return guarded([&] {
        const auto& p = problem->problem;
        std::vector<double> interior(p.grid().nodes.begin() + 1, p.grid().nodes.end() - 1);
        pmd::write_matrix_csv(path, traj->traj.z_final.values, p.actions().actions, interior);
    });
}

pmd_status pmd_trajectory_write_decomposition_csv(const pmd_problem* problem,
                                                  const pmd_trajectory* traj, double tol,
                                                  size_t max_iter, const char* path) {
    PMD_REQUIRE(problem);
    PMD_REQUIRE(traj);
    PMD_REQUIRE(path);
    return guarded([&] {
        pmd::HjbOptions opts;
        opts.tol = tol;
        if (max_iter > 0) opts.max_iter = max_iter;
        const auto rows = pmd::error_decomposition(problem->problem, traj->traj, opts);
        pmd::write_decomposition_csv(path, rows);
    });
}

void pmd_trajectory_free(pmd_trajectory* traj) { delete traj; }

pmd_status pmd_feature_read_csv(const pmd_problem* problem, const char* path, double* out, size_t cap) {
    PMD_REQUIRE(problem);
    PMD_REQUIRE(path);
    PMD_REQUIRE(out);
    return guarded([&] {
        const pmd::Matrix m = pmd::read_matrix_csv(path);
        if (m.rows() != problem->problem.n_interior() || m.cols() != problem->problem.n_actions())
            throw pmd::ValidationError(std::string("feature file ") + path +
                                       " does not match the problem's grid and action count");
        copy_out(std::vector<double>(m.data().begin(), m.data().end()), out, cap);
    });
}

pmd_status pmd_growth_integrals(const char* kind, double param, double s, int quadrature,
                                double* log_i1, double* log_i2) {
    PMD_REQUIRE(log_i1);
    PMD_REQUIRE(log_i2);
    return guarded([&] {
        const auto sched = scheduler(kind, param);
        const auto g = quadrature ? pmd::growth_integrals_quadrature(sched, s)
                                  : pmd::growth_integrals(sched, s);
        *log_i1 = g.log_I1;
        *log_i2 = g.log_I2;
    });
}

pmd_status pmd_optimization_bound(const char* kind, double param, double s, double tau_ref, double c,
                                  int discrete, double* out) {
    PMD_REQUIRE(out);
    return guarded([&] {
        *out = pmd::optimization_bound(scheduler(kind, param), s, tau_ref, c, discrete != 0);
    });
}

pmd_status pmd_total_bound(const char* kind, double param, double horizon, double c, double alpha,
                           double* out) {
    PMD_REQUIRE(out);
    return guarded([&] { *out = pmd::total_bound(scheduler(kind, param), horizon, c, alpha); });
}

pmd_status pmd_write_growth_csv(const char* kind, double param, const double* s, size_t n,
                                const char* path) {
    PMD_REQUIRE(s);
    PMD_REQUIRE(path);
    return guarded([&] {
        const auto sched = scheduler(kind, param);
        std::vector<pmd::GrowthIntegrals> rows;
        for (size_t j = 0; j < n; ++j) rows.push_back(pmd::growth_integrals(sched, s[j]));
        pmd::write_growth_csv(path, rows);
    });
}

pmd_status pmd_write_figure_csv(const double* betas, size_t n_betas, const double* horizons,
                                size_t n_horizons, double c, double alpha, const char* path) {
    PMD_REQUIRE(betas);
    PMD_REQUIRE(horizons);
    PMD_REQUIRE(path);
    return guarded([&] {
        const auto curves = pmd::reproduce_figure({betas, n_betas}, {horizons, n_horizons}, c, alpha);
        pmd::write_figure_csv(path, curves);
    });
}

pmd_status pmd_mc_simulate(const pmd_problem* problem, const pmd_policy* policy, double x0, double tau,
                           size_t n_paths, double dt_sim, uint64_t seed, unsigned threads,
                           pmd_mc_result* out) {
    PMD_REQUIRE(problem);
    PMD_REQUIRE(policy);
    PMD_REQUIRE(out);
    return guarded([&] {
        pmd::McOptions opts;
        opts.n_paths = n_paths;
        opts.dt_sim = dt_sim;
        opts.seed = seed;
        opts.threads = threads;
        const auto e = pmd::simulate_exit_value(problem->problem, policy->policy, x0, tau, opts);
        *out = pmd_mc_result{e.x0, e.tau, e.mean, e.std_error, e.n_paths, e.mean_exit_time, e.dt_sim, e.seed};
    });
}

pmd_status pmd_mc_write_csv(const pmd_mc_result* rows, size_t n, const char* path) {
    PMD_REQUIRE(rows);
    PMD_REQUIRE(path);
    return guarded([&] {
        std::vector<pmd::McEstimate> est;
        for (size_t j = 0; j < n; ++j) {
            const auto& r = rows[j];
            est.push_back({r.x0, r.tau, r.mean, r.std_error, r.n_paths, r.mean_exit_time, r.dt_sim, r.seed});
        }
        pmd::write_mc_csv(path, est);
    });
}

pmd_status pmd_soft_hamiltonian(const pmd_problem* problem, double x, double u, double p, double tau,
                                double* out) {
    PMD_REQUIRE(problem);
    PMD_REQUIRE(out);
    return guarded([&] { *out = pmd::soft_hamiltonian(problem->problem, x, u, p, tau); });
}

pmd_status pmd_hard_hamiltonian(const pmd_problem* problem, double x, double u, double p,
                                double* value, double* argmin_action) {
    PMD_REQUIRE(problem);
    PMD_REQUIRE(value);
    return guarded([&] {
        const auto m = pmd::hard_hamiltonian(problem->problem, x, u, p);
        *value = m.value;
        if (argmin_action) *argmin_action = m.argmin_action;
    });
}

pmd_status pmd_interval_quadratic_softmin(double p, double tau, double alpha, double beta, double* out) {
    PMD_REQUIRE(out);
    return guarded([&] { *out = pmd::interval_quadratic_softmin(p, tau, alpha, beta); });
}

pmd_status pmd_write_bias_sweep_csv(const double* taus, size_t n_taus, const double* ps, size_t n_ps,
                                    double alpha, double beta, const char* path) {
    PMD_REQUIRE(taus);
    PMD_REQUIRE(ps);
    PMD_REQUIRE(path);
    return guarded([&] {
        const auto rows = pmd::interval_bias_sweep({taus, n_taus}, {ps, n_ps}, alpha, beta);
        pmd::write_bias_sweep_csv(path, rows);
    });
}

} // extern "C"
