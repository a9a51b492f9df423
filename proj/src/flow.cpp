#include "pmd/flow.hpp"

#include "pmd/csv.hpp"
#include "pmd/error.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <sstream>

namespace pmd {

namespace {

void require_finite_positive(double v, const char* what) {
    if (!(v > 0.0) || !std::isfinite(v)) {
        std::ostringstream msg;
        msg << what << " must be positive and finite, got " << v;
        throw ValidationError(msg.str());
    }
}

// a += scale * b
void axpy(FeatureField& a, double scale, const FeatureField& b) {
    auto dst = a.values.data();
    const auto src = b.values.data();
    for (std::size_t j = 0; j < dst.size(); ++j) dst[j] += scale * src[j];
}

FeatureField stage_rhs(const ControlProblem& problem, const FeatureField& z, double tau) {
    const Policy p = gibbs_policy(z, problem.actions());
    const ValueField v = solve_on_policy_bellman(problem, p, tau);
    return mirror_rhs(problem, z, v, tau);
}

} // namespace

Scheduler Scheduler::constant(double tau) {
    require_finite_positive(tau, "constant scheduler tau");
    return {SchedulerKind::Constant, tau};
}

Scheduler Scheduler::horizon_constant(double horizon) {
    require_finite_positive(horizon, "horizon-constant scheduler S");
    return {SchedulerKind::HorizonConstant, horizon};
}

Scheduler Scheduler::power_law(double beta) {
    if (!(beta >= 0.0) || !std::isfinite(beta))
        throw ValidationError("power-law scheduler exponent must be finite and nonnegative");
    return {SchedulerKind::PowerLaw, beta};
}

std::string Scheduler::name() const {
    switch (kind) {
    case SchedulerKind::Constant: return "constant";
    case SchedulerKind::HorizonConstant: return "horizon_constant";
    case SchedulerKind::InverseLinear: return "inverse_linear";
    case SchedulerKind::InverseSqrt: return "inverse_sqrt";
    case SchedulerKind::PowerLaw: return "power_law";
    }
    return "unknown";
}

Scheduler parse_scheduler(const std::string& kind, double param) {
    if (kind == "constant") return Scheduler::constant(param);
    if (kind == "horizon_constant") return Scheduler::horizon_constant(param);
    if (kind == "inverse_linear") return Scheduler::inverse_linear();
    if (kind == "inverse_sqrt") return Scheduler::inverse_sqrt();
    if (kind == "power_law") return Scheduler::power_law(param);
    throw ValidationError("unknown scheduler kind '" + kind +
                          "' (expected constant, horizon_constant, inverse_linear, inverse_sqrt, power_law)");
}

double scheduler_value(const Scheduler& sched, double s) {
    if (!(s >= 0.0)) throw ValidationError("scheduler_value: s must be nonnegative");
    switch (sched.kind) {
    case SchedulerKind::Constant: return sched.param;
    case SchedulerKind::HorizonConstant: return std::log1p(sched.param) / sched.param;
    case SchedulerKind::InverseLinear: return 1.0 / (1.0 + s);
    case SchedulerKind::InverseSqrt: return 1.0 / std::sqrt(1.0 + s);
    case SchedulerKind::PowerLaw: return std::pow(1.0 + s, -sched.param);
    }
    throw ValidationError("scheduler_value: unknown kind");
}

double scheduler_integral(const Scheduler& sched, double s) {
    if (!(s >= 0.0)) throw ValidationError("scheduler_integral: s must be nonnegative");
    switch (sched.kind) {
    case SchedulerKind::Constant:
    case SchedulerKind::HorizonConstant: return scheduler_value(sched, 0.0) * s;
    case SchedulerKind::InverseLinear: return std::log1p(s);
    case SchedulerKind::InverseSqrt: return 2.0 * std::sqrt(1.0 + s) - 2.0;
    case SchedulerKind::PowerLaw: {
        const double beta = sched.param;
        if (beta == 1.0) return std::log1p(s);
        return std::expm1((1.0 - beta) * std::log1p(s)) / (1.0 - beta);
    }
    }
    throw ValidationError("scheduler_integral: unknown kind");
}

double scheduler_increment(const Scheduler& sched, double from, double to) {
    if (!(from >= 0.0 && to >= 0.0)) throw ValidationError("scheduler_increment: times must be nonnegative");
    const double rel = (to - from) / (1.0 + from);
    switch (sched.kind) {
    case SchedulerKind::Constant:
    case SchedulerKind::HorizonConstant: return scheduler_value(sched, 0.0) * (to - from);
    case SchedulerKind::InverseLinear: return std::log1p(rel);
    case SchedulerKind::InverseSqrt: return 2.0 * (to - from) / (std::sqrt(1.0 + to) + std::sqrt(1.0 + from));
    case SchedulerKind::PowerLaw: {
        const double beta = sched.param;
        if (beta == 1.0) return std::log1p(rel);
        return std::pow(1.0 + from, 1.0 - beta) * std::expm1((1.0 - beta) * std::log1p(rel)) / (1.0 - beta);
    }
    }
    throw ValidationError("scheduler_increment: unknown kind");
}

FeatureField mirror_rhs(const ControlProblem& problem, const FeatureField& z, const ValueField& v,
                        double tau) {
    FeatureField out = optimal_feature(problem, v);
    if (!out.values.same_shape(z.values)) throw ValidationError("mirror_rhs: feature shape mismatch");
    auto dst = out.values.data();
    const auto src = z.values.data();
    for (std::size_t j = 0; j < dst.size(); ++j) dst[j] = -(dst[j] + tau * src[j]);
    return out;
}

double estimate_rhs_lipschitz(const ControlProblem& problem, const FeatureField& z, double tau) {
    const std::size_t n = z.values.rows(), m = z.values.cols();
    const double eps = 1e-4;
    const auto base = optimal_feature(
        problem, solve_on_policy_bellman(problem, gibbs_policy(z, problem.actions()), tau));
    double worst = 0.0;
    for (int dir = 0; dir < 3; ++dir) {
        FeatureField zp = z;
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t k = 0; k < m; ++k)
                zp.values(i, k) += eps * std::cos(1.7 * (dir + 1) * static_cast<double>(k) +
                                                  0.3 * static_cast<double>(i) + dir);
        const auto moved = optimal_feature(
            problem, solve_on_policy_bellman(problem, gibbs_policy(zp, problem.actions()), tau));
        double diff = 0.0;
        for (std::size_t j = 0; j < base.values.data().size(); ++j)
            diff = std::max(diff, std::abs(moved.values.data()[j] - base.values.data()[j]));
        worst = std::max(worst, diff / eps);
    }
    return worst;
}

FlowTrajectory integrate_flow(const ControlProblem& problem, const FeatureField& z0,
                              const Scheduler& sched, double horizon, const FlowOptions& options) {
    require_finite_positive(horizon, "integrate_flow: horizon");
    require_finite_positive(options.dt, "integrate_flow: dt");
    if (options.dt > horizon) throw ValidationError("integrate_flow: dt exceeds the horizon");
    if (options.record_every == 0) throw ValidationError("integrate_flow: record_every must be >= 1");
    if (z0.values.rows() != problem.n_interior() || z0.values.cols() != problem.n_actions())
        throw ValidationError("integrate_flow: initial feature has the wrong shape");
    for (std::size_t pr : options.probes)
        if (pr >= problem.n_interior()) throw ValidationError("integrate_flow: probe index out of range");

    const auto steps = static_cast<std::size_t>(std::ceil(horizon / options.dt - 1e-9));
    const double dt = horizon / static_cast<double>(steps);

    FlowTrajectory traj;
    traj.dt = dt;
    for (std::size_t pr : options.probes) traj.probe_x.push_back(problem.grid().interior(pr));

    const double tau0 = scheduler_value(sched, 0.0);
    if (options.check_stability) {
        traj.lipschitz_estimate = estimate_rhs_lipschitz(problem, z0, tau0);
        if (dt * (tau0 + traj.lipschitz_estimate) > 1.0) {
            std::ostringstream msg;
            msg << "integrate_flow: step " << dt << " violates dt (tau_0 + L) <= 1 with measured L = "
                << traj.lipschitz_estimate << "; use dt <= " << 1.0 / (tau0 + traj.lipschitz_estimate);
            throw InstabilityError(msg.str(), 0, z0.values.max_abs());
        }
    }

    auto record = [&](double s, const FeatureField& z) {
        const double tau = scheduler_value(sched, s);
        const Policy p = gibbs_policy(z, problem.actions());
        const PolicyEvaluation ev = evaluate_policy(problem, p);
        std::vector<double> reg, unreg;
        for (std::size_t pr : options.probes) {
            reg.push_back(ev.unregularized[pr + 1] + tau * ev.kl_occupancy[pr + 1]);
            unreg.push_back(ev.unregularized[pr + 1]);
        }
        traj.times.push_back(s);
        traj.taus.push_back(tau);
        traj.values_at_probe.push_back(std::move(reg));
        traj.unregularized_values.push_back(std::move(unreg));
        traj.kl_mass.push_back(max_abs(ev.kl_occupancy));
    };

    FeatureField z = z0;
    record(0.0, z);
    for (std::size_t step = 1; step <= steps; ++step) {
        const double s = dt * static_cast<double>(step - 1);
        const double t_half = scheduler_value(sched, s + 0.5 * dt);

        const FeatureField k1 = stage_rhs(problem, z, scheduler_value(sched, s));
        FeatureField y = z;
        axpy(y, 0.5 * dt, k1);
        const FeatureField k2 = stage_rhs(problem, y, t_half);
        y = z;
        axpy(y, 0.5 * dt, k2);
        const FeatureField k3 = stage_rhs(problem, y, t_half);
        y = z;
        axpy(y, dt, k3);
        const FeatureField k4 = stage_rhs(problem, y, scheduler_value(sched, s + dt));

        axpy(z, dt / 6.0, k1);
        axpy(z, dt / 3.0, k2);
        axpy(z, dt / 3.0, k3);
        axpy(z, dt / 6.0, k4);

        double biggest = 0.0;
        bool finite = true;
        for (double e : z.values.data()) {
            if (!std::isfinite(e)) finite = false;
            else biggest = std::max(biggest, std::abs(e));
        }
        if (!finite) {
            std::ostringstream msg;
            msg << "integrate_flow: non-finite feature at step " << step << " (s=" << s + dt << ")";
            throw InstabilityError(msg.str(), step, biggest);
        }
        if (step % options.record_every == 0 || step == steps) record(dt * static_cast<double>(step), z);
    }
    traj.step_count = steps;
    traj.z_final = std::move(z);
    return traj;
}

std::vector<DecompositionRow> error_decomposition(const ControlProblem& problem,
                                                  const FlowTrajectory& traj,
                                                  std::span<const HjbSolution> regularized,
                                                  const HjbSolution& unregularized) {
    if (regularized.size() != traj.times.size())
        throw ValidationError("error_decomposition: one regularized solution per record required");
    if (unregularized.tau != 0.0)
        throw ValidationError("error_decomposition: unregularized solution must have tau = 0");
    std::vector<DecompositionRow> rows;
    for (std::size_t r = 0; r < traj.times.size(); ++r) {
        const HjbSolution& reg = regularized[r];
        if (std::abs(reg.tau - traj.taus[r]) > 1e-12 * traj.taus[r]) {
            std::ostringstream msg;
            msg << "error_decomposition: record " << r << " has tau " << traj.taus[r]
                << " but the supplied solution has tau " << reg.tau;
            throw ValidationError(msg.str());
        }
        for (std::size_t j = 0; j < traj.probe_x.size(); ++j) {
            const double x = traj.probe_x[j];
            const double v_reg = traj.values_at_probe[r][j];
            const double v_unreg = traj.unregularized_values[r][j];
            const double star_tau = reg.v_star.at(problem.grid(), x);
            const double star_0 = unregularized.v_star.at(problem.grid(), x);
            DecompositionRow row;
            row.s = traj.times[r];
            row.tau = traj.taus[r];
            row.x = x;
            row.negative_kl_term = v_unreg - v_reg;
            row.optimization_error = v_reg - star_tau;
            row.regularization_bias = star_tau - star_0;
            row.total = v_unreg - star_0;
            rows.push_back(row);
        }
    }
    return rows;
}

std::vector<DecompositionRow> error_decomposition(const ControlProblem& problem,
                                                  const FlowTrajectory& traj,
                                                  const HjbOptions& options) {
    const HjbSolution base = solve_unregularized_hjb(problem, options);
    std::map<double, HjbSolution> cache;
    std::vector<HjbSolution> per_record;
    per_record.reserve(traj.taus.size());
    for (double tau : traj.taus) {
        auto it = cache.find(tau);
        if (it == cache.end()) it = cache.emplace(tau, solve_regularized_hjb(problem, tau, options)).first;
        per_record.push_back(it->second);
    }
    return error_decomposition(problem, traj, per_record, base);
}

void write_trajectory_csv(const std::filesystem::path& path, const FlowTrajectory& traj) {
    CsvTable table;
    table.header = {"s", "tau_s"};
    for (double x : traj.probe_x) table.header.push_back("v_reg_" + format_real(x));
    for (double x : traj.probe_x) table.header.push_back("v_unreg_" + format_real(x));
    table.header.push_back("kl_mass");
    for (std::size_t r = 0; r < traj.times.size(); ++r) {
        std::vector<double> row{traj.times[r], traj.taus[r]};
        row.insert(row.end(), traj.values_at_probe[r].begin(), traj.values_at_probe[r].end());
        row.insert(row.end(), traj.unregularized_values[r].begin(), traj.unregularized_values[r].end());
        row.push_back(traj.kl_mass[r]);
        table.rows.push_back(std::move(row));
    }
    write_csv_atomic(path, table);
}

void write_decomposition_csv(const std::filesystem::path& path,
                             std::span<const DecompositionRow> rows) {
    CsvTable table;
    table.header = {"s", "tau_s", "x", "negative_kl_term", "optimization_error",
                    "regularization_bias", "total_error"};
    for (const auto& r : rows)
        table.rows.push_back({r.s, r.tau, r.x, r.negative_kl_term, r.optimization_error,
                              r.regularization_bias, r.total});
    write_csv_atomic(path, table);
}

} // namespace pmd
