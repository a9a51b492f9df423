#include "pmd/hjb.hpp"

#include "pmd/csv.hpp"
#include "pmd/error.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

namespace pmd {

namespace {

struct NodeDerivatives {
    double x, u, backward, forward, centred, second;
};

NodeDerivatives node_derivatives(const ControlProblem& problem, const ValueField& v, std::size_t i) {
    const double h = problem.grid().spacing;
    const double vm = v.v[i], v0 = v.v[i + 1], vp = v.v[i + 2];
    return {problem.grid().interior(i), v0,         (v0 - vm) / h,
            (vp - v0) / h,              (vp - vm) / (2.0 * h), (vp - 2.0 * v0 + vm) / (h * h)};
}

double generator_at(const ControlProblem& problem, const NodeDerivatives& d, double a) {
    const double b = problem.b(d.x, a);
    const double grad = problem.discretization() == Discretization::Central
                            ? b * d.centred
                            : std::max(b, 0.0) * d.forward + std::min(b, 0.0) * d.backward;
    return grad - problem.c(d.x, a) * d.u + problem.f(d.x, a);
}

// Minimum over [lo, hi] of b(x,a) p - c(x,a) u + f(x,a) for LQ data.
HardMin lq_piece_min(const LqCoefficients& lq, double x, double u, double p, double lo, double hi) {
    const double constant = lq.b_bar(x) * p - lq.c_bar(x) * u + lq.f_bar(x);
    const double lin = lq.b_hat(x) * p - lq.c_hat(x) * u + lq.f_tilde(x);
    HardMin m = clamp_quadratic(lin, lq.f_hat(x), lo, hi);
    m.value += constant;
    return m;
}

HardMin upwind_interval_min(const ControlProblem& problem, const NodeDerivatives& d) {
    const ActionSpace& space = problem.actions();
    if (const auto& lq = problem.lq()) {
        const double b0 = lq->b_bar(d.x);
        const double b1 = lq->b_hat(d.x);
        std::vector<double> cuts{space.alpha};
        if (b1 != 0.0) {
            const double kink = -b0 / b1;
            if (kink > space.alpha && kink < space.beta) cuts.push_back(kink);
        }
        cuts.push_back(space.beta);
        HardMin best{std::numeric_limits<double>::infinity(), 0.0};
        for (std::size_t j = 0; j + 1 < cuts.size(); ++j) {
            const double mid = 0.5 * (cuts[j] + cuts[j + 1]);
            const double p = b0 + b1 * mid >= 0.0 ? d.forward : d.backward;
            const HardMin piece = lq_piece_min(*lq, d.x, d.u, p, cuts[j], cuts[j + 1]);
            if (piece.value < best.value) best = piece;
        }
        return best;
    }
    const auto& acts = space.actions;
    std::size_t k = 0;
    double zk = generator_at(problem, d, acts[0]);
    for (std::size_t j = 1; j < acts.size(); ++j) {
        const double zj = generator_at(problem, d, acts[j]);
        if (zj < zk) k = j, zk = zj;
    }
    const double lo = k == 0 ? space.alpha : acts[k - 1];
    const double hi = k + 1 == acts.size() ? space.beta : acts[k + 1];
    return golden_section([&](double a) { return generator_at(problem, d, a); }, lo, hi);
}

std::size_t nearest_action(const ActionSpace& space, double a) {
    std::size_t best = 0;
    for (std::size_t k = 1; k < space.size(); ++k)
        if (std::abs(space.actions[k] - a) < std::abs(space.actions[best] - a)) best = k;
    return best;
}

ValueField value_from_nodes(const Grid& grid, std::vector<double> v, double tau) {
    ValueField out;
    out.dv = central_gradient(grid, v);
    out.v = std::move(v);
    out.tau = tau;
    return out;
}

double resolve_tol(const ControlProblem& problem, const HjbOptions& options) {
    return options.tol > 0.0 ? options.tol : default_hjb_tolerance(problem);
}

} // namespace

double default_hjb_tolerance(const ControlProblem& problem) {
    return 1e-9 * (1.0 + problem.cost_scale());
}

FeatureField optimal_feature(const ControlProblem& problem, const ValueField& v) {
    FeatureField z(action_generator(problem, v));
    const Matrix& f = problem.cost_table();
    for (std::size_t j = 0; j < f.data().size(); ++j) z.values.data()[j] += f.data()[j];
    return z;
}

HardMin nodal_hard_min(const ControlProblem& problem, const ValueField& v, std::size_t i) {
    const NodeDerivatives d = node_derivatives(problem, v, i);
    const ActionSpace& space = problem.actions();
    if (space.kind == ActionKind::Discrete) {
        HardMin best{std::numeric_limits<double>::infinity(), 0.0};
        for (std::size_t k = 0; k < space.size(); ++k) {
            const double z = generator_at(problem, d, space.actions[k]);
            if (z < best.value || (z == best.value && space.actions[k] < best.argmin_action))
                best = {z, space.actions[k]};
        }
        return best;
    }
    if (problem.discretization() == Discretization::Central)
        return hard_hamiltonian(problem, d.x, d.u, d.centred);
    return upwind_interval_min(problem, d);
}

double semilinear_residual(const ControlProblem& problem, const ValueField& v, double tau) {
    if (v.v.size() != problem.grid().size())
        throw ValidationError("semilinear_residual: value size mismatch");
    if (tau < 0.0) throw ValidationError("semilinear_residual: tau must be nonnegative");
    const FeatureField z = tau > 0.0 ? optimal_feature(problem, v) : FeatureField{};
    double worst = 0.0;
    for (std::size_t i = 0; i < problem.n_interior(); ++i) {
        const NodeDerivatives d = node_derivatives(problem, v, i);
        const double s = problem.sigma_table()[i];
        const double diffusion = 0.5 * s * s * d.second;
        const double ham = tau > 0.0 ? softmin(z.values.row(i), problem.actions().mu_weights, tau)
                                     : nodal_hard_min(problem, v, i).value;
        worst = std::max(worst, std::abs(diffusion + ham));
    }
    return worst;
}

HjbSolution solve_regularized_hjb(const ControlProblem& problem, double tau,
                                  const HjbOptions& options) {
    if (!(tau > 0.0) || !std::isfinite(tau))
        throw ValidationError("solve_regularized_hjb: tau must be positive");
    const double tol = resolve_tol(problem, options);
    const std::size_t n = problem.n_interior();
    const std::size_t m = problem.n_actions();
    FeatureField z = options.initial_feature ? *options.initial_feature : FeatureField(n, m, 0.0);
    if (z.values.rows() != n || z.values.cols() != m)
        throw ValidationError("solve_regularized_hjb: initial feature has the wrong shape");

    HjbSolution out;
    out.tau = tau;
    Policy policy = gibbs_policy(z, problem.actions());
    for (std::size_t it = 1; it <= options.max_iter; ++it) {
        ValueField v = solve_on_policy_bellman(problem, policy, tau);
        const double res = semilinear_residual(problem, v, tau);
        out.residual_history.push_back(res);
        FeatureField next = optimal_feature(problem, v);
        for (double& e : next.values.data()) e = -e / tau;
        policy = gibbs_policy(next, problem.actions());
        if (res <= tol) {
            out.v_star = std::move(v);
            out.iterations = it;
            out.final_residual = res;
            out.optimal_policy = std::move(policy);
            return out;
        }
    }
    std::ostringstream msg;
    msg << "solve_regularized_hjb: residual " << out.residual_history.back() << " above tolerance "
        << tol << " after " << options.max_iter << " iterations (tau=" << tau << ")";
    throw NonConvergenceError(msg.str(), out.residual_history);
}

HjbSolution solve_unregularized_hjb(const ControlProblem& problem, const HjbOptions& options) {
    const double tol = resolve_tol(problem, options);
    const std::size_t n = problem.n_interior();
    const ActionSpace& space = problem.actions();
    const bool discrete = space.kind == ActionKind::Discrete;

    // Start from the action closest to the middle of the range.
    const double centre = 0.5 * (space.min_action() + space.max_action());
    std::vector<double> selection(n, space.actions[nearest_action(space, centre)]);
    std::vector<std::vector<double>> visited;
    std::vector<double> visited_residual;

    HjbSolution out;
    out.tau = 0.0;
    for (std::size_t it = 1; it <= options.max_iter; ++it) {
        const AveragedCoefficients coeffs = selection_coefficients(problem, selection);
        std::vector<double> nodes = solve_linear(problem, coeffs, coeffs.f_bar, problem.g_left(),
                                                 problem.g_right());
        ValueField v = value_from_nodes(problem.grid(), std::move(nodes), 0.0);

        std::vector<double> next(n);
        double res = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            const HardMin best = nodal_hard_min(problem, v, i);
            next[i] = best.argmin_action;
            const double s = problem.sigma_table()[i];
            const NodeDerivatives d = node_derivatives(problem, v, i);
            res = std::max(res, std::abs(0.5 * s * s * d.second + best.value));
        }
        out.residual_history.push_back(res);

        double moved = 0.0;
        for (std::size_t i = 0; i < n; ++i) moved = std::max(moved, std::abs(next[i] - selection[i]));
        const bool stationary = discrete ? moved == 0.0 : moved <= 1e-13 * (space.beta - space.alpha);

        if (res <= tol || stationary) {
            out.v_star = std::move(v);
            out.iterations = it;
            out.final_residual = res;
            out.selected_actions = selection;
            std::vector<std::size_t> idx(n);
            for (std::size_t i = 0; i < n; ++i) idx[i] = nearest_action(space, selection[i]);
            out.optimal_policy = one_hot_policy(idx, space);
            return out;
        }

        if (discrete) {
            for (std::size_t j = 0; j < visited.size(); ++j) {
                if (visited[j] == next && res >= visited_residual[j]) {
                    std::ostringstream msg;
                    msg << "solve_unregularized_hjb: action selection from iteration " << j + 1
                        << " recurred at iteration " << it << " without residual decrease";
                    throw CyclingError(msg.str(), out.residual_history);
                }
            }
            visited.push_back(selection);
            visited_residual.push_back(res);
        }
        selection = std::move(next);
    }
    std::ostringstream msg;
    msg << "solve_unregularized_hjb: residual " << out.residual_history.back()
        << " above tolerance " << tol << " after " << options.max_iter << " iterations";
    throw NonConvergenceError(msg.str(), out.residual_history);
}

std::vector<BiasPoint> regularization_bias(const ControlProblem& problem,
                                           std::span<const double> taus,
                                           const HjbOptions& options) {
    for (std::size_t j = 0; j < taus.size(); ++j) {
        if (!(taus[j] > 0.0)) throw ValidationError("regularization_bias: taus must be positive");
        if (j > 0 && taus[j] > taus[j - 1])
            throw ValidationError("regularization_bias: taus must be sorted descending");
    }
    const HjbSolution base = solve_unregularized_hjb(problem, options);
    std::vector<BiasPoint> out;
    for (double tau : taus) {
        HjbOptions opts = options;
        opts.initial_feature.reset();
        const HjbSolution reg = solve_regularized_hjb(problem, tau, opts);
        double bias = 0.0;
        for (std::size_t j = 0; j < reg.v_star.v.size(); ++j)
            bias = std::max(bias, std::abs(reg.v_star.v[j] - base.v_star.v[j]));
        out.push_back({tau, bias});
    }
    return out;
}

void write_hjb_csv(const std::filesystem::path& path, const ControlProblem& problem,
                   const HjbSolution& solution) {
    const Grid& grid = problem.grid();
    const std::size_t last = grid.size() - 1;
    const double h = grid.spacing;
    const auto& v = solution.v_star.v;
    const double nan = std::numeric_limits<double>::quiet_NaN();
    const auto& acts = problem.actions().actions;
    CsvTable table;
    table.header = {"x", "v_star", "dv", "mean_action", "mode_action"};
    for (std::size_t j = 0; j <= last; ++j) {
        if (j == 0 || j == last) {
            const double d = j == 0 ? (-3.0 * v[0] + 4.0 * v[1] - v[2]) / (2.0 * h)
                                    : (3.0 * v[last] - 4.0 * v[last - 1] + v[last - 2]) / (2.0 * h);
            table.rows.push_back({grid.nodes[j], v[j], d, nan, nan});
            continue;
        }
        const std::size_t i = j - 1;
        double mean = 0.0, mode = 0.0;
        if (!solution.selected_actions.empty()) {
            mean = mode = solution.selected_actions[i];
        } else {
            std::size_t top = 0;
            for (std::size_t k = 0; k < acts.size(); ++k) {
                const double w = solution.optimal_policy.weights(i, k);
                mean += w * acts[k];
                if (w > solution.optimal_policy.weights(i, top)) top = k;
            }
            mode = acts[top];
        }
        table.rows.push_back({grid.nodes[j], v[j], solution.v_star.dv[i], mean, mode});
    }
    write_csv_atomic(path, table);
}

void write_residual_history_csv(const std::filesystem::path& path, const HjbSolution& solution) {
    CsvTable table;
    table.header = {"iteration", "residual"};
    for (std::size_t j = 0; j < solution.residual_history.size(); ++j)
        table.rows.push_back({static_cast<double>(j + 1), solution.residual_history[j]});
    write_csv_atomic(path, table);
}

} // namespace pmd
