#include "pmd/elliptic.hpp"

#include "pmd/csv.hpp"
#include "pmd/error.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace pmd {

namespace {

void check_policy_shape(const ControlProblem& problem, const Policy& p) {
    if (p.n_nodes() != problem.n_interior() || p.n_actions() != problem.n_actions()) {
        std::ostringstream msg;
        msg << "policy shape " << p.n_nodes() << "x" << p.n_actions() << " does not match problem "
            << problem.n_interior() << "x" << problem.n_actions();
        throw ValidationError(msg.str());
    }
}

// Coefficients of the discrete generator at interior node i:
//   (L v)_i = lo * v_{i-1} + mid * v_i + up * v_{i+1}.
struct Stencil {
    double lo, mid, up;
};

Stencil generator_stencil(const ControlProblem& problem, const AveragedCoefficients& coeffs,
                          std::size_t i) {
    const double h = problem.grid().spacing;
    const double s2 = problem.sigma_table()[i];
    const double diff = 0.5 * s2 * s2 / (h * h);
    if (problem.discretization() == Discretization::Central) {
        const double adv = coeffs.b_bar[i] / (2.0 * h);
        return {diff - adv, -2.0 * diff - coeffs.c_bar[i], diff + adv};
    }
    const double bp = coeffs.b_pos[i] / h;
    const double bn = coeffs.b_neg[i] / h;
    return {diff - bn, -2.0 * diff - bp + bn - coeffs.c_bar[i], diff + bp};
}

} // namespace

double ValueField::at(const Grid& grid, double x) const {
    if (x <= grid.left) return v.front();
    if (x >= grid.right) return v.back();
    const double t = (x - grid.left) / grid.spacing;
    const auto j = std::min(static_cast<std::size_t>(t), grid.size() - 2);
    const double frac = t - static_cast<double>(j);
    return (1.0 - frac) * v[j] + frac * v[j + 1];
}

AveragedCoefficients average_coefficients(const ControlProblem& problem, const Policy& p) {
    check_policy_shape(problem, p);
    const std::size_t n = problem.n_interior();
    const std::size_t m = problem.n_actions();
    AveragedCoefficients out;
    out.b_bar.assign(n, 0.0);
    out.c_bar.assign(n, 0.0);
    out.f_bar.assign(n, 0.0);
    out.b_pos.assign(n, 0.0);
    out.b_neg.assign(n, 0.0);
    const Matrix& b = problem.drift_table();
    const Matrix& c = problem.discount_table();
    const Matrix& f = problem.cost_table();
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t k = 0; k < m; ++k) {
            const double w = p.weights(i, k);
            if (w == 0.0) continue;
            out.b_bar[i] += w * b(i, k);
            out.c_bar[i] += w * c(i, k);
            out.f_bar[i] += w * f(i, k);
            out.b_pos[i] += w * std::max(b(i, k), 0.0);
            out.b_neg[i] += w * std::min(b(i, k), 0.0);
        }
    }
    out.kl = kl_to_reference(p, problem.actions());
    return out;
}

AveragedCoefficients selection_coefficients(const ControlProblem& problem,
                                            std::span<const double> selected_actions) {
    const std::size_t n = problem.n_interior();
    if (selected_actions.size() != n)
        throw ValidationError("selection_coefficients: one action per interior node required");
    AveragedCoefficients out;
    out.b_bar.resize(n);
    out.c_bar.resize(n);
    out.f_bar.resize(n);
    out.b_pos.resize(n);
    out.b_neg.resize(n);
    out.kl.assign(n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        const double x = problem.grid().interior(i);
        const double a = selected_actions[i];
        out.b_bar[i] = problem.b(x, a);
        out.c_bar[i] = problem.c(x, a);
        out.f_bar[i] = problem.f(x, a);
        out.b_pos[i] = std::max(out.b_bar[i], 0.0);
        out.b_neg[i] = std::min(out.b_bar[i], 0.0);
    }
    return out;
}

double mesh_peclet(const ControlProblem& problem, const AveragedCoefficients& coeffs) {
    const double h = problem.grid().spacing;
    double worst = 0.0;
    for (std::size_t i = 0; i < problem.n_interior(); ++i) {
        const double s = problem.sigma_table()[i];
        worst = std::max(worst, std::abs(coeffs.b_bar[i]) * h / (0.5 * s * s));
    }
    return worst;
}

Tridiagonal assemble_operator(const ControlProblem& problem, const AveragedCoefficients& coeffs) {
    const std::size_t n = problem.n_interior();
    if (problem.discretization() == Discretization::Central) {
        const double pe = mesh_peclet(problem, coeffs);
        if (pe > 2.0) {
            std::ostringstream msg;
            msg << "central differences lose diagonal dominance: mesh Peclet number " << pe
                << " exceeds 2; refine the grid or select the upwind discretization";
            throw SingularSystemError(msg.str(), pe);
        }
    }
    Tridiagonal a(n);
    for (std::size_t i = 0; i < n; ++i) {
        const Stencil s = generator_stencil(problem, coeffs, i);
        a.lower[i] = -s.lo;
        a.diag[i] = -s.mid;
        a.upper[i] = -s.up;
    }
    return a;
}

std::vector<double> solve_linear(const ControlProblem& problem, const AveragedCoefficients& coeffs,
                                 std::span<const double> forcing, double g_left, double g_right) {
    const std::size_t n = problem.n_interior();
    if (forcing.size() != n) throw ValidationError("solve_linear: forcing size mismatch");
    const Tridiagonal a = assemble_operator(problem, coeffs);
    std::vector<double> rhs(forcing.begin(), forcing.end());
    rhs.front() -= a.lower.front() * g_left;
    rhs.back() -= a.upper.back() * g_right;
    std::vector<double> interior;
    try {
        interior = solve_tridiagonal(a, std::move(rhs));
    } catch (const SingularSystemError& e) {
        throw SingularSystemError(e.what(), mesh_peclet(problem, coeffs));
    }
    std::vector<double> v(n + 2);
    v.front() = g_left;
    v.back() = g_right;
    std::copy(interior.begin(), interior.end(), v.begin() + 1);
    for (double x : v)
        if (!std::isfinite(x)) throw NumericalError("solve_linear: non-finite solution");
    return v;
}

std::vector<double> central_gradient(const Grid& grid, std::span<const double> v) {
    const std::size_t n = grid.n_interior;
    std::vector<double> dv(n);
    const double inv = 1.0 / (2.0 * grid.spacing);
    for (std::size_t i = 0; i < n; ++i) dv[i] = (v[i + 2] - v[i]) * inv;
    return dv;
}

ValueField solve_on_policy_bellman(const ControlProblem& problem, const Policy& p, double tau) {
    if (!(tau >= 0.0) || !std::isfinite(tau))
        throw ValidationError("solve_on_policy_bellman: tau must be finite and nonnegative");
    const AveragedCoefficients coeffs = average_coefficients(problem, p);
    std::vector<double> forcing(problem.n_interior());
    for (std::size_t i = 0; i < forcing.size(); ++i)
        forcing[i] = coeffs.f_bar[i] + tau * coeffs.kl[i];
    ValueField out;
    out.v = solve_linear(problem, coeffs, forcing, problem.g_left(), problem.g_right());
    out.dv = central_gradient(problem.grid(), out.v);
    out.tau = tau;
    return out;
}

double pde_residual(const ControlProblem& problem, const Policy& p, double tau,
                    const ValueField& value) {
    const AveragedCoefficients coeffs = average_coefficients(problem, p);
    const std::size_t n = problem.n_interior();
    if (value.v.size() != n + 2) throw ValidationError("pde_residual: value size mismatch");
    double worst = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const Stencil s = generator_stencil(problem, coeffs, i);
        const double r = s.lo * value.v[i] + s.mid * value.v[i + 1] + s.up * value.v[i + 2] +
                         coeffs.f_bar[i] + tau * coeffs.kl[i];
        worst = std::max(worst, std::abs(r));
    }
    return worst;
}

Matrix action_generator(const ControlProblem& problem, const ValueField& value) {
    const std::size_t n = problem.n_interior();
    const std::size_t m = problem.n_actions();
    if (value.v.size() != n + 2) throw ValidationError("action_generator: value size mismatch");
    const double h = problem.grid().spacing;
    const Matrix& b = problem.drift_table();
    const Matrix& c = problem.discount_table();
    Matrix out(n, m);
    const bool central = problem.discretization() == Discretization::Central;
    for (std::size_t i = 0; i < n; ++i) {
        const double vm = value.v[i], v0 = value.v[i + 1], vp = value.v[i + 2];
        const double centred = (vp - vm) / (2.0 * h);
        const double forward = (vp - v0) / h;
        const double backward = (v0 - vm) / h;
        for (std::size_t k = 0; k < m; ++k) {
            const double bk = b(i, k);
            const double grad_term =
                central ? bk * centred : std::max(bk, 0.0) * forward + std::min(bk, 0.0) * backward;
            out(i, k) = grad_term - c(i, k) * v0;
        }
    }
    return out;
}

ValueField PolicyEvaluation::regularized(const Grid& grid, double tau) const {
    ValueField out;
    out.v.resize(unregularized.size());
    for (std::size_t j = 0; j < out.v.size(); ++j)
        out.v[j] = unregularized[j] + tau * kl_occupancy[j];
    out.dv = central_gradient(grid, out.v);
    out.tau = tau;
    return out;
}

PolicyEvaluation evaluate_policy(const ControlProblem& problem, const Policy& p) {
    const AveragedCoefficients coeffs = average_coefficients(problem, p);
    const Tridiagonal a = assemble_operator(problem, coeffs);
    const std::size_t n = problem.n_interior();
    std::vector<double> cost(coeffs.f_bar);
    cost.front() -= a.lower.front() * problem.g_left();
    cost.back() -= a.upper.back() * problem.g_right();
    std::vector<double> kl(coeffs.kl);
    std::vector<double>* rhs[] = {&cost, &kl};
    solve_tridiagonal(a, rhs);

    PolicyEvaluation out;
    out.unregularized.resize(n + 2);
    out.kl_occupancy.assign(n + 2, 0.0);
    out.unregularized.front() = problem.g_left();
    out.unregularized.back() = problem.g_right();
    for (std::size_t i = 0; i < n; ++i) {
        out.unregularized[i + 1] = cost[i];
        out.kl_occupancy[i + 1] = kl[i];
    }
    return out;
}

double performance_difference_check(const ControlProblem& problem, const Policy& p,
                                    const Policy& q, double tau) {
    if (!(tau > 0.0)) throw ValidationError("performance_difference_check: tau must be positive");
    check_policy_shape(problem, p);
    check_policy_shape(problem, q);
    const ValueField vp = solve_on_policy_bellman(problem, p, tau);
    const ValueField vq = solve_on_policy_bellman(problem, q, tau);

    const Matrix gen_q = action_generator(problem, vq);
    const Matrix& f = problem.cost_table();
    const std::vector<double> kl_pq = kl_between(p, q, problem.actions());
    const std::size_t n = problem.n_interior();
    std::vector<double> h(n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        double acc = 0.0;
        for (std::size_t k = 0; k < problem.n_actions(); ++k) {
            const double dw = p.weights(i, k) - q.weights(i, k);
            if (dw == 0.0) continue;
            acc += (gen_q(i, k) + f(i, k) + tau * q.log_density(i, k)) * dw;
        }
        h[i] = acc + tau * kl_pq[i];
    }

    const AveragedCoefficients coeffs_p = average_coefficients(problem, p);
    const std::vector<double> w = solve_linear(problem, coeffs_p, h, 0.0, 0.0);
    double worst = 0.0;
    for (std::size_t j = 0; j < w.size(); ++j)
        worst = std::max(worst, std::abs(w[j] - (vp.v[j] - vq.v[j])));
    return worst;
}

void write_value_csv(const std::filesystem::path& path, const Grid& grid, const ValueField& value) {
    const std::size_t last = grid.size() - 1;
    const double h = grid.spacing;
    CsvTable table;
    table.header = {"x", "v", "dv"};
    for (std::size_t j = 0; j <= last; ++j) {
        double d;
        if (j == 0)
            d = (-3.0 * value.v[0] + 4.0 * value.v[1] - value.v[2]) / (2.0 * h);
        else if (j == last)
            d = (3.0 * value.v[last] - 4.0 * value.v[last - 1] + value.v[last - 2]) / (2.0 * h);
        else
            d = value.dv[j - 1];
        table.rows.push_back({grid.nodes[j], value.v[j], d});
    }
    write_csv_atomic(path, table);
}

} // namespace pmd
