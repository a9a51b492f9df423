#include "pmd/domain.hpp"

#include "pmd/error.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>
#include <sstream>

namespace pmd {

Grid build_grid(double left, double right, std::size_t n_interior) {
    if (!std::isfinite(left) || !std::isfinite(right))
        throw ValidationError("grid endpoints must be finite");
    if (!(left < right)) throw ValidationError("grid requires left < right");
    if (n_interior == 0) throw ValidationError("grid requires at least one interior node");

    Grid grid;
    grid.left = left;
    grid.right = right;
    grid.n_interior = n_interior;
    const std::size_t cells = n_interior + 1;
    grid.spacing = (right - left) / static_cast<double>(cells);
    grid.nodes.resize(cells + 1);
    for (std::size_t i = 0; i <= cells; ++i)
        grid.nodes[i] = left + (right - left) * (static_cast<double>(i) / static_cast<double>(cells));
    grid.nodes.front() = left;
    grid.nodes.back() = right;
    return grid;
}

double ActionSpace::min_action() const noexcept {
    return kind == ActionKind::Interval ? alpha : *std::min_element(actions.begin(), actions.end());
}

double ActionSpace::max_action() const noexcept {
    return kind == ActionKind::Interval ? beta : *std::max_element(actions.begin(), actions.end());
}

ActionSpace make_discrete_actions(std::vector<double> values) {
    if (values.empty()) throw ValidationError("discrete action space must not be empty");
    for (double a : values)
        if (!std::isfinite(a)) throw ValidationError("discrete actions must be finite");
    ActionSpace space;
    space.kind = ActionKind::Discrete;
    const auto n = static_cast<double>(values.size());
    space.mu_weights.assign(values.size(), 1.0 / n);
    space.alpha = *std::min_element(values.begin(), values.end());
    space.beta = *std::max_element(values.begin(), values.end());
    space.actions = std::move(values);
    return space;
}

QuadratureRule gauss_legendre(std::size_t n) {
    if (n == 0) throw ValidationError("Gauss-Legendre rule needs at least one node");
    QuadratureRule rule;
    rule.nodes.resize(n);
    rule.weights.resize(n);
    const std::size_t half = (n + 1) / 2;
    for (std::size_t i = 0; i < half; ++i) {
        // Tricomi initial guess for the i-th largest root, refined by Newton.
        double z = std::cos(std::numbers::pi * (static_cast<double>(i) + 0.75) /
                            (static_cast<double>(n) + 0.5));
        double dp = 0.0;
        for (int it = 0; it < 100; ++it) {
            double p0 = 1.0, p1 = z;
            for (std::size_t k = 2; k <= n; ++k) {
                const double kk = static_cast<double>(k);
                const double p2 = ((2.0 * kk - 1.0) * z * p1 - (kk - 1.0) * p0) / kk;
                p0 = p1;
                p1 = p2;
            }
            dp = static_cast<double>(n) * (z * p1 - p0) / (z * z - 1.0);
            const double dz = p1 / dp;
            z -= dz;
            if (std::abs(dz) < 1e-16) break;
        }
        // Recompute the derivative at the converged root for the weight.
        double p0 = 1.0, p1 = z;
        for (std::size_t k = 2; k <= n; ++k) {
            const double kk = static_cast<double>(k);
            const double p2 = ((2.0 * kk - 1.0) * z * p1 - (kk - 1.0) * p0) / kk;
            p0 = p1;
            p1 = p2;
        }
        dp = static_cast<double>(n) * (z * p1 - p0) / (z * z - 1.0);
        const double w = 2.0 / ((1.0 - z * z) * dp * dp);
        rule.nodes[i] = -z;
        rule.nodes[n - 1 - i] = z;
        rule.weights[i] = w;
        rule.weights[n - 1 - i] = w;
    }
    if (n % 2 == 1) rule.nodes[n / 2] = 0.0;
    return rule;
}

ActionSpace make_interval_actions(double alpha, double beta, std::size_t n_quad) {
    if (!std::isfinite(alpha) || !std::isfinite(beta))
        throw ValidationError("interval endpoints must be finite");
    if (!(alpha < beta)) throw ValidationError("interval action space requires alpha < beta");
    if (n_quad < 2) throw ValidationError("interval action space requires n_quad >= 2");

    const QuadratureRule rule = gauss_legendre(n_quad);
    ActionSpace space;
    space.kind = ActionKind::Interval;
    space.alpha = alpha;
    space.beta = beta;
    space.actions.resize(n_quad);
    space.mu_weights.resize(n_quad);
    const double mid = 0.5 * (alpha + beta);
    const double half = 0.5 * (beta - alpha);
    // Weights of the uniform density: half * w / (beta - alpha) = w / 2.
    for (std::size_t k = 0; k < n_quad; ++k) {
        space.actions[k] = mid + half * rule.nodes[k];
        space.mu_weights[k] = 0.5 * rule.weights[k];
    }
    const double total = std::accumulate(space.mu_weights.begin(), space.mu_weights.end(), 0.0);
    for (double& w : space.mu_weights) w /= total;
    return space;
}

ControlProblem::ControlProblem(Grid grid, ActionSpace actions, ActionFn drift, ActionFn discount,
                               ActionFn cost, ScalarFn sigma, ScalarFn exit_cost,
                               Discretization scheme)
    : grid_(std::move(grid)), actions_(std::move(actions)), drift_(std::move(drift)),
      discount_(std::move(discount)), cost_(std::move(cost)), sigma_(std::move(sigma)),
      exit_cost_(std::move(exit_cost)), scheme_(scheme) {
    if (grid_.n_interior == 0 || grid_.nodes.size() != grid_.n_interior + 2)
        throw ValidationError("control problem: malformed grid");
    if (actions_.size() == 0 || actions_.mu_weights.size() != actions_.size())
        throw ValidationError("control problem: malformed action space");
    if (!drift_ || !discount_ || !cost_ || !sigma_ || !exit_cost_)
        throw ValidationError("control problem: every coefficient map must be provided");

    const std::size_t n = grid_.n_interior;
    const std::size_t m = actions_.size();
    b_tab_ = Matrix(n, m);
    c_tab_ = Matrix(n, m);
    f_tab_ = Matrix(n, m);
    sigma_tab_.resize(n);

    lambda_min_ = std::numeric_limits<double>::infinity();
    for (double x : grid_.nodes) lambda_min_ = std::min(lambda_min_, sigma_(x));
    if (!(lambda_min_ > 0.0) || !std::isfinite(lambda_min_))
        throw ValidationError("control problem: sigma must be positive and finite on the grid");

    auto check_finite = [](double v, const char* what, double x, double a) {
        if (!std::isfinite(v)) {
            std::ostringstream msg;
            msg << "control problem: " << what << "(" << x << ", " << a << ") is not finite";
            throw ValidationError(msg.str());
        }
    };

    for (std::size_t i = 0; i < n; ++i) {
        const double x = grid_.interior(i);
        sigma_tab_[i] = sigma_(x);
        for (std::size_t k = 0; k < m; ++k) {
            const double a = actions_.actions[k];
            b_tab_(i, k) = drift_(x, a);
            c_tab_(i, k) = discount_(x, a);
            f_tab_(i, k) = cost_(x, a);
            check_finite(b_tab_(i, k), "b", x, a);
            check_finite(c_tab_(i, k), "c", x, a);
            check_finite(f_tab_(i, k), "f", x, a);
            if (c_tab_(i, k) < 0.0) {
                std::ostringstream msg;
                msg << "control problem: discount c(" << x << ", " << a << ") = " << c_tab_(i, k)
                    << " is negative";
                throw ValidationError(msg.str());
            }
        }
    }
    g_left_ = exit_cost_(grid_.left);
    g_right_ = exit_cost_(grid_.right);
    if (!std::isfinite(g_left_) || !std::isfinite(g_right_))
        throw ValidationError("control problem: exit cost g must be finite at the boundary");
    cost_scale_ = f_tab_.max_abs();
}

ControlProblem ControlProblem::with_discretization(Discretization scheme) const {
    ControlProblem copy = *this;
    copy.scheme_ = scheme;
    return copy;
}

ControlProblem ControlProblem::without_lq() const {
    ControlProblem copy = *this;
    copy.lq_.reset();
    return copy;
}

ControlProblem make_lq_problem(const LqProblemSpec& spec, Grid grid, ActionSpace actions,
                               ScalarFn sigma, ScalarFn exit_cost, Discretization scheme) {
    const LqCoefficients& q = spec.coefficients;
    if (!q.b_bar || !q.b_hat || !q.c_bar || !q.c_hat || !q.f_bar || !q.f_tilde || !q.f_hat)
        throw ValidationError("LQ problem: every coefficient map must be provided");
    if (!(spec.alpha < spec.beta)) throw ValidationError("LQ problem requires alpha < beta");
    if (actions.min_action() < spec.alpha - 1e-12 || actions.max_action() > spec.beta + 1e-12)
        throw ValidationError("LQ problem: action nodes fall outside [alpha, beta]");

    for (double x : grid.nodes) {
        const double fh = q.f_hat(x);
        if (!(fh > 0.0)) {
            std::ostringstream msg;
            msg << "LQ problem: f_hat(" << x << ") = " << fh << " must be strictly positive";
            throw ValidationError(msg.str());
        }
        // c is affine in a, so nonnegativity on the range is decided at the endpoints.
        for (double a : {spec.alpha, spec.beta}) {
            const double c = q.c_bar(x) + q.c_hat(x) * a;
            if (c < 0.0) {
                std::ostringstream msg;
                msg << "LQ problem: c(" << x << ", " << a << ") = " << c
                    << " is negative on the action range";
                throw ValidationError(msg.str());
            }
        }
    }

    ActionFn drift = [q](double x, double a) { return q.b_bar(x) + q.b_hat(x) * a; };
    ActionFn discount = [q](double x, double a) { return q.c_bar(x) + q.c_hat(x) * a; };
    ActionFn cost = [q](double x, double a) {
        return q.f_bar(x) + q.f_tilde(x) * a + q.f_hat(x) * a * a;
    };
    ControlProblem problem(std::move(grid), std::move(actions), std::move(drift),
                           std::move(discount), std::move(cost), std::move(sigma),
                           std::move(exit_cost), scheme);
    problem.lq_ = q;
    return problem;
}

} // namespace pmd
