#pragma once

#include "pmd/linalg.hpp"

#include <cstddef>
#include <functional>
#include <optional>
#include <vector>

namespace pmd {

/// Uniform mesh over [left, right]; nodes[0] and nodes.back() are the boundary.
struct Grid {
    double left = 0.0;
    double right = 1.0;
    std::size_t n_interior = 0;
    double spacing = 0.0;
    std::vector<double> nodes;

    std::size_t size() const noexcept { return nodes.size(); }
    /// x-coordinate of the i-th interior node (0-based).
    double interior(std::size_t i) const noexcept { return nodes[i + 1]; }
};

Grid build_grid(double left, double right, std::size_t n_interior);

enum class ActionKind { Discrete, Interval };

/// Finite action set, or a Gauss-Legendre discretization of [alpha, beta],
/// together with the quadrature weights of the uniform reference measure.
struct ActionSpace {
    ActionKind kind = ActionKind::Discrete;
    std::vector<double> actions;
    std::vector<double> mu_weights;
    double alpha = 0.0;
    double beta = 0.0;

    std::size_t size() const noexcept { return actions.size(); }
    double min_action() const noexcept;
    double max_action() const noexcept;
};

ActionSpace make_discrete_actions(std::vector<double> values);

inline constexpr std::size_t kDefaultQuadratureNodes = 32;
ActionSpace make_interval_actions(double alpha, double beta,
                                  std::size_t n_quad = kDefaultQuadratureNodes);

/// Gauss-Legendre nodes and weights on [-1, 1], nodes ascending.
struct QuadratureRule {
    std::vector<double> nodes;
    std::vector<double> weights;
};
QuadratureRule gauss_legendre(std::size_t n);

using ScalarFn = std::function<double(double)>;
using ActionFn = std::function<double(double, double)>;

enum class Discretization {
    Central, ///< second-order central differences for b v'
    Upwind   ///< first-order upwinding chosen per action by the sign of b
};

/// Coefficients of the drift-linear, cost-quadratic family:
///   b = b_bar + b_hat a,  c = c_bar + c_hat a,  f = f_bar + f_tilde a + f_hat a^2.
struct LqCoefficients {
    ScalarFn b_bar, b_hat, c_bar, c_hat, f_bar, f_tilde, f_hat;
};

struct LqProblemSpec {
    LqCoefficients coefficients;
    double alpha = -1.0;
    double beta = 1.0;
};

/// Exit-time control problem on a 1D grid. Coefficients are tabulated once on
/// interior nodes x action nodes at construction; the scalar maps stay available
/// for off-grid evaluation (Hamiltonians, Monte Carlo, continuous argmin).
class ControlProblem {
public:
    ControlProblem(Grid grid, ActionSpace actions, ActionFn drift, ActionFn discount,
                   ActionFn cost, ScalarFn sigma, ScalarFn exit_cost,
                   Discretization scheme = Discretization::Central);

    const Grid& grid() const noexcept { return grid_; }
    const ActionSpace& actions() const noexcept { return actions_; }
    std::size_t n_interior() const noexcept { return grid_.n_interior; }
    std::size_t n_actions() const noexcept { return actions_.size(); }
    Discretization discretization() const noexcept { return scheme_; }

    double b(double x, double a) const { return drift_(x, a); }
    double c(double x, double a) const { return discount_(x, a); }
    double f(double x, double a) const { return cost_(x, a); }
    double sigma(double x) const { return sigma_(x); }
    double g(double x) const { return exit_cost_(x); }

    /// Tables over (interior node, action node).
    const Matrix& drift_table() const noexcept { return b_tab_; }
    const Matrix& discount_table() const noexcept { return c_tab_; }
    const Matrix& cost_table() const noexcept { return f_tab_; }
    /// sigma at interior nodes.
    const std::vector<double>& sigma_table() const noexcept { return sigma_tab_; }
    double g_left() const noexcept { return g_left_; }
    double g_right() const noexcept { return g_right_; }
    double lambda_min() const noexcept { return lambda_min_; }
    /// sup |f| over the tabulated grid x actions.
    double cost_scale() const noexcept { return cost_scale_; }

    const std::optional<LqCoefficients>& lq() const noexcept { return lq_; }

    /// Same problem with a different finite-difference scheme.
    ControlProblem with_discretization(Discretization scheme) const;
    /// Same problem without LQ metadata, forcing generic code paths.
    ControlProblem without_lq() const;

private:
    friend ControlProblem make_lq_problem(const LqProblemSpec&, Grid, ActionSpace, ScalarFn,
                                          ScalarFn, Discretization);

    Grid grid_;
    ActionSpace actions_;
    ActionFn drift_, discount_, cost_;
    ScalarFn sigma_, exit_cost_;
    Discretization scheme_;
    Matrix b_tab_, c_tab_, f_tab_;
    std::vector<double> sigma_tab_;
    double g_left_ = 0.0, g_right_ = 0.0;
    double lambda_min_ = 0.0;
    double cost_scale_ = 0.0;
    std::optional<LqCoefficients> lq_;
};

ControlProblem make_lq_problem(const LqProblemSpec& spec, Grid grid, ActionSpace actions,
                               ScalarFn sigma, ScalarFn exit_cost,
                               Discretization scheme = Discretization::Central);

} // namespace pmd
