#pragma once

#include "pmd/domain.hpp"
#include "pmd/linalg.hpp"
#include "pmd/policy.hpp"

#include <filesystem>
#include <span>
#include <vector>

namespace pmd {

/// Nodal solution of a linear Dirichlet problem. `v` covers every grid node
/// (boundary entries equal g), `dv` the interior nodes.
struct ValueField {
    std::vector<double> v;
    std::vector<double> dv;
    double tau = 0.0;

    /// Piecewise-linear interpolation of v.
    double at(const Grid& grid, double x) const;
};

/// Policy-integrated coefficients at interior nodes. `b_pos` and `b_neg` are
/// the averages of max(b,0) and min(b,0), used by the upwind scheme.
struct AveragedCoefficients {
    std::vector<double> b_bar, c_bar, f_bar, kl;
    std::vector<double> b_pos, b_neg;
};

AveragedCoefficients average_coefficients(const ControlProblem& problem, const Policy& p);

/// Coefficients of a deterministic control a(x_i) that need not be an action node.
AveragedCoefficients selection_coefficients(const ControlProblem& problem,
                                            std::span<const double> selected_actions);

/// Largest mesh Peclet number |b_bar| h / (sigma^2 / 2) over interior nodes.
double mesh_peclet(const ControlProblem& problem, const AveragedCoefficients& coeffs);

/// Matrix of -(1/2 sigma^2 D^2 + b_bar D - c_bar) on interior nodes.
/// Throws SingularSystemError if the central scheme loses diagonal dominance.
Tridiagonal assemble_operator(const ControlProblem& problem, const AveragedCoefficients& coeffs);

/// Solves 1/2 sigma^2 v'' + b_bar v' - c_bar v + forcing = 0 with v = (g_left, g_right)
/// at the endpoints. Returns v on all grid nodes.
std::vector<double> solve_linear(const ControlProblem& problem, const AveragedCoefficients& coeffs,
                                 std::span<const double> forcing, double g_left, double g_right);

/// Central-difference gradient at interior nodes from full nodal values.
std::vector<double> central_gradient(const Grid& grid, std::span<const double> v);

/// On-policy Bellman equation with KL forcing weight tau.
ValueField solve_on_policy_bellman(const ControlProblem& problem, const Policy& p, double tau);

/// max_i |1/2 sigma^2 v'' + b_bar v' - c_bar v + f_bar + tau kl| on the shared stencil.
double pde_residual(const ControlProblem& problem, const Policy& p, double tau,
                    const ValueField& value);

/// First-order generator b(x_i,a_k) Dv - c(x_i,a_k) v_i for every (node, action),
/// using the same stencil as the linear solver.
Matrix action_generator(const ControlProblem& problem, const ValueField& value);

/// Value of one policy at both regularization weights from a single
/// factorization: v_tau = unregularized + tau * kl_occupancy.
struct PolicyEvaluation {
    std::vector<double> unregularized;  ///< v_0 on all nodes
    std::vector<double> kl_occupancy;   ///< discounted occupancy of KL(pi|mu), zero on boundary
    ValueField regularized(const Grid& grid, double tau) const;
};
PolicyEvaluation evaluate_policy(const ControlProblem& problem, const Policy& p);

/// Solves the increment equation of the performance-difference identity and
/// returns max_i |w_i - (v_tau^p - v_tau^q)_i|.
double performance_difference_check(const ControlProblem& problem, const Policy& p,
                                    const Policy& q, double tau);

void write_value_csv(const std::filesystem::path& path, const Grid& grid, const ValueField& value);

} // namespace pmd
