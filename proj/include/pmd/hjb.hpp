#pragma once

#include "pmd/elliptic.hpp"
#include "pmd/hamiltonian.hpp"

#include <filesystem>
#include <optional>
#include <vector>

namespace pmd {

struct HjbSolution {
    ValueField v_star;
    double tau = 0.0;
    std::size_t iterations = 0;
    double final_residual = 0.0;
    /// Gibbs policy for tau > 0; one-hot on the nearest action node for tau = 0.
    Policy optimal_policy;
    /// tau = 0 only: minimizing action per interior node. For interval spaces
    /// these are exact minimizers and need not coincide with action nodes.
    std::vector<double> selected_actions;
    std::vector<double> residual_history;
};

struct HjbOptions {
    /// Residual tolerance; nonpositive selects 1e-9 (1 + sup|f|).
    double tol = 0.0;
    std::size_t max_iter = 200;
    /// Starting feature for the regularized solver (uniform policy if empty).
    std::optional<FeatureField> initial_feature;
};

double default_hjb_tolerance(const ControlProblem& problem);

/// Z*(x_i, a_k) = b Dv - c v + f on the solver's stencil.
FeatureField optimal_feature(const ControlProblem& problem, const ValueField& v);

/// Per-node minimizer of the discrete generator plus running cost.
HardMin nodal_hard_min(const ControlProblem& problem, const ValueField& v, std::size_t i);

/// max_i |1/2 sigma^2 v'' + H_tau(x_i, v_i, Dv_i)|; tau = 0 uses the hard minimum.
double semilinear_residual(const ControlProblem& problem, const ValueField& v, double tau);

HjbSolution solve_regularized_hjb(const ControlProblem& problem, double tau,
                                  const HjbOptions& options = {});
HjbSolution solve_unregularized_hjb(const ControlProblem& problem, const HjbOptions& options = {});

struct BiasPoint {
    double tau;
    double bias;  ///< sup-norm of v*_tau - v*_0
};
std::vector<BiasPoint> regularization_bias(const ControlProblem& problem,
                                           std::span<const double> taus,
                                           const HjbOptions& options = {});

/// Columns x, v_star, dv, mean_action, mode_action. Boundary rows carry NaN
/// policy columns.
void write_hjb_csv(const std::filesystem::path& path, const ControlProblem& problem,
                   const HjbSolution& solution);
void write_residual_history_csv(const std::filesystem::path& path, const HjbSolution& solution);

} // namespace pmd
