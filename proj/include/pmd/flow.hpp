#pragma once

#include "pmd/elliptic.hpp"
#include "pmd/hjb.hpp"
#include "pmd/policy.hpp"

#include <filesystem>
#include <string>
#include <vector>

namespace pmd {

enum class SchedulerKind { Constant, HorizonConstant, InverseLinear, InverseSqrt, PowerLaw };

/// Regularization schedule s -> tau_s. `param` is tau for Constant, the
/// horizon S for HorizonConstant and the exponent for PowerLaw.
struct Scheduler {
    SchedulerKind kind = SchedulerKind::InverseLinear;
    double param = 0.0;

    static Scheduler constant(double tau);
    static Scheduler horizon_constant(double horizon);
    static Scheduler inverse_linear() { return {SchedulerKind::InverseLinear, 0.0}; }
    static Scheduler inverse_sqrt() { return {SchedulerKind::InverseSqrt, 0.0}; }
    static Scheduler power_law(double beta);

    std::string name() const;
};

Scheduler parse_scheduler(const std::string& kind, double param);

double scheduler_value(const Scheduler& sched, double s);
/// int_0^s tau_r dr in closed form.
double scheduler_integral(const Scheduler& sched, double s);
/// int_from^to tau_r dr without the cancellation of differencing scheduler_integral.
double scheduler_increment(const Scheduler& sched, double from, double to);

/// -(b Dv - c v + f + tau Z) on every (node, action).
FeatureField mirror_rhs(const ControlProblem& problem, const FeatureField& z, const ValueField& v,
                        double tau);

struct FlowOptions {
    double dt = 0.05;
    std::size_t record_every = 1;
    /// Interior node indices at which values are recorded.
    std::vector<std::size_t> probes;
    bool check_stability = true;
};

struct FlowTrajectory {
    std::vector<double> times;
    std::vector<double> taus;
    std::vector<double> probe_x;
    /// [record][probe]
    std::vector<std::vector<double>> values_at_probe;
    std::vector<std::vector<double>> unregularized_values;
    /// sup over nodes of the discounted occupancy of KL(pi|mu).
    std::vector<double> kl_mass;
    FeatureField z_final;
    std::size_t step_count = 0;
    double dt = 0.0;
    double lipschitz_estimate = 0.0;
};

/// Measured Lipschitz constant of Z -> b Dv - c v + f near z (finite differences).
double estimate_rhs_lipschitz(const ControlProblem& problem, const FeatureField& z, double tau);

/// Classical RK4 on dZ/ds = mirror_rhs with the PDE re-solved at each stage.
FlowTrajectory integrate_flow(const ControlProblem& problem, const FeatureField& z0,
                              const Scheduler& sched, double horizon, const FlowOptions& options);

struct DecompositionRow {
    double s = 0.0;
    double tau = 0.0;
    double x = 0.0;
    double negative_kl_term = 0.0;     ///< v^pi_0 - v^pi_tau
    double optimization_error = 0.0;   ///< v^pi_tau - v*_tau
    double regularization_bias = 0.0;  ///< v*_tau - v*_0
    double total = 0.0;                ///< v^pi_0 - v*_0
};

/// `regularized[r]` must be the HJB solution at the tau of record r.
std::vector<DecompositionRow> error_decomposition(const ControlProblem& problem,
                                                  const FlowTrajectory& traj,
                                                  std::span<const HjbSolution> regularized,
                                                  const HjbSolution& unregularized);

/// Solves the regularized HJB for each distinct recorded tau, then decomposes.
std::vector<DecompositionRow> error_decomposition(const ControlProblem& problem,
                                                  const FlowTrajectory& traj,
                                                  const HjbOptions& options = {});

void write_trajectory_csv(const std::filesystem::path& path, const FlowTrajectory& traj);
void write_decomposition_csv(const std::filesystem::path& path,
                             std::span<const DecompositionRow> rows);

} // namespace pmd
