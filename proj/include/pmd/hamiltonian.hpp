#pragma once

#include "pmd/domain.hpp"

#include <filesystem>
#include <span>
#include <vector>

namespace pmd {

struct HamiltonianSample {
    double x = 0.0;
    double u = 0.0;
    double p = 0.0;
    double soft = 0.0;
    double hard = 0.0;
    double argmin_action = 0.0;
};

/// -tau ln sum_k w_k exp(-z_k / tau), shifted by min z for stability.
double softmin(std::span<const double> z, std::span<const double> w, double tau);

/// z(a) = b(x,a) p - c(x,a) u + f(x,a).
double hamiltonian_integrand(const ControlProblem& problem, double x, double u, double p, double a);

/// Regularized Hamiltonian. Discrete spaces: exact log-sum-exp over the actions.
/// Interval spaces: the integral against the uniform density on [alpha, beta],
/// using the erf closed form for LQ problems at tau < 1e-3 and adaptive
/// Gauss-Kronrod otherwise.
double soft_hamiltonian(const ControlProblem& problem, double x, double u, double p, double tau);

/// Log-sum-exp over the action nodes of the problem, whatever its kind.
/// This is the Hamiltonian the discrete HJB solvers see.
double soft_hamiltonian_nodes(const ControlProblem& problem, double x, double u, double p,
                              double tau);

struct HardMin {
    double value = 0.0;
    double argmin_action = 0.0;
};

/// Unregularized Hamiltonian inf_a z(a). Discrete: ties go to the smallest
/// action. Interval with LQ data: clamped vertex. Interval otherwise: node scan
/// refined by golden-section search.
HardMin hard_hamiltonian(const ControlProblem& problem, double x, double u, double p);

/// Minimizes a quadratic lin*a + quad*a^2 (quad > 0) over [alpha, beta].
HardMin clamp_quadratic(double lin, double quad, double alpha, double beta);

/// Golden-section minimization of fn on [lo, hi] to absolute tolerance tol.
HardMin golden_section(const std::function<double(double)>& fn, double lo, double hi,
                       double tol = 1e-10);

/// h_tau(p) = -tau ln( (1/(beta-alpha)) int_alpha^beta exp(-(p a + a^2/2)/tau) da ).
double interval_quadratic_softmin(double p, double tau, double alpha, double beta);

/// h(p) = min over [alpha, beta] of p a + a^2/2.
double interval_quadratic_min(double p, double alpha, double beta);

/// exp(x^2) erfc(x) for x >= 0.
double erfcx(double x);

/// For LQ data: H_tau(x,u,p) = constant + scale * h_{tau/scale}(shift) with
/// scale = 2 f_hat and shift = (b_hat p - c_hat u + f_tilde) / scale.
struct LqReduction {
    double constant = 0.0;
    double scale = 0.0;
    double shift = 0.0;
    double scaled_tau = 0.0;
};
LqReduction lq_reduction(const ControlProblem& problem, double x, double u, double p, double tau);

/// max over samples of soft - hard. Discrete action spaces only.
double discrete_bias_gap(const ControlProblem& problem, std::span<const HamiltonianSample> samples,
                         double tau);

struct BiasSweepRow {
    double tau, p, soft, hard, gap, gap_over_tau_log;
};

/// Bias of the interval-quadratic softmin over a (tau, p) grid.
std::vector<BiasSweepRow> interval_bias_sweep(std::span<const double> taus,
                                              std::span<const double> ps, double alpha,
                                              double beta);

void write_bias_sweep_csv(const std::filesystem::path& path, std::span<const BiasSweepRow> rows);

} // namespace pmd
