#pragma once

#include "pmd/flow.hpp"

#include <filesystem>
#include <span>
#include <vector>

namespace pmd {

/// Logarithms of I1 = int_0^s exp(Phi(r)) dr and I2 = int_0^s tau_r exp(Phi(r)) dr,
/// Phi(r) = int_0^r tau.
struct GrowthIntegrals {
    double s = 0.0;
    double log_I1 = 0.0;
    double log_I2 = 0.0;
};

/// Closed forms where they exist, log-domain quadrature otherwise.
GrowthIntegrals growth_integrals(const Scheduler& sched, double s);

/// Both integrals by adaptive Gauss-Kronrod over panels on which exp(Phi)
/// grows by at most a factor e, summed as a streaming log-sum-exp.
GrowthIntegrals growth_integrals_quadrature(const Scheduler& sched, double s);

double optimization_bound(const Scheduler& sched, double s, double tau_ref, double C, bool discrete);

/// optimization_bound at tau_ref = tau_S plus the bias C tau_S ln(1/tau_S)^alpha.
double total_bound(const Scheduler& sched, double S, double C = 1.0, double alpha = 1.0);

struct BoundCurve {
    double horizon = 0.0;
    double C = 1.0;
    double alpha = 1.0;
    std::vector<double> betas;
    std::vector<double> values;
};

/// Total bound of the power-law schedulers over beta, one curve per horizon.
std::vector<BoundCurve> reproduce_figure(std::span<const double> betas,
                                         std::span<const double> horizons, double C = 1.0,
                                         double alpha = 1.0);

std::vector<double> default_figure_betas();
std::vector<double> default_figure_horizons();

void write_growth_csv(const std::filesystem::path& path, std::span<const GrowthIntegrals> rows);
/// Long format: beta, S, bound.
void write_figure_csv(const std::filesystem::path& path, std::span<const BoundCurve> curves);

} // namespace pmd
