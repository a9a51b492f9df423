#pragma once

#include "pmd/domain.hpp"
#include "pmd/policy.hpp"

#include <cstdint>
#include <filesystem>
#include <span>

namespace pmd {

struct McEstimate {
    double x0 = 0.0;
    double tau = 0.0;
    double mean = 0.0;
    double std_error = 0.0;
    std::size_t n_paths = 0;
    double mean_exit_time = 0.0;
    double dt_sim = 0.0;
    std::uint64_t seed = 0;
};

struct McOptions {
    std::size_t n_paths = 100000;
    double dt_sim = 1e-4;
    std::uint64_t seed = 0;
    /// Worker threads; 0 uses the hardware concurrency. Results do not depend on it.
    unsigned threads = 0;
    std::size_t max_steps_per_path = 10000000;
};

/// Euler-Maruyama estimate of the discounted cost-to-exit of policy p from x0,
/// with policy-averaged coefficients interpolated linearly between grid nodes.
/// Paths are simulated in fixed batches, each with its own seeded generator.
McEstimate simulate_exit_value(const ControlProblem& problem, const Policy& p, double x0,
                               double tau, const McOptions& options);

/// Columns x0, tau, mean, stderr, n_paths, mean_exit_time, seed.
void write_mc_csv(const std::filesystem::path& path, std::span<const McEstimate> rows);

} // namespace pmd
