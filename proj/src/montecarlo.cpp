#include "pmd/montecarlo.hpp"

#include "pmd/csv.hpp"
#include "pmd/elliptic.hpp"
#include "pmd/error.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <mutex>
#include <random>
#include <sstream>
#include <thread>
#include <vector>

namespace pmd {

namespace {

constexpr std::size_t kBatchSize = 1000;

// Welford accumulator, merged across batches with the pairwise update.
struct BatchResult {
    double mean = 0.0;
    double m2 = 0.0;
    double exit_time = 0.0;
    std::size_t paths = 0;

    void add(double v) {
        ++paths;
        const double d = v - mean;
        mean += d / static_cast<double>(paths);
        m2 += d * (v - mean);
    }
    void merge(const BatchResult& o) {
        if (o.paths == 0) return;
        const double n = static_cast<double>(paths), m = static_cast<double>(o.paths);
        const double d = o.mean - mean;
        mean += d * m / (n + m);
        m2 += o.m2 + d * d * n * m / (n + m);
        exit_time += o.exit_time;
        paths += o.paths;
    }
};

// Values on all grid nodes, boundary entries copied from the adjacent interior node.
std::vector<double> extend(const std::vector<double>& interior) {
    std::vector<double> out(interior.size() + 2);
    std::copy(interior.begin(), interior.end(), out.begin() + 1);
    out.front() = interior.front();
    out.back() = interior.back();
    return out;
}

struct Tables {
    double left, inv_h;
    std::size_t last;
    std::vector<double> drift, discount, running, sigma;

    double lerp(const std::vector<double>& t, double x) const {
        const double u = (x - left) * inv_h;
        const auto j = std::min(static_cast<std::size_t>(std::max(u, 0.0)), last - 1);
        const double w = u - static_cast<double>(j);
        return t[j] + w * (t[j + 1] - t[j]);
    }
};

} // namespace

McEstimate simulate_exit_value(const ControlProblem& problem, const Policy& p, double x0,
                               double tau, const McOptions& options) {
    const Grid& grid = problem.grid();
    if (!(x0 > grid.left && x0 < grid.right))
        throw ValidationError("simulate_exit_value: x0 must lie strictly inside the domain");
    if (!(options.dt_sim > 0.0)) throw ValidationError("simulate_exit_value: dt_sim must be positive");
    if (options.n_paths == 0) throw ValidationError("simulate_exit_value: n_paths must be >= 1");
    if (!(tau >= 0.0)) throw ValidationError("simulate_exit_value: tau must be nonnegative");

    const AveragedCoefficients coeffs = average_coefficients(problem, p);
    std::vector<double> running(coeffs.f_bar);
    for (std::size_t i = 0; i < running.size(); ++i) running[i] += tau * coeffs.kl[i];
    const Tables tab{grid.left,          1.0 / grid.spacing,    grid.size() - 1,
                     extend(coeffs.b_bar), extend(coeffs.c_bar), extend(running),
                     extend(problem.sigma_table())};
    const double g_left = problem.g_left(), g_right = problem.g_right();
    const double dt = options.dt_sim, sqrt_dt = std::sqrt(dt);

    const std::size_t n_batches = (options.n_paths + kBatchSize - 1) / kBatchSize;
    std::vector<BatchResult> results(n_batches);
    std::atomic<std::size_t> next{0};
    std::mutex error_mutex;
    std::string error;
    std::atomic<bool> failed{false};

    auto worker = [&] {
        for (;;) {
            const std::size_t b = next.fetch_add(1);
            if (b >= n_batches || failed.load()) return;
            std::seed_seq seq{static_cast<std::uint32_t>(options.seed),
                              static_cast<std::uint32_t>(options.seed >> 32),
                              static_cast<std::uint32_t>(b), static_cast<std::uint32_t>(b >> 32)};
            std::mt19937_64 rng(seq);
            std::normal_distribution<double> normal(0.0, 1.0);
            const std::size_t first = b * kBatchSize;
            const std::size_t count = std::min(kBatchSize, options.n_paths - first);
            BatchResult r;
            for (std::size_t path = 0; path < count; ++path) {
                double x = x0, gamma = 1.0, acc = 0.0;
                std::size_t steps = 0;
                for (;;) {
                    acc += gamma * tab.lerp(tab.running, x) * dt;
                    gamma *= std::exp(-tab.lerp(tab.discount, x) * dt);
                    x += tab.lerp(tab.drift, x) * dt + tab.lerp(tab.sigma, x) * sqrt_dt * normal(rng);
                    ++steps;
                    if (x <= grid.left) {
                        acc += gamma * g_left;
                        break;
                    }
                    if (x >= grid.right) {
                        acc += gamma * g_right;
                        break;
                    }
                    if (steps >= options.max_steps_per_path) {
                        std::lock_guard lock(error_mutex);
                        std::ostringstream msg;
                        msg << "simulate_exit_value: path " << first + path << " did not exit within "
                            << options.max_steps_per_path << " steps; check that sigma is not near zero";
                        error = msg.str();
                        failed = true;
                        return;
                    }
                }
                r.add(acc);
                r.exit_time += static_cast<double>(steps) * dt;
            }
            results[b] = r;
        }
    };

    unsigned n_threads = options.threads ? options.threads : std::thread::hardware_concurrency();
    n_threads = std::max(1u, std::min<unsigned>(n_threads, static_cast<unsigned>(n_batches)));
    if (n_threads == 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (unsigned t = 0; t < n_threads; ++t) pool.emplace_back(worker);
        for (auto& t : pool) t.join();
    }
    if (failed) throw NumericalError(error);

    BatchResult total;
    for (const auto& r : results) total.merge(r);
    const double n = static_cast<double>(total.paths);
    McEstimate est;
    est.x0 = x0;
    est.tau = tau;
    est.mean = total.mean;
    const double var = total.paths > 1 ? total.m2 / (n - 1.0) : 0.0;
    est.std_error = std::sqrt(var / n);
    est.n_paths = total.paths;
    est.mean_exit_time = total.exit_time / n;
    est.dt_sim = dt;
    est.seed = options.seed;
    return est;
}

void write_mc_csv(const std::filesystem::path& path, std::span<const McEstimate> rows) {
    CsvTable table;
    table.header = {"x0", "tau", "mean", "stderr", "n_paths", "mean_exit_time", "seed"};
    for (const auto& r : rows)
        table.rows.push_back({r.x0, r.tau, r.mean, r.std_error, static_cast<double>(r.n_paths),
                              r.mean_exit_time, static_cast<double>(r.seed)});
    write_csv_atomic(path, table);
}

} // namespace pmd
