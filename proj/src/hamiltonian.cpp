#include "pmd/hamiltonian.hpp"

#include "pmd/csv.hpp"
#include "pmd/error.hpp"

#include <boost/math/quadrature/gauss_kronrod.hpp>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <sstream>

namespace pmd {

namespace {

constexpr double kClosedFormTau = 1e-3;
constexpr double kSandwichSlack = 1e-10;

void require_positive_tau(double tau, const char* where) {
    if (!(tau > 0.0) || !std::isfinite(tau)) {
        std::ostringstream msg;
        msg << where << ": tau must be positive and finite, got " << tau;
        throw ValidationError(msg.str());
    }
}

std::vector<double> nodal_integrand(const ControlProblem& problem, double x, double u, double p) {
    const auto& acts = problem.actions().actions;
    std::vector<double> z(acts.size());
    for (std::size_t k = 0; k < acts.size(); ++k)
        z[k] = hamiltonian_integrand(problem, x, u, p, acts[k]);
    return z;
}

HardMin discrete_min(std::span<const double> z, std::span<const double> actions) {
    HardMin best{std::numeric_limits<double>::infinity(), 0.0};
    for (std::size_t k = 0; k < z.size(); ++k) {
        if (z[k] < best.value || (z[k] == best.value && actions[k] < best.argmin_action)) {
            best.value = z[k];
            best.argmin_action = actions[k];
        }
    }
    return best;
}

double adaptive_interval_softmin(const ControlProblem& problem, double x, double u, double p,
                                 double tau) {
    const double alpha = problem.actions().alpha;
    const double beta = problem.actions().beta;
    const HardMin best = hard_hamiltonian(problem, x, u, p);
    auto integrand = [&](double a) {
        return std::exp(-(hamiltonian_integrand(problem, x, u, p, a) - best.value) / tau);
    };
    using boost::math::quadrature::gauss_kronrod;
    double total = 0.0;
    const double split = best.argmin_action;
    if (split > alpha) total += gauss_kronrod<double, 61>::integrate(integrand, alpha, split, 20, 1e-14);
    if (split < beta) total += gauss_kronrod<double, 61>::integrate(integrand, split, beta, 20, 1e-14);
    if (!(total > 0.0) || !std::isfinite(total))
        throw NumericalError("soft_hamiltonian: action integral underflowed");
    return best.value - tau * std::log(total / (beta - alpha));
}

} // namespace

double softmin(std::span<const double> z, std::span<const double> w, double tau) {
    require_positive_tau(tau, "softmin");
    if (z.size() != w.size() || z.empty()) throw ValidationError("softmin: size mismatch");
    double m = std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < z.size(); ++k)
        if (w[k] > 0.0) m = std::min(m, z[k]);
    double acc = 0.0;
    for (std::size_t k = 0; k < z.size(); ++k)
        if (w[k] > 0.0) acc += w[k] * std::exp(-(z[k] - m) / tau);
    return m - tau * std::log(acc);
}

double hamiltonian_integrand(const ControlProblem& problem, double x, double u, double p, double a) {
    return problem.b(x, a) * p - problem.c(x, a) * u + problem.f(x, a);
}

double soft_hamiltonian_nodes(const ControlProblem& problem, double x, double u, double p,
                              double tau) {
    require_positive_tau(tau, "soft_hamiltonian");
    const std::vector<double> z = nodal_integrand(problem, x, u, p);
    return softmin(z, problem.actions().mu_weights, tau);
}

double soft_hamiltonian(const ControlProblem& problem, double x, double u, double p, double tau) {
    require_positive_tau(tau, "soft_hamiltonian");
    if (problem.actions().kind == ActionKind::Discrete)
        return soft_hamiltonian_nodes(problem, x, u, p, tau);
    if (problem.lq() && tau < kClosedFormTau) {
        const LqReduction r = lq_reduction(problem, x, u, p, tau);
        return r.constant + r.scale * interval_quadratic_softmin(r.shift, r.scaled_tau,
                                                                 problem.actions().alpha,
                                                                 problem.actions().beta);
    }
    return adaptive_interval_softmin(problem, x, u, p, tau);
}

HardMin clamp_quadratic(double lin, double quad, double alpha, double beta) {
    const double a = std::clamp(-lin / (2.0 * quad), alpha, beta);
    return {lin * a + quad * a * a, a};
}

HardMin golden_section(const std::function<double(double)>& fn, double lo, double hi, double tol) {
    const double inv_phi = (std::sqrt(5.0) - 1.0) / 2.0;
    double a = lo, b = hi;
    double c = b - inv_phi * (b - a);
    double d = a + inv_phi * (b - a);
    double fc = fn(c), fd = fn(d);
    while (b - a > tol) {
        if (fc <= fd) {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = fn(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = fn(d);
        }
    }
    HardMin best{fc, c};
    if (fd < best.value) best = {fd, d};
    for (double edge : {lo, hi}) {
        const double fe = fn(edge);
        if (fe < best.value) best = {fe, edge};
    }
    return best;
}

HardMin hard_hamiltonian(const ControlProblem& problem, double x, double u, double p) {
    const ActionSpace& space = problem.actions();
    if (space.kind == ActionKind::Discrete) {
        const std::vector<double> z = nodal_integrand(problem, x, u, p);
        return discrete_min(z, space.actions);
    }
    if (const auto& lq = problem.lq()) {
        const double constant = lq->b_bar(x) * p - lq->c_bar(x) * u + lq->f_bar(x);
        const double lin = lq->b_hat(x) * p - lq->c_hat(x) * u + lq->f_tilde(x);
        HardMin m = clamp_quadratic(lin, lq->f_hat(x), space.alpha, space.beta);
        m.value += constant;
        return m;
    }
    const std::vector<double> z = nodal_integrand(problem, x, u, p);
    std::size_t k = 0;
    for (std::size_t j = 1; j < z.size(); ++j)
        if (z[j] < z[k]) k = j;
    const double lo = k == 0 ? space.alpha : space.actions[k - 1];
    const double hi = k + 1 == z.size() ? space.beta : space.actions[k + 1];
    return golden_section([&](double a) { return hamiltonian_integrand(problem, x, u, p, a); },
                          lo, hi);
}

double erfcx(double x) {
    if (x < 0.0) throw ValidationError("erfcx: defined here for x >= 0 only");
    if (x < 25.0) return std::exp(x * x) * std::erfc(x);
    // Asymptotic series; terms shrink until far past double precision at x >= 25.
    const double inv2x2 = 1.0 / (2.0 * x * x);
    double term = 1.0, sum = 1.0;
    for (int k = 1; k < 12; ++k) {
        term *= -(2.0 * k - 1.0) * inv2x2;
        sum += term;
    }
    return sum / (x * std::sqrt(std::numbers::pi));
}

double interval_quadratic_min(double p, double alpha, double beta) {
    return clamp_quadratic(p, 0.5, alpha, beta).value;
}

double interval_quadratic_softmin(double p, double tau, double alpha, double beta) {
    require_positive_tau(tau, "interval_quadratic_softmin");
    if (!(alpha < beta)) throw ValidationError("interval_quadratic_softmin: need alpha < beta");
    const double root = std::sqrt(2.0 * tau);
    const double l = (alpha + p) / root;
    const double r = (beta + p) / root;
    const double log_scale = -std::log(beta - alpha) + 0.5 * std::log(2.0 * tau);
    // The exponent p^2/(2 tau) is folded into the vertex value of the
    // quadratic so that no large terms cancel.
    if (l >= 0.0) {
        const double tail = erfcx(l) - erfcx(r) * std::exp(-(beta - alpha) * (alpha + beta + 2.0 * p) / (2.0 * tau));
        const double log_int = std::log(0.5 * std::sqrt(std::numbers::pi)) + std::log(tail);
        return (alpha * p + 0.5 * alpha * alpha) - tau * (log_scale + log_int);
    }
    if (r <= 0.0) {
        const double tail = erfcx(-r) - erfcx(-l) * std::exp((beta - alpha) * (alpha + beta + 2.0 * p) / (2.0 * tau));
        const double log_int = std::log(0.5 * std::sqrt(std::numbers::pi)) + std::log(tail);
        return (beta * p + 0.5 * beta * beta) - tau * (log_scale + log_int);
    }
    const double log_int = std::log(0.5 * std::sqrt(std::numbers::pi) * (std::erf(r) + std::erf(-l)));
    return -0.5 * p * p - tau * (log_scale + log_int);
}

LqReduction lq_reduction(const ControlProblem& problem, double x, double u, double p, double tau) {
    const auto& lq = problem.lq();
    if (!lq) throw ValidationError("lq_reduction: problem carries no LQ coefficients");
    require_positive_tau(tau, "lq_reduction");
    LqReduction r;
    r.constant = lq->b_bar(x) * p - lq->c_bar(x) * u + lq->f_bar(x);
    r.scale = 2.0 * lq->f_hat(x);
    r.shift = (lq->b_hat(x) * p - lq->c_hat(x) * u + lq->f_tilde(x)) / r.scale;
    r.scaled_tau = tau / r.scale;
    return r;
}

double discrete_bias_gap(const ControlProblem& problem, std::span<const HamiltonianSample> samples,
                         double tau) {
    if (problem.actions().kind != ActionKind::Discrete)
        throw ValidationError("discrete_bias_gap: requires a discrete action space");
    require_positive_tau(tau, "discrete_bias_gap");
    const double bound = tau * std::log(static_cast<double>(problem.n_actions()));
    double worst = -std::numeric_limits<double>::infinity();
    for (const auto& s : samples) {
        const double gap = soft_hamiltonian(problem, s.x, s.u, s.p, tau) -
                           hard_hamiltonian(problem, s.x, s.u, s.p).value;
        if (gap < -kSandwichSlack || gap > bound + kSandwichSlack) {
            std::ostringstream msg;
            msg << "discrete_bias_gap: gap " << gap << " outside [0, tau ln N = " << bound
                << "] at x=" << s.x;
            throw NumericalError(msg.str());
        }
        worst = std::max(worst, gap);
    }
    return worst;
}

std::vector<BiasSweepRow> interval_bias_sweep(std::span<const double> taus,
                                              std::span<const double> ps, double alpha,
                                              double beta) {
    std::vector<BiasSweepRow> rows;
    rows.reserve(taus.size() * ps.size());
    for (double tau : taus) {
        for (double p : ps) {
            BiasSweepRow row{};
            row.tau = tau;
            row.p = p;
            row.soft = interval_quadratic_softmin(p, tau, alpha, beta);
            row.hard = interval_quadratic_min(p, alpha, beta);
            row.gap = row.soft - row.hard;
            const double denom = tau * std::log(1.0 / tau);
            row.gap_over_tau_log = denom != 0.0 ? row.gap / denom
                                                : std::numeric_limits<double>::quiet_NaN();
            rows.push_back(row);
        }
    }
    return rows;
}

void write_bias_sweep_csv(const std::filesystem::path& path, std::span<const BiasSweepRow> rows) {
    CsvTable table;
    table.header = {"tau", "p", "soft", "hard", "gap", "gap_over_tau_log"};
    for (const auto& r : rows) table.rows.push_back({r.tau, r.p, r.soft, r.hard, r.gap, r.gap_over_tau_log});
    write_csv_atomic(path, table);
}

} // namespace pmd
