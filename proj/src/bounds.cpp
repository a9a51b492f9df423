#include "pmd/bounds.hpp"

#include "pmd/csv.hpp"
#include "pmd/error.hpp"

#include <boost/math/quadrature/gauss_kronrod.hpp>

#include <cmath>
#include <limits>
#include <sstream>

namespace pmd {

namespace {

constexpr double kQuadratureTol = 1e-10;

// ln(e^x - 1) for x > 0
double log_expm1(double x) {
    return x > 30.0 ? x + std::log1p(-std::exp(-x)) : std::log(std::expm1(x));
}

double log_add(double a, double b) {
    if (a == -std::numeric_limits<double>::infinity()) return b;
    if (b == -std::numeric_limits<double>::infinity()) return a;
    const double hi = std::max(a, b), lo = std::min(a, b);
    return hi + std::log1p(std::exp(lo - hi));
}

void require_positive(double v, const char* what) {
    if (!(v > 0.0) || !std::isfinite(v)) {
        std::ostringstream msg;
        msg << what << " must be positive and finite, got " << v;
        throw ValidationError(msg.str());
    }
}

} // namespace

GrowthIntegrals growth_integrals_quadrature(const Scheduler& sched, double s) {
    require_positive(s, "growth_integrals: s");
    using boost::math::quadrature::gauss_kronrod;
    double log_i1 = -std::numeric_limits<double>::infinity();
    double log_i2 = log_i1;
    double a = 0.0;
    while (a < s) {
        const double b = std::min(s, a + 1.0 / scheduler_value(sched, a));
        const double phi_b = scheduler_integral(sched, b);
        double err1 = 0.0, err2 = 0.0;
        auto w1 = [&](double r) { return std::exp(-scheduler_increment(sched, r, b)); };
        auto w2 = [&](double r) { return scheduler_value(sched, r) * w1(r); };
        const double p1 = gauss_kronrod<double, 31>::integrate(w1, a, b, 15, 1e-12, &err1);
        const double p2 = gauss_kronrod<double, 31>::integrate(w2, a, b, 15, 1e-12, &err2);
        if (!(p1 > 0.0) || err1 > kQuadratureTol * p1 || err2 > kQuadratureTol * p2) {
            std::ostringstream msg;
            msg << "growth_integrals: quadrature missed relative tolerance " << kQuadratureTol
                << " on panel [" << a << ", " << b << "]";
            throw NumericalError(msg.str());
        }
        log_i1 = log_add(log_i1, phi_b + std::log(p1));
        log_i2 = log_add(log_i2, phi_b + std::log(p2));
        a = b;
    }
    return {s, log_i1, log_i2};
}

GrowthIntegrals growth_integrals(const Scheduler& sched, double s) {
    require_positive(s, "growth_integrals: s");
    GrowthIntegrals out{s, 0.0, 0.0};
    // d/ds exp(Phi) = tau_s exp(Phi), so I2 = exp(Phi(s)) - 1 for every schedule.
    out.log_I2 = log_expm1(scheduler_integral(sched, s));
    switch (sched.kind) {
    case SchedulerKind::Constant:
    case SchedulerKind::HorizonConstant: {
        const double tau = scheduler_value(sched, 0.0);
        out.log_I1 = log_expm1(tau * s) - std::log(tau);
        return out;
    }
    case SchedulerKind::InverseLinear:
        out.log_I1 = std::log(s) + std::log1p(0.5 * s);
        return out;
    case SchedulerKind::InverseSqrt: {
        const double q = std::sqrt(1.0 + s);
        const double e = 2.0 * q - 2.0;
        out.log_I1 = e + std::log(2.0 * q - 1.0 - std::exp(-e)) - std::log(2.0);
        return out;
    }
    case SchedulerKind::PowerLaw:
        return growth_integrals_quadrature(sched, s);
    }
    throw ValidationError("growth_integrals: unknown scheduler");
}

double optimization_bound(const Scheduler& sched, double s, double tau_ref, double C, bool discrete) {
    require_positive(tau_ref, "optimization_bound: tau_ref");
    const GrowthIntegrals g = growth_integrals(sched, s);
    const double first = std::exp(-g.log_I1);
    const double mismatch = std::exp(g.log_I2 - g.log_I1) - tau_ref;
    if (discrete) return C * (first + mismatch);
    return (C / tau_ref) * ((1.0 + tau_ref) * first + mismatch);
}

double total_bound(const Scheduler& sched, double S, double C, double alpha) {
    if (!(S > 1.0)) throw ValidationError("total_bound: horizon must exceed 1");
    const double tau = scheduler_value(sched, S);
    const double bias = C * tau * std::pow(std::log(1.0 / tau), alpha);
    return optimization_bound(sched, S, tau, C, false) + bias;
}

std::vector<BoundCurve> reproduce_figure(std::span<const double> betas,
                                         std::span<const double> horizons, double C,
                                         double alpha) {
    if (betas.empty() || horizons.empty())
        throw ValidationError("reproduce_figure: beta and horizon grids must be nonempty");
    std::vector<BoundCurve> curves;
    for (double S : horizons) {
        BoundCurve curve;
        curve.horizon = S;
        curve.C = C;
        curve.alpha = alpha;
        for (double beta : betas) {
            if (!(beta > 0.0 && beta < 1.0))
                throw ValidationError("reproduce_figure: beta must lie in (0, 1)");
            curve.betas.push_back(beta);
            curve.values.push_back(total_bound(Scheduler::power_law(beta), S, C, alpha));
        }
        curves.push_back(std::move(curve));
    }
    return curves;
}

std::vector<double> default_figure_betas() {
    std::vector<double> out;
    for (int j = 1; j <= 19; ++j) out.push_back(0.05 * j);
    return out;
}

std::vector<double> default_figure_horizons() { return {10.0, 100.0, 1000.0, 10000.0}; }

void write_growth_csv(const std::filesystem::path& path, std::span<const GrowthIntegrals> rows) {
    CsvTable table;
    table.header = {"s", "log_I1", "log_I2"};
    for (const auto& r : rows) table.rows.push_back({r.s, r.log_I1, r.log_I2});
    write_csv_atomic(path, table);
}

void write_figure_csv(const std::filesystem::path& path, std::span<const BoundCurve> curves) {
    CsvTable table;
    table.header = {"beta", "S", "bound"};
    for (const auto& c : curves)
        for (std::size_t j = 0; j < c.betas.size(); ++j)
            table.rows.push_back({c.betas[j], c.horizon, c.values[j]});
    write_csv_atomic(path, table);
}

} // namespace pmd
