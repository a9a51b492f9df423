#include "pmd/linalg.hpp"

#include "pmd/error.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

namespace pmd {

double max_abs(std::span<const double> values) noexcept {
    double m = 0.0;
    for (double v : values) m = std::max(m, std::abs(v));
    return m;
}

double Matrix::max_abs() const noexcept { return pmd::max_abs(data_); }

std::vector<double> Tridiagonal::apply(std::span<const double> x) const {
    const std::size_t n = size();
    std::vector<double> y(n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        double acc = diag[i] * x[i];
        if (i > 0) acc += lower[i] * x[i - 1];
        if (i + 1 < n) acc += upper[i] * x[i + 1];
        y[i] = acc;
    }
    return y;
}

void solve_tridiagonal(const Tridiagonal& system, std::span<std::vector<double>* const> rhs) {
    const std::size_t n = system.size();
    if (n == 0) return;
    for (const auto* r : rhs) {
        if (r->size() != n) throw ValidationError("tridiagonal solve: right-hand side size mismatch");
    }

    // Forward sweep shared by all right-hand sides.
    std::vector<double> c_prime(n, 0.0);
    std::vector<double> pivots(n, 0.0);
    constexpr double kPivotFloor = 64 * std::numeric_limits<double>::epsilon();
    for (std::size_t i = 0; i < n; ++i) {
        const double lo = i > 0 ? system.lower[i] : 0.0;
        const double up = i + 1 < n ? system.upper[i] : 0.0;
        double pivot = system.diag[i] - (i > 0 ? lo * c_prime[i - 1] : 0.0);
        const double scale = std::abs(system.diag[i]) + std::abs(lo) + std::abs(up);
        if (!std::isfinite(pivot) || std::abs(pivot) <= kPivotFloor * scale) {
            std::ostringstream msg;
            msg << "tridiagonal system is singular at row " << i << " (pivot " << pivot << ")";
            throw SingularSystemError(msg.str(), std::numeric_limits<double>::quiet_NaN());
        }
        pivots[i] = pivot;
        c_prime[i] = up / pivot;
    }

    for (auto* r : rhs) {
        auto& d = *r;
        d[0] /= pivots[0];
        for (std::size_t i = 1; i < n; ++i) d[i] = (d[i] - system.lower[i] * d[i - 1]) / pivots[i];
        for (std::size_t i = n - 1; i-- > 0;) d[i] -= c_prime[i] * d[i + 1];
    }
}

std::vector<double> solve_tridiagonal(const Tridiagonal& system, std::vector<double> rhs) {
    std::vector<double>* one[] = {&rhs};
    solve_tridiagonal(system, one);
    return rhs;
}

} // namespace pmd
