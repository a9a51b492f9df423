#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace pmd {

/// Dense row-major matrix. Rows index interior grid nodes, columns action nodes.
class Matrix {
public:
    Matrix() = default;
    Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
        : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

    std::size_t rows() const noexcept { return rows_; }
    std::size_t cols() const noexcept { return cols_; }

    double& operator()(std::size_t i, std::size_t k) noexcept { return data_[i * cols_ + k]; }
    double operator()(std::size_t i, std::size_t k) const noexcept { return data_[i * cols_ + k]; }

    std::span<double> row(std::size_t i) noexcept { return {data_.data() + i * cols_, cols_}; }
    std::span<const double> row(std::size_t i) const noexcept {
        return {data_.data() + i * cols_, cols_};
    }

    std::span<double> data() noexcept { return data_; }
    std::span<const double> data() const noexcept { return data_; }

    bool same_shape(const Matrix& other) const noexcept {
        return rows_ == other.rows_ && cols_ == other.cols_;
    }

    double max_abs() const noexcept;

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> data_;
};

/// Tridiagonal system lower[i]*x[i-1] + diag[i]*x[i] + upper[i]*x[i+1] = rhs[i].
/// lower[0] and upper[n-1] are ignored.
struct Tridiagonal {
    std::vector<double> lower;
    std::vector<double> diag;
    std::vector<double> upper;

    explicit Tridiagonal(std::size_t n = 0) : lower(n, 0.0), diag(n, 0.0), upper(n, 0.0) {}
    std::size_t size() const noexcept { return diag.size(); }

    /// y = A x
    std::vector<double> apply(std::span<const double> x) const;
};

/// Thomas elimination; solves every right-hand side in `rhs` in place.
/// Throws SingularSystemError on a pivot with |pivot| <= pivot_floor * |row scale|.
void solve_tridiagonal(const Tridiagonal& system, std::span<std::vector<double>* const> rhs);
std::vector<double> solve_tridiagonal(const Tridiagonal& system, std::vector<double> rhs);

double max_abs(std::span<const double> values) noexcept;

} // namespace pmd
