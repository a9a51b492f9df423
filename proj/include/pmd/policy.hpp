#pragma once

#include "pmd/domain.hpp"
#include "pmd/linalg.hpp"

#include <filesystem>
#include <vector>

namespace pmd {

/// Mirror-descent state Z(x, a): rows are interior nodes, columns action nodes.
struct FeatureField {
    Matrix values;

    FeatureField() = default;
    explicit FeatureField(Matrix m) : values(std::move(m)) {}
    FeatureField(std::size_t rows, std::size_t cols, double fill = 0.0) : values(rows, cols, fill) {}
};

/// Stochastic policy on action nodes. `weights` already include the reference
/// quadrature weights, so each row sums to one. `log_density` is ln(dpi/dmu);
/// entries with zero weight hold -infinity.
struct Policy {
    Matrix weights;
    Matrix log_density;

    std::size_t n_nodes() const noexcept { return weights.rows(); }
    std::size_t n_actions() const noexcept { return weights.cols(); }
};

/// Gibbs image of Z: pi(da|x) proportional to exp(Z(x,a)) mu(da).
Policy gibbs_policy(const FeatureField& z, const ActionSpace& actions);

/// The reference measure itself, i.e. gibbs_policy of the zero feature.
Policy reference_policy(std::size_t n_nodes, const ActionSpace& actions);

/// Deterministic policy placing unit mass on one action node per row.
Policy one_hot_policy(const std::vector<std::size_t>& selected, const ActionSpace& actions);

/// KL(pi(.|x_i) | mu) for every interior node.
std::vector<double> kl_to_reference(const Policy& p, const ActionSpace& actions);

/// KL(p(.|x_i) | q(.|x_i)). An entry is +infinity when p charges an action
/// where q's weight is below 1e-300.
std::vector<double> kl_between(const Policy& p, const Policy& q, const ActionSpace& actions);

void write_matrix_csv(const std::filesystem::path& path, const Matrix& m,
                      const std::vector<double>& actions, const std::vector<double>& nodes);
Matrix read_matrix_csv(const std::filesystem::path& path);

} // namespace pmd
