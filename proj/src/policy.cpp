#include "pmd/policy.hpp"

#include "pmd/csv.hpp"
#include "pmd/error.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

namespace pmd {

namespace {

constexpr double kDegenerateWeight = 1e-300;

void check_shape(const Matrix& m, const ActionSpace& actions, const char* what) {
    if (m.cols() != actions.size()) {
        std::ostringstream msg;
        msg << what << ": " << m.cols() << " columns but " << actions.size() << " actions";
        throw ValidationError(msg.str());
    }
}

} // namespace

Policy gibbs_policy(const FeatureField& z, const ActionSpace& actions) {
    check_shape(z.values, actions, "gibbs_policy");
    const std::size_t n = z.values.rows();
    const std::size_t m = z.values.cols();
    Policy p{Matrix(n, m), Matrix(n, m)};
    for (std::size_t i = 0; i < n; ++i) {
        const auto row = z.values.row(i);
        double top = -std::numeric_limits<double>::infinity();
        for (double v : row) {
            if (!std::isfinite(v)) {
                std::ostringstream msg;
                msg << "gibbs_policy: non-finite feature at node " << i;
                throw ValidationError(msg.str());
            }
            top = std::max(top, v);
        }
        double norm = 0.0;
        for (std::size_t k = 0; k < m; ++k) {
            const double e = actions.mu_weights[k] * std::exp(row[k] - top);
            p.weights(i, k) = e;
            norm += e;
        }
        const double log_norm = top + std::log(norm);
        for (std::size_t k = 0; k < m; ++k) {
            p.weights(i, k) /= norm;
            p.log_density(i, k) = row[k] - log_norm;
        }
    }
    return p;
}

Policy reference_policy(std::size_t n_nodes, const ActionSpace& actions) {
    return gibbs_policy(FeatureField(n_nodes, actions.size(), 0.0), actions);
}

Policy one_hot_policy(const std::vector<std::size_t>& selected, const ActionSpace& actions) {
    const std::size_t n = selected.size();
    const std::size_t m = actions.size();
    Policy p{Matrix(n, m, 0.0), Matrix(n, m, -std::numeric_limits<double>::infinity())};
    for (std::size_t i = 0; i < n; ++i) {
        const std::size_t k = selected[i];
        if (k >= m) throw ValidationError("one_hot_policy: action index out of range");
        p.weights(i, k) = 1.0;
        p.log_density(i, k) = -std::log(actions.mu_weights[k]);
    }
    return p;
}

std::vector<double> kl_to_reference(const Policy& p, const ActionSpace& actions) {
    check_shape(p.weights, actions, "kl_to_reference");
    std::vector<double> kl(p.n_nodes(), 0.0);
    for (std::size_t i = 0; i < p.n_nodes(); ++i) {
        double acc = 0.0;
        for (std::size_t k = 0; k < p.n_actions(); ++k) {
            const double w = p.weights(i, k);
            if (w > 0.0) acc += w * p.log_density(i, k);
        }
        kl[i] = acc;
    }
    return kl;
}

std::vector<double> kl_between(const Policy& p, const Policy& q, const ActionSpace& actions) {
    check_shape(p.weights, actions, "kl_between");
    if (!p.weights.same_shape(q.weights)) throw ValidationError("kl_between: shape mismatch");
    std::vector<double> kl(p.n_nodes(), 0.0);
    for (std::size_t i = 0; i < p.n_nodes(); ++i) {
        double acc = 0.0;
        for (std::size_t k = 0; k < p.n_actions(); ++k) {
            const double w = p.weights(i, k);
            if (!(w > 0.0)) continue;
            if (q.weights(i, k) < kDegenerateWeight) {
                acc = std::numeric_limits<double>::infinity();
                break;
            }
            acc += w * (p.log_density(i, k) - q.log_density(i, k));
        }
        kl[i] = acc;
    }
    return kl;
}

void write_matrix_csv(const std::filesystem::path& path, const Matrix& m,
                      const std::vector<double>& actions, const std::vector<double>& nodes) {
    if (actions.size() != m.cols() || nodes.size() != m.rows())
        throw ValidationError("write_matrix_csv: header sizes do not match the matrix");
    CsvTable table;
    table.header.push_back("x");
    for (std::size_t k = 0; k < actions.size(); ++k) table.header.push_back("a=" + format_real(actions[k]));
    for (std::size_t i = 0; i < m.rows(); ++i) {
        std::vector<double> row{nodes[i]};
        for (double v : m.row(i)) row.push_back(v);
        table.rows.push_back(std::move(row));
    }
    write_csv_atomic(path, table);
}

Matrix read_matrix_csv(const std::filesystem::path& path) {
    const CsvTable table = read_csv(path);
    if (table.header.empty() || table.rows.empty())
        throw ValidationError("read_matrix_csv: empty table in " + path.string());
    const std::size_t cols = table.header.size() - 1;
    Matrix m(table.rows.size(), cols);
    for (std::size_t i = 0; i < table.rows.size(); ++i) {
        if (table.rows[i].size() != cols + 1)
            throw ValidationError("read_matrix_csv: ragged row in " + path.string());
        for (std::size_t k = 0; k < cols; ++k) m(i, k) = table.rows[i][k + 1];
    }
    return m;
}

} // namespace pmd
