#include "pmd/error.hpp"
#include "pmd/policy.hpp"

#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <random>

using namespace pmd;

namespace {

FeatureField row_feature(std::initializer_list<double> row) {
    FeatureField z(1, row.size());
    std::size_t k = 0;
    for (double v : row) z.values(0, k++) = v;
    return z;
}

FeatureField random_feature(std::mt19937_64& rng, std::size_t rows, std::size_t cols, double scale) {
    std::uniform_real_distribution<double> u(-scale, scale);
    FeatureField z(rows, cols);
    for (double& v : z.values.data()) v = u(rng);
    return z;
}

} // namespace

TEST_CASE("constant feature gives the reference measure") {
    const ActionSpace a = make_discrete_actions({1, 2, 3, 4});
    const Policy p = gibbs_policy(row_feature({2.0, 2.0, 2.0, 2.0}), a);
    for (std::size_t k = 0; k < 4; ++k) CHECK(p.weights(0, k) == doctest::Approx(0.25).epsilon(1e-15));
}

TEST_CASE("two-action Gibbs weights") {
    const ActionSpace a = make_discrete_actions({0, 1});
    const Policy p = gibbs_policy(row_feature({0.0, std::log(3.0)}), a);
    CHECK(p.weights(0, 0) == doctest::Approx(0.25).epsilon(1e-14));
    CHECK(p.weights(0, 1) == doctest::Approx(0.75).epsilon(1e-14));
    const Policy shifted = gibbs_policy(row_feature({10.0, 10.0 + std::log(3.0)}), a);
    CHECK(std::abs(shifted.weights(0, 0) - p.weights(0, 0)) <= 1e-12);
}

TEST_CASE("Gibbs policy survives huge features") {
    const ActionSpace a = make_discrete_actions({0, 1, 2});
    const Policy p = gibbs_policy(row_feature({1e6, 1e6 - 1.0, -1e6}), a);
    CHECK(std::isfinite(p.log_density(0, 2)));
    CHECK(p.weights(0, 0) == doctest::Approx(1.0 / (1.0 + std::exp(-1.0))).epsilon(1e-12));
    CHECK_THROWS_AS(gibbs_policy(row_feature({0.0, std::nan("")}), make_discrete_actions({0, 1})), ValidationError);
}

TEST_CASE("KL to the reference") {
    const ActionSpace a2 = make_discrete_actions({0, 1});
    CHECK(kl_to_reference(reference_policy(3, a2), a2)[1] == doctest::Approx(0.0));
    // weights (0.8, 0.2) vs (0.5, 0.5)
    const Policy p = gibbs_policy(row_feature({std::log(0.8), std::log(0.2)}), a2);
    const double oracle = 0.8 * std::log(1.6) + 0.2 * std::log(0.4);
    CHECK(kl_to_reference(p, a2)[0] == doctest::Approx(oracle).epsilon(1e-13));
    CHECK(oracle == doctest::Approx(0.1927448).epsilon(1e-6));
    // Near point mass tends to ln 2.
    const Policy sharp = gibbs_policy(row_feature({0.0, -60.0}), a2);
    CHECK(kl_to_reference(sharp, a2)[0] == doctest::Approx(std::log(2.0)).epsilon(1e-12));
}

TEST_CASE("KL between policies") {
    const ActionSpace a2 = make_discrete_actions({0, 1});
    const Policy p = gibbs_policy(row_feature({std::log(0.25), std::log(0.75)}), a2);
    const Policy q = reference_policy(1, a2);
    CHECK(kl_between(p, p, a2)[0] == doctest::Approx(0.0));
    const double pq = 0.25 * std::log(0.5) + 0.75 * std::log(1.5);
    const double qp = 0.5 * std::log(2.0) + 0.5 * std::log(2.0 / 3.0);
    CHECK(kl_between(p, q, a2)[0] == doctest::Approx(pq).epsilon(1e-13));
    CHECK(kl_between(q, p, a2)[0] == doctest::Approx(qp).epsilon(1e-13));
    CHECK(pq == doctest::Approx(0.1308120).epsilon(1e-6));
    CHECK(qp == doctest::Approx(0.1438410).epsilon(1e-6));
}

TEST_CASE("KL against a degenerate policy is infinite") {
    const ActionSpace a2 = make_discrete_actions({0, 1});
    const Policy hot = one_hot_policy({0}, a2);
    const Policy q = reference_policy(1, a2);
    CHECK(std::isinf(kl_between(q, hot, a2)[0]));
    CHECK(kl_between(hot, q, a2)[0] == doctest::Approx(std::log(2.0)));
}

TEST_CASE("random Gibbs policies: stochastic rows, shift invariance, KL sign") {
    std::mt19937_64 rng(11);
    for (const ActionSpace& a : {make_discrete_actions({-1, -0.5, 0, 0.5, 1}), make_interval_actions(-1, 1, 16)}) {
        for (int trial = 0; trial < 20; ++trial) {
            const FeatureField z = random_feature(rng, 7, a.size(), 20.0);
            const Policy p = gibbs_policy(z, a);
            FeatureField shifted = z;
            const double c = std::uniform_real_distribution<double>(-100, 100)(rng);
            for (double& v : shifted.values.data()) v += c;
            const Policy ps = gibbs_policy(shifted, a);
            const Policy q = gibbs_policy(random_feature(rng, 7, a.size(), 5.0), a);
            const auto kl_ref = kl_to_reference(p, a);
            const auto kl_pq = kl_between(p, q, a);
            const auto kl_mu = kl_between(p, reference_policy(7, a), a);
            for (std::size_t i = 0; i < 7; ++i) {
                double row = 0.0, dens = 0.0;
                for (std::size_t k = 0; k < a.size(); ++k) {
                    row += p.weights(i, k);
                    dens += a.mu_weights[k] * std::exp(p.log_density(i, k));
                    CHECK(p.weights(i, k) >= 0.0);
                    CHECK(std::abs(p.weights(i, k) - ps.weights(i, k)) <= 1e-12);
                }
                CHECK(std::abs(row - 1.0) <= 1e-10);
                CHECK(std::abs(dens - 1.0) <= 1e-8);
                CHECK(kl_ref[i] >= -1e-12);
                CHECK(kl_pq[i] >= -1e-12);
                CHECK(std::abs(kl_mu[i] - kl_ref[i]) <= 1e-12);
            }
        }
    }
}

TEST_CASE("matrix CSV round trip") {
    const ActionSpace a = make_discrete_actions({-1, 0, 1});
    std::mt19937_64 rng(5);
    const FeatureField z = random_feature(rng, 4, 3, 3.0);
    const auto path = std::filesystem::temp_directory_path() / "pmd_policy_roundtrip.csv";
    write_matrix_csv(path, z.values, a.actions, {0.2, 0.4, 0.6, 0.8});
    const Matrix back = read_matrix_csv(path);
    REQUIRE(back.same_shape(z.values));
    for (std::size_t j = 0; j < back.data().size(); ++j) CHECK(back.data()[j] == z.values.data()[j]);
    std::filesystem::remove(path);
}
