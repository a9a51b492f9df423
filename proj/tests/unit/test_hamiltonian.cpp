#include "pmd/error.hpp"
#include "pmd/hamiltonian.hpp"

#include "support/benchmarks.hpp"

#include <doctest.h>

#include <cmath>
#include <random>
#include <vector>

using namespace pmd;

namespace {

// -tau ln( (1/(beta-alpha)) int exp(-(p a + a^2/2)/tau) da ) by composite Simpson in long double.
double simpson_softmin(double p, double tau, double alpha, double beta, int panels = 200000) {
    auto q = [&](long double a) { return static_cast<long double>(p) * a + a * a / 2.0L; };
    const long double vertex = std::clamp(-static_cast<long double>(p), (long double)alpha, (long double)beta);
    const long double m = q(vertex);
    const long double h = (static_cast<long double>(beta) - alpha) / panels;
    long double sum = 0.0L;
    for (int j = 0; j <= panels; ++j) {
        const long double a = alpha + j * h;
        const long double w = (j == 0 || j == panels) ? 1.0L : (j % 2 ? 4.0L : 2.0L);
        sum += w * std::exp(-(q(a) - m) / tau);
    }
    const long double integral = sum * h / 3.0L / (static_cast<long double>(beta) - alpha);
    return static_cast<double>(m - tau * std::log(integral));
}

ControlProblem quadratic_problem(ActionSpace actions) {
    // z(a) = p a + a^2 / 2 when u is ignored: b = a, c = 0, f = a^2 / 2.
    auto k = [](double v) { return ScalarFn([v](double) { return v; }); };
    LqProblemSpec spec;
    spec.coefficients = {k(0), k(1), k(0), k(0), k(0), k(0), k(0.5)};
    spec.alpha = actions.min_action();
    spec.beta = actions.max_action();
    return make_lq_problem(spec, build_grid(0, 1, 3), std::move(actions), k(1), k(0));
}

ControlProblem random_discrete_problem(std::mt19937_64& rng, std::size_t n) {
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    std::vector<double> acts(n);
    for (std::size_t k = 0; k < n; ++k) acts[k] = -1.0 + 2.0 * k / std::max<std::size_t>(n - 1, 1);
    const double s1 = u(rng), s2 = u(rng), s3 = u(rng);
    return ControlProblem(
        build_grid(0, 1, 3), make_discrete_actions(acts), [s1](double x, double a) { return s1 * a + x; },
        [s2](double x, double a) { return std::abs(s2) * a * a + 0.1 * x; },
        [s3](double x, double a) { return std::sin(3 * a + s3) + x * a; }, [](double) { return 1.0; },
        [](double) { return 0.0; });
}

} // namespace

TEST_CASE("softmin of two values") {
    const std::vector<double> w{0.5, 0.5};
    CHECK(softmin(std::vector<double>{0.0, 0.0}, w, 1.0) == doctest::Approx(0.0));
    const double oracle = -std::log(0.5 * (1.0 + std::exp(-1.0)));
    CHECK(softmin(std::vector<double>{0.0, 1.0}, w, 1.0) == doctest::Approx(oracle).epsilon(1e-14));
    CHECK(oracle == doctest::Approx(0.3798854).epsilon(1e-6));
    const double small = softmin(std::vector<double>{0.0, 1.0}, w, 0.01);
    CHECK(small >= 0.0);
    CHECK(small <= 0.01 * std::log(2.0));
    CHECK_THROWS_AS(softmin(std::vector<double>{0.0, 1.0}, w, 0.0), ValidationError);
}

TEST_CASE("hard Hamiltonian on the interval quadratic") {
    const auto problem = quadratic_problem(make_interval_actions(-1, 1, 32));
    const auto generic = problem.without_lq();
    struct Case { double p, value, argmin; };
    for (const Case c : {Case{0.0, 0.0, 0.0}, Case{2.0, -1.5, -1.0}, Case{0.5, -0.125, -0.5}}) {
        const HardMin exact = hard_hamiltonian(problem, 0.5, 0.0, c.p);
        CHECK(exact.value == doctest::Approx(c.value).epsilon(1e-14));
        CHECK(exact.argmin_action == doctest::Approx(c.argmin).epsilon(1e-14));
        const HardMin scanned = hard_hamiltonian(generic, 0.5, 0.0, c.p);
        CHECK(std::abs(scanned.value - c.value) <= 1e-12);
        CHECK(std::abs(scanned.argmin_action - c.argmin) <= 1e-6);
    }
}

TEST_CASE("hard Hamiltonian ties go to the smallest action") {
    const ControlProblem problem(build_grid(0, 1, 1), make_discrete_actions({-1.0, 0.0, 1.0}),
                                 [](double, double) { return 0.0; }, [](double, double) { return 0.0; },
                                 [](double, double a) { return a * a; }, [](double) { return 1.0; },
                                 [](double) { return 0.0; });
    const HardMin m = hard_hamiltonian(problem, 0.5, 0.0, 0.0);
    CHECK(m.value == 0.0);
    CHECK(m.argmin_action == 0.0);
    const ControlProblem flat(build_grid(0, 1, 1), make_discrete_actions({-1.0, 0.0, 1.0}),
                              [](double, double) { return 0.0; }, [](double, double) { return 0.0; },
                              [](double, double) { return 3.0; }, [](double) { return 1.0; },
                              [](double) { return 0.0; });
    CHECK(hard_hamiltonian(flat, 0.5, 0.0, 0.0).argmin_action == -1.0);
}

TEST_CASE("interval quadratic softmin against a Simpson oracle") {
    const double v = interval_quadratic_softmin(0.0, 0.5, -1.0, 1.0);
    CHECK(v == doctest::Approx(simpson_softmin(0.0, 0.5, -1, 1)).epsilon(1e-12));
    CHECK(v == doctest::Approx(0.1459627764381431).epsilon(1e-12));
    // Large tau: first-order expansion gives the mean of a^2/2, 1/6.
    const double big = interval_quadratic_softmin(0.0, 1000.0, -1.0, 1.0);
    CHECK(big == doctest::Approx(simpson_softmin(0.0, 1000.0, -1, 1)).epsilon(1e-12));
    CHECK(std::abs(big - 1.0 / 6.0) <= 2e-4);
    CHECK(interval_quadratic_softmin(0.0, 1e7, -1.0, 1.0) == doctest::Approx(1.0 / 6.0).epsilon(1e-6));

    for (double tau : {1e-1, 1e-2, 1e-3}) {
        for (double p : {-3.0, -1.5, -1.0, -0.3, 0.0, 0.7, 1.0, 2.2, 3.0}) {
            const double oracle = simpson_softmin(p, tau, -1.0, 1.0);
            CHECK(std::abs(interval_quadratic_softmin(p, tau, -1.0, 1.0) - oracle) <= 1e-11);
        }
    }
    CHECK_THROWS_AS(interval_quadratic_softmin(0.0, 0.0, -1, 1), ValidationError);
    CHECK_THROWS_AS(interval_quadratic_softmin(0.0, 0.1, 1, 1), ValidationError);
}

TEST_CASE("interval quadratic softmin stays finite deep in the tails") {
    for (double tau : {1e-4, 1e-6, 1e-8, 1e-12}) {
        for (double p : {-50.0, -3.0, -1.0, 0.0, 1.0, 3.0, 50.0}) {
            const double soft = interval_quadratic_softmin(p, tau, -1.0, 1.0);
            const double hard = interval_quadratic_min(p, -1.0, 1.0);
            CHECK(std::isfinite(soft));
            CHECK(soft >= hard - 1e-12);
            CHECK(soft - hard <= tau * (std::log(1.0 / tau) + std::log(4.0 * (std::abs(p) + 1.0)) + 1.0));
        }
    }
}

TEST_CASE("Laplace rate of the interval softmin") {
    std::vector<double> ratios;
    for (double tau : {1e-1, 1e-2, 1e-3, 1e-4}) {
        double sup = 0.0;
        for (int j = 0; j <= 600; ++j) {
            const double p = -3.0 + 0.01 * j;
            sup = std::max(sup, interval_quadratic_softmin(p, tau, -1, 1) - interval_quadratic_min(p, -1, 1));
        }
        ratios.push_back(sup / (tau * std::log(1.0 / tau)));
        CHECK(interval_quadratic_softmin(0.0, tau, -1, 1) <= tau * std::log(1.0 / tau));
    }
    const auto [lo, hi] = std::minmax_element(ratios.begin(), ratios.end());
    CHECK(std::isfinite(*hi));
    CHECK(*hi / *lo < 3.0);
}

TEST_CASE("scaled complementary error function") {
    for (double x : {0.0, 0.1, 0.5, 1.0, 2.0, 5.0, 10.0, 20.0}) {
        const long double ref = std::exp(static_cast<long double>(x) * x) * std::erfc(static_cast<long double>(x));
        CHECK(erfcx(x) == doctest::Approx(static_cast<double>(ref)).epsilon(1e-12));
    }
    for (double x : {30.0, 100.0, 1e4}) {
        // erfcx(x) ~ 1/(x sqrt(pi)) (1 - 1/(2x^2) + 3/(4x^4))
        const double ref = 1.0 / (x * std::sqrt(M_PI)) * (1.0 - 0.5 / (x * x) + 0.75 / std::pow(x, 4));
        CHECK(erfcx(x) == doctest::Approx(ref).epsilon(1e-8));
    }
}

TEST_CASE("closed form agrees with the LQ soft Hamiltonian") {
    const auto problem = quadratic_problem(make_interval_actions(-1, 1, 32));
    for (double tau : {1e-1, 1e-2, 1e-3}) {
        for (double p : {-2.0, -0.4, 0.0, 0.9, 2.5}) {
            CHECK(std::abs(soft_hamiltonian(problem, 0.5, 0.0, p, tau) -
                           interval_quadratic_softmin(p, tau, -1, 1)) <= 1e-8);
        }
    }
}

TEST_CASE("LQ reduction to the interval quadratic") {
    auto k = [](double v) { return ScalarFn([v](double) { return v; }); };
    LqProblemSpec spec;
    spec.coefficients = {k(0.3), k(1.2), k(0.5), k(0.1), k(0.7), k(-0.4), k(2.0)};
    spec.alpha = -1.0;
    spec.beta = 2.0;
    const auto problem = make_lq_problem(spec, build_grid(0, 1, 3), make_interval_actions(-1, 2, 64), k(1), k(0));
    for (double tau : {0.5, 0.05, 0.005}) {
        const LqReduction r = lq_reduction(problem, 0.4, 0.8, -0.6, tau);
        const double reduced = r.constant + r.scale * interval_quadratic_softmin(r.shift, r.scaled_tau, -1, 2);
        CHECK(soft_hamiltonian(problem, 0.4, 0.8, -0.6, tau) == doctest::Approx(reduced).epsilon(1e-9));
        CHECK(r.scale == doctest::Approx(4.0));
    }
}

TEST_CASE("node quadrature against the closed form") {
    const auto coarse = quadratic_problem(make_interval_actions(-1, 1, 32));
    const auto fine = quadratic_problem(make_interval_actions(-1, 1, 512));
    for (double p : {-2.0, -0.5, 0.0, 0.3, 1.7}) {
        for (double tau : {1.0, 1e-1, 1e-2})
            CHECK(std::abs(soft_hamiltonian_nodes(coarse, 0.5, 0, p, tau) -
                           interval_quadratic_softmin(p, tau, -1, 1)) <= 1e-8);
        for (double tau : {1e-3, 1e-4})
            CHECK(std::abs(soft_hamiltonian_nodes(fine, 0.5, 0, p, tau) -
                           interval_quadratic_softmin(p, tau, -1, 1)) <= 1e-8);
    }
}

TEST_CASE("soft Hamiltonian tends to the hard one") {
    const auto interval = quadratic_problem(make_interval_actions(-1, 1, 32));
    const auto discrete = testing::lq_benchmark(testing::five_actions(), 9);
    for (double p : {-2.0, -0.3, 0.0, 0.8}) {
        CHECK(std::abs(soft_hamiltonian(interval, 0.5, 0.0, p, 1e-6) - hard_hamiltonian(interval, 0.5, 0.0, p).value) <= 1e-3);
        CHECK(std::abs(soft_hamiltonian(discrete, 0.5, 0.2, p, 1e-6) - hard_hamiltonian(discrete, 0.5, 0.2, p).value) <= 1e-3);
    }
}

TEST_CASE("soft Hamiltonian is nondecreasing in tau") {
    const auto interval = quadratic_problem(make_interval_actions(-1, 1, 32));
    const auto discrete = testing::lq_benchmark(testing::five_actions(), 9);
    for (double p : {-1.0, 0.0, 0.6}) {
        double prev_i = -INFINITY, prev_d = -INFINITY;
        for (double tau : {1e-4, 1e-3, 1e-2, 0.1, 0.5, 1.0, 5.0}) {
            const double si = soft_hamiltonian(interval, 0.5, 0.0, p, tau);
            const double sd = soft_hamiltonian(discrete, 0.5, 0.0, p, tau);
            CHECK(si >= prev_i - 1e-12);
            CHECK(sd >= prev_d - 1e-12);
            prev_i = si;
            prev_d = sd;
        }
    }
}

TEST_CASE("discrete sandwich") {
    std::mt19937_64 rng(41);
    std::uniform_real_distribution<double> u(-2.0, 2.0);
    for (std::size_t n : {2u, 5u, 11u}) {
        for (int trial = 0; trial < 20; ++trial) {
            const auto problem = random_discrete_problem(rng, n);
            std::vector<HamiltonianSample> samples;
            for (int j = 0; j < 10; ++j) samples.push_back({std::abs(u(rng)) / 2.0, u(rng), u(rng)});
            const double tau = std::exp(std::uniform_real_distribution<double>(std::log(1e-4), std::log(2.0))(rng));
            const double gap = discrete_bias_gap(problem, samples, tau);
            CHECK(gap >= -1e-10);
            CHECK(gap <= tau * std::log(static_cast<double>(n)) + 1e-10);
        }
    }
}

TEST_CASE("discrete bias gap examples") {
    const ControlProblem flat(build_grid(0, 1, 1), make_discrete_actions({-1.0, 1.0}),
                              [](double, double) { return 0.0; }, [](double, double) { return 0.0; },
                              [](double, double) { return 1.0; }, [](double) { return 1.0; },
                              [](double) { return 0.0; });
    const std::vector<HamiltonianSample> at{{0.5, 0.0, 0.0}};
    CHECK(discrete_bias_gap(flat, at, 0.3) == doctest::Approx(0.0));

    const double tau = 0.01;
    const ControlProblem split(build_grid(0, 1, 1), make_discrete_actions({0.0, 1.0}),
                               [](double, double) { return 0.0; }, [](double, double) { return 0.0; },
                               [tau](double, double a) { return 100.0 * tau * a; }, [](double) { return 1.0; },
                               [](double) { return 0.0; });
    CHECK(discrete_bias_gap(split, at, tau) == doctest::Approx(tau * std::log(2.0)).epsilon(1e-6));

    const auto interval = quadratic_problem(make_interval_actions(-1, 1, 8));
    CHECK_THROWS_AS(discrete_bias_gap(interval, at, tau), ValidationError);

    std::mt19937_64 rng(43);
    std::uniform_real_distribution<double> u(-2.0, 2.0);
    const auto five = testing::lq_benchmark(testing::five_actions(), 9);
    std::vector<HamiltonianSample> samples;
    for (int j = 0; j < 100; ++j) samples.push_back({0.5 + 0.4 * u(rng) / 2.0, u(rng), u(rng)});
    CHECK(discrete_bias_gap(five, samples, 0.1) <= 0.1 * std::log(5.0));
}

TEST_CASE("bias sweep rows") {
    const std::vector<double> taus{0.1, 0.01};
    const std::vector<double> ps{-1.0, 0.0, 2.0};
    const auto rows = interval_bias_sweep(taus, ps, -1.0, 1.0);
    REQUIRE(rows.size() == 6);
    for (const auto& r : rows) {
        CHECK(r.gap == doctest::Approx(r.soft - r.hard));
        CHECK(r.gap >= 0.0);
        CHECK(r.gap_over_tau_log == doctest::Approx(r.gap / (r.tau * std::log(1.0 / r.tau))));
    }
}
