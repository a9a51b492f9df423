#include "pmd/elliptic.hpp"
#include "pmd/error.hpp"
#include "pmd/hjb.hpp"

#include "support/benchmarks.hpp"

#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>

using namespace pmd;

namespace {

Policy random_gibbs(std::mt19937_64& rng, const ControlProblem& problem, double scale) {
    std::uniform_real_distribution<double> u(-scale, scale);
    FeatureField z(problem.n_interior(), problem.n_actions());
    for (double& v : z.values.data()) v = u(rng);
    return gibbs_policy(z, problem.actions());
}

} // namespace

TEST_CASE("zero data has the zero fixed point") {
    const auto problem = testing::zero_problem(make_discrete_actions({-1, 0, 1}));
    for (double tau : {0.5, 0.01}) {
        const HjbSolution sol = solve_regularized_hjb(problem, tau);
        for (double v : sol.v_star.v) CHECK(std::abs(v) <= 1e-14);
        for (double w : sol.optimal_policy.weights.data()) CHECK(w == doctest::Approx(1.0 / 3.0));
    }
    const HjbSolution zero = solve_unregularized_hjb(problem);
    for (double v : zero.v_star.v) CHECK(std::abs(v) <= 1e-14);
}

TEST_CASE("single action reduces to the linear solve") {
    const auto problem = testing::lq_benchmark(make_discrete_actions({0.3}), 29);
    const ValueField linear = solve_on_policy_bellman(problem, reference_policy(29, problem.actions()), 0.0);
    const HjbSolution reg = solve_regularized_hjb(problem, 0.4);
    const HjbSolution unreg = solve_unregularized_hjb(problem);
    for (std::size_t i = 0; i < linear.v.size(); ++i) {
        CHECK(std::abs(reg.v_star.v[i] - linear.v[i]) <= 1e-12);
        CHECK(std::abs(unreg.v_star.v[i] - linear.v[i]) <= 1e-12);
    }
}

TEST_CASE("action-independent cost") {
    const auto f0 = [](double x) { return 1.0 + std::sin(3.0 * x); };
    const ControlProblem problem(build_grid(0, 1, 39), make_discrete_actions({-1, 0, 2}),
                                 [](double, double) { return 0.0; }, [](double, double) { return 0.0; },
                                 [f0](double x, double) { return f0(x); }, [](double) { return 1.0; },
                                 [](double) { return 0.0; });
    const ValueField linear = solve_on_policy_bellman(problem, reference_policy(39, problem.actions()), 0.0);
    const HjbSolution sol = solve_unregularized_hjb(problem);
    for (std::size_t i = 0; i < linear.v.size(); ++i) CHECK(std::abs(sol.v_star.v[i] - linear.v[i]) <= 1e-12);
}

TEST_CASE("discrete benchmark: action 0 is optimal everywhere") {
    // With b = a, f = 1 + a^2 and v symmetric, v*_0 = x(1-x)/2 once a = 0 wins.
    const auto problem = testing::lq_benchmark(testing::five_actions(), 49);
    const HjbSolution sol = solve_unregularized_hjb(problem);
    CHECK(sol.v_star.at(problem.grid(), 0.5) == doctest::Approx(0.125).epsilon(1e-12));
    CHECK(sol.final_residual <= default_hjb_tolerance(problem));
    for (std::size_t i = 0; i < problem.n_interior(); ++i) {
        double row = 0.0;
        for (std::size_t k = 0; k < problem.n_actions(); ++k) {
            const double w = sol.optimal_policy.weights(i, k);
            CHECK((w == 0.0 || w == 1.0));
            row += w;
        }
        CHECK(row == 1.0);
    }
}

TEST_CASE("second seed reaches the same regularized solution") {
    for (const ActionSpace& a : {testing::five_actions(), make_interval_actions(-1, 1, 32)}) {
        const auto problem = testing::lq_benchmark(a, 49);
        const double tol = default_hjb_tolerance(problem);
        for (double tau : {1.0, 0.1, 0.01}) {
            const HjbSolution first = solve_regularized_hjb(problem, tau);
            HjbOptions opts;
            FeatureField z(problem.n_interior(), problem.n_actions());
            for (std::size_t i = 0; i < z.values.rows(); ++i)
                for (std::size_t k = 0; k < z.values.cols(); ++k) z.values(i, k) = 3.0 * std::sin(1.0 + i + 2.0 * k);
            opts.initial_feature = z;
            const HjbSolution second = solve_regularized_hjb(problem, tau, opts);
            CHECK(first.final_residual <= tol);
            CHECK(std::abs(first.v_star.at(problem.grid(), 0.5) - second.v_star.at(problem.grid(), 0.5)) <= 2.0 * tol);
        }
    }
}

TEST_CASE("fixed-point consistency") {
    const auto problem = testing::lq_benchmark(testing::five_actions(), 49);
    const double tol = default_hjb_tolerance(problem);
    for (double tau : {0.5, 0.05}) {
        const HjbSolution sol = solve_regularized_hjb(problem, tau);
        FeatureField z = optimal_feature(problem, sol.v_star);
        for (double& v : z.values.data()) v = -v / tau;
        const Policy again = gibbs_policy(z, problem.actions());
        for (std::size_t j = 0; j < again.weights.data().size(); ++j) {
            CHECK(std::abs(again.weights.data()[j] - sol.optimal_policy.weights.data()[j]) <= 1e-8);
            CHECK(sol.optimal_policy.weights.data()[j] > 0.0);
        }
        const ValueField resolved = solve_on_policy_bellman(problem, again, tau);
        for (std::size_t i = 0; i < resolved.v.size(); ++i) CHECK(std::abs(resolved.v[i] - sol.v_star.v[i]) <= 2.0 * tol);
        CHECK(semilinear_residual(problem, sol.v_star, tau) <= tol);
    }
}

TEST_CASE("ordering in tau") {
    for (const ActionSpace& a : {testing::five_actions(), make_interval_actions(-1, 1, 64)}) {
        const auto problem = testing::lq_benchmark(a, 49);
        const HjbSolution zero = solve_unregularized_hjb(problem);
        std::vector<double> prev(zero.v_star.v);
        for (double tau : {0.01, 0.03, 0.1, 0.3, 1.0}) {
            const HjbSolution sol = solve_regularized_hjb(problem, tau);
            for (std::size_t i = 0; i < prev.size(); ++i) {
                CHECK(zero.v_star.v[i] <= sol.v_star.v[i] + 1e-8);
                CHECK(prev[i] <= sol.v_star.v[i] + 1e-8);
            }
            prev = sol.v_star.v;
        }
    }
}

TEST_CASE("verification inequality") {
    std::mt19937_64 rng(53);
    const auto problem = testing::lq_benchmark(testing::five_actions(), 39);
    const double tau = 0.2;
    const HjbSolution sol = solve_regularized_hjb(problem, tau);
    for (int trial = 0; trial < 20; ++trial) {
        const ValueField v = solve_on_policy_bellman(problem, random_gibbs(rng, problem, 3.0), tau);
        for (std::size_t i = 0; i < v.v.size(); ++i) CHECK(sol.v_star.v[i] <= v.v[i] + 1e-8);
    }
}

TEST_CASE("Howard steps do not increase the value") {
    // Manual Howard loop on a problem where the initial selection is poor.
    const ControlProblem problem(build_grid(0, 1, 39), make_discrete_actions({-1.0, -0.5, 0.0, 0.5, 1.0}),
                                 [](double x, double a) { return a + 0.5 * std::sin(6 * x); },
                                 [](double, double a) { return 0.2 * a * a; },
                                 [](double x, double a) { return 1.0 + (a - x) * (a - x) + 0.3 * a; },
                                 [](double) { return 1.0; }, [](double x) { return x; });
    std::vector<std::size_t> sel(problem.n_interior(), 4);
    std::vector<double> prev;
    for (int step = 0; step < 20; ++step) {
        const ValueField v = solve_on_policy_bellman(problem, one_hot_policy(sel, problem.actions()), 0.0);
        if (!prev.empty())
            for (std::size_t i = 0; i < v.v.size(); ++i) CHECK(v.v[i] <= prev[i] + 1e-9);
        prev = v.v;
        std::vector<std::size_t> next(sel.size());
        for (std::size_t i = 0; i < sel.size(); ++i) {
            const double a = nodal_hard_min(problem, v, i).argmin_action;
            next[i] = static_cast<std::size_t>(std::find(problem.actions().actions.begin(),
                                                         problem.actions().actions.end(), a) -
                                               problem.actions().actions.begin());
        }
        if (next == sel) break;
        sel = next;
    }
    const HjbSolution sol = solve_unregularized_hjb(problem);
    for (std::size_t i = 0; i < prev.size(); ++i) CHECK(std::abs(sol.v_star.v[i] - prev[i]) <= 1e-10);
}

TEST_CASE("regularization bias") {
    const std::vector<double> taus{1.0, 0.3, 0.1, 0.03, 0.01};
    const auto zero = testing::zero_problem(make_discrete_actions({-1, 1}));
    for (const BiasPoint& b : regularization_bias(zero, taus)) CHECK(std::abs(b.bias) <= 1e-12);

    // Discrete bound: v*_tau <= v^{pi*_0}_tau = v*_0 + tau * occupancy of KL(pi*_0|mu) = ln N.
    const auto problem = testing::lq_benchmark(testing::five_actions(), 49);
    const HjbSolution unreg = solve_unregularized_hjb(problem);
    const double occupancy = max_abs(evaluate_policy(problem, unreg.optimal_policy).kl_occupancy);
    const auto bias = regularization_bias(problem, taus);
    for (std::size_t j = 0; j < bias.size(); ++j) {
        CHECK(bias[j].bias >= -1e-8);
        CHECK(bias[j].bias <= taus[j] * occupancy + 1e-10);
        if (j) CHECK(bias[j].bias <= bias[j - 1].bias + 1e-8);
    }

    const auto interval = testing::lq_benchmark(make_interval_actions(-1, 1, 128), 49);
    const std::vector<double> small{1e-1, 1e-2, 1e-3};
    std::vector<double> ratios;
    for (const BiasPoint& b : regularization_bias(interval, small)) ratios.push_back(b.bias / (b.tau * std::log(1.0 / b.tau)));
    const auto [lo, hi] = std::minmax_element(ratios.begin(), ratios.end());
    CHECK(std::isfinite(*hi));
    CHECK(*hi / *lo < 3.0);

    const std::vector<double> ascending{0.1, 1.0};
    CHECK_THROWS_AS(regularization_bias(problem, ascending), ValidationError);
}

TEST_CASE("non-convergence reports its history") {
    const auto problem = testing::lq_benchmark(make_interval_actions(-1, 1, 16), 29);
    HjbOptions opts;
    opts.max_iter = 1;
    opts.tol = 1e-15;
    try {
        solve_regularized_hjb(problem, 0.01, opts);
        FAIL("expected non-convergence");
    } catch (const NonConvergenceError& e) {
        CHECK(!e.residual_history().empty());
    }
    CHECK_THROWS_AS(solve_regularized_hjb(problem, 0.0), ValidationError);
}

TEST_CASE("solution CSV layout") {
    const auto problem = testing::lq_benchmark(testing::five_actions(), 9);
    const HjbSolution sol = solve_regularized_hjb(problem, 0.5);
    const auto path = std::filesystem::temp_directory_path() / "pmd_hjb_layout.csv";
    write_hjb_csv(path, problem, sol);
    std::ifstream in(path);
    std::string header;
    std::getline(in, header);
    CHECK(header == "x,v_star,dv,mean_action,mode_action");
    std::size_t lines = 0;
    for (std::string line; std::getline(in, line);) ++lines;
    CHECK(lines == problem.grid().size());
    std::filesystem::remove(path);
}
