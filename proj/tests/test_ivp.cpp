#include "doctest.h"

#include <cmath>
#include <numbers>
#include <random>

#include "reference_ops.hpp"
#include "tsfrac/error.hpp"
#include "tsfrac/ivp.hpp"

using namespace tsfrac;

namespace {

TimeScaleGrid random_grid(std::mt19937_64& rng, std::size_t n) {
    std::uniform_real_distribution<double> gap(0.01, 0.2);
    std::vector<double> pts{0.0};
    for (std::size_t k = 1; k < n; ++k) {
        pts.push_back(pts.back() + gap(rng));
    }
    return TimeScaleGrid(pts);
}

std::vector<double> pts(const TimeScaleGrid& g) {
    return {g.points().begin(), g.points().end()};
}

double sup(const GridFunction& f) {
    double m = 0.0;
    for (std::size_t k = f.domain().first; !f.domain().is_empty() && k <= f.domain().last; ++k) {
        m = std::max(m, std::abs(f[k]));
    }
    return m;
}

// Dense forward substitution for (A - lambda I) y = g on rows 0..N-1 with A
// the reference RL matrix.
std::vector<double> linear_oracle(const TimeScaleGrid& g, double alpha, double lambda,
                                  const std::function<double(double)>& src) {
    const auto t = pts(g);
    const auto a = reference::rl_left(t, alpha, false);
    const std::size_t n = t.size() - 1;
    std::vector<double> y(n, 0.0);
    for (std::size_t k = 0; k < n; ++k) {
        double s = src(t[k]);
        for (std::size_t j = 0; j < k; ++j) {
            s -= a[k][j] * y[j];
        }
        y[k] = s / (a[k][k] - lambda);
    }
    return y;
}

} // namespace

TEST_CASE("zero data gives the zero solution") {
    const IvpProblem p{build_grid({UniformSpec{0.0, 1.0, 20}}), 0.5, [](double, double) { return 0.0; }};
    const auto s = solve_ivp(p);
    CHECK(s.y.domain() == IndexRange{0, 19});
    CHECK(sup(s.y) == 0.0);
    CHECK(sup(s.residual) == 0.0);
}

TEST_CASE("first step by hand") {
    const IvpProblem p{TimeScaleGrid({0.0, 1.0, 2.0, 3.0}), 0.5, [](double, double) { return 1.0; }};
    const auto s = solve_ivp(p);
    CHECK(s.y[0] == doctest::Approx(std::sqrt(std::numbers::pi)).epsilon(1e-14));
    CHECK(s.y[0] == doctest::Approx(1.7725).epsilon(1e-4));
    CHECK(sup(s.residual) <= 1e-12);
}

TEST_CASE("linear right-hand sides match the dense triangular oracle") {
    std::mt19937_64 rng(4);
    for (int trial = 0; trial < 12; ++trial) {
        const auto g = random_grid(rng, 4 + 9 * trial);
        const double alpha = 0.1 + 0.07 * trial;
        const double lambda = -0.5 + 0.05 * trial;
        auto src = [](double t) { return std::cos(3 * t) + t; };
        const IvpProblem p{g, alpha, [&](double t, double y) { return lambda * y + src(t); }};
        const auto s = solve_ivp(p);
        const auto oracle = linear_oracle(g, alpha, lambda, src);
        for (std::size_t k = 0; k < oracle.size(); ++k) {
            CHECK(s.y[k] == doctest::Approx(oracle[k]).epsilon(1e-10).scale(1.0));
        }
        CHECK(sup(s.residual) <= 1e-10);
    }
}

TEST_CASE("nonlinear solves are consistent") {
    std::mt19937_64 rng(12);
    for (int trial = 0; trial < 12; ++trial) {
        const auto g = random_grid(rng, 5 + 13 * trial);
        const double alpha = 0.2 + 0.06 * trial;
        IvpProblem p{g, alpha, [](double t, double y) { return 0.5 * std::sin(y) + 0.2 * y * y / (1 + y * y) - t; }};
        p.x0 = trial % 2 ? 0.0 : 0.4;
        p.params.relaxation = trial % 3 == 0 ? 0.7 : 1.0;
        p.params.quadrature = trial % 4 == 1 ? Quadrature::cell_avg : Quadrature::node;
        p.params.step_max_iter = 500;
        const auto s = solve_ivp(p);
        CHECK(sup(s.residual) <= 1e-10);
        CHECK(s.residual.domain().first == (p.x0 != 0.0 ? 1u : 0u));
        CHECK(s.residual.domain().last == g.last() - 1);
        CHECK(sup(ivp_residual(s.y, p)) <= 1e-10);
    }
}

TEST_CASE("nonzero initial value is met one step later") {
    std::mt19937_64 rng(8);
    for (double x0 : {1.0, -0.3, 2.5}) {
        const auto g = random_grid(rng, 30);
        const IvpProblem p{g, 0.35, [](double t, double y) { return t - 0.5 * y; }, x0};
        const auto s = solve_ivp(p);
        const auto t = pts(g);
        const auto i = reference::apply(reference::left_integral(t, 0.65, false),
                                        std::vector<double>(s.y.values().begin(), s.y.values().end()));
        CHECK(i[1] == doctest::Approx(x0).epsilon(1e-12));
        CHECK(s.y[0] == doctest::Approx(x0 * std::tgamma(0.65) * std::pow(g.mu(0), -0.65)).epsilon(1e-13));
    }
    const IvpProblem tiny{TimeScaleGrid({0.0, 1.0}), 0.5, [](double, double) { return 0.0; }, 1.0};
    CHECK_THROWS_AS(solve_ivp(tiny), std::invalid_argument);
}

TEST_CASE("scaling a y-independent source scales the solution") {
    const auto g = build_grid({UniformSpec{0.0, 2.0, 50}});
    const IvpProblem p1{g, 0.6, [](double t, double) { return std::exp(-t); }};
    const IvpProblem p2{g, 0.6, [](double t, double) { return -3.5 * std::exp(-t); }};
    const auto a = solve_ivp(p1);
    const auto b = solve_ivp(p2);
    for (std::size_t k = 0; k < g.last(); ++k) {
        CHECK(b.y[k] == doctest::Approx(-3.5 * a.y[k]).epsilon(1e-14).scale(1.0));
    }
}

TEST_CASE("residual reacts to perturbations") {
    const auto g = build_grid({UniformSpec{0.0, 1.0, 16}});
    const IvpProblem p{g, 0.5, [](double, double y) { return -y + 1.0; }};
    const auto s = solve_ivp(p);
    std::vector<double> v(s.y.values().begin(), s.y.values().end());
    const double eps = 1e-6;
    v[7] += eps;
    const auto r = ivp_residual(GridFunction(g, v, s.y.domain()), p);
    // Diagonal RL weight minus the rhs slope.
    const double c = std::pow(g.mu(7), -0.5) / std::tgamma(0.5) + 1.0;
    CHECK(r[7] >= 0.99 * c * eps);
    CHECK(r[6] <= 1e-10);

    const IvpProblem one{g, 0.5, [](double, double) { return 1.0; }};
    const auto r1 = ivp_residual(GridFunction(g, std::vector<double>(g.size(), 0.0), {0, g.last() - 1}), one);
    for (std::size_t k = 0; k < g.last(); ++k) {
        CHECK(r1[k] == 1.0);
    }
}

TEST_CASE("existence probe") {
    const auto g = build_grid({UniformSpec{0.0, 1.0, 10}});
    CHECK(existence_probe({g, 0.5, [](double, double) { return 3.0; }}, -1, 1, 5).M == 3.0);
    const auto s = existence_probe({g, 0.5, [](double, double y) { return std::sin(y); }}, -10, 10, 101);
    CHECK(s.M <= 1.0);
    CHECK(s.bounded);
    CHECK(existence_probe({g, 0.5, [](double, double y) { return y * y; }}, -2, 2, 9).M == 4.0);
    const auto bad = existence_probe({g, 0.5, [](double, double y) { return 1.0 / y; }}, -1, 1, 3);
    CHECK_FALSE(bad.bounded);
    CHECK(std::isinf(bad.M));
    CHECK_THROWS_AS(existence_probe({g, 0.5, [](double, double) { return 0.0; }}, 1, -1, 3), std::invalid_argument);
    CHECK_THROWS_AS(existence_probe({g, 0.5, [](double, double) { return 0.0; }}, 0, 1, 0), std::invalid_argument);
}

TEST_CASE("Picard iteration") {
    SUBCASE("zero rhs in one sweep") {
        const IvpProblem p{build_grid({UniformSpec{0.0, 1.0, 8}}), 0.5, [](double, double) { return 0.0; }};
        const auto s = picard_solve(p, 5);
        CHECK(s.iterations.front() == 1);
        CHECK(sup(s.y) == 0.0);
    }
    SUBCASE("agrees with the march on contractions") {
        std::mt19937_64 rng(2);
        for (int trial = 0; trial < 6; ++trial) {
            const auto g = random_grid(rng, 6 + 10 * trial);
            IvpProblem p{g, 0.3 + 0.1 * trial, [](double t, double y) { return 0.1 * y + std::sin(t); }};
            p.x0 = trial % 2 ? 0.2 : 0.0;
            const auto a = solve_ivp(p);
            const auto b = picard_solve(p, 200);
            for (std::size_t k = 0; k < g.last(); ++k) {
                CHECK(std::abs(a.y[k] - b.y[k]) <= 1e-8);
            }
        }
    }
    SUBCASE("expanding rhs diverges") {
        const IvpProblem p{TimeScaleGrid({0.0, 0.5, 1.0, 1.5, 2.0, 2.5}), 0.5,
                           [](double, double y) { return 100.0 * y + 1.0; }};
        CHECK_THROWS_AS(picard_solve(p, 100), ConvergenceError);
    }
    CHECK_THROWS_AS(picard_solve({TimeScaleGrid({0.0, 1.0}), 0.5, [](double, double) { return 0.0; }}, 0),
                    std::invalid_argument);
}

TEST_CASE("step failures and validation") {
    const TimeScaleGrid g({0.0, 1.0, 2.0, 3.0});
    CHECK_THROWS_AS(solve_ivp({g, 0.5, [](double, double y) { return 1000.0 * y + 1.0; }}), ConvergenceError);
    CHECK_THROWS_AS(solve_ivp({g, 0.5, [](double, double) { return NAN; }}), std::domain_error);
    CHECK_THROWS_AS(solve_ivp({g, 1.0, [](double, double) { return 0.0; }}), std::invalid_argument);
    CHECK_THROWS_AS(solve_ivp({g, 0.5, nullptr}), std::invalid_argument);
    IvpProblem bad{g, 0.5, [](double, double) { return 0.0; }};
    bad.params.relaxation = 0.0;
    CHECK_THROWS_AS(solve_ivp(bad), std::invalid_argument);
    bad.params = {};
    bad.params.step_tol = -1.0;
    CHECK_THROWS_AS(solve_ivp(bad), std::invalid_argument);
}
