#include "doctest.h"

#include <cmath>
#include <random>

#include "tsfrac/timescale.hpp"

using namespace tsfrac;

namespace {

TimeScaleGrid grid_0124() {
    return TimeScaleGrid({0.0, 1.0, 2.0, 4.0});
}

TimeScaleGrid random_grid(std::mt19937_64& rng, std::size_t n) {
    std::uniform_real_distribution<double> gap(0.01, 1.0);
    std::vector<double> pts{-0.5};
    for (std::size_t k = 1; k < n; ++k) {
        pts.push_back(pts.back() + gap(rng));
    }
    return TimeScaleGrid(pts);
}

} // namespace

TEST_CASE("jump operators read off neighbours") {
    const auto g = grid_0124();
    auto j = jump_ops(g, 2);
    CHECK(j.sigma == 4.0);
    CHECK(j.rho == 1.0);
    CHECK(j.mu == 2.0);

    j = jump_ops(g, 3);
    CHECK(j.sigma == 4.0);
    CHECK(j.rho == 2.0);
    CHECK(j.mu == 0.0);

    j = jump_ops(g, 0);
    CHECK(j.rho == 0.0);

    CHECK_THROWS_AS(jump_ops(g, 4), std::out_of_range);

    const auto u = build_grid({UniformSpec{0.0, 2.0, 8}});
    for (std::size_t k = 1; k < 7; ++k) {
        CHECK(jump_ops(u, k).mu == doctest::Approx(0.25).epsilon(1e-14));
    }
}

TEST_CASE("grid invariants are enforced") {
    CHECK_THROWS_AS(TimeScaleGrid({1.0}), std::invalid_argument);
    CHECK_THROWS_AS(TimeScaleGrid({0.0, 0.0, 1.0}), std::invalid_argument);
    CHECK_THROWS_AS(TimeScaleGrid({0.0, 2.0, 1.0}), std::invalid_argument);
    CHECK_THROWS_AS(TimeScaleGrid({0.0, NAN}), std::invalid_argument);
    CHECK_THROWS_AS(TimeScaleGrid({0.0, 1.0}, {}), std::invalid_argument);
    CHECK_THROWS_AS(GridFunction(grid_0124(), {1.0, 2.0}), std::invalid_argument);
    CHECK_THROWS_AS(GridFunction(grid_0124(), {1.0, 2.0, INFINITY, 0.0}), std::invalid_argument);
}

TEST_CASE("delta derivative") {
    const auto g = grid_0124();
    SUBCASE("constant") {
        const auto d = delta_derivative(GridFunction::constant(g, 3.5));
        CHECK(d.domain() == IndexRange{0, 2});
        for (std::size_t k = 0; k <= 2; ++k) {
            CHECK(d[k] == 0.0);
        }
    }
    SUBCASE("identity") {
        const auto d = delta_derivative(GridFunction::sample(g, [](double t) { return t; }));
        for (std::size_t k = 0; k <= 2; ++k) {
            CHECK(d[k] == doctest::Approx(1.0));
        }
    }
    SUBCASE("square on {0,1,3} equals sigma(t) + t") {
        const TimeScaleGrid g3({0.0, 1.0, 3.0});
        const auto d = delta_derivative(GridFunction::sample(g3, [](double t) { return t * t; }));
        CHECK(d[0] == doctest::Approx(1.0));
        CHECK(d[1] == doctest::Approx(4.0));
        CHECK(d.domain() == IndexRange{0, 1});
    }
}

TEST_CASE("delta integral") {
    const auto u = build_grid({UniformSpec{0.0, 1.0, 10}});
    CHECK(delta_integral(GridFunction::constant(u, 1.0)) == doctest::Approx(1.0));

    const auto g = grid_0124();
    const auto id = GridFunction::sample(g, [](double t) { return t; });
    CHECK(delta_integral(id, 0, 3) == 5.0);
    CHECK(delta_integral(id, 2, 2) == 0.0);
    CHECK_THROWS_AS(delta_integral(id, 2, 1), std::out_of_range);
    CHECK_THROWS_AS(delta_integral(id, 0, 4), std::out_of_range);
}

TEST_CASE("delta calculus properties on random grids") {
    std::mt19937_64 rng(7);
    std::uniform_real_distribution<double> coef(-2.0, 2.0);
    for (int trial = 0; trial < 50; ++trial) {
        const auto g = random_grid(rng, 2 + trial % 40);
        const double a = coef(rng), b = coef(rng), c = coef(rng);
        const auto f = GridFunction::sample(g, [&](double t) { return a * std::sin(b * t) + c * t * t; });
        const auto h = GridFunction::sample(g, [&](double t) { return std::exp(0.3 * t) - a; });
        const std::size_t n = g.last();

        // Fundamental theorem at grid level.
        CHECK(delta_integral(delta_derivative(f), 0, n) ==
              doctest::Approx(f[n] - f[0]).epsilon(1e-12).scale(1.0));

        // Additivity.
        const std::size_t mid = n / 2;
        CHECK(delta_integral(f, 0, n) ==
              doctest::Approx(delta_integral(f, 0, mid) + delta_integral(f, mid, n)).epsilon(1e-12));

        // Linearity of both operators.
        const auto combo = f * a + h * b;
        CHECK(delta_integral(combo) ==
              doctest::Approx(a * delta_integral(f) + b * delta_integral(h)).epsilon(1e-12).scale(1.0));
        const auto dc = delta_derivative(combo);
        const auto df = delta_derivative(f);
        const auto dh = delta_derivative(h);
        for (std::size_t k = 0; k < n; ++k) {
            CHECK(dc[k] == doctest::Approx(a * df[k] + b * dh[k]).epsilon(1e-10).scale(1.0));
        }
    }
}

TEST_CASE("build_grid families") {
    SUBCASE("uniform") {
        const auto g = build_grid({UniformSpec{0.0, 1.0, 4}});
        REQUIRE(g.size() == 5);
        const double expect[] = {0.0, 0.25, 0.5, 0.75, 1.0};
        for (std::size_t k = 0; k < 5; ++k) {
            CHECK(g[k] == expect[k]);
        }
        CHECK(g.has_dense_gap());
        CHECK_FALSE(g.has_scattered_gap());
    }
    SUBCASE("hstep") {
        const auto g = build_grid({HStepSpec{0.0, 3.0, 1.0}});
        REQUIRE(g.size() == 4);
        CHECK(g[3] == 3.0);
        CHECK_FALSE(g.has_dense_gap());
        CHECK_THROWS_AS(build_grid({HStepSpec{0.0, 3.0, 0.7}}), std::invalid_argument);
        CHECK_THROWS_AS(build_grid({HStepSpec{0.0, 3.0, -1.0}}), std::invalid_argument);
    }
    SUBCASE("union of dense, scattered and dense pieces") {
        GridSpec spec{UnionSpec{{GridSpec{UniformSpec{0.0, 1.0, 4}}, GridSpec{ExplicitSpec{{1.5, 2.0}, {}}},
                                 GridSpec{UniformSpec{2.0, 3.0, 2}}}}};
        const auto g = build_grid(spec);
        REQUIRE(g.size() == 9);
        const double expect[] = {0.0, 0.25, 0.5, 0.75, 1.0, 1.5, 2.0, 2.5, 3.0};
        for (std::size_t k = 0; k < 9; ++k) {
            CHECK(g[k] == doctest::Approx(expect[k]));
        }
        const auto gaps = g.gaps();
        CHECK(gaps[3] == GapKind::dense);
        CHECK(gaps[4] == GapKind::scattered);
        CHECK(gaps[5] == GapKind::scattered);
        CHECK(gaps[6] == GapKind::dense);
    }
    SUBCASE("errors") {
        CHECK_THROWS_AS(build_grid({UnionSpec{}}), std::invalid_argument);
        CHECK_THROWS_AS(build_grid({ExplicitSpec{}}), std::invalid_argument);
        CHECK_THROWS_AS(build_grid({UniformSpec{0.0, NAN, 3}}), std::invalid_argument);
        CHECK_THROWS_AS(build_grid({UniformSpec{0.0, 1.0, 0}}), std::invalid_argument);
        GridSpec clash{UnionSpec{{GridSpec{UniformSpec{0.0, 1.0, 4}}, GridSpec{UniformSpec{0.5, 1.5, 3}}}}};
        CHECK_THROWS_AS(build_grid(clash), std::invalid_argument);
        GridSpec consistent{UnionSpec{{GridSpec{UniformSpec{0.0, 1.0, 4}}, GridSpec{UniformSpec{0.5, 1.5, 4}}}}};
        CHECK(build_grid(consistent).size() == 7);
    }
}

TEST_CASE("refine") {
    const auto coarse = build_grid({UniformSpec{0.0, 1.0, 4}});
    const auto fine = refine(coarse, 2);
    const auto expect = build_grid({UniformSpec{0.0, 1.0, 8}});
    REQUIRE(fine.size() == expect.size());
    for (std::size_t k = 0; k < fine.size(); ++k) {
        CHECK(fine[k] == doctest::Approx(expect[k]));
    }

    const TimeScaleGrid scattered({0.0, 1.0, 2.0});
    CHECK(refine(scattered, 5) == scattered);
    CHECK_THROWS_AS(refine(scattered, 1), std::invalid_argument);

    GridSpec hybrid{UnionSpec{{GridSpec{UniformSpec{0.0, 0.5, 2}}, GridSpec{ExplicitSpec{{0.6, 0.8}, {}}},
                               GridSpec{UniformSpec{0.8, 1.0, 1}}}}};
    const auto h = build_grid(hybrid);
    const auto hr = refine(h, 3);
    CHECK(hr.size() == h.size() + 2 * 2 + 2 * 1);
    // Original points survive and scattered gaps are untouched.
    for (double t : h.points()) {
        bool found = false;
        for (double s : hr.points()) {
            found = found || s == t;
        }
        CHECK(found);
    }
    std::size_t scattered_gaps = 0;
    for (auto k : hr.gaps()) {
        scattered_gaps += k == GapKind::scattered;
    }
    CHECK(scattered_gaps == 2);
}

TEST_CASE("refinement makes delta integrals of smooth functions converge") {
    auto g = build_grid({UniformSpec{0.0, 1.0, 8}});
    const double exact = 1.0 - std::cos(1.0);
    double prev_err = 1.0;
    for (int level = 0; level < 6; ++level) {
        const double err =
            std::abs(delta_integral(GridFunction::sample(g, [](double t) { return std::sin(t); })) - exact);
        CHECK(err < prev_err);
        prev_err = err;
        g = refine(g, 2);
    }
}

TEST_CASE("extension check") {
    const auto g = grid_0124();
    auto r = extension_check(GridFunction::constant(g, 1.0), 0, 3);
    CHECK(r.lhs == doctest::Approx(r.rhs));
    CHECK(r.holds);

    r = extension_check(GridFunction::sample(g, [](double t) { return t; }), 0, 3);
    CHECK(r.lhs == 5.0);
    CHECK(r.holds);

    const auto dense = build_grid({UniformSpec{0.0, 1.0, 16}});
    r = extension_check(GridFunction::sample(dense, [](double t) { return std::exp(t); }), 0, 16);
    CHECK(r.lhs < r.rhs);
    CHECK(r.holds);

    CHECK_THROWS_AS(extension_check(GridFunction::sample(g, [](double t) { return -t; }), 0, 3),
                    std::invalid_argument);
}
