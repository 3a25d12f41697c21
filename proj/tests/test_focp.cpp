#include "doctest.h"

#include <cmath>
#include <random>
#include <sstream>

#include "reference_ops.hpp"
#include "tsfrac/focp.hpp"

using namespace tsfrac;

namespace {

Vec v1(double a) {
    return Vec::Constant(1, a);
}

double sup_diff(const Mat& a, const Mat& b, std::size_t rows) {
    double r = 0.0;
    for (std::size_t k = 0; k < rows; ++k) {
        r = std::max(r, (a.row(static_cast<Eigen::Index>(k)) - b.row(static_cast<Eigen::Index>(k))).lpNorm<Eigen::Infinity>());
    }
    return r;
}

const auto one = [](double) { return 1.0; };
const auto zero = [](double) { return 0.0; };

TimeScaleGrid hybrid_grid() {
    return build_grid({UnionSpec{{GridSpec{UniformSpec{0.0, 0.5, 20}}, GridSpec{ExplicitSpec{{0.6, 0.8}, {}}},
                                  GridSpec{UniformSpec{0.8, 1.0, 8}}}}});
}

} // namespace

TEST_CASE("hamiltonian") {
    auto p = make_lq_problem(TimeScaleGrid({0.0, 1.0, 2.0, 3.0}), 0.5, one, 2.0);
    const Vec x = v1(0.3), u = v1(-1.5);
    CHECK(hamiltonian(p.model, x, v1(0.0), u, 0.5) == doctest::Approx(p.model.L(x, u, 0.5)));
    CHECK(hamiltonian(p.model, x, v1(0.7), u, 0.5) ==
          doctest::Approx(0.5 * ((0.3 - 1) * (0.3 - 1) + 2.0 * 2.25) + 0.7 * -1.5));
    FocpModel trivial;
    trivial.f = [](const Vec&, const Vec&, double) { return v1(1.0); };
    trivial.L = [](const Vec&, const Vec&, double) { return 0.0; };
    CHECK(hamiltonian(trivial, x, v1(4.25), u, 0.0) == 4.25);
    CHECK_THROWS_AS(hamiltonian(trivial, v1(NAN), v1(0), u, 0.0), std::domain_error);
}

TEST_CASE("cost functional") {
    const TimeScaleGrid g({0.0, 1.0, 2.0, 4.0});
    auto p = make_lq_problem(g, 0.5, one, 3.0);
    CHECK(cost_functional(Mat::Constant(4, 1, 1.0), Mat::Zero(4, 1), p) == 0.0);

    p.model.L = [](const Vec&, const Vec&, double) { return 1.0; };
    CHECK(cost_functional(Mat::Zero(4, 1), Mat::Zero(4, 1), p) == 4.0);

    // Hand sum: 1/2 sum mu_k ((x_k - 1)^2 + 3 u_k^2) over k = 0, 1, 2.
    auto q = make_lq_problem(g, 0.5, one, 3.0);
    Mat x(4, 1), u(4, 1);
    x << 0.0, 2.0, 1.5, 99.0;
    u << 1.0, -1.0, 0.5, 99.0;
    const double hand = 0.5 * (1.0 * (1 + 3) + 1.0 * (1 + 3) + 2.0 * (0.25 + 0.75));
    CHECK(cost_functional(x, u, q) == doctest::Approx(hand).epsilon(1e-15));
}

TEST_CASE("adjoint solve") {
    const auto g = build_grid({UniformSpec{0.0, 1.0, 12}});
    auto p = make_lq_problem(g, 0.4, [](double t) { return std::sin(3 * t); }, 1.0);
    const std::size_t n = g.last();

    SUBCASE("x = z gives a zero adjoint") {
        Mat x(n + 1, 1);
        for (std::size_t k = 0; k <= n; ++k) {
            x(static_cast<Eigen::Index>(k), 0) = std::sin(3 * g[k]);
        }
        CHECK(solve_adjoint(x, Mat::Zero(n + 1, 1), p).lpNorm<Eigen::Infinity>() == 0.0);
    }
    SUBCASE("zero source gives a zero adjoint") {
        p.model.L = [](const Vec&, const Vec& u, double) { return u[0] * u[0]; };
        p.model.L_x = nullptr;
        CHECK(solve_adjoint(Mat::Constant(n + 1, 1, 2.0), Mat::Zero(n + 1, 1), p).lpNorm<Eigen::Infinity>() == 0.0);
    }
    SUBCASE("matches the dense upper-triangular oracle") {
        std::mt19937_64 rng(3);
        std::normal_distribution<double> d;
        Mat x(n + 1, 1);
        for (std::size_t k = 0; k <= n; ++k) {
            x(static_cast<Eigen::Index>(k), 0) = d(rng);
        }
        const Mat lambda = solve_adjoint(x, Mat::Zero(n + 1, 1), p);
        const std::vector<double> t(g.points().begin(), g.points().end());
        const auto dual = reference::mu_adjoint(t, reference::rl_left(t, 0.4, false));
        std::vector<double> ref(n, 0.0);
        for (std::size_t j = n; j-- > 0;) {
            double s = x(static_cast<Eigen::Index>(j), 0) - std::sin(3 * t[j]);
            for (std::size_t k = j + 1; k < n; ++k) {
                s -= dual[j][k] * ref[k];
            }
            ref[j] = s / dual[j][j];
        }
        for (std::size_t j = 0; j < n; ++j) {
            CHECK(lambda(static_cast<Eigen::Index>(j), 0) == doctest::Approx(ref[j]).epsilon(1e-10).scale(1.0));
        }
        CHECK(lambda(static_cast<Eigen::Index>(n), 0) == 0.0);
    }
}

TEST_CASE("stationarity residual") {
    const auto g = build_grid({UniformSpec{0.0, 1.0, 10}});
    auto p = make_lq_problem(g, 0.5, one, 2.5);
    std::mt19937_64 rng(1);
    std::normal_distribution<double> d;
    Mat lambda(11, 1), x(11, 1);
    for (int k = 0; k < 11; ++k) {
        lambda(k, 0) = d(rng);
        x(k, 0) = d(rng);
    }
    Mat u = -lambda / 2.5;
    const auto r = stationarity_residual(x, lambda, u, p);
    for (std::size_t k = 0; k < 10; ++k) {
        CHECK(r[k] <= 1e-15);
    }
    u(4, 0) += 1e-3;
    CHECK(stationarity_residual(x, lambda, u, p)[4] == doctest::Approx(2.5e-3).epsilon(1e-9));

    p.model.f = [](const Vec& x, const Vec&, double) { return Vec(-x); };
    p.model.L = [](const Vec& x, const Vec&, double) { return x.squaredNorm(); };
    p.model.f_u = nullptr;
    p.model.L_u = nullptr;
    const auto r0 = stationarity_residual(x, lambda, u, p);
    for (std::size_t k = 0; k < 10; ++k) {
        CHECK(r0[k] == 0.0);
    }
}

TEST_CASE("sweep on trivial data stays at zero") {
    const auto p = make_lq_problem(build_grid({UniformSpec{0.0, 1.0, 16}}), 0.5, zero, 1.0);
    const auto r = sweep_solve(p);
    CHECK(r.converged);
    CHECK(r.J == 0.0);
    CHECK(r.u.lpNorm<Eigen::Infinity>() == 0.0);
    CHECK(r.x.lpNorm<Eigen::Infinity>() == 0.0);
    CHECK(r.lambda.lpNorm<Eigen::Infinity>() == 0.0);
}

TEST_CASE("sweep matches the oracle on the four point grid") {
    const auto p = make_lq_problem(TimeScaleGrid({0.0, 1.0, 2.0, 3.0}), 0.5, one, 1.0);
    const auto r = sweep_solve(p);
    const auto o = lq_oracle(p);
    CHECK(r.converged);
    CHECK(sup_diff(r.u, o.u, 3) <= 1e-8);
    CHECK(std::abs(r.J - o.J) <= 1e-10 * std::abs(o.J));
}

TEST_CASE("oracle properties") {
    const auto g = build_grid({UniformSpec{0.0, 1.0, 32}});
    const auto z0 = lq_oracle(make_lq_problem(g, 0.5, zero, 1.0));
    CHECK(z0.J == 0.0);
    CHECK(z0.u.lpNorm<Eigen::Infinity>() == 0.0);

    const auto z = [](double t) { return std::cos(2 * t) + 0.5; };
    double prev = INFINITY;
    for (double N : {0.1, 1.0, 10.0, 100.0}) {
        const auto p = make_lq_problem(g, 0.5, z, N);
        const auto o = lq_oracle(p);
        const double norm = o.u.norm();
        CHECK(norm < prev);
        prev = norm;
        const auto el = verify_euler_lagrange(o.x, o.lambda, o.u, p);
        CHECK(el.passes(1e-8));
        CHECK(o.J == doctest::Approx(cost_functional(o.x, o.u, p)));
    }
    CHECK_THROWS_AS(lq_oracle([&] {
                        auto p = make_lq_problem(g, 0.5, z, 1.0);
                        p.lq.reset();
                        return p;
                    }()),
                    std::invalid_argument);
}

TEST_CASE("oracle equivalence across sizes, orders and weights") {
    std::mt19937_64 rng(17);
    std::uniform_real_distribution<double> gap(0.2, 1.0);
    for (std::size_t size : {5u, 17u, 64u, 130u, 256u}) {
        std::vector<double> pts{0.0};
        for (std::size_t k = 1; k < size; ++k) {
            pts.push_back(pts.back() + gap(rng) / size);
        }
        const TimeScaleGrid g(pts);
        for (double alpha : {0.25, 0.75}) {
            for (double N : {0.1, 3.0}) {
                CAPTURE(size);
                CAPTURE(alpha);
                CAPTURE(N);
                const auto p = make_lq_problem(g, alpha, [](double t) { return 1.0 + t * t; }, N,
                                               size % 2 ? 0.0 : 0.3);
                const auto r = sweep_solve(p);
                const auto o = lq_oracle(p);
                CHECK(r.converged);
                CHECK(sup_diff(r.u, o.u, g.last()) <= 1e-8);
                CHECK(std::abs(r.J - o.J) <= 1e-10 * std::abs(o.J));
                for (std::size_t i = 1; i < r.J_history.size(); ++i) {
                    CHECK(r.J_history[i] <= r.J_history[i - 1] * (1 + 1e-14) + 1e-300);
                }
            }
        }
    }
}

TEST_CASE("first variation vanishes at the optimum") {
    const auto p = make_lq_problem(hybrid_grid(), 0.5, one, 1.0);
    const auto o = lq_oracle(p);
    std::mt19937_64 rng(5);
    std::normal_distribution<double> d;
    Mat du = Mat::Zero(o.u.rows(), 1);
    for (Eigen::Index k = 0; k + 1 < du.rows(); ++k) {
        du(k, 0) = d(rng);
    }
    auto change = [&](double eps) {
        const Mat u = o.u + eps * du;
        return cost_functional(solve_state(p, u), u, p) - o.J;
    };
    const double c1 = change(1e-3);
    const double c2 = change(5e-4);
    CHECK(c1 > 0.0);
    CHECK(c1 / c2 == doctest::Approx(4.0).epsilon(1e-3));
    CHECK(std::abs(change(-1e-3) - c1) <= 1e-9 * c1 + 1e-15);
}

TEST_CASE("gradient mode on a nonlinear problem") {
    const auto g = build_grid({UniformSpec{0.0, 1.0, 24}});
    FocpProblem p{g, 0.6};
    p.model.f = [](const Vec& x, const Vec& u, double) { return Vec(-0.5 * x + u + 0.1 * x.array().sin().matrix()); };
    p.model.L = [](const Vec& x, const Vec& u, double t) {
        return 0.5 * std::pow(x[0] - std::cos(t), 2) + 0.5 * u[0] * u[0] + 0.05 * std::pow(u[0], 4);
    };
    p.update = {UpdateKind::gradient, 1.0, 0.5};
    p.stop.u_tol = 1e-11;
    p.stop.max_sweeps = 2000;
    const auto r = sweep_solve(p);
    CHECK(r.converged);
    CHECK(r.stationarity_max <= 1e-6);
    const auto el = verify_euler_lagrange(r.x, r.lambda, r.u, p);
    CHECK(el.passes(1e-6));
}

TEST_CASE("vector state with finite-difference partials") {
    const auto g = build_grid({UniformSpec{0.0, 2.0, 30}});
    FocpProblem p{g, 0.7};
    p.model.state_dim = 2;
    p.model.f = [](const Vec& x, const Vec& u, double) {
        Vec out(2);
        out << x[1], -0.4 * x[0] + u[0];
        return out;
    };
    p.model.L = [](const Vec& x, const Vec& u, double) {
        return 0.5 * ((x[0] - 1.0) * (x[0] - 1.0) + x[1] * x[1] + 2.0 * u[0] * u[0]);
    };
    p.x0 = Vec::Zero(2);
    p.update = {UpdateKind::lq, 2.0, std::nullopt};
    const auto r = sweep_solve(p);
    CHECK(r.converged);
    CHECK(r.x.cols() == 2);
    CHECK(verify_euler_lagrange(r.x, r.lambda, r.u, p).passes(1e-6));
}

TEST_CASE("Euler-Lagrange negative control") {
    const auto p = make_lq_problem(build_grid({UniformSpec{0.0, 1.0, 20}}), 0.5, one, 1.0);
    std::mt19937_64 rng(9);
    std::normal_distribution<double> d;
    for (int trial = 0; trial < 10; ++trial) {
        Mat x(21, 1), l(21, 1), u(21, 1);
        for (int k = 0; k < 21; ++k) {
            x(k, 0) = d(rng);
            l(k, 0) = d(rng);
            u(k, 0) = d(rng);
        }
        const auto el = verify_euler_lagrange(x, l, u, p);
        CHECK(std::max({el.res_state, el.res_adjoint, el.res_stationarity}) >= 1e-2);
    }
}

TEST_CASE("partials agree with differences of the Hamiltonian") {
    auto p = make_lq_problem(TimeScaleGrid({0.0, 1.0, 2.0}), 0.5, [](double t) { return std::sin(t); }, 0.7);
    std::mt19937_64 rng(2);
    std::uniform_real_distribution<double> d(-2.0, 2.0);
    for (int i = 0; i < 20; ++i) {
        const Vec x = v1(d(rng)), l = v1(d(rng)), u = v1(d(rng));
        const double t = d(rng);
        const auto a = hamiltonian_gradient(p.model, x, l, u, t);
        const auto b = hamiltonian_gradient_fd(p.model, x, l, u, t);
        CHECK(a.H_x[0] == doctest::Approx(b.H_x[0]).epsilon(1e-6));
        CHECK(a.H_u[0] == doctest::Approx(b.H_u[0]).epsilon(1e-6));
        // dH/dlambda is the dynamics itself.
        CHECK(a.H_lambda[0] == doctest::Approx(b.H_lambda[0]).epsilon(1e-6));
        CHECK(a.H_lambda[0] == u[0]);
    }
}

TEST_CASE("validation") {
    const auto g = build_grid({UniformSpec{0.0, 1.0, 4}});
    auto p = make_lq_problem(g, 0.5, one, 1.0);
    p.alpha = 1.0;
    CHECK_THROWS_AS(sweep_solve(p), std::invalid_argument);
    p = make_lq_problem(g, 0.5, one, -1.0);
    CHECK_THROWS_AS(sweep_solve(p), std::invalid_argument);
    p = make_lq_problem(g, 0.5, one, 1.0);
    p.update = {UpdateKind::gradient, 1.0, std::nullopt};
    CHECK_THROWS_AS(sweep_solve(p), std::invalid_argument);
    p = make_lq_problem(TimeScaleGrid({0.0, 1.0}), 0.5, one, 1.0);
    CHECK_THROWS_AS(sweep_solve(p), std::invalid_argument);
    p = make_lq_problem(g, 0.5, one, 1.0);
    p.control_init = Mat::Zero(2, 1);
    CHECK_THROWS_AS(sweep_solve(p), std::invalid_argument);
}

TEST_CASE("max sweeps exceeded is reported, not thrown") {
    auto p = make_lq_problem(build_grid({UniformSpec{0.0, 1.0, 16}}), 0.5, one, 0.1);
    p.stop.max_sweeps = 2;
    const auto r = sweep_solve(p);
    CHECK_FALSE(r.converged);
    CHECK(r.sweeps_used == 2);
    CHECK(r.J_history.size() == 3);
}

TEST_CASE("trajectory CSV") {
    const auto p = make_lq_problem(TimeScaleGrid({0.0, 1.0, 2.0, 3.0}), 0.5, one, 1.0);
    const auto r = sweep_solve(p);
    std::ostringstream out;
    write_trajectory_csv(out, p, r.x, r.u, r.lambda);
    std::istringstream in(out.str());
    std::string line;
    std::getline(in, line);
    CHECK(line == "t,x,u,lambda,stationarity");
    int rows = 0;
    std::string last;
    while (std::getline(in, line)) {
        CHECK(std::count(line.begin(), line.end(), ',') == 4);
        last = line;
        ++rows;
    }
    CHECK(rows == 4);
    CHECK(last == "3,,,,");
}
