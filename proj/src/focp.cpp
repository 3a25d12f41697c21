#include "tsfrac/focp.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>
#include <stdexcept>

#include <fmt/format.h>

#include "tsfrac/error.hpp"

namespace tsfrac {

namespace {

struct Operators {
    FracWeights rl;   // left RL, acts on x
    FracWeights dual; // mu-adjoint of rl, acts on lambda
};

Operators make_operators(const FocpProblem& p) {
    const Quadrature q = p.ivp.quadrature;
    return {assemble_weights(p.grid, {p.alpha, Side::left, OperatorKind::rl_derivative, q}),
            assemble_weights(p.grid, {p.alpha, Side::right, OperatorKind::rl_derivative, q, RightBase::dual})};
}

Vec row(const Mat& m, std::size_t k) {
    return m.row(static_cast<Eigen::Index>(k)).transpose();
}

double fd_step(double v) {
    return 1e-6 * (1.0 + std::abs(v));
}

// Central-difference gradient of a scalar function of v.
template <typename F>
Vec fd_gradient(F&& g, const Vec& v) {
    Vec out(v.size());
    for (Eigen::Index i = 0; i < v.size(); ++i) {
        const double h = fd_step(v[i]);
        Vec vp = v, vm = v;
        vp[i] += h;
        vm[i] -= h;
        out[i] = (g(vp) - g(vm)) / (2.0 * h);
    }
    return out;
}

// Central-difference Jacobian of a vector function of v.
template <typename F>
Mat fd_jacobian(F&& g, const Vec& v, Eigen::Index rows) {
    Mat out(rows, v.size());
    for (Eigen::Index i = 0; i < v.size(); ++i) {
        const double h = fd_step(v[i]);
        Vec vp = v, vm = v;
        vp[i] += h;
        vm[i] -= h;
        out.col(i) = (g(vp) - g(vm)) / (2.0 * h);
    }
    return out;
}

Mat jacobian_x(const FocpModel& m, const Vec& x, const Vec& u, double t) {
    if (m.f_x) {
        return m.f_x(x, u, t);
    }
    return fd_jacobian([&](const Vec& v) { return m.f(v, u, t); }, x, m.state_dim);
}

Mat jacobian_u(const FocpModel& m, const Vec& x, const Vec& u, double t) {
    if (m.f_u) {
        return m.f_u(x, u, t);
    }
    return fd_jacobian([&](const Vec& v) { return m.f(x, v, t); }, u, m.state_dim);
}

Vec cost_x(const FocpModel& m, const Vec& x, const Vec& u, double t) {
    if (m.L_x) {
        return m.L_x(x, u, t);
    }
    return fd_gradient([&](const Vec& v) { return m.L(v, u, t); }, x);
}

Vec cost_u(const FocpModel& m, const Vec& x, const Vec& u, double t) {
    if (m.L_u) {
        return m.L_u(x, u, t);
    }
    return fd_gradient([&](const Vec& v) { return m.L(x, v, t); }, u);
}

Mat zero_traj(const TimeScaleGrid& g, Eigen::Index dim) {
    return Mat::Zero(static_cast<Eigen::Index>(g.size()), dim);
}

Mat state_with(const FocpProblem& p, const Operators& ops, const Mat& u) {
    const StepRhs rhs = [&](std::size_t k, const Vec& y) {
        return Vec(p.model.f(y, row(u, k), p.grid[k]));
    };
    return march_forward(ops.rl, p.x0, rhs, p.ivp).y;
}

Mat adjoint_with(const FocpProblem& p, const Operators& ops, const Mat& x, const Mat& u) {
    const TimeScaleGrid& g = p.grid;
    const std::size_t n = g.last();
    const std::size_t k0 = first_dynamic_index(p);
    const Eigen::Index dim = p.model.state_dim;
    Mat lambda = zero_traj(g, dim);
    std::vector<long double> acc(static_cast<std::size_t>(dim));

    for (std::size_t j = n; j-- > k0;) {
        std::fill(acc.begin(), acc.end(), 0.0L);
        for (std::size_t k = j + 1; k < n; ++k) {
            const double w = ops.dual(j, k);
            for (Eigen::Index d = 0; d < dim; ++d) {
                acc[static_cast<std::size_t>(d)] +=
                    static_cast<long double>(w) * lambda(static_cast<Eigen::Index>(k), d);
            }
        }
        const Vec xj = row(x, j), uj = row(u, j);
        const double t = g[j];
        Vec rhs = cost_x(p.model, xj, uj, t);
        for (Eigen::Index d = 0; d < dim; ++d) {
            rhs[d] -= static_cast<double>(acc[static_cast<std::size_t>(d)]);
        }
        const Mat a = ops.dual(j, j) * Mat::Identity(dim, dim) - jacobian_x(p.model, xj, uj, t).transpose();
        Vec lj;
        if (dim == 1) {
            if (a(0, 0) == 0.0) {
                throw ConvergenceError(fmt::format("adjoint step at t = {} is singular", t));
            }
            lj = rhs / a(0, 0);
        } else {
            Eigen::FullPivLU<Mat> lu(a);
            if (!lu.isInvertible()) {
                throw ConvergenceError(fmt::format("adjoint step at t = {} is singular", t));
            }
            lj = lu.solve(rhs);
        }
        if (!lj.allFinite()) {
            throw ConvergenceError(fmt::format("adjoint step at t = {} is not finite", t));
        }
        lambda.row(static_cast<Eigen::Index>(j)) = lj.transpose();
    }
    return lambda;
}

// dH/du at rows 0..N-1; row N zero.
Mat control_gradient(const FocpProblem& p, const Mat& x, const Mat& lambda, const Mat& u) {
    const std::size_t n = p.grid.last();
    Mat g = zero_traj(p.grid, p.model.control_dim);
    for (std::size_t k = 0; k < n; ++k) {
        const Vec xk = row(x, k), uk = row(u, k), lk = row(lambda, k);
        const double t = p.grid[k];
        const Vec hu = cost_u(p.model, xk, uk, t) + jacobian_u(p.model, xk, uk, t).transpose() * lk;
        g.row(static_cast<Eigen::Index>(k)) = hu.transpose();
    }
    return g;
}

double sup_rows(const Mat& m, std::size_t first, std::size_t last) {
    double r = 0.0;
    for (std::size_t k = first; k <= last; ++k) {
        r = std::max(r, m.row(static_cast<Eigen::Index>(k)).lpNorm<Eigen::Infinity>());
    }
    return r;
}

// Delta-weighted inner product of two trajectories over 0..N-1.
double mu_inner(const TimeScaleGrid& g, const Mat& a, const Mat& b) {
    long double s = 0.0L;
    for (std::size_t k = 0; k < g.last(); ++k) {
        s += static_cast<long double>(g.mu(k)) *
             a.row(static_cast<Eigen::Index>(k)).dot(b.row(static_cast<Eigen::Index>(k)));
    }
    return static_cast<double>(s);
}

void check_shape(const FocpProblem& p, const Mat& m, Eigen::Index dim, const char* what) {
    if (m.rows() != static_cast<Eigen::Index>(p.grid.size()) || m.cols() != dim) {
        throw std::invalid_argument(fmt::format("{} trajectory has shape {}x{}, expected {}x{}", what, m.rows(),
                                                m.cols(), p.grid.size(), dim));
    }
}

} // namespace

FocpProblem make_lq_problem(const TimeScaleGrid& grid, double alpha, std::function<double(double)> z, double N,
                            double x0) {
    FocpProblem p{grid, alpha, {}, Vec::Zero(1), Mat(), {}, {}, {}, std::nullopt};
    p.x0 = Vec::Constant(1, x0);
    p.update = {UpdateKind::lq, N, std::nullopt};
    p.lq = LqData{z, N};
    FocpModel& m = p.model;
    m.f = [](const Vec&, const Vec& u, double) { return u; };
    m.L = [z, N](const Vec& x, const Vec& u, double t) {
        const double e = x[0] - z(t);
        return 0.5 * (e * e + N * u[0] * u[0]);
    };
    m.f_x = [](const Vec&, const Vec&, double) { return Mat::Zero(1, 1); };
    m.f_u = [](const Vec&, const Vec&, double) { return Mat::Identity(1, 1); };
    m.L_x = [z](const Vec& x, const Vec&, double t) { return Vec::Constant(1, x[0] - z(t)); };
    m.L_u = [N](const Vec&, const Vec& u, double) { return Vec::Constant(1, N * u[0]); };
    return p;
}

void validate(const FocpProblem& p) {
    if (!(p.alpha > 0.0 && p.alpha < 1.0)) {
        throw std::invalid_argument(fmt::format("alpha must lie in (0, 1), got {}", p.alpha));
    }
    if (!p.model.f || !p.model.L) {
        throw std::invalid_argument("control problem needs dynamics f and running cost L");
    }
    if (p.model.state_dim < 1 || p.model.control_dim < 1) {
        throw std::invalid_argument("state and control dimensions must be positive");
    }
    if (p.x0.size() != p.model.state_dim) {
        throw std::invalid_argument("x0 does not match the state dimension");
    }
    if (p.grid.size() < 3) {
        throw std::invalid_argument("control problem needs a grid of at least 3 points");
    }
    if (p.control_init.size() != 0) {
        check_shape(p, p.control_init, p.model.control_dim, "control_init");
    }
    if (p.update.kind == UpdateKind::lq && !(p.update.N > 0.0)) {
        throw std::invalid_argument(fmt::format("update N must be positive, got {}", p.update.N));
    }
    if (p.update.kind == UpdateKind::gradient && !(p.update.eta && *p.update.eta > 0.0)) {
        throw std::invalid_argument("gradient update needs eta > 0");
    }
    if (p.update.eta && !(*p.update.eta > 0.0)) {
        throw std::invalid_argument(fmt::format("update eta must be positive, got {}", *p.update.eta));
    }
    if (p.lq && !(p.lq->N > 0.0)) {
        throw std::invalid_argument(fmt::format("N must be positive, got {}", p.lq->N));
    }
    if (!(p.stop.u_tol > 0.0) || p.stop.max_sweeps < 1) {
        throw std::invalid_argument("stop rule needs u_tol > 0 and max_sweeps >= 1");
    }
    validate(p.ivp);
}

double hamiltonian(const FocpModel& m, const Vec& x, const Vec& lambda, const Vec& u, double t) {
    if (!x.allFinite() || !lambda.allFinite() || !u.allFinite() || !std::isfinite(t)) {
        throw std::domain_error("hamiltonian: nonfinite input");
    }
    return m.L(x, u, t) + lambda.dot(m.f(x, u, t));
}

HamiltonianGradient hamiltonian_gradient(const FocpModel& m, const Vec& x, const Vec& lambda, const Vec& u,
                                         double t) {
    return {cost_x(m, x, u, t) + jacobian_x(m, x, u, t).transpose() * lambda,
            cost_u(m, x, u, t) + jacobian_u(m, x, u, t).transpose() * lambda, m.f(x, u, t)};
}

HamiltonianGradient hamiltonian_gradient_fd(const FocpModel& m, const Vec& x, const Vec& lambda, const Vec& u,
                                            double t) {
    return {fd_gradient([&](const Vec& v) { return hamiltonian(m, v, lambda, u, t); }, x),
            fd_gradient([&](const Vec& v) { return hamiltonian(m, x, lambda, v, t); }, u),
            fd_gradient([&](const Vec& v) { return hamiltonian(m, x, v, u, t); }, lambda)};
}

std::size_t first_dynamic_index(const FocpProblem& p) {
    return (p.x0.array() != 0.0).any() ? 1 : 0;
}

Mat solve_state(const FocpProblem& p, const Mat& u) {
    validate(p);
    check_shape(p, u, p.model.control_dim, "control");
    return state_with(p, make_operators(p), u);
}

double cost_functional(const Mat& x, const Mat& u, const FocpProblem& p) {
    const TimeScaleGrid& g = p.grid;
    const std::size_t n = g.last();
    std::vector<double> v(g.size(), 0.0);
    for (std::size_t k = 0; k < n; ++k) {
        v[k] = p.model.L(row(x, k), row(u, k), g[k]);
        if (!std::isfinite(v[k])) {
            throw std::domain_error(fmt::format("running cost is not finite at t = {}", g[k]));
        }
    }
    return delta_integral(GridFunction(g, std::move(v), {0, n - 1}), 0, n);
}

Mat solve_adjoint(const Mat& x, const Mat& u, const FocpProblem& p) {
    validate(p);
    check_shape(p, x, p.model.state_dim, "state");
    check_shape(p, u, p.model.control_dim, "control");
    return adjoint_with(p, make_operators(p), x, u);
}

GridFunction stationarity_residual(const Mat& x, const Mat& lambda, const Mat& u, const FocpProblem& p) {
    const Mat g = control_gradient(p, x, lambda, u);
    std::vector<double> v(p.grid.size(), 0.0);
    for (std::size_t k = 0; k < p.grid.last(); ++k) {
        v[k] = g.row(static_cast<Eigen::Index>(k)).lpNorm<Eigen::Infinity>();
    }
    return GridFunction(p.grid, std::move(v), {0, p.grid.last() - 1});
}

SweepReport sweep_solve(const FocpProblem& p) {
    validate(p);
    const Operators ops = make_operators(p);
    const TimeScaleGrid& g = p.grid;
    const std::size_t n = g.last();

    SweepReport rep;
    Mat u = p.control_init.size() != 0 ? p.control_init : zero_traj(g, p.model.control_dim);
    u.row(static_cast<Eigen::Index>(n)).setZero();

    Mat prev_grad, prev_scaled, prev_dir;
    for (std::size_t sweep = 1; sweep <= p.stop.max_sweeps; ++sweep) {
        const Mat x = state_with(p, ops, u);
        const Mat lambda = adjoint_with(p, ops, x, u);
        const double J = cost_functional(x, u, p);
        rep.J_history.push_back(J);

        const Mat grad = control_gradient(p, x, lambda, u);
        const Mat scaled = p.update.kind == UpdateKind::lq ? Mat(grad / p.update.N) : grad;
        Mat dir = -scaled;
        double eta = p.update.eta.value_or(1.0);
        if (!p.update.eta) {
            // Conjugate correction of the closed-form direction (Polak-Ribiere,
            // restarted when it stops descending), then the exact minimizer
            // along it of the quadratic through J, its slope and one trial point.
            if (prev_dir.size() != 0) {
                const double denom = mu_inner(g, prev_grad, prev_scaled);
                const double beta = denom > 0.0 ? std::max(0.0, mu_inner(g, grad, scaled - prev_scaled) / denom) : 0.0;
                dir += beta * prev_dir;
                if (mu_inner(g, grad, dir) >= 0.0) {
                    dir = -scaled;
                }
            }
            const double slope = mu_inner(g, grad, dir);
            if (slope < 0.0) {
                const Mat ut = u + dir;
                const double jt = cost_functional(state_with(p, ops, ut), ut, p);
                const double curv = 2.0 * (jt - J - slope);
                if (curv > 0.0 && std::isfinite(curv)) {
                    eta = -slope / curv;
                }
            }
            prev_grad = grad;
            prev_scaled = scaled;
            prev_dir = dir;
        }
        const Mat step = eta * dir;
        u += step;
        rep.sweeps_used = sweep;
        const double du = sup_rows(step, 0, n - 1);
        if (!std::isfinite(du)) {
            throw ConvergenceError(fmt::format("control update is not finite at sweep {}", sweep));
        }
        if (du < p.stop.u_tol) {
            rep.converged = true;
            break;
        }
    }

    rep.x = state_with(p, ops, u);
    rep.lambda = adjoint_with(p, ops, rep.x, u);
    rep.u = u;
    rep.J = cost_functional(rep.x, u, p);
    rep.J_history.push_back(rep.J);
    const EulerLagrangeCheck el = verify_euler_lagrange(rep.x, rep.lambda, rep.u, p);
    rep.stationarity_max = el.res_stationarity;
    rep.hamiltonian_residuals = {el.res_state, el.res_adjoint};
    return rep;
}

LqSolution lq_oracle(const FocpProblem& p) {
    validate(p);
    if (!p.lq) {
        throw std::invalid_argument("lq_oracle needs a linear-quadratic problem");
    }
    const TimeScaleGrid& g = p.grid;
    const std::size_t n = g.last();
    const std::size_t k0 = first_dynamic_index(p);
    const double N = p.lq->N;
    const FracWeights rl =
        assemble_weights(g, {p.alpha, Side::left, OperatorKind::rl_derivative, p.ivp.quadrature});

    const auto m = static_cast<Eigen::Index>(n - k0);
    Mat a = Mat::Zero(m, m);
    Vec offset = Vec::Zero(m);
    const double x_start = k0 == 1 ? p.x0[0] / (rl(0, 0) * g.mu(0)) : 0.0;
    Vec mu(m), z(m);
    for (Eigen::Index r = 0; r < m; ++r) {
        const std::size_t k = k0 + static_cast<std::size_t>(r);
        for (Eigen::Index c = 0; c <= r; ++c) {
            a(r, c) = rl(k, k0 + static_cast<std::size_t>(c));
        }
        if (k0 == 1) {
            offset[r] = -rl(k, 0) * x_start;
        }
        mu[r] = g.mu(k);
        z[r] = p.lq->z(g[k]);
    }
    // x_K = B u_K + xbar.
    const auto tri = a.triangularView<Eigen::Lower>();
    const Mat B = tri.solve(Mat::Identity(m, m));
    const Vec xbar = tri.solve(offset);
    const Mat MB = mu.asDiagonal() * B;
    Mat H = B.transpose() * MB;
    H.diagonal() += N * mu;
    const Vec rhs = MB.transpose() * (z - xbar);
    Eigen::LLT<Mat> llt(H);
    if (llt.info() != Eigen::Success) {
        throw std::runtime_error("lq_oracle: normal matrix is singular");
    }
    const Vec uk = llt.solve(rhs);
    const Vec xk = B * uk + xbar;

    LqSolution s{zero_traj(g, 1), zero_traj(g, 1), zero_traj(g, 1), 0.0};
    if (k0 == 1) {
        s.x(0, 0) = x_start;
    }
    for (Eigen::Index r = 0; r < m; ++r) {
        const auto k = static_cast<Eigen::Index>(k0) + r;
        s.u(k, 0) = uk[r];
        s.x(k, 0) = xk[r];
        s.lambda(k, 0) = -N * uk[r];
    }
    s.J = cost_functional(s.x, s.u, p);
    return s;
}

EulerLagrangeCheck verify_euler_lagrange(const Mat& x, const Mat& lambda, const Mat& u, const FocpProblem& p) {
    validate(p);
    check_shape(p, x, p.model.state_dim, "state");
    check_shape(p, lambda, p.model.state_dim, "adjoint");
    check_shape(p, u, p.model.control_dim, "control");
    const TimeScaleGrid& g = p.grid;
    const std::size_t n = g.last();
    const std::size_t k0 = first_dynamic_index(p);
    const Quadrature q = p.ivp.quadrature;

    EulerLagrangeCheck out;
    for (Eigen::Index i = 0; i < p.model.state_dim; ++i) {
        const GridFunction dx =
            frac_derivative(trajectory_component(g, x, i), p.alpha, Side::left, DerivativeKind::rl, q);
        const GridFunction dl =
            frac_derivative(trajectory_component(g, lambda, i), p.alpha, Side::right, DerivativeKind::rl, q,
                            RightBase::dual);
        for (std::size_t k = k0; k < n; ++k) {
            const HamiltonianGradient hg = hamiltonian_gradient(p.model, row(x, k), row(lambda, k), row(u, k), g[k]);
            out.res_state = std::max(out.res_state, std::abs(dx[k] - hg.H_lambda[i]));
            out.res_adjoint = std::max(out.res_adjoint, std::abs(dl[k] - hg.H_x[i]));
        }
    }
    out.res_stationarity = sup_rows(control_gradient(p, x, lambda, u), 0, n - 1);
    return out;
}

GridFunction trajectory_component(const TimeScaleGrid& grid, const Mat& m, Eigen::Index col) {
    std::vector<double> v(grid.size(), 0.0);
    for (std::size_t k = 0; k < grid.last(); ++k) {
        v[k] = m(static_cast<Eigen::Index>(k), col);
    }
    return GridFunction(grid, std::move(v), {0, grid.last() - 1});
}

void write_trajectory_csv(std::ostream& out, const FocpProblem& p, const Mat& x, const Mat& u, const Mat& lambda) {
    const TimeScaleGrid& g = p.grid;
    const std::size_t n = g.last();
    auto names = [](const char* base, Eigen::Index dim) {
        std::string s;
        for (Eigen::Index i = 0; i < dim; ++i) {
            s += dim == 1 ? fmt::format(",{}", base) : fmt::format(",{}{}", base, i + 1);
        }
        return s;
    };
    out << "t" << names("x", x.cols()) << names("u", u.cols()) << names("lambda", lambda.cols())
        << ",stationarity\n";
    const GridFunction st = stationarity_residual(x, lambda, u, p);
    for (std::size_t k = 0; k <= n; ++k) {
        std::string line = fmt::format("{:.17g}", g[k]);
        for (const Mat* m : {&x, &u, &lambda}) {
            for (Eigen::Index i = 0; i < m->cols(); ++i) {
                line += k < n ? fmt::format(",{:.17g}", (*m)(static_cast<Eigen::Index>(k), i)) : std::string(",");
            }
        }
        line += k < n ? fmt::format(",{:.17g}", st[k]) : std::string(",");
        out << line << '\n';
    }
}

} // namespace tsfrac
