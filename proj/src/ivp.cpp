#include "tsfrac/ivp.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include <fmt/format.h>

#include "tsfrac/error.hpp"

namespace tsfrac {

namespace {

constexpr double kEps = std::numeric_limits<double>::epsilon();

void check_alpha(double alpha) {
    if (!(alpha > 0.0 && alpha < 1.0)) {
        throw std::invalid_argument(fmt::format("alpha must lie in (0, 1), got {}", alpha));
    }
}

void check_finite(const Eigen::VectorXd& v, double t) {
    if (!v.allFinite()) {
        throw std::domain_error(fmt::format("right-hand side is not finite at t = {}", t));
    }
}

FracWeights rl_weights(const IvpProblem& p) {
    check_alpha(p.alpha);
    validate(p.params);
    if (!p.rhs) {
        throw std::invalid_argument("IVP right-hand side is empty");
    }
    return assemble_weights(p.grid, {p.alpha, Side::left, OperatorKind::rl_derivative, p.params.quadrature});
}

StepRhs scalar_step(const IvpProblem& p) {
    return [&p](std::size_t k, const Eigen::VectorXd& y) {
        return Eigen::VectorXd::Constant(1, p.rhs(p.grid[k], y[0]));
    };
}

GridFunction column(const TimeScaleGrid& grid, const Eigen::MatrixXd& y, IndexRange domain) {
    std::vector<double> v(grid.size(), 0.0);
    for (std::size_t k = domain.first; k <= domain.last; ++k) {
        v[k] = y(static_cast<Eigen::Index>(k), 0);
    }
    return GridFunction(grid, std::move(v), domain);
}

} // namespace

void validate(const IvpParams& params) {
    if (!(params.step_tol > 0.0)) {
        throw std::invalid_argument(fmt::format("step_tol must be positive, got {}", params.step_tol));
    }
    if (params.step_max_iter < 1) {
        throw std::invalid_argument("step_max_iter must be at least 1");
    }
    if (!(params.relaxation > 0.0 && params.relaxation <= 1.0)) {
        throw std::invalid_argument(fmt::format("relaxation must lie in (0, 1], got {}", params.relaxation));
    }
}

MarchResult march_forward(const FracWeights& rl, const Eigen::VectorXd& x0, const StepRhs& rhs,
                          const IvpParams& params) {
    validate(params);
    const TimeScaleGrid& grid = rl.grid();
    const std::size_t n = grid.last();
    const Eigen::Index dim = x0.size();
    const bool shifted = (x0.array() != 0.0).any();
    if (shifted && grid.size() < 3) {
        throw std::invalid_argument("a nonzero initial value needs a grid of at least 3 points");
    }

    MarchResult out;
    out.y = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(grid.size()), dim);
    out.iterations.assign(n, 0);
    if (shifted) {
        // rl(0, 0) * mu_0 is the weight of y_0 in (I^{1-a} y)(t_1).
        out.y.row(0) = x0.transpose() / (rl(0, 0) * grid.mu(0));
        out.first_dynamic = 1;
    }

    std::vector<long double> acc(static_cast<std::size_t>(dim));
    for (std::size_t k = out.first_dynamic; k < n; ++k) {
        std::fill(acc.begin(), acc.end(), 0.0L);
        for (std::size_t j = 0; j < k; ++j) {
            const double w = rl(k, j);
            for (Eigen::Index d = 0; d < dim; ++d) {
                acc[static_cast<std::size_t>(d)] += static_cast<long double>(w) * out.y(static_cast<Eigen::Index>(j), d);
            }
        }
        Eigen::VectorXd s(dim);
        for (Eigen::Index d = 0; d < dim; ++d) {
            s[d] = static_cast<double>(acc[static_cast<std::size_t>(d)]);
        }
        const double wkk = rl(k, k);
        Eigen::VectorXd y = k > 0 ? Eigen::VectorXd(out.y.row(static_cast<Eigen::Index>(k - 1)).transpose())
                                  : Eigen::VectorXd::Zero(dim);

        std::size_t it = 0;
        for (;; ++it) {
            const Eigen::VectorXd fy = rhs(k, y);
            if (it == 0) {
                check_finite(fy, grid[k]);
            } else if (!fy.allFinite()) {
                throw ConvergenceError(fmt::format("fixed point at t = {} diverged", grid[k]));
            }
            const Eigen::VectorXd r = wkk * y + s - fy;
            // Below the rounding level of the terms no iteration can do better.
            const double floor = 16.0 * kEps *
                                 ((wkk * y).lpNorm<Eigen::Infinity>() + s.lpNorm<Eigen::Infinity>() +
                                  fy.lpNorm<Eigen::Infinity>());
            if (r.lpNorm<Eigen::Infinity>() <= std::max(params.step_tol, floor)) {
                break;
            }
            if (it == params.step_max_iter) {
                throw ConvergenceError(fmt::format(
                    "fixed point at t = {} did not reach step_tol {} in {} iterations (residual {:.3e})", grid[k],
                    params.step_tol, params.step_max_iter, r.lpNorm<Eigen::Infinity>()));
            }
            const Eigen::VectorXd step = params.relaxation * r / wkk;
            y -= step;
            if (step.lpNorm<Eigen::Infinity>() <= 4.0 * kEps * std::max(1.0, y.lpNorm<Eigen::Infinity>())) {
                ++it;
                break;
            }
        }
        out.y.row(static_cast<Eigen::Index>(k)) = y.transpose();
        out.iterations[k] = it;
    }
    return out;
}

IvpSolution solve_ivp(const IvpProblem& p) {
    const FracWeights rl = rl_weights(p);
    const std::size_t n = p.grid.last();
    MarchResult m = march_forward(rl, Eigen::VectorXd::Constant(1, p.x0), scalar_step(p), p.params);
    GridFunction y = column(p.grid, m.y, {0, n - 1});
    GridFunction residual = ivp_residual(y, p);
    return {std::move(y), std::move(residual), std::move(m.iterations)};
}

GridFunction ivp_residual(const GridFunction& y, const IvpProblem& p) {
    check_alpha(p.alpha);
    const GridFunction d = frac_derivative(y, p.alpha, Side::left, DerivativeKind::rl, p.params.quadrature);
    const std::size_t first = std::max<std::size_t>(d.domain().first, p.x0 != 0.0 ? 1 : 0);
    const IndexRange dom = d.domain().is_empty() ? d.domain() : IndexRange{first, d.domain().last};
    std::vector<double> r(p.grid.size(), 0.0);
    for (std::size_t k = dom.first; !dom.is_empty() && k <= dom.last; ++k) {
        r[k] = std::abs(d[k] - p.rhs(p.grid[k], y[k]));
    }
    return GridFunction(p.grid, std::move(r), dom);
}

ExistenceProbe existence_probe(const IvpProblem& p, double y_lo, double y_hi, std::size_t samples) {
    if (samples < 1) {
        throw std::invalid_argument("existence probe needs at least one sample");
    }
    if (!std::isfinite(y_lo) || !std::isfinite(y_hi) || y_lo > y_hi) {
        throw std::invalid_argument(fmt::format("invalid y range [{}, {}]", y_lo, y_hi));
    }
    ExistenceProbe probe{0.0, true};
    for (double t : p.grid.points()) {
        for (std::size_t i = 0; i < samples; ++i) {
            const double y = samples == 1 ? 0.5 * (y_lo + y_hi)
                                          : y_lo + (y_hi - y_lo) * static_cast<double>(i) / (samples - 1);
            const double f = p.rhs(t, y);
            if (!std::isfinite(f)) {
                return {std::numeric_limits<double>::infinity(), false};
            }
            probe.M = std::max(probe.M, std::abs(f));
        }
    }
    return probe;
}

IvpSolution picard_solve(const IvpProblem& p, std::size_t sweeps) {
    if (sweeps < 1) {
        throw std::invalid_argument("picard_solve needs sweeps >= 1");
    }
    const FracWeights rl = rl_weights(p);
    const TimeScaleGrid& grid = p.grid;
    const std::size_t n = grid.last();
    const bool shifted = p.x0 != 0.0;
    if (shifted && grid.size() < 3) {
        throw std::invalid_argument("a nonzero initial value needs a grid of at least 3 points");
    }
    const std::size_t k0 = shifted ? 1 : 0;

    std::vector<double> y(grid.size(), 0.0);
    if (shifted) {
        y[0] = p.x0 / (rl(0, 0) * grid.mu(0));
    }
    std::vector<double> next = y;
    double prev_update = std::numeric_limits<double>::infinity();
    int growth = 0;

    for (std::size_t sweep = 1; sweep <= sweeps; ++sweep) {
        for (std::size_t k = k0; k < n; ++k) {
            const double f = p.rhs(grid[k], y[k]);
            if (!std::isfinite(f)) {
                throw std::domain_error(fmt::format("right-hand side is not finite at t = {}", grid[k]));
            }
            long double acc = f;
            for (std::size_t j = 0; j < k; ++j) {
                acc -= static_cast<long double>(rl(k, j)) * next[j];
            }
            next[k] = static_cast<double>(acc / rl(k, k));
        }
        double update = 0.0, scale = 1.0;
        for (std::size_t k = 0; k < n; ++k) {
            update = std::max(update, std::abs(next[k] - y[k]));
            scale = std::max(scale, std::abs(next[k]));
        }
        y = next;
        if (!std::isfinite(update)) {
            throw ConvergenceError(fmt::format("Picard iteration overflowed at sweep {}", sweep));
        }
        if (update <= p.params.step_tol * scale) {
            GridFunction sol(grid, y, {0, n - 1});
            GridFunction residual = ivp_residual(sol, p);
            return {std::move(sol), std::move(residual), std::vector<std::size_t>(n, sweep)};
        }
        growth = update > prev_update ? growth + 1 : 0;
        if (growth >= 3) {
            throw ConvergenceError(
                fmt::format("Picard iteration diverges: update grew for 3 consecutive sweeps (sweep {}, {:.3e})",
                            sweep, update));
        }
        prev_update = update;
    }
    throw ConvergenceError(fmt::format("Picard iteration did not converge in {} sweeps", sweeps));
}

} // namespace tsfrac
