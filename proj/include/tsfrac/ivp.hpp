#pragma once

// Fractional initial value problems D^a y = f(t, y), (I^{1-a} y)(t_0) = x0,
// solved by marching the lower-triangular rows of the left RL operator.
//
// Row k of D^a y reads y_0..y_k, so y_k is the only unknown at step k and is
// found by a damped fixed-point iteration. Rows exist for k = 0..N-1, hence
// y_N is not determined by the equation and solutions live on [0, N-1].
//
// With x0 != 0 the empty sum would force (I^{1-a} y)(t_0) = 0, so the initial
// condition is imposed one step later: y_0 is chosen so that
// (I^{1-a} y)(t_1) = x0 and the dynamic equation starts at k = 1.

#include <cstddef>
#include <functional>
#include <vector>

#include <Eigen/Dense>

#include "tsfrac/fracops.hpp"
#include "tsfrac/timescale.hpp"

namespace tsfrac {

struct IvpParams {
    double step_tol = 1e-12;
    std::size_t step_max_iter = 100;
    /// Damping of the per-step fixed point, in (0, 1].
    double relaxation = 1.0;
    Quadrature quadrature = Quadrature::node;
};

using ScalarRhs = std::function<double(double t, double y)>;

struct IvpProblem {
    TimeScaleGrid grid;
    double alpha = 0.5;
    ScalarRhs rhs;
    double x0 = 0.0;
    IvpParams params;
};

struct IvpSolution {
    GridFunction y;
    /// |D^a y - f(t, y)| on the indices where the equation is imposed.
    GridFunction residual;
    /// Fixed-point iterations per step (per sweep count for picard_solve).
    std::vector<std::size_t> iterations;
};

/// Throws std::invalid_argument when alpha or the parameters are out of range.
void validate(const IvpParams& params);

/// Vector-valued march used by solve_ivp and the control solver.
/// `rhs(k, y)` evaluates f at node k. Returns rows 0..N-1 of the solution
/// (row N is left at zero).
using StepRhs = std::function<Eigen::VectorXd(std::size_t k, const Eigen::VectorXd& y)>;

struct MarchResult {
    Eigen::MatrixXd y; // (N + 1) x dim
    std::vector<std::size_t> iterations;
    /// First index at which the dynamic equation is imposed (0 or 1).
    std::size_t first_dynamic = 0;
};

/// `rl` must be the assembled left RL operator of order alpha on the grid.
MarchResult march_forward(const FracWeights& rl, const Eigen::VectorXd& x0, const StepRhs& rhs,
                          const IvpParams& params);

IvpSolution solve_ivp(const IvpProblem& p);

/// |D^a y(t_k) - f(t_k, y_k)| on every index where the equation is imposed
/// and y's domain allows evaluation.
GridFunction ivp_residual(const GridFunction& y, const IvpProblem& p);

struct ExistenceProbe {
    double M;
    bool bounded;
};

/// Max |f| over the lattice (grid points) x (samples values spread evenly over
/// [y_lo, y_hi], endpoints included when samples >= 2). Advisory only.
ExistenceProbe existence_probe(const IvpProblem& p, double y_lo, double y_hi, std::size_t samples);

/// Global fixed point y <- A^{-1} f(., y), with A the triangular RL operator.
/// Stops when the sup-norm update drops below params.step_tol; throws
/// ConvergenceError after `sweeps` sweeps or when the update grows for three
/// consecutive sweeps.
IvpSolution picard_solve(const IvpProblem& p, std::size_t sweeps);

} // namespace tsfrac
