#pragma once

// Fractional optimal control on a grid:
//   minimize J = int L(x, u, t) Delta t   subject to   D^a x = f(x, u, t),
// with the Hamiltonian H = L + lambda^T f and the Euler-Lagrange system
//   D^a x = dH/dlambda,   D_b^a lambda = dH/dx,   dH/du = 0.
//
// The right derivative acting on lambda is the dual (mu-adjoint) of the left
// RL operator, which is exactly what stationarity of the discrete Lagrangian
// produces. The natural terminal condition (I_b^{1-a} lambda)(t_N) = 0 is the
// empty sum. Trajectories are defined on indices 0..N-1; index N carries no
// equation. With x0 != 0 the dynamics start at k = 1 and lambda_0 = 0.

#include <cstddef>
#include <functional>
#include <iosfwd>
#include <optional>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "tsfrac/fracops.hpp"
#include "tsfrac/ivp.hpp"
#include "tsfrac/timescale.hpp"

namespace tsfrac {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

struct FocpModel {
    Eigen::Index state_dim = 1;
    Eigen::Index control_dim = 1;
    std::function<Vec(const Vec& x, const Vec& u, double t)> f;
    std::function<double(const Vec& x, const Vec& u, double t)> L;
    /// Optional closed-form partials; central differences are used otherwise.
    std::function<Mat(const Vec& x, const Vec& u, double t)> f_x; // state_dim x state_dim
    std::function<Mat(const Vec& x, const Vec& u, double t)> f_u; // state_dim x control_dim
    std::function<Vec(const Vec& x, const Vec& u, double t)> L_x;
    std::function<Vec(const Vec& x, const Vec& u, double t)> L_u;
};

enum class UpdateKind { gradient, lq };

struct ControlUpdate {
    UpdateKind kind = UpdateKind::lq;
    /// Weight of the control cost for the lq update, u <- u - dH/du / N.
    double N = 1.0;
    /// Step length. Required for gradient; for lq, unset means an exact line
    /// search along the update direction.
    std::optional<double> eta;
};

struct StopRule {
    double u_tol = 1e-10;
    std::size_t max_sweeps = 500;
};

/// Data of the linear-quadratic problem D^a x = u,
/// J = 1/2 int (x - z)^2 + N u^2 Delta t.
struct LqData {
    std::function<double(double)> z;
    double N = 1.0;
};

struct FocpProblem {
    TimeScaleGrid grid;
    double alpha = 0.5;
    FocpModel model;
    Vec x0 = Vec::Zero(1);
    /// (N + 1) x control_dim; empty means zero.
    Mat control_init;
    ControlUpdate update;
    StopRule stop;
    IvpParams ivp;
    /// Set for problems of the linear-quadratic form; enables lq_oracle.
    std::optional<LqData> lq;
};

FocpProblem make_lq_problem(const TimeScaleGrid& grid, double alpha, std::function<double(double)> z, double N,
                            double x0 = 0.0);

/// Throws std::invalid_argument on violated invariants.
void validate(const FocpProblem& p);

double hamiltonian(const FocpModel& m, const Vec& x, const Vec& lambda, const Vec& u, double t);

struct HamiltonianGradient {
    Vec H_x;
    Vec H_u;
    Vec H_lambda;
};

/// Closed-form partials where the model provides them, central differences
/// with step 1e-6 (1 + |v|) otherwise.
HamiltonianGradient hamiltonian_gradient(const FocpModel& m, const Vec& x, const Vec& lambda, const Vec& u,
                                         double t);

/// Central differences of hamiltonian() in every variable.
HamiltonianGradient hamiltonian_gradient_fd(const FocpModel& m, const Vec& x, const Vec& lambda, const Vec& u,
                                            double t);

/// First index where the dynamic equation holds: 1 when x0 != 0, else 0.
std::size_t first_dynamic_index(const FocpProblem& p);

/// State trajectory for a control, (N + 1) x state_dim; row N is zero.
Mat solve_state(const FocpProblem& p, const Mat& u);

/// Delta integral of L over [t_0, t_N).
double cost_functional(const Mat& x, const Mat& u, const FocpProblem& p);

/// Backward march for D_b^a lambda = dH/dx; row N and rows before the first
/// dynamic index are zero.
Mat solve_adjoint(const Mat& x, const Mat& u, const FocpProblem& p);

/// Sup norm of dH/du per grid point on 0..N-1.
GridFunction stationarity_residual(const Mat& x, const Mat& lambda, const Mat& u, const FocpProblem& p);

struct SweepReport {
    Mat x;
    Mat u;
    Mat lambda;
    std::vector<double> J_history;
    double J = 0.0;
    double stationarity_max = 0.0;
    /// Sup-norm defects of the state and adjoint equations.
    std::pair<double, double> hamiltonian_residuals{0.0, 0.0};
    std::size_t sweeps_used = 0;
    bool converged = false;
};

/// Forward state solve, backward adjoint solve and control update, repeated
/// until the control changes by less than stop.u_tol. Returns with
/// converged = false after stop.max_sweeps.
SweepReport sweep_solve(const FocpProblem& p);

struct LqSolution {
    Mat u;
    Mat x;
    Mat lambda;
    double J = 0.0;
};

/// Exact minimizer of the discrete linear-quadratic problem from its normal
/// equations. Requires p.lq.
LqSolution lq_oracle(const FocpProblem& p);

struct EulerLagrangeCheck {
    double res_state = 0.0;
    double res_adjoint = 0.0;
    double res_stationarity = 0.0;
    bool passes(double tol) const { return res_state <= tol && res_adjoint <= tol && res_stationarity <= tol; }
};

/// Defects of the three conditions for any candidate triple, computed with
/// the fractional operators directly.
EulerLagrangeCheck verify_euler_lagrange(const Mat& x, const Mat& lambda, const Mat& u, const FocpProblem& p);

/// Column `col` of a trajectory as a grid function on 0..N-1.
GridFunction trajectory_component(const TimeScaleGrid& grid, const Mat& m, Eigen::Index col = 0);

/// CSV with header t,x,u,lambda,stationarity (x1,x2,... for vector
/// trajectories). Index N has empty fields.
void write_trajectory_csv(std::ostream& out, const FocpProblem& p, const Mat& x, const Mat& u, const Mat& lambda);

} // namespace tsfrac
