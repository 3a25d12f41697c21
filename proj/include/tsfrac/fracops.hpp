#pragma once

// Riemann-Liouville fractional integrals and Riemann-Liouville / Caputo
// fractional derivatives on a TimeScaleGrid.
//
// Every operator is linear and triangular: output k depends on inputs with
// index <= k (left) or >= k (right). Weights are produced entry by entry, so
// the same operator can be applied directly in O(N^2) without storing a
// matrix, or assembled into a FracWeights table for inspection and dense
// linear algebra.
//
// Quadrature::node is the literal delta integral on the grid-as-time-scale,
//   (I^a h)(t_k) = sum_{j<k} (t_k - t_j)^{a-1} / Gamma(a) h_j mu_j.
// Quadrature::cell_avg integrates the kernel exactly over each cell
// (product integration), which converges faster towards T = R.
//
// Right-sided operators need a convention for the cell starting at t_k itself,
// where the node kernel (s - t)^{a-1} is singular:
//   first_cell    the exact cell average mu_k^a / Gamma(a+1) h_k (default),
//   strict_shift  the cell is dropped; sum over s in [sigma(t), b),
//   dual          the adjoint of the matching left operator in the
//                 mu-weighted inner product, W_right = M^{-1} W_left^T M.
// strict_shift makes the integral part of integration by parts an exact
// finite-sum identity; dual does the same for the derivative part and is what
// the optimal-control adjoint uses. In cell_avg mode the cell is integrated
// exactly, so first_cell and strict_shift coincide.

#include <cstddef>
#include <iosfwd>
#include <vector>

#include "tsfrac/timescale.hpp"

namespace tsfrac {

enum class Side { left, right };
enum class OperatorKind { integral, rl_derivative, caputo_derivative };
enum class Quadrature { node, cell_avg };
enum class RightBase { first_cell, strict_shift, dual };

const char* to_string(Side s);
const char* to_string(OperatorKind k);
const char* to_string(Quadrature q);
const char* to_string(RightBase r);

/// Gamma function for x > 0.
double gamma_fn(double x);
/// Euler beta function via B(x, y) = Gamma(x) Gamma(y) / Gamma(x + y).
double beta_fn(double x, double y);

struct OperatorSpec {
    /// Order of the operator. The public entry points require 0 < alpha < 1;
    /// integrals of any positive order are available through
    /// fractional_integral_of_order.
    double alpha = 0.5;
    Side side = Side::left;
    OperatorKind kind = OperatorKind::integral;
    Quadrature quadrature = Quadrature::node;
    RightBase right_base = RightBase::first_cell;
};

/// Entry-level view of one operator on one grid.
class OperatorStencil {
public:
    OperatorStencil(TimeScaleGrid grid, OperatorSpec spec);

    const TimeScaleGrid& grid() const { return grid_; }
    const OperatorSpec& spec() const { return spec_; }

    /// Output indices at which the operator is defined.
    IndexRange rows() const { return rows_; }
    /// Input indices that row k reads (may be empty).
    IndexRange support(std::size_t k) const;
    /// Weight of input j in output k; zero outside support(k).
    double weight(std::size_t k, std::size_t j) const;
    /// Output k for input h. Caputo rows (other than the dual convention) are
    /// summed as the integral of the forward differences of h, so constants
    /// map to exactly zero.
    double apply_row(std::size_t k, const GridFunction& h) const;

private:
    double left_entry(std::size_t k, std::size_t j) const;
    double left_integral_entry(std::size_t k, std::size_t j) const;
    double right_integral_entry(std::size_t k, std::size_t j) const;
    double derivative_entry(Side side, std::size_t k, std::size_t j) const;
    double caputo_entry(Side side, std::size_t k, std::size_t i) const;
    double primitive_entry(Side side, std::size_t k, std::size_t j) const;

    TimeScaleGrid grid_;
    OperatorSpec spec_;
    IndexRange rows_;
    double integral_order_;
    double inv_gamma_;
    double inv_gamma_plus_one_;
};

/// Dense table of operator weights, W(k, j) for output k and input j.
class FracWeights {
public:
    FracWeights(TimeScaleGrid grid, OperatorSpec spec, IndexRange domain,
                std::vector<double> weights);

    const TimeScaleGrid& grid() const { return grid_; }
    const OperatorSpec& spec() const { return spec_; }
    IndexRange domain() const { return domain_; }
    std::size_t size() const { return grid_.size(); }

    double operator()(std::size_t k, std::size_t j) const { return weights_[k * size() + j]; }

    GridFunction apply(const GridFunction& h) const;

    /// Nonzero entries as CSV with header "k,j,w", row-major.
    void write_csv(std::ostream& out) const;

private:
    TimeScaleGrid grid_;
    OperatorSpec spec_;
    IndexRange domain_;
    std::vector<double> weights_;
};

FracWeights assemble_weights(const TimeScaleGrid& grid, const OperatorSpec& spec);

/// Applies any operator spec directly. Output domain is every valid row whose
/// support lies inside h's domain.
GridFunction apply_operator(const OperatorSpec& spec, const GridFunction& h);

GridFunction frac_integral(const GridFunction& h, double alpha, Side side,
                           Quadrature quadrature = Quadrature::node,
                           RightBase right_base = RightBase::first_cell);

/// Integral of arbitrary positive order; used where orders add up past one.
GridFunction fractional_integral_of_order(const GridFunction& h, double order, Side side,
                                          Quadrature quadrature = Quadrature::node,
                                          RightBase right_base = RightBase::first_cell);

enum class DerivativeKind { rl, caputo };

GridFunction frac_derivative(const GridFunction& h, double alpha, Side side, DerivativeKind kind,
                             Quadrature quadrature = Quadrature::node,
                             RightBase right_base = RightBase::first_cell);

} // namespace tsfrac
