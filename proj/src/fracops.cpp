#include "tsfrac/fracops.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>
#include <stdexcept>

#include <fmt/format.h>

namespace tsfrac {

const char* to_string(Side s) {
    return s == Side::left ? "left" : "right";
}

const char* to_string(OperatorKind k) {
    switch (k) {
    case OperatorKind::integral: return "integral";
    case OperatorKind::rl_derivative: return "rl";
    case OperatorKind::caputo_derivative: return "caputo";
    }
    return "?";
}

const char* to_string(Quadrature q) {
    return q == Quadrature::node ? "node" : "cell_avg";
}

const char* to_string(RightBase r) {
    switch (r) {
    case RightBase::first_cell: return "first_cell";
    case RightBase::strict_shift: return "strict_shift";
    case RightBase::dual: return "dual";
    }
    return "?";
}

double gamma_fn(double x) {
    if (!(x > 0.0) || !std::isfinite(x)) {
        throw std::domain_error(fmt::format("gamma_fn requires a finite x > 0 (got {})", x));
    }
    return std::tgamma(x);
}

double beta_fn(double x, double y) {
    if (!(x > 0.0) || !(y > 0.0) || !std::isfinite(x) || !std::isfinite(y)) {
        throw std::domain_error(fmt::format("beta_fn requires x, y > 0 (got {}, {})", x, y));
    }
    if (x + y < 170.0) {
        return std::tgamma(x) * std::tgamma(y) / std::tgamma(x + y);
    }
    return std::exp(std::lgamma(x) + std::lgamma(y) - std::lgamma(x + y));
}

namespace {

// d^e / g where g = Gamma(...) has been folded in as inv_g = 1/g. Falls back to
// log space when the plain power leaves the representable range.
double scaled_power(double d, double e, double inv_g) {
    const double p = std::pow(d, e);
    if (std::isfinite(p) && p != 0.0) {
        return p * inv_g;
    }
    return std::exp(e * std::log(d) + std::log(inv_g));
}

void check_order(double alpha) {
    if (!(alpha > 0.0 && alpha < 1.0)) {
        throw std::invalid_argument(fmt::format("fractional order must lie in (0, 1), got {}", alpha));
    }
}

} // namespace

// ---------------------------------------------------------------------------

OperatorStencil::OperatorStencil(TimeScaleGrid grid, OperatorSpec spec)
    : grid_(std::move(grid)), spec_(spec) {
    if (!(spec_.alpha > 0.0) || !std::isfinite(spec_.alpha)) {
        throw std::invalid_argument(fmt::format("operator order must be positive, got {}", spec_.alpha));
    }
    if (spec_.kind != OperatorKind::integral) {
        check_order(spec_.alpha);
    }
    if (spec_.kind == OperatorKind::caputo_derivative && grid_.size() < 3) {
        throw std::invalid_argument("Caputo derivative needs a grid of at least 3 points");
    }
    integral_order_ = spec_.kind == OperatorKind::integral ? spec_.alpha : 1.0 - spec_.alpha;
    inv_gamma_ = 1.0 / std::tgamma(integral_order_);
    inv_gamma_plus_one_ = 1.0 / std::tgamma(integral_order_ + 1.0);

    const std::size_t n = grid_.last();
    const bool dual = spec_.side == Side::right && spec_.right_base == RightBase::dual;
    switch (spec_.kind) {
    case OperatorKind::integral:
        rows_ = {0, n};
        break;
    case OperatorKind::rl_derivative:
        rows_ = {0, n - 1};
        break;
    case OperatorKind::caputo_derivative:
        rows_ = dual ? IndexRange{0, n - 1} : IndexRange{0, n};
        break;
    }
}

IndexRange OperatorStencil::support(std::size_t k) const {
    const std::size_t n = grid_.last();
    if (!rows_.contains(k)) {
        return IndexRange::empty();
    }
    if (spec_.side == Side::left) {
        switch (spec_.kind) {
        case OperatorKind::integral:
            return k == 0 ? IndexRange::empty() : IndexRange{0, k - 1};
        case OperatorKind::rl_derivative:
            return {0, k};
        case OperatorKind::caputo_derivative:
            return k == 0 ? IndexRange::empty() : IndexRange{0, k};
        }
    }
    if (spec_.right_base == RightBase::dual) {
        // Column k of the left operator, restricted to rows 0..N-1.
        if (spec_.kind == OperatorKind::integral) {
            return k + 1 <= n - 1 ? IndexRange{k + 1, n - 1} : IndexRange::empty();
        }
        return {k, n - 1};
    }
    const bool strict = spec_.quadrature == Quadrature::node &&
                        spec_.right_base == RightBase::strict_shift;
    const std::size_t lo = strict ? k + 1 : k;
    switch (spec_.kind) {
    case OperatorKind::integral:
        return (k < n && lo <= n - 1) ? IndexRange{lo, n - 1} : IndexRange::empty();
    case OperatorKind::rl_derivative:
        return lo <= n - 1 ? IndexRange{lo, n - 1} : IndexRange::empty();
    case OperatorKind::caputo_derivative:
        if (k == n) {
            return IndexRange::empty();
        }
        return lo <= n - 1 ? IndexRange{lo, n} : IndexRange::empty();
    }
    return IndexRange::empty();
}

double OperatorStencil::left_integral_entry(std::size_t k, std::size_t j) const {
    if (j >= k) {
        return 0.0;
    }
    const double o = integral_order_;
    const double tk = grid_[k];
    if (spec_.quadrature == Quadrature::node) {
        return scaled_power(tk - grid_[j], o - 1.0, inv_gamma_) * grid_.mu(j);
    }
    const double far = scaled_power(tk - grid_[j], o, inv_gamma_plus_one_);
    const double near = j + 1 == k ? 0.0 : scaled_power(tk - grid_[j + 1], o, inv_gamma_plus_one_);
    return far - near;
}

double OperatorStencil::right_integral_entry(std::size_t k, std::size_t j) const {
    const std::size_t n = grid_.last();
    if (j < k || j >= n) {
        return 0.0;
    }
    const double o = integral_order_;
    const double tk = grid_[k];
    if (spec_.quadrature == Quadrature::node) {
        if (j == k) {
            return spec_.right_base == RightBase::strict_shift
                       ? 0.0
                       : scaled_power(grid_.mu(k), o, inv_gamma_plus_one_);
        }
        return scaled_power(grid_[j] - tk, o - 1.0, inv_gamma_) * grid_.mu(j);
    }
    const double far = scaled_power(grid_[j + 1] - tk, o, inv_gamma_plus_one_);
    const double near = j == k ? 0.0 : scaled_power(grid_[j] - tk, o, inv_gamma_plus_one_);
    return far - near;
}

double OperatorStencil::primitive_entry(Side side, std::size_t k, std::size_t j) const {
    return side == Side::left ? left_integral_entry(k, j) : right_integral_entry(k, j);
}

double OperatorStencil::derivative_entry(Side side, std::size_t k, std::size_t j) const {
    // Delta derivative of the (1 - alpha)-integral, negated on the right.
    const double diff = primitive_entry(side, k + 1, j) - primitive_entry(side, k, j);
    const double d = diff / grid_.mu(k);
    return side == Side::left ? d : -d;
}

double OperatorStencil::caputo_entry(Side side, std::size_t k, std::size_t i) const {
    // (1 - alpha)-integral of the forward difference quotient of h.
    const std::size_t n = grid_.last();
    double w = 0.0;
    if (i >= 1) {
        w += primitive_entry(side, k, i - 1) / grid_.mu(i - 1);
    }
    if (i <= n - 1) {
        w -= primitive_entry(side, k, i) / grid_.mu(i);
    }
    return side == Side::left ? w : -w;
}

double OperatorStencil::left_entry(std::size_t k, std::size_t j) const {
    switch (spec_.kind) {
    case OperatorKind::integral:
        return primitive_entry(Side::left, k, j);
    case OperatorKind::rl_derivative:
        return derivative_entry(Side::left, k, j);
    case OperatorKind::caputo_derivative:
        return caputo_entry(Side::left, k, j);
    }
    return 0.0;
}

double OperatorStencil::weight(std::size_t k, std::size_t j) const {
    const IndexRange s = support(k);
    if (!s.contains(j)) {
        return 0.0;
    }
    if (spec_.side == Side::left) {
        return left_entry(k, j);
    }
    switch (spec_.right_base) {
    case RightBase::dual:
        // Entry (j, k) of the left operator of the same kind, mu-transposed.
        return left_entry(j, k) * grid_.mu(j) / grid_.mu(k);
    default:
        break;
    }
    switch (spec_.kind) {
    case OperatorKind::integral:
        return right_integral_entry(k, j);
    case OperatorKind::rl_derivative:
        return derivative_entry(Side::right, k, j);
    case OperatorKind::caputo_derivative:
        return caputo_entry(Side::right, k, j);
    }
    return 0.0;
}

double OperatorStencil::apply_row(std::size_t k, const GridFunction& h) const {
    const IndexRange s = support(k);
    if (s.is_empty()) {
        return 0.0;
    }
    long double acc = 0.0L;
    const bool dual = spec_.side == Side::right && spec_.right_base == RightBase::dual;
    if (spec_.kind == OperatorKind::caputo_derivative && !dual) {
        for (std::size_t j = s.first; j < s.last; ++j) {
            const double dh = (h[j + 1] - h[j]) / grid_.mu(j);
            acc += static_cast<long double>(primitive_entry(spec_.side, k, j)) * dh;
        }
        return static_cast<double>(spec_.side == Side::left ? acc : -acc);
    }
    for (std::size_t j = s.first; j <= s.last; ++j) {
        acc += static_cast<long double>(weight(k, j)) * h[j];
    }
    return static_cast<double>(acc);
}

// ---------------------------------------------------------------------------

FracWeights::FracWeights(TimeScaleGrid grid, OperatorSpec spec, IndexRange domain,
                         std::vector<double> weights)
    : grid_(std::move(grid)), spec_(spec), domain_(domain), weights_(std::move(weights)) {
    if (weights_.size() != grid_.size() * grid_.size()) {
        throw std::invalid_argument("weight table size does not match the grid");
    }
}

GridFunction FracWeights::apply(const GridFunction& h) const {
    if (!(h.grid() == grid_)) {
        throw std::invalid_argument("weights and function live on different grids");
    }
    const std::size_t n = size();
    std::vector<double> out(n, 0.0);
    for (std::size_t k = domain_.first; !domain_.is_empty() && k <= domain_.last; ++k) {
        long double acc = 0.0L;
        for (std::size_t j = 0; j < n; ++j) {
            const double w = (*this)(k, j);
            if (w != 0.0) {
                acc += static_cast<long double>(w) * h[j];
            }
        }
        out[k] = static_cast<double>(acc);
    }
    return GridFunction(grid_, std::move(out), domain_);
}

void FracWeights::write_csv(std::ostream& out) const {
    out << "k,j,w\n";
    const std::size_t n = size();
    for (std::size_t k = 0; k < n; ++k) {
        for (std::size_t j = 0; j < n; ++j) {
            const double w = (*this)(k, j);
            if (w != 0.0) {
                out << fmt::format("{},{},{:.17g}\n", k, j, w);
            }
        }
    }
}

FracWeights assemble_weights(const TimeScaleGrid& grid, const OperatorSpec& spec) {
    if (spec.kind == OperatorKind::integral) {
        check_order(spec.alpha);
    }
    OperatorStencil stencil(grid, spec);
    const std::size_t n = grid.size();
    std::vector<double> w(n * n, 0.0);
    const IndexRange rows = stencil.rows();
    for (std::size_t k = rows.first; k <= rows.last; ++k) {
        const IndexRange s = stencil.support(k);
        for (std::size_t j = s.first; !s.is_empty() && j <= s.last; ++j) {
            w[k * n + j] = stencil.weight(k, j);
        }
    }
    return FracWeights(grid, spec, rows, std::move(w));
}

GridFunction apply_operator(const OperatorSpec& spec, const GridFunction& h) {
    const TimeScaleGrid& grid = h.grid();
    OperatorStencil stencil(grid, spec);
    const IndexRange rows = stencil.rows();
    const IndexRange in = h.domain();

    // Longest run of rows whose support lies inside the input domain.
    IndexRange best = IndexRange::empty();
    std::size_t run_start = 0;
    bool in_run = false;
    for (std::size_t k = rows.first; k <= rows.last; ++k) {
        const IndexRange s = stencil.support(k);
        const bool ok = s.is_empty() || (in.contains(s.first) && in.contains(s.last));
        if (ok && !in_run) {
            run_start = k;
            in_run = true;
        }
        if (in_run && (!ok || k == rows.last)) {
            const std::size_t run_end = ok ? k : k - 1;
            if (best.is_empty() || run_end - run_start + 1 > best.size()) {
                best = {run_start, run_end};
            }
            in_run = false;
        }
    }

    std::vector<double> out(grid.size(), 0.0);
    for (std::size_t k = best.first; !best.is_empty() && k <= best.last; ++k) {
        out[k] = stencil.apply_row(k, h);
    }
    return GridFunction(grid, std::move(out), best);
}

GridFunction frac_integral(const GridFunction& h, double alpha, Side side, Quadrature quadrature,
                           RightBase right_base) {
    check_order(alpha);
    return apply_operator({alpha, side, OperatorKind::integral, quadrature, right_base}, h);
}

GridFunction fractional_integral_of_order(const GridFunction& h, double order, Side side,
                                          Quadrature quadrature, RightBase right_base) {
    return apply_operator({order, side, OperatorKind::integral, quadrature, right_base}, h);
}

GridFunction frac_derivative(const GridFunction& h, double alpha, Side side, DerivativeKind kind,
                             Quadrature quadrature, RightBase right_base) {
    check_order(alpha);
    const OperatorKind k =
        kind == DerivativeKind::rl ? OperatorKind::rl_derivative : OperatorKind::caputo_derivative;
    return apply_operator({alpha, side, k, quadrature, right_base}, h);
}

} // namespace tsfrac
