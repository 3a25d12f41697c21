#pragma once

// Finite time scales and exact delta calculus on them.
//
// A TimeScaleGrid is a strictly increasing list t_0 < ... < t_N. It is used
// literally as the time scale: sigma(t_k) = t_{k+1}, mu_k = t_{k+1} - t_k, and
// the delta integral of f over [t_i, t_j) is sum_{k=i}^{j-1} f_k mu_k. Each gap
// carries a tag saying whether it stands for genuinely scattered points or for
// a discretized dense interval; only refine() reads the tags.

#include <cstddef>
#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <variant>
#include <vector>

namespace tsfrac {

enum class GapKind : std::uint8_t { scattered, dense };

/// Inclusive index range [first, last]. Empty when first > last.
struct IndexRange {
    std::size_t first = 0;
    std::size_t last = 0;

    static IndexRange empty() { return {1, 0}; }
    bool is_empty() const { return first > last; }
    bool contains(std::size_t k) const { return k >= first && k <= last; }
    std::size_t size() const { return is_empty() ? 0 : last - first + 1; }
    bool operator==(const IndexRange&) const = default;
};

class TimeScaleGrid {
public:
    /// All gaps tagged scattered.
    explicit TimeScaleGrid(std::vector<double> points);
    TimeScaleGrid(std::vector<double> points, std::vector<GapKind> gaps);

    /// Number of points, N + 1.
    std::size_t size() const { return data_->points.size(); }
    /// Index of the last point, N.
    std::size_t last() const { return size() - 1; }

    double operator[](std::size_t k) const { return data_->points[k]; }
    double front() const { return data_->points.front(); }
    double back() const { return data_->points.back(); }

    std::span<const double> points() const { return data_->points; }
    std::span<const GapKind> gaps() const { return data_->gaps; }

    double sigma(std::size_t k) const;
    double rho(std::size_t k) const;
    /// Graininess; zero at the last point.
    double mu(std::size_t k) const;

    bool has_dense_gap() const;
    bool has_scattered_gap() const;

    /// Short human-readable summary, used in reports.
    std::string describe() const;

    bool operator==(const TimeScaleGrid& other) const;

private:
    struct Data {
        std::vector<double> points;
        std::vector<GapKind> gaps;
    };
    std::shared_ptr<const Data> data_;
};

struct JumpInfo {
    double sigma;
    double rho;
    double mu;
};

/// Forward jump, backward jump and graininess at index k, with
/// sigma(t_N) = t_N and rho(t_0) = t_0.
JumpInfo jump_ops(const TimeScaleGrid& grid, std::size_t k);

/// Real values sampled on a grid. Only entries inside `domain()` carry
/// meaning; operators whose outputs lose endpoints shrink the domain and
/// zero-fill the rest.
class GridFunction {
public:
    GridFunction(TimeScaleGrid grid, std::vector<double> values);
    GridFunction(TimeScaleGrid grid, std::vector<double> values, IndexRange domain);

    template <typename F>
    static GridFunction sample(const TimeScaleGrid& grid, F&& f) {
        std::vector<double> v(grid.size());
        for (std::size_t k = 0; k < grid.size(); ++k) {
            v[k] = f(grid[k]);
        }
        return GridFunction(grid, std::move(v));
    }

    static GridFunction constant(const TimeScaleGrid& grid, double c) {
        return GridFunction(grid, std::vector<double>(grid.size(), c));
    }

    const TimeScaleGrid& grid() const { return grid_; }
    std::span<const double> values() const { return values_; }
    double operator[](std::size_t k) const { return values_[k]; }
    std::size_t size() const { return values_.size(); }
    IndexRange domain() const { return domain_; }

    /// Same values, restricted to a smaller domain.
    GridFunction restricted(IndexRange sub) const;

    GridFunction operator+(const GridFunction& other) const;
    GridFunction operator-(const GridFunction& other) const;
    GridFunction operator*(double c) const;

private:
    TimeScaleGrid grid_;
    std::vector<double> values_;
    IndexRange domain_;
};

/// Hilger derivative (f_{k+1} - f_k) / mu_k. Loses the last index of f's domain.
GridFunction delta_derivative(const GridFunction& f);

/// Delta integral over [t_i, t_j): sum_{k=i}^{j-1} f_k mu_k. Zero when i == j.
double delta_integral(const GridFunction& f, std::size_t i, std::size_t j);

/// Delta integral over the whole grid, [t_0, t_N).
double delta_integral(const GridFunction& f);

// ---------------------------------------------------------------------------
// Grid construction

struct UniformSpec {
    double a = 0.0;
    double b = 1.0;
    std::size_t intervals = 1;
};

struct HStepSpec {
    double a = 0.0;
    double b = 1.0;
    double h = 1.0;
};

struct ExplicitSpec {
    std::vector<double> points;
    /// Optional; empty means every gap is scattered.
    std::vector<GapKind> gaps;
};

struct GridSpec;

struct UnionSpec {
    std::vector<GridSpec> pieces;
};

struct GridSpec {
    std::variant<UniformSpec, HStepSpec, ExplicitSpec, UnionSpec> kind;
};

/// uniform pieces are dense, hstep and explicit pieces scattered. Union pieces
/// are merged with duplicate points removed; a gap of the union is dense iff
/// it is a dense gap of some piece.
TimeScaleGrid build_grid(const GridSpec& spec);

/// Splits every dense gap into `factor` equal subgaps; scattered gaps are kept.
TimeScaleGrid refine(const TimeScaleGrid& grid, std::size_t factor);

struct ExtensionCheck {
    double lhs;
    double rhs;
    bool holds;
};

/// Compares the delta integral of a nondecreasing f over [t_i, t_j) with the
/// Riemann integral of its extension to the real interval. On scattered gaps
/// the extension is the step value f(t_k); on dense gaps it is the linear
/// interpolant of the samples.
ExtensionCheck extension_check(const GridFunction& f, std::size_t i, std::size_t j);

} // namespace tsfrac
