#include "tsfrac/timescale.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include <fmt/format.h>

namespace tsfrac {

namespace {

void validate_points(const std::vector<double>& points, const std::vector<GapKind>& gaps) {
    if (points.size() < 2) {
        throw std::invalid_argument("time scale grid needs at least 2 points");
    }
    if (gaps.size() + 1 != points.size()) {
        throw std::invalid_argument(fmt::format("grid has {} points but {} gap tags (expected {})",
                                                points.size(), gaps.size(), points.size() - 1));
    }
    for (std::size_t k = 0; k < points.size(); ++k) {
        if (!std::isfinite(points[k])) {
            throw std::invalid_argument(fmt::format("grid point {} is not finite", k));
        }
        if (k > 0 && !(points[k] > points[k - 1])) {
            throw std::invalid_argument(
                fmt::format("grid points must be strictly increasing (index {})", k));
        }
    }
}

} // namespace

TimeScaleGrid::TimeScaleGrid(std::vector<double> points)
    : TimeScaleGrid(points, std::vector<GapKind>(points.empty() ? 0 : points.size() - 1,
                                                 GapKind::scattered)) {}

TimeScaleGrid::TimeScaleGrid(std::vector<double> points, std::vector<GapKind> gaps) {
    validate_points(points, gaps);
    data_ = std::make_shared<const Data>(Data{std::move(points), std::move(gaps)});
}

double TimeScaleGrid::sigma(std::size_t k) const {
    return data_->points[std::min(k + 1, last())];
}

double TimeScaleGrid::rho(std::size_t k) const {
    return data_->points[k == 0 ? 0 : k - 1];
}

double TimeScaleGrid::mu(std::size_t k) const {
    return k >= last() ? 0.0 : data_->points[k + 1] - data_->points[k];
}

bool TimeScaleGrid::has_dense_gap() const {
    return std::find(data_->gaps.begin(), data_->gaps.end(), GapKind::dense) != data_->gaps.end();
}

bool TimeScaleGrid::has_scattered_gap() const {
    return std::find(data_->gaps.begin(), data_->gaps.end(), GapKind::scattered) !=
           data_->gaps.end();
}

std::string TimeScaleGrid::describe() const {
    const auto dense = std::count(data_->gaps.begin(), data_->gaps.end(), GapKind::dense);
    const auto scattered = static_cast<std::ptrdiff_t>(data_->gaps.size()) - dense;
    return fmt::format("{} points on [{}, {}] ({} dense gaps, {} scattered gaps)", size(), front(),
                       back(), dense, scattered);
}

bool TimeScaleGrid::operator==(const TimeScaleGrid& other) const {
    if (data_ == other.data_) {
        return true;
    }
    return data_->points == other.data_->points && data_->gaps == other.data_->gaps;
}

JumpInfo jump_ops(const TimeScaleGrid& grid, std::size_t k) {
    if (k > grid.last()) {
        throw std::out_of_range(fmt::format("index {} outside grid of {} points", k, grid.size()));
    }
    return {grid.sigma(k), grid.rho(k), grid.mu(k)};
}

// ---------------------------------------------------------------------------

GridFunction::GridFunction(TimeScaleGrid grid, std::vector<double> values)
    : GridFunction(grid, std::move(values), IndexRange{0, grid.last()}) {}

GridFunction::GridFunction(TimeScaleGrid grid, std::vector<double> values, IndexRange domain)
    : grid_(std::move(grid)), values_(std::move(values)), domain_(domain) {
    if (values_.size() != grid_.size()) {
        throw std::invalid_argument(fmt::format("grid function has {} values for {} grid points",
                                                values_.size(), grid_.size()));
    }
    if (!domain_.is_empty() && domain_.last > grid_.last()) {
        throw std::invalid_argument("grid function domain exceeds the grid");
    }
    for (std::size_t k = 0; k < values_.size(); ++k) {
        if (!domain_.contains(k)) {
            values_[k] = 0.0;
        } else if (!std::isfinite(values_[k])) {
            throw std::invalid_argument(fmt::format("grid function value at index {} is not finite", k));
        }
    }
}

GridFunction GridFunction::restricted(IndexRange sub) const {
    if (!sub.is_empty() && !(domain_.contains(sub.first) && domain_.contains(sub.last))) {
        throw std::invalid_argument("restriction must lie inside the current domain");
    }
    return GridFunction(grid_, values_, sub);
}

namespace {

IndexRange intersect(IndexRange a, IndexRange b) {
    if (a.is_empty() || b.is_empty()) {
        return IndexRange::empty();
    }
    IndexRange r{std::max(a.first, b.first), std::min(a.last, b.last)};
    return r.is_empty() ? IndexRange::empty() : r;
}

} // namespace

GridFunction GridFunction::operator+(const GridFunction& other) const {
    if (!(grid_ == other.grid_)) {
        throw std::invalid_argument("grid functions live on different grids");
    }
    std::vector<double> v(values_.size());
    for (std::size_t k = 0; k < v.size(); ++k) {
        v[k] = values_[k] + other.values_[k];
    }
    return GridFunction(grid_, std::move(v), intersect(domain_, other.domain_));
}

GridFunction GridFunction::operator-(const GridFunction& other) const {
    return *this + other * -1.0;
}

GridFunction GridFunction::operator*(double c) const {
    std::vector<double> v(values_);
    for (double& x : v) {
        x *= c;
    }
    return GridFunction(grid_, std::move(v), domain_);
}

GridFunction delta_derivative(const GridFunction& f) {
    const IndexRange dom = f.domain();
    if (dom.size() < 2) {
        throw std::invalid_argument("delta derivative needs a domain of at least 2 points");
    }
    const TimeScaleGrid& grid = f.grid();
    std::vector<double> v(grid.size(), 0.0);
    for (std::size_t k = dom.first; k < dom.last; ++k) {
        v[k] = (f[k + 1] - f[k]) / grid.mu(k);
    }
    return GridFunction(grid, std::move(v), IndexRange{dom.first, dom.last - 1});
}

double delta_integral(const GridFunction& f, std::size_t i, std::size_t j) {
    const TimeScaleGrid& grid = f.grid();
    if (i > j || j > grid.last()) {
        throw std::out_of_range(
            fmt::format("delta integral bounds [{}, {}) invalid for {} points", i, j, grid.size()));
    }
    if (i == j) {
        return 0.0;
    }
    if (!(f.domain().contains(i) && f.domain().contains(j - 1))) {
        throw std::invalid_argument(
            fmt::format("delta integral over [{}, {}) leaves the function's domain", i, j));
    }
    long double sum = 0.0L;
    for (std::size_t k = i; k < j; ++k) {
        sum += static_cast<long double>(f[k]) * grid.mu(k);
    }
    return static_cast<double>(sum);
}

double delta_integral(const GridFunction& f) {
    return delta_integral(f, 0, f.grid().last());
}

// ---------------------------------------------------------------------------

namespace {

struct Piece {
    std::vector<double> points;
    std::vector<GapKind> gaps;
};

void check_finite(double v, const char* what) {
    if (!std::isfinite(v)) {
        throw std::invalid_argument(fmt::format("grid spec: {} is not finite", what));
    }
}

Piece build_piece(const GridSpec& spec);

Piece build_uniform(const UniformSpec& s) {
    check_finite(s.a, "a");
    check_finite(s.b, "b");
    if (s.intervals == 0) {
        throw std::invalid_argument("grid spec: uniform needs a positive interval count");
    }
    if (!(s.b > s.a)) {
        throw std::invalid_argument("grid spec: uniform needs b > a");
    }
    Piece p;
    p.points.resize(s.intervals + 1);
    for (std::size_t k = 0; k <= s.intervals; ++k) {
        p.points[k] = s.a + (s.b - s.a) * static_cast<double>(k) / static_cast<double>(s.intervals);
    }
    p.points.back() = s.b;
    p.gaps.assign(s.intervals, GapKind::dense);
    return p;
}

Piece build_hstep(const HStepSpec& s) {
    check_finite(s.a, "a");
    check_finite(s.b, "b");
    check_finite(s.h, "h");
    if (!(s.h > 0.0)) {
        throw std::invalid_argument("grid spec: hstep needs h > 0");
    }
    if (!(s.b > s.a)) {
        throw std::invalid_argument("grid spec: hstep needs b > a");
    }
    const double steps = (s.b - s.a) / s.h;
    const double n = std::round(steps);
    if (std::abs(n - steps) > 1e-9 * std::max(1.0, steps)) {
        throw std::invalid_argument(
            fmt::format("grid spec: hstep length {} is not a multiple of h = {}", s.b - s.a, s.h));
    }
    const auto count = static_cast<std::size_t>(n);
    Piece p;
    p.points.resize(count + 1);
    for (std::size_t k = 0; k <= count; ++k) {
        p.points[k] = s.a + static_cast<double>(k) * s.h;
    }
    p.points.back() = s.b;
    p.gaps.assign(count, GapKind::scattered);
    return p;
}

Piece build_explicit(const ExplicitSpec& s) {
    if (s.points.empty()) {
        throw std::invalid_argument("grid spec: explicit point list is empty");
    }
    for (double v : s.points) {
        check_finite(v, "explicit point");
    }
    for (std::size_t k = 1; k < s.points.size(); ++k) {
        if (!(s.points[k] > s.points[k - 1])) {
            throw std::invalid_argument("grid spec: explicit points must be strictly increasing");
        }
    }
    Piece p{s.points, s.gaps};
    if (p.gaps.empty()) {
        p.gaps.assign(p.points.size() - 1, GapKind::scattered);
    } else if (p.gaps.size() + 1 != p.points.size()) {
        throw std::invalid_argument("grid spec: explicit tags must number points - 1");
    }
    return p;
}

double merge_tolerance(double lo, double hi) {
    return 1e-12 * std::max({1.0, std::abs(lo), std::abs(hi)});
}

Piece build_union(const UnionSpec& s) {
    if (s.pieces.empty()) {
        throw std::invalid_argument("grid spec: union has no pieces");
    }
    std::vector<Piece> pieces;
    pieces.reserve(s.pieces.size());
    for (const GridSpec& sub : s.pieces) {
        pieces.push_back(build_piece(sub));
    }
    std::sort(pieces.begin(), pieces.end(),
              [](const Piece& a, const Piece& b) { return a.points.front() < b.points.front(); });

    double lo = pieces.front().points.front();
    double hi = lo;
    for (const Piece& p : pieces) {
        hi = std::max(hi, p.points.back());
    }
    const double tol = merge_tolerance(lo, hi);

    // Pieces may touch or overlap only where their points coincide.
    for (std::size_t i = 0; i < pieces.size(); ++i) {
        for (std::size_t j = i + 1; j < pieces.size(); ++j) {
            const double ov_lo = pieces[j].points.front();
            const double ov_hi = std::min(pieces[i].points.back(), pieces[j].points.back());
            if (ov_hi - ov_lo <= tol) {
                continue;
            }
            auto inside = [&](const Piece& p) {
                std::vector<double> v;
                for (double x : p.points) {
                    if (x >= ov_lo - tol && x <= ov_hi + tol) {
                        v.push_back(x);
                    }
                }
                return v;
            };
            const auto a = inside(pieces[i]);
            const auto b = inside(pieces[j]);
            bool same = a.size() == b.size();
            for (std::size_t k = 0; same && k < a.size(); ++k) {
                same = std::abs(a[k] - b[k]) <= tol;
            }
            if (!same) {
                throw std::invalid_argument(fmt::format(
                    "grid spec: union pieces overlap on [{}, {}] with inconsistent points", ov_lo,
                    ov_hi));
            }
        }
    }

    std::vector<double> all;
    for (const Piece& p : pieces) {
        all.insert(all.end(), p.points.begin(), p.points.end());
    }
    std::sort(all.begin(), all.end());
    std::vector<double> merged;
    for (double x : all) {
        if (merged.empty() || x - merged.back() > tol) {
            merged.push_back(x);
        }
    }

    auto locate = [&](double x) {
        auto it = std::lower_bound(merged.begin(), merged.end(), x - tol);
        return static_cast<std::size_t>(it - merged.begin());
    };
    Piece out;
    out.gaps.assign(merged.empty() ? 0 : merged.size() - 1, GapKind::scattered);
    for (const Piece& p : pieces) {
        for (std::size_t k = 0; k + 1 < p.points.size(); ++k) {
            if (p.gaps[k] != GapKind::dense) {
                continue;
            }
            const std::size_t i = locate(p.points[k]);
            const std::size_t j = locate(p.points[k + 1]);
            if (j == i + 1) {
                out.gaps[i] = GapKind::dense;
            }
        }
    }
    out.points = std::move(merged);
    return out;
}

Piece build_piece(const GridSpec& spec) {
    return std::visit(
        [](const auto& s) -> Piece {
            using T = std::decay_t<decltype(s)>;
            if constexpr (std::is_same_v<T, UniformSpec>) {
                return build_uniform(s);
            } else if constexpr (std::is_same_v<T, HStepSpec>) {
                return build_hstep(s);
            } else if constexpr (std::is_same_v<T, ExplicitSpec>) {
                return build_explicit(s);
            } else {
                return build_union(s);
            }
        },
        spec.kind);
}

} // namespace

TimeScaleGrid build_grid(const GridSpec& spec) {
    Piece p = build_piece(spec);
    return TimeScaleGrid(std::move(p.points), std::move(p.gaps));
}

TimeScaleGrid refine(const TimeScaleGrid& grid, std::size_t factor) {
    if (factor < 2) {
        throw std::invalid_argument("refinement factor must be at least 2");
    }
    std::vector<double> points;
    std::vector<GapKind> gaps;
    points.push_back(grid[0]);
    for (std::size_t k = 0; k < grid.last(); ++k) {
        const double a = grid[k];
        const double b = grid[k + 1];
        if (grid.gaps()[k] == GapKind::dense) {
            for (std::size_t s = 1; s < factor; ++s) {
                points.push_back(a + (b - a) * static_cast<double>(s) / static_cast<double>(factor));
                gaps.push_back(GapKind::dense);
            }
            gaps.push_back(GapKind::dense);
        } else {
            gaps.push_back(GapKind::scattered);
        }
        points.push_back(b);
    }
    return TimeScaleGrid(std::move(points), std::move(gaps));
}

ExtensionCheck extension_check(const GridFunction& f, std::size_t i, std::size_t j) {
    const TimeScaleGrid& grid = f.grid();
    if (i > j || j > grid.last()) {
        throw std::out_of_range("extension check bounds out of range");
    }
    for (std::size_t k = i; k < j; ++k) {
        if (f[k + 1] < f[k]) {
            throw std::invalid_argument(
                fmt::format("extension check needs a nondecreasing function (drops at index {})", k));
        }
    }
    const double lhs = delta_integral(f, i, j);
    long double rhs = 0.0L;
    for (std::size_t k = i; k < j; ++k) {
        const double step = grid.gaps()[k] == GapKind::dense ? 0.5 * (f[k] + f[k + 1]) : f[k];
        rhs += static_cast<long double>(step) * grid.mu(k);
    }
    const double r = static_cast<double>(rhs);
    return {lhs, r, lhs <= r + 1e-12};
}

} // namespace tsfrac
