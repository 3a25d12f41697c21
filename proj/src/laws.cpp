#include "tsfrac/laws.hpp"

#include <algorithm>
#include <numbers>
#include <cmath>
#include <random>
#include <stdexcept>

#include <fmt/format.h>
#include <json.hpp>

namespace tsfrac {

namespace {

constexpr const char* kLawNames[] = {"ibp_a",     "ibp_b",     "ibp_c_left", "ibp_c_right",
                                     "semigroup", "d_after_i", "i_after_d",  "rl_caputo"};

constexpr const char* kLpNote = "phi in L_p, psi in L_q with p, q >= 1 and 1/p + 1/q <= 1 + alpha (recorded, not checked)";

double normalized(const TimeScaleGrid& g, double t) {
    return (t - g.front()) / (g.back() - g.front());
}

// Delta integral of a * b (or a(sigma) * b when shift_a) over [t_0, t_N).
double mu_dot(const GridFunction& a, const GridFunction& b, bool shift_a = false) {
    const TimeScaleGrid& g = a.grid();
    const std::size_t n = g.last();
    std::vector<double> p(g.size(), 0.0);
    for (std::size_t k = 0; k < n; ++k) {
        const std::size_t ka = shift_a ? k + 1 : k;
        if (!a.domain().contains(ka) || !b.domain().contains(k)) {
            throw std::logic_error("audit operand does not cover the integration range");
        }
        p[k] = a[ka] * b[k];
    }
    return delta_integral(GridFunction(g, std::move(p), {0, n - 1}), 0, n);
}

// Value at index k, taking the empty-sum value 0 outside the domain.
double value_or_zero(const GridFunction& f, std::size_t k) {
    return f.domain().contains(k) ? f[k] : 0.0;
}

double sup_difference(const GridFunction& a, const GridFunction& b, std::size_t from = 0,
                      std::size_t to = static_cast<std::size_t>(-1)) {
    const std::size_t lo = std::max({a.domain().first, b.domain().first, from});
    const std::size_t hi = std::min({a.domain().last, b.domain().last, to});
    double r = 0.0;
    for (std::size_t k = lo; k <= hi && !a.domain().is_empty() && !b.domain().is_empty(); ++k) {
        r = std::max(r, std::abs(a[k] - b[k]));
    }
    return r;
}

void check_grid(const TimeScaleGrid& grid, std::size_t min_points, LawId id) {
    if (grid.size() < min_points) {
        throw std::invalid_argument(fmt::format("{} audit needs at least {} grid points, got {}", to_string(id),
                                                min_points, grid.size()));
    }
}

void check_alpha(double alpha) {
    if (!(alpha > 0.0 && alpha < 1.0)) {
        throw std::invalid_argument(fmt::format("alpha must lie in (0, 1), got {}", alpha));
    }
}

LawReport base_report(LawId id, const TimeScaleGrid& grid, double alpha, const AuditOptions& opts) {
    if (opts.trials < 1) {
        throw std::invalid_argument("trials must be at least 1");
    }
    check_alpha(alpha);
    LawReport r;
    r.law = id;
    r.alpha = alpha;
    r.grid = grid.describe();
    r.trials = opts.trials;
    r.seed = opts.seed;
    r.quadrature = opts.quadrature;
    r.right_base = opts.right_base;
    return r;
}

} // namespace

const char* to_string(LawId id) {
    return kLawNames[static_cast<int>(id)];
}

LawId law_from_string(const std::string& name) {
    for (int i = 0; i < 8; ++i) {
        if (name == kLawNames[i]) {
            return static_cast<LawId>(i);
        }
    }
    throw std::invalid_argument(fmt::format("unknown law '{}'", name));
}

// ---------------------------------------------------------------------------
// Trial functions

double TrialFunction::operator()(double s) const {
    double v = poly[4];
    for (int i = 3; i >= 0; --i) {
        v = v * s + poly[i];
    }
    for (const Wave& w : waves) {
        v += w.sin_coef * std::sin(w.omega * s) + w.cos_coef * std::cos(w.omega * s);
    }
    return v;
}

GridFunction TrialFunction::sample(const TimeScaleGrid& grid) const {
    return GridFunction::sample(grid, [&](double t) { return (*this)(normalized(grid, t)); });
}

GridFunction TrialFunction::sample_centered(const TimeScaleGrid& grid) const {
    const double at_a = (*this)(0.0);
    std::vector<double> v(grid.size());
    for (std::size_t k = 0; k < grid.size(); ++k) {
        v[k] = k == 0 ? 0.0 : (*this)(normalized(grid, grid[k])) - at_a;
    }
    return GridFunction(grid, std::move(v));
}

std::vector<TrialFunction> draw_trials(std::uint64_t seed, std::size_t count) {
    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<int> family(0, 2);
    std::uniform_int_distribution<int> degree(0, 4);
    std::uniform_int_distribution<int> wave_count(1, 3);
    std::uniform_real_distribution<double> coef(-1.0, 1.0);
    std::uniform_real_distribution<double> omega(0.5, 2.0 * std::numbers::pi);

    auto wave = [&]() { return TrialFunction::Wave{omega(rng), coef(rng), coef(rng)}; };

    std::vector<TrialFunction> out(count);
    for (TrialFunction& f : out) {
        switch (family(rng)) {
        case 0:
            f.poly[degree(rng)] = 2.0 * coef(rng);
            break;
        case 1:
            for (int i = wave_count(rng); i > 0; --i) {
                f.waves.push_back(wave());
            }
            break;
        default:
            for (double& c : f.poly) {
                c = coef(rng);
            }
            f.waves.push_back(wave());
            break;
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Audits

LawReport audit_ibp(IbpVariant variant, const TimeScaleGrid& grid, double alpha, const AuditOptions& opts) {
    static constexpr LawId ids[] = {LawId::ibp_a, LawId::ibp_b, LawId::ibp_c_left, LawId::ibp_c_right};
    const LawId id = ids[static_cast<int>(variant)];
    LawReport report = base_report(id, grid, alpha, opts);
    check_grid(grid, variant == IbpVariant::a ? 2 : 3, id);

    const Quadrature q = opts.quadrature;
    const RightBase rb = opts.right_base;
    const std::size_t n = grid.last();
    const auto trials = draw_trials(opts.seed, 2 * opts.trials);

    double worst = 0.0;
    for (std::size_t i = 0; i < opts.trials; ++i) {
        const GridFunction p1 = trials[2 * i].sample(grid);
        const GridFunction p2 = trials[2 * i + 1].sample(grid);
        double lhs = 0.0, rhs = 0.0;
        switch (variant) {
        case IbpVariant::a:
            lhs = mu_dot(p1, frac_integral(p2, alpha, Side::left, q));
            rhs = mu_dot(p2, frac_integral(p1, alpha, Side::right, q, rb));
            break;
        case IbpVariant::b: {
            const GridFunction f = frac_integral(p1, alpha, Side::left, q);
            const GridFunction g = frac_integral(p2, alpha, Side::right, q, rb);
            lhs = mu_dot(g, frac_derivative(f, alpha, Side::left, DerivativeKind::rl, q));
            rhs = mu_dot(f, frac_derivative(g, alpha, Side::right, DerivativeKind::rl, q, rb));
            break;
        }
        case IbpVariant::c_left: {
            const GridFunction& f = p1;
            const GridFunction g = frac_integral(p2, alpha, Side::right, q, rb);
            const GridFunction big_g = frac_integral(g, 1.0 - alpha, Side::right, q, rb);
            lhs = mu_dot(g, frac_derivative(f, alpha, Side::left, DerivativeKind::caputo, q));
            rhs = value_or_zero(big_g, n) * f[n] - value_or_zero(big_g, 0) * f[0] +
                  mu_dot(f, frac_derivative(g, alpha, Side::right, DerivativeKind::rl, q, rb), true);
            break;
        }
        case IbpVariant::c_right: {
            const GridFunction& f = p1;
            const GridFunction g = frac_integral(p2, alpha, Side::left, q);
            const GridFunction big_g = frac_integral(g, 1.0 - alpha, Side::left, q);
            lhs = mu_dot(g, frac_derivative(f, alpha, Side::right, DerivativeKind::caputo, q, rb));
            rhs = -(big_g[n] * f[n] - big_g[0] * f[0]) +
                  mu_dot(f, frac_derivative(g, alpha, Side::left, DerivativeKind::rl, q), true);
            break;
        }
        }
        worst = std::max(worst, std::abs(lhs - rhs));
    }
    report.residual_max = worst;
    report.hypotheses = kLpNote;
    if (variant == IbpVariant::b) {
        report.hypotheses += "; f = I^alpha(g1), g = I_b^alpha(g2) by construction";
    } else if (variant == IbpVariant::c_left) {
        report.hypotheses += "; g = I_b^alpha(g2) by construction";
    } else if (variant == IbpVariant::c_right) {
        report.hypotheses += "; g = I^alpha(g2) by construction";
    }
    return report;
}

LawReport audit_composition(CompositionVariant variant, const TimeScaleGrid& grid, double alpha,
                            std::optional<double> beta, const AuditOptions& opts) {
    static constexpr LawId ids[] = {LawId::semigroup, LawId::d_after_i, LawId::i_after_d};
    const LawId id = ids[static_cast<int>(variant)];
    LawReport report = base_report(id, grid, alpha, opts);
    check_grid(grid, 3, id);
    const Quadrature q = opts.quadrature;
    const auto trials = draw_trials(opts.seed, opts.trials);

    double worst = 0.0;
    switch (variant) {
    case CompositionVariant::semigroup: {
        const double b = beta.value_or(alpha);
        check_alpha(b);
        report.beta = b;
        for (const auto& tr : trials) {
            const GridFunction h = tr.sample(grid);
            const GridFunction lhs = frac_integral(frac_integral(h, b, Side::left, q), alpha, Side::left, q);
            const GridFunction rhs = fractional_integral_of_order(h, alpha + b, Side::left, q);
            worst = std::max(worst, sup_difference(lhs, rhs));
        }
        report.hypotheses = "h smooth";
        break;
    }
    case CompositionVariant::d_after_i:
        for (const auto& tr : trials) {
            const GridFunction h = tr.sample_centered(grid);
            const GridFunction lhs =
                frac_derivative(frac_integral(h, alpha, Side::left, q), alpha, Side::left, DerivativeKind::rl, q);
            worst = std::max(worst, sup_difference(lhs, h));
        }
        report.hypotheses = "h smooth with h(a) = 0 by construction";
        break;
    case CompositionVariant::i_after_d:
        for (const auto& tr : trials) {
            const GridFunction f = frac_integral(tr.sample_centered(grid), alpha, Side::left, q);
            const GridFunction lhs =
                frac_integral(frac_derivative(f, alpha, Side::left, DerivativeKind::rl, q), alpha, Side::left, q);
            worst = std::max(worst, sup_difference(lhs, f));
        }
        report.hypotheses = "f = I^alpha(g) with g smooth and g(a) = 0 by construction";
        break;
    }
    report.residual_max = worst;
    return report;
}

LawReport audit_rl_caputo(const TimeScaleGrid& grid, double alpha, const AuditOptions& opts) {
    LawReport report = base_report(LawId::rl_caputo, grid, alpha, opts);
    check_grid(grid, 3, LawId::rl_caputo);
    const Quadrature q = opts.quadrature;
    const RightBase rb = opts.right_base;
    const std::size_t n = grid.last();
    const double a = grid.front();
    const double b = grid.back();
    const double inv_g = 1.0 / gamma_fn(1.0 - alpha);

    double worst = 0.0;
    for (const auto& tr : draw_trials(opts.seed, opts.trials)) {
        const GridFunction h = tr.sample(grid);
        const GridFunction cl = frac_derivative(h, alpha, Side::left, DerivativeKind::caputo, q);
        const GridFunction rl = frac_derivative(h, alpha, Side::left, DerivativeKind::rl, q);
        const GridFunction cr = frac_derivative(h, alpha, Side::right, DerivativeKind::caputo, q, rb);
        const GridFunction rr = frac_derivative(h, alpha, Side::right, DerivativeKind::rl, q, rb);
        // The kernel is singular at t = a (left) and t = b (right).
        for (std::size_t k = 1; k < n; ++k) {
            if (cl.domain().contains(k) && rl.domain().contains(k)) {
                const double rel = rl[k] - h[0] * std::pow(grid[k] - a, -alpha) * inv_g;
                worst = std::max(worst, std::abs(cl[k] - rel));
            }
            if (cr.domain().contains(k) && rr.domain().contains(k)) {
                const double rel = rr[k] - h[n] * std::pow(b - grid[k], -alpha) * inv_g;
                worst = std::max(worst, std::abs(cr[k] - rel));
            }
        }
    }
    report.residual_max = worst;
    report.hypotheses = "order n = 1; endpoint rows excluded";
    return report;
}

LawReport audit_law(LawId id, const TimeScaleGrid& grid, double alpha, std::optional<double> beta,
                    const AuditOptions& opts) {
    switch (id) {
    case LawId::ibp_a: return audit_ibp(IbpVariant::a, grid, alpha, opts);
    case LawId::ibp_b: return audit_ibp(IbpVariant::b, grid, alpha, opts);
    case LawId::ibp_c_left: return audit_ibp(IbpVariant::c_left, grid, alpha, opts);
    case LawId::ibp_c_right: return audit_ibp(IbpVariant::c_right, grid, alpha, opts);
    case LawId::semigroup: return audit_composition(CompositionVariant::semigroup, grid, alpha, beta, opts);
    case LawId::d_after_i: return audit_composition(CompositionVariant::d_after_i, grid, alpha, beta, opts);
    case LawId::i_after_d: return audit_composition(CompositionVariant::i_after_d, grid, alpha, beta, opts);
    case LawId::rl_caputo: return audit_rl_caputo(grid, alpha, opts);
    }
    throw std::invalid_argument("unknown law");
}

bool series_decreasing(const std::vector<std::pair<std::size_t, double>>& series) {
    for (std::size_t i = 1; i < series.size(); ++i) {
        const double prev = series[i - 1].second;
        const double cur = series[i].second;
        if (cur > kResidualFloor && prev < kRefinementFactor * cur) {
            return false;
        }
    }
    return true;
}

LawReport convergence_study(LawId id, const TimeScaleGrid& base_grid, std::size_t levels, double alpha,
                            std::optional<double> beta, const AuditOptions& opts) {
    if (levels < 2) {
        throw std::invalid_argument(fmt::format("convergence study needs levels >= 2, got {}", levels));
    }
    if (!base_grid.has_dense_gap()) {
        throw std::invalid_argument("convergence study needs a grid with a dense segment to refine");
    }
    TimeScaleGrid grid = base_grid;
    LawReport report;
    std::vector<std::pair<std::size_t, double>> series;
    double worst = 0.0;
    for (std::size_t level = 0; level < levels; ++level) {
        if (level > 0) {
            grid = refine(grid, 2);
        }
        report = audit_law(id, grid, alpha, beta, opts);
        series.emplace_back(grid.size(), report.residual_max);
        worst = std::max(worst, report.residual_max);
    }
    report.grid = fmt::format("{} refined x2 over {} levels", base_grid.describe(), levels);
    report.series = std::move(series);
    report.residual_max = worst;
    report.decreasing = series_decreasing(report.series);
    return report;
}

std::string to_json(const LawReport& r) {
    nlohmann::ordered_json j;
    j["law"] = to_string(r.law);
    j["alpha"] = r.alpha;
    j["beta"] = r.beta ? nlohmann::ordered_json(*r.beta) : nlohmann::ordered_json(nullptr);
    j["grid"] = r.grid;
    j["trials"] = r.trials;
    j["residual_max"] = r.residual_max;
    auto series = nlohmann::ordered_json::array();
    for (const auto& [size, res] : r.series) {
        series.push_back({size, res});
    }
    j["series"] = series;
    j["seed"] = r.seed;
    j["quadrature"] = to_string(r.quadrature);
    j["right_base"] = to_string(r.right_base);
    j["decreasing"] = r.decreasing ? nlohmann::ordered_json(*r.decreasing) : nlohmann::ordered_json(nullptr);
    j["hypotheses"] = r.hypotheses;
    return j.dump(2) + "\n";
}

} // namespace tsfrac
