#pragma once

// Numerical audits of the structural identities of the fractional operators:
// integration by parts, composition laws and the RL/Caputo relation.
//
// Every audit draws smooth trial functions from a seeded generator, evaluates
// both sides of one identity on a grid and reports the largest defect. Trial
// functions live in normalized time s = (t - a) / (b - a), so the same trials
// are sampled on every level of a refinement study.

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "tsfrac/fracops.hpp"
#include "tsfrac/timescale.hpp"

namespace tsfrac {

enum class LawId { ibp_a, ibp_b, ibp_c_left, ibp_c_right, semigroup, d_after_i, i_after_d, rl_caputo };

const char* to_string(LawId id);
/// Inverse of to_string; throws std::invalid_argument on unknown names.
LawId law_from_string(const std::string& name);

enum class IbpVariant { a, b, c_left, c_right };
enum class CompositionVariant { semigroup, d_after_i, i_after_d };

struct AuditOptions {
    std::size_t trials = 10;
    std::uint64_t seed = 0;
    Quadrature quadrature = Quadrature::node;
    RightBase right_base = RightBase::strict_shift;
};

struct LawReport {
    LawId law = LawId::ibp_a;
    double alpha = 0.5;
    std::optional<double> beta;
    std::string grid;
    std::size_t trials = 0;
    double residual_max = 0.0;
    /// (grid size, residual) per refinement level; empty for single audits.
    std::vector<std::pair<std::size_t, double>> series;
    std::uint64_t seed = 0;
    Quadrature quadrature = Quadrature::node;
    RightBase right_base = RightBase::strict_shift;
    /// Set by convergence_study.
    std::optional<bool> decreasing;
    /// Hypotheses of the identity that are recorded but not checked.
    std::string hypotheses;
};

/// One smooth trial function in normalized time: a polynomial of degree <= 4
/// plus at most three sinusoids.
struct TrialFunction {
    double poly[5] = {0, 0, 0, 0, 0};
    struct Wave {
        double omega;
        double sin_coef;
        double cos_coef;
    };
    std::vector<Wave> waves;

    double operator()(double s) const;
    GridFunction sample(const TimeScaleGrid& grid) const;
    /// Sample shifted so that the value at the left endpoint is zero.
    GridFunction sample_centered(const TimeScaleGrid& grid) const;
};

/// Deterministic list of trial functions for a seed.
std::vector<TrialFunction> draw_trials(std::uint64_t seed, std::size_t count);

LawReport audit_ibp(IbpVariant variant, const TimeScaleGrid& grid, double alpha,
                    const AuditOptions& opts = {});

/// beta is used by the semigroup law only and defaults to alpha.
LawReport audit_composition(CompositionVariant variant, const TimeScaleGrid& grid, double alpha,
                            std::optional<double> beta = std::nullopt, const AuditOptions& opts = {});

LawReport audit_rl_caputo(const TimeScaleGrid& grid, double alpha, const AuditOptions& opts = {});

/// Runs any audit by id.
LawReport audit_law(LawId id, const TimeScaleGrid& grid, double alpha, std::optional<double> beta,
                    const AuditOptions& opts);

/// Ratio a series must improve by between successive levels.
inline constexpr double kRefinementFactor = 1.3;
/// Residuals at or below this count as the floating-point floor.
inline constexpr double kResidualFloor = 1e-12;

/// Audits `levels` grids, the base grid and its successive dyadic
/// refinements. residual_max is the largest residual over all levels.
LawReport convergence_study(LawId id, const TimeScaleGrid& base_grid, std::size_t levels, double alpha,
                            std::optional<double> beta = std::nullopt, const AuditOptions& opts = {});

/// True when every step of the series shrinks by kRefinementFactor or lands
/// at the floor.
bool series_decreasing(const std::vector<std::pair<std::size_t, double>>& series);

/// JSON text with keys law, alpha, beta, grid, trials, residual_max, series,
/// seed, quadrature, right_base, decreasing, hypotheses.
std::string to_json(const LawReport& report);

} // namespace tsfrac
