#include "tsfrac/cli.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <initializer_list>
#include <limits>
#include <memory>
#include <ostream>
#include <set>
#include <sstream>

#include <fmt/format.h>
#include <fmt/ranges.h>

#include "tsfrac/error.hpp"
#include "tsfrac/ivp.hpp"
#include "tsfrac/laws.hpp"

namespace tsfrac {

namespace {

using Json = nlohmann::ordered_json;
namespace fs = std::filesystem;

// Read access to one config object with the field path kept for messages.
class Section {
public:
    Section(const Json& obj, std::string path, std::initializer_list<const char*> allowed)
        : obj_(obj), path_(std::move(path)) {
        if (!obj.is_object()) {
            throw ConfigError(path_.empty() ? "config" : path_, "expected an object");
        }
        for (const auto& item : obj.items()) {
            if (std::none_of(allowed.begin(), allowed.end(), [&](const char* k) { return item.key() == k; })) {
                throw ConfigError(field(item.key()), "unknown key");
            }
        }
    }

    std::string field(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }
    bool has(const char* key) const { return obj_.contains(key) && !obj_.at(key).is_null(); }
    const Json& raw(const char* key) const {
        if (!has(key)) {
            throw ConfigError(field(key), "missing");
        }
        return obj_.at(key);
    }

    double number(const char* key, std::optional<double> fallback = std::nullopt) const {
        if (!has(key)) {
            return require(key, fallback);
        }
        const Json& v = obj_.at(key);
        if (!v.is_number()) {
            throw ConfigError(field(key), "expected a number");
        }
        return v.get<double>();
    }

    std::uint64_t count(const char* key, std::optional<std::uint64_t> fallback = std::nullopt) const {
        if (!has(key)) {
            return require(key, fallback);
        }
        const Json& v = obj_.at(key);
        if (!v.is_number_unsigned() && !(v.is_number_integer() && v.get<std::int64_t>() >= 0)) {
            throw ConfigError(field(key), "expected a nonnegative integer");
        }
        return v.get<std::uint64_t>();
    }

    std::string text(const char* key, std::optional<std::string> fallback = std::nullopt) const {
        if (!has(key)) {
            return require(key, fallback);
        }
        const Json& v = obj_.at(key);
        if (!v.is_string()) {
            throw ConfigError(field(key), "expected a string");
        }
        return v.get<std::string>();
    }

private:
    template <typename T>
    T require(const char* key, const std::optional<T>& fallback) const {
        if (!fallback) {
            throw ConfigError(field(key), "missing");
        }
        return *fallback;
    }

    const Json& obj_;
    std::string path_;
};

template <typename Enum>
Enum pick(const std::string& field, const std::string& value,
          std::initializer_list<std::pair<const char*, Enum>> options) {
    std::string names;
    for (const auto& [name, e] : options) {
        if (value == name) {
            return e;
        }
        names += names.empty() ? name : std::string(", ") + name;
    }
    throw ConfigError(field, fmt::format("'{}' is not one of {}", value, names));
}

Quadrature parse_quadrature(const std::string& field, const std::string& v) {
    return pick<Quadrature>(field, v, {{"node", Quadrature::node}, {"cell_avg", Quadrature::cell_avg}});
}

RightBase parse_right_base(const std::string& field, const std::string& v) {
    return pick<RightBase>(field, v,
                           {{"first_cell", RightBase::first_cell},
                            {"strict_shift", RightBase::strict_shift},
                            {"dual", RightBase::dual}});
}

Expr expression(const std::string& field, const std::string& source, std::set<VarKind> allowed) {
    if (source.empty()) {
        throw ConfigError(field, "empty expression");
    }
    Expr e = [&] {
        try {
            return parse_expr(source);
        } catch (const ParseError& err) {
            throw ConfigError(field, err.what());
        }
    }();
    for (VarKind v : {VarKind::t, VarKind::y, VarKind::x, VarKind::u, VarKind::lambda}) {
        if (!allowed.count(v) && components_used(e, v) > 0) {
            const auto names = variables(e);
            throw ConfigError(field, fmt::format("uses a variable that is not available here ({})",
                                                 fmt::join(names.begin(), names.end(), ", ")));
        }
    }
    return e;
}

double eval_or_nan(const Expr& e, const EvalEnv& env) {
    try {
        return eval(e, env);
    } catch (const std::domain_error&) {
        return std::numeric_limits<double>::quiet_NaN();
    }
}

// ---------------------------------------------------------------------------
// Grids

GridSpec grid_spec(const Json& j, const std::string& path) {
    if (!j.is_object() || !j.contains("type") || !j.at("type").is_string()) {
        throw ConfigError(path + ".type", "expected one of uniform, hstep, explicit, union");
    }
    const std::string type = j.at("type").get<std::string>();
    if (type == "uniform") {
        const Section s(j, path, {"type", "a", "b", "intervals"});
        return {UniformSpec{s.number("a"), s.number("b"), static_cast<std::size_t>(s.count("intervals"))}};
    }
    if (type == "hstep") {
        const Section s(j, path, {"type", "a", "b", "h"});
        return {HStepSpec{s.number("a"), s.number("b"), s.number("h")}};
    }
    if (type == "explicit") {
        const Section s(j, path, {"type", "points", "gaps"});
        ExplicitSpec e;
        const Json& pts = s.raw("points");
        if (!pts.is_array()) {
            throw ConfigError(s.field("points"), "expected an array of numbers");
        }
        for (const Json& p : pts) {
            if (!p.is_number()) {
                throw ConfigError(s.field("points"), "expected an array of numbers");
            }
            e.points.push_back(p.get<double>());
        }
        if (s.has("gaps")) {
            const Json& gaps = s.raw("gaps");
            if (!gaps.is_array()) {
                throw ConfigError(s.field("gaps"), "expected an array of \"dense\" or \"scattered\"");
            }
            for (const Json& g : gaps) {
                e.gaps.push_back(pick<GapKind>(s.field("gaps"), g.is_string() ? g.get<std::string>() : g.dump(),
                                               {{"dense", GapKind::dense}, {"scattered", GapKind::scattered}}));
            }
        }
        return {e};
    }
    if (type == "union") {
        const Section s(j, path, {"type", "pieces"});
        const Json& pieces = s.raw("pieces");
        if (!pieces.is_array() || pieces.empty()) {
            throw ConfigError(s.field("pieces"), "expected a nonempty array of grids");
        }
        UnionSpec u;
        for (std::size_t i = 0; i < pieces.size(); ++i) {
            u.pieces.push_back(grid_spec(pieces[i], fmt::format("{}.pieces[{}]", path, i)));
        }
        return {u};
    }
    throw ConfigError(path + ".type", fmt::format("'{}' is not one of uniform, hstep, explicit, union", type));
}

// One point per line, optionally followed by the kind of the gap to the next
// point. Blank lines and lines starting with '#' are skipped.
TimeScaleGrid read_grid_file(const fs::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw IoError(fmt::format("cannot read grid file {}", path.string()));
    }
    std::vector<double> points;
    std::vector<GapKind> gaps;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        std::replace(line.begin(), line.end(), ',', ' ');
        std::istringstream fields(line);
        std::string first, second, extra;
        if (!(fields >> first) || first[0] == '#') {
            continue;
        }
        fields >> second >> extra;
        const std::string where = fmt::format("grid_file: line {}", line_no);
        std::size_t used = 0;
        double t = 0.0;
        try {
            t = std::stod(first, &used);
        } catch (const std::exception&) {
            used = 0;
        }
        if (used != first.size() || !extra.empty()) {
            throw ConfigError(where, fmt::format("expected '<t>' or '<t> dense|scattered', got '{}'", line));
        }
        if (!points.empty() && gaps.size() < points.size()) {
            gaps.push_back(GapKind::scattered);
        }
        points.push_back(t);
        if (!second.empty()) {
            gaps.push_back(pick<GapKind>(where, second, {{"dense", GapKind::dense}, {"scattered", GapKind::scattered}}));
        }
    }
    gaps.resize(points.empty() ? 0 : points.size() - 1, GapKind::scattered);
    try {
        return TimeScaleGrid(std::move(points), std::move(gaps));
    } catch (const std::invalid_argument& e) {
        throw ConfigError("grid_file", e.what());
    }
}

// ---------------------------------------------------------------------------
// Output

void write_file(const fs::path& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw IoError(fmt::format("cannot write {}", path.string()));
    }
    out << content;
    out.close();
    if (!out) {
        throw IoError(fmt::format("failed writing {}", path.string()));
    }
}

std::string csv_cell(const GridFunction& g, std::size_t k) {
    return g.domain().contains(k) ? format_number(g[k]) : std::string();
}

Json number_or_null(double v) { return std::isfinite(v) ? Json(v) : Json(nullptr); }

struct Outcome {
    int code = exit_code::ok;
    std::string message;
};

struct Context {
    const Json& doc;
    fs::path base_dir;
    fs::path out_dir;
    TimeScaleGrid grid;
    double alpha;
    Quadrature quadrature;
    std::uint64_t seed;
};

// ---------------------------------------------------------------------------
// Modes

Outcome run_eval(const Context& c) {
    const Section s(c.doc.at("eval"), "eval", {"operator", "side", "right_base", "function"});
    const OperatorKind kind = pick<OperatorKind>(s.field("operator"), s.text("operator"),
                                                 {{"integral", OperatorKind::integral},
                                                  {"rl", OperatorKind::rl_derivative},
                                                  {"caputo", OperatorKind::caputo_derivative}});
    const Side side =
        pick<Side>(s.field("side"), s.text("side", "left"), {{"left", Side::left}, {"right", Side::right}});
    const RightBase rb = parse_right_base(s.field("right_base"), s.text("right_base", "first_cell"));
    const Expr f = expression(s.field("function"), s.text("function"), {VarKind::t});

    std::vector<double> values(c.grid.size());
    for (std::size_t k = 0; k < c.grid.size(); ++k) {
        EvalEnv env;
        env.t = c.grid[k];
        try {
            values[k] = eval(f, env);
        } catch (const std::domain_error& e) {
            throw ConfigError(s.field("function"), fmt::format("{} at t = {}", e.what(), c.grid[k]));
        }
    }
    const GridFunction h(c.grid, std::move(values));
    const GridFunction out = apply_operator({c.alpha, side, kind, c.quadrature, rb}, h);

    std::string csv = "t,value\n";
    for (std::size_t k = 0; k < c.grid.size(); ++k) {
        csv += fmt::format("{},{}\n", format_number(c.grid[k]), csv_cell(out, k));
    }
    write_file(c.out_dir / "eval.csv", csv);
    return {};
}

Outcome run_audit(const Context& c) {
    const Section s(c.doc.at("audit"), "audit", {"law", "trials", "beta", "levels", "right_base"});
    const std::string law_name = s.text("law");
    const LawId law = [&] {
        try {
            return law_from_string(law_name);
        } catch (const std::invalid_argument& e) {
            throw ConfigError(s.field("law"), e.what());
        }
    }();
    AuditOptions opts;
    opts.trials = s.count("trials", 10);
    opts.seed = c.seed;
    opts.quadrature = c.quadrature;
    opts.right_base = parse_right_base(s.field("right_base"), s.text("right_base", "strict_shift"));
    if (opts.trials < 1) {
        throw ConfigError(s.field("trials"), "must be at least 1");
    }
    std::optional<double> beta;
    if (s.has("beta")) {
        beta = s.number("beta");
        if (!(*beta > 0.0 && *beta < 1.0)) {
            throw ConfigError(s.field("beta"), fmt::format("must lie in (0, 1), got {}", *beta));
        }
    }
    const std::uint64_t levels = s.count("levels", 1);
    if (levels < 1) {
        throw ConfigError(s.field("levels"), "must be at least 1");
    }

    const LawReport report = levels == 1 ? audit_law(law, c.grid, c.alpha, beta, opts)
                                         : convergence_study(law, c.grid, levels, c.alpha, beta, opts);
    write_file(c.out_dir / "audit.json", to_json(report));
    if (report.decreasing && !*report.decreasing) {
        return {exit_code::not_converged,
                fmt::format("{} residuals did not decrease by {} per level", law_name, kRefinementFactor)};
    }
    return {};
}

IvpParams ivp_params(const Section& s, Quadrature q) {
    IvpParams p;
    p.step_tol = s.number("step_tol", p.step_tol);
    p.step_max_iter = s.count("step_max_iter", p.step_max_iter);
    p.relaxation = s.number("relaxation", p.relaxation);
    p.quadrature = q;
    if (!(p.step_tol > 0.0)) {
        throw ConfigError(s.field("step_tol"), fmt::format("must be positive, got {}", p.step_tol));
    }
    if (p.step_max_iter < 1) {
        throw ConfigError(s.field("step_max_iter"), "must be at least 1");
    }
    if (!(p.relaxation > 0.0 && p.relaxation <= 1.0)) {
        throw ConfigError(s.field("relaxation"), fmt::format("must lie in (0, 1], got {}", p.relaxation));
    }
    return p;
}

Outcome run_ivp(const Context& c) {
    const Section s(c.doc.at("ivp"), "ivp",
                    {"rhs", "x0", "step_tol", "step_max_iter", "relaxation", "method", "sweeps"});
    const Expr rhs = expression(s.field("rhs"), s.text("rhs"), {VarKind::t, VarKind::y});
    const std::string method = s.text("method", "march");
    if (method != "march" && method != "picard") {
        throw ConfigError(s.field("method"), fmt::format("'{}' is not one of march, picard", method));
    }
    const std::uint64_t sweeps = s.count("sweeps", 500);
    if (sweeps < 1) {
        throw ConfigError(s.field("sweeps"), "must be at least 1");
    }

    IvpProblem p{c.grid, c.alpha, nullptr, s.number("x0", 0.0), ivp_params(s, c.quadrature)};
    p.rhs = [rhs](double t, double y) {
        EvalEnv env;
        env.t = t;
        env.y = y;
        return eval_or_nan(rhs, env);
    };

    Json summary;
    summary["J"] = nullptr;
    summary["stationarity_max"] = nullptr;
    std::string csv = "t,y,residual\n";
    Outcome outcome;
    try {
        const IvpSolution sol = method == "march" ? solve_ivp(p) : picard_solve(p, sweeps);
        double residual_max = 0.0;
        for (std::size_t k = 0; k < c.grid.size(); ++k) {
            if (sol.residual.domain().contains(k)) {
                residual_max = std::max(residual_max, sol.residual[k]);
            }
            csv += fmt::format("{},{},{}\n", format_number(c.grid[k]), csv_cell(sol.y, k), csv_cell(sol.residual, k));
        }
        const std::size_t iters =
            sol.iterations.empty() ? 0 : *std::max_element(sol.iterations.begin(), sol.iterations.end());
        summary["converged"] = true;
        summary["sweeps_used"] = method == "march" ? std::size_t{1} : iters;
        summary["method"] = method;
        summary["residual_max"] = number_or_null(residual_max);
        if (method == "march") {
            summary["step_iterations_max"] = iters;
        }
    } catch (const ConvergenceError& e) {
        for (std::size_t k = 0; k < c.grid.size(); ++k) {
            csv += fmt::format("{},,\n", format_number(c.grid[k]));
        }
        summary["converged"] = false;
        summary["sweeps_used"] = nullptr;
        summary["method"] = method;
        summary["error"] = e.what();
        outcome = {exit_code::not_converged, e.what()};
    }
    write_file(c.out_dir / "trajectory.csv", csv);
    write_file(c.out_dir / "summary.json", summary.dump(2) + "\n");
    return outcome;
}

std::vector<std::string> string_list(const Section& s, const char* key) {
    const Json& v = s.raw(key);
    std::vector<std::string> out;
    if (v.is_string()) {
        out.push_back(v.get<std::string>());
    } else if (v.is_array() && !v.empty()) {
        for (const Json& item : v) {
            if (!item.is_string()) {
                throw ConfigError(s.field(key), "expected a string or an array of strings");
            }
            out.push_back(item.get<std::string>());
        }
    } else {
        throw ConfigError(s.field(key), "expected a string or a nonempty array of strings");
    }
    return out;
}

Vec number_list(const Section& s, const char* key, Eigen::Index dim) {
    if (!s.has(key)) {
        return Vec::Zero(dim);
    }
    const Json& v = s.raw(key);
    if (v.is_number()) {
        return Vec::Constant(dim, v.get<double>());
    }
    if (!v.is_array() || static_cast<Eigen::Index>(v.size()) != dim) {
        throw ConfigError(s.field(key), fmt::format("expected a number or an array of {} numbers", dim));
    }
    Vec out(dim);
    for (Eigen::Index i = 0; i < dim; ++i) {
        const Json& item = v[static_cast<std::size_t>(i)];
        if (!item.is_number()) {
            throw ConfigError(s.field(key), fmt::format("expected a number or an array of {} numbers", dim));
        }
        out[i] = item.get<double>();
    }
    return out;
}

Outcome run_focp(const Context& c) {
    const Section s(c.doc.at("focp"), "focp",
                    {"lq", "dynamics", "cost", "x0", "controls", "control_init", "update", "u_tol", "max_sweeps",
                     "step_tol", "step_max_iter", "relaxation"});

    FocpProblem p = [&] {
        if (s.has("lq")) {
            if (s.has("dynamics") || s.has("cost")) {
                throw ConfigError(s.field("lq"), "cannot be combined with dynamics or cost");
            }
            const Section lq(s.raw("lq"), s.field("lq"), {"z", "N"});
            const Expr z = expression(lq.field("z"), lq.text("z"), {VarKind::t});
            const double N = lq.number("N");
            if (!(N > 0.0)) {
                throw ConfigError(lq.field("N"), fmt::format("must be positive, got {}", N));
            }
            const Vec x0 = number_list(s, "x0", 1);
            auto zf = [z](double t) {
                EvalEnv env;
                env.t = t;
                return eval(z, env);
            };
            return make_lq_problem(c.grid, c.alpha, zf, N, x0[0]);
        }
        if (!s.has("dynamics")) {
            throw ConfigError(s.field("dynamics"), "missing (or give lq)");
        }
        const std::set<VarKind> vars{VarKind::t, VarKind::x, VarKind::u};
        std::vector<Expr> dyn;
        const auto sources = string_list(s, "dynamics");
        for (std::size_t i = 0; i < sources.size(); ++i) {
            dyn.push_back(expression(sources.size() == 1 ? s.field("dynamics")
                                                          : fmt::format("{}[{}]", s.field("dynamics"), i),
                                     sources[i], vars));
        }
        const Expr cost = expression(s.field("cost"), s.text("cost"), vars);
        std::size_t xs = components_used(cost, VarKind::x);
        std::size_t us = std::max<std::size_t>(1, components_used(cost, VarKind::u));
        for (const Expr& e : dyn) {
            xs = std::max(xs, components_used(e, VarKind::x));
            us = std::max(us, components_used(e, VarKind::u));
        }
        if (xs > dyn.size()) {
            throw ConfigError(s.field("dynamics"),
                              fmt::format("expressions use x{} but only {} equation(s) are given", xs, dyn.size()));
        }
        const std::uint64_t controls = s.count("controls", us);
        if (controls < us || controls < 1) {
            throw ConfigError(s.field("controls"), fmt::format("expressions use u{}", us));
        }
        FocpProblem out{c.grid, c.alpha, {}, Vec::Zero(1), Mat(), {}, {}, {}, std::nullopt};
        out.model = model_from_expressions(dyn, cost, static_cast<Eigen::Index>(controls));
        out.x0 = number_list(s, "x0", static_cast<Eigen::Index>(dyn.size()));
        return out;
    }();

    const Eigen::Index m = p.model.control_dim;
    if (s.has("control_init")) {
        const auto sources = s.raw("control_init").is_number()
                                 ? std::vector<std::string>{s.raw("control_init").dump()}
                                 : string_list(s, "control_init");
        if (static_cast<Eigen::Index>(sources.size()) != m && sources.size() != 1) {
            throw ConfigError(s.field("control_init"), fmt::format("expected 1 or {} expressions", m));
        }
        p.control_init = Mat::Zero(static_cast<Eigen::Index>(c.grid.size()), m);
        for (Eigen::Index j = 0; j < m; ++j) {
            const Expr e = expression(s.field("control_init"), sources[sources.size() == 1 ? 0 : j], {VarKind::t});
            for (std::size_t k = 0; k < c.grid.size(); ++k) {
                EvalEnv env;
                env.t = c.grid[k];
                try {
                    p.control_init(static_cast<Eigen::Index>(k), j) = eval(e, env);
                } catch (const std::domain_error& err) {
                    throw ConfigError(s.field("control_init"), fmt::format("{} at t = {}", err.what(), c.grid[k]));
                }
            }
        }
    }

    if (s.has("update")) {
        const Section u(s.raw("update"), s.field("update"), {"kind", "N", "eta"});
        p.update.kind = pick<UpdateKind>(u.field("kind"), u.text("kind", "lq"),
                                         {{"lq", UpdateKind::lq}, {"gradient", UpdateKind::gradient}});
        p.update.N = u.number("N", p.update.N);
        if (u.has("eta")) {
            p.update.eta = u.number("eta");
            if (!(*p.update.eta > 0.0)) {
                throw ConfigError(u.field("eta"), fmt::format("must be positive, got {}", *p.update.eta));
            }
        }
        if (!(p.update.N > 0.0)) {
            throw ConfigError(u.field("N"), fmt::format("must be positive, got {}", p.update.N));
        }
        if (p.update.kind == UpdateKind::gradient && !p.update.eta) {
            throw ConfigError(u.field("eta"), "required for the gradient update");
        }
    }
    p.stop.u_tol = s.number("u_tol", p.stop.u_tol);
    p.stop.max_sweeps = s.count("max_sweeps", p.stop.max_sweeps);
    if (!(p.stop.u_tol > 0.0)) {
        throw ConfigError(s.field("u_tol"), fmt::format("must be positive, got {}", p.stop.u_tol));
    }
    if (p.stop.max_sweeps < 1) {
        throw ConfigError(s.field("max_sweeps"), "must be at least 1");
    }
    p.ivp = ivp_params(s, c.quadrature);
    try {
        validate(p);
    } catch (const std::invalid_argument& e) {
        throw ConfigError("focp", e.what());
    }

    Json summary;
    std::ostringstream csv;
    Outcome outcome;
    try {
        const SweepReport r = sweep_solve(p);
        write_trajectory_csv(csv, p, r.x, r.u, r.lambda);
        summary["J"] = number_or_null(r.J);
        summary["stationarity_max"] = number_or_null(r.stationarity_max);
        summary["converged"] = r.converged;
        summary["sweeps_used"] = r.sweeps_used;
        const EulerLagrangeCheck el = verify_euler_lagrange(r.x, r.lambda, r.u, p);
        summary["euler_lagrange"] = {{"state", number_or_null(el.res_state)},
                                     {"adjoint", number_or_null(el.res_adjoint)},
                                     {"stationarity", number_or_null(el.res_stationarity)}};
        auto history = Json::array();
        for (double j : r.J_history) {
            history.push_back(number_or_null(j));
        }
        summary["J_history"] = history;
        if (p.lq) {
            const LqSolution oracle = lq_oracle(p);
            const Eigen::Index rows = static_cast<Eigen::Index>(c.grid.last());
            summary["oracle_u_sup_error"] =
                number_or_null((r.u.topRows(rows) - oracle.u.topRows(rows)).lpNorm<Eigen::Infinity>());
            summary["oracle_J"] = number_or_null(oracle.J);
        }
        if (!r.converged) {
            outcome = {exit_code::not_converged,
                       fmt::format("control did not settle to u_tol {} in {} sweeps", p.stop.u_tol, r.sweeps_used)};
        }
    } catch (const ConvergenceError& e) {
        csv.str("");
        csv << "t,x,u,lambda,stationarity\n";
        for (std::size_t k = 0; k < c.grid.size(); ++k) {
            csv << format_number(c.grid[k]) << ",,,,\n";
        }
        summary["J"] = nullptr;
        summary["stationarity_max"] = nullptr;
        summary["converged"] = false;
        summary["sweeps_used"] = nullptr;
        summary["error"] = e.what();
        outcome = {exit_code::not_converged, e.what()};
    }
    write_file(c.out_dir / "trajectory.csv", csv.str());
    write_file(c.out_dir / "summary.json", summary.dump(2) + "\n");
    return outcome;
}

Outcome dispatch(const RunConfig& config) {
    const Json& doc = config.doc;
    const Section top(doc, "",
                      {"mode", "grid", "grid_file", "alpha", "quadrature", "seed", "out", "eval", "audit", "ivp",
                       "focp"});
    const std::string mode = config.mode ? *config.mode : top.text("mode");
    if (mode != "eval" && mode != "audit" && mode != "ivp" && mode != "focp") {
        throw ConfigError("mode", fmt::format("'{}' is not one of eval, audit, ivp, focp", mode));
    }
    if (!top.has(mode.c_str())) {
        throw ConfigError(mode, "missing section for this mode");
    }
    const double alpha = top.number("alpha");
    if (!(alpha > 0.0 && alpha < 1.0)) {
        throw ConfigError("alpha", fmt::format("must lie in (0, 1), got {}", alpha));
    }
    const Quadrature quadrature =
        config.quadrature ? *config.quadrature : parse_quadrature("quadrature", top.text("quadrature", "node"));
    const std::uint64_t seed = config.seed ? *config.seed : top.count("seed", 0);

    fs::path out_dir = config.out_dir ? *config.out_dir : fs::path(".");
    if (!config.out_dir && top.has("out")) {
        out_dir = config.base_dir / top.text("out");
    }
    Context ctx{doc, config.base_dir, out_dir, grid_from_config(doc, config.base_dir), alpha, quadrature, seed};

    std::error_code ec;
    fs::create_directories(out_dir, ec);
    if (ec || !fs::is_directory(out_dir)) {
        throw IoError(fmt::format("cannot create output directory {}", out_dir.string()));
    }

    try {
        if (mode == "eval") return run_eval(ctx);
        if (mode == "audit") return run_audit(ctx);
        if (mode == "ivp") return run_ivp(ctx);
        return run_focp(ctx);
    } catch (const ConfigError&) {
        throw;
    } catch (const ParseError&) {
        throw;
    } catch (const std::invalid_argument& e) {
        throw ConfigError(mode, e.what());
    } catch (const std::domain_error& e) {
        throw ConfigError(mode, e.what());
    }
}

std::string one_line(std::string s) {
    std::replace(s.begin(), s.end(), '\n', ' ');
    std::replace(s.begin(), s.end(), '\r', ' ');
    return s;
}

// Symbolic entry with a central-difference fallback in the same slot.
double partial(const Expr& base, const Expr& sym, Vec x, Vec u, double t, VarKind var, Eigen::Index j) {
    EvalEnv env;
    env.t = t;
    env.x = std::span<const double>(x.data(), static_cast<std::size_t>(x.size()));
    env.u = std::span<const double>(u.data(), static_cast<std::size_t>(u.size()));
    try {
        const double v = eval(sym, env);
        if (std::isfinite(v)) {
            return v;
        }
    } catch (const std::domain_error&) {
    }
    Vec& slot = var == VarKind::x ? x : u;
    const double v0 = slot[j];
    const double h = 1e-6 * (1.0 + std::abs(v0));
    slot[j] = v0 + h;
    const double fp = eval_or_nan(base, env);
    slot[j] = v0 - h;
    const double fm = eval_or_nan(base, env);
    return (fp - fm) / (2.0 * h);
}

} // namespace

std::string format_number(double v) { return fmt::format("{:.17g}", v); }

RunConfig load_config(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw IoError(fmt::format("cannot read config {}", path.string()));
    }
    std::ostringstream text;
    text << in.rdbuf();
    RunConfig config;
    try {
        config.doc = Json::parse(text.str(), nullptr, true, true);
    } catch (const Json::parse_error& e) {
        throw ConfigError("config", e.what());
    }
    if (!config.doc.is_object()) {
        throw ConfigError("config", "expected a JSON object");
    }
    config.base_dir = path.has_parent_path() ? path.parent_path() : fs::path(".");
    return config;
}

TimeScaleGrid grid_from_config(const Json& doc, const fs::path& base_dir) {
    const bool has_grid = doc.contains("grid") && !doc.at("grid").is_null();
    const bool has_file = doc.contains("grid_file") && !doc.at("grid_file").is_null();
    if (has_grid == has_file) {
        throw ConfigError("grid", "give exactly one of grid or grid_file");
    }
    if (has_file) {
        if (!doc.at("grid_file").is_string()) {
            throw ConfigError("grid_file", "expected a path string");
        }
        return read_grid_file(base_dir / doc.at("grid_file").get<std::string>());
    }
    const GridSpec spec = grid_spec(doc.at("grid"), "grid");
    try {
        return build_grid(spec);
    } catch (const std::invalid_argument& e) {
        throw ConfigError("grid", e.what());
    }
}

int run(const RunConfig& config, std::ostream& err) {
    auto report = [&](int code, const std::string& message) {
        err << "error[" << code << "]: " << one_line(message) << '\n';
        return code;
    };
    try {
        const Outcome out = dispatch(config);
        if (out.code != exit_code::ok) {
            return report(out.code, out.message);
        }
        return exit_code::ok;
    } catch (const IoError& e) {
        return report(exit_code::io_failure, e.what());
    } catch (const ConvergenceError& e) {
        return report(exit_code::not_converged, e.what());
    } catch (const nlohmann::json::exception& e) {
        return report(exit_code::invalid_input, e.what());
    } catch (const std::exception& e) {
        return report(exit_code::invalid_input, e.what());
    }
}

FocpModel model_from_expressions(const std::vector<Expr>& dynamics, const Expr& cost, Eigen::Index control_dim) {
    struct Partials {
        std::vector<Expr> f;
        Expr L;
        std::vector<std::vector<Expr>> f_x, f_u;
        std::vector<Expr> L_x, L_u;
    };
    const auto n = static_cast<Eigen::Index>(dynamics.size());
    const Eigen::Index m = control_dim;
    auto d = std::make_shared<Partials>(Partials{dynamics, cost, {}, {}, {}, {}});
    for (const Expr& fi : dynamics) {
        std::vector<Expr> rx, ru;
        for (Eigen::Index j = 0; j < n; ++j) rx.push_back(differentiate(fi, VarKind::x, static_cast<std::size_t>(j)));
        for (Eigen::Index j = 0; j < m; ++j) ru.push_back(differentiate(fi, VarKind::u, static_cast<std::size_t>(j)));
        d->f_x.push_back(std::move(rx));
        d->f_u.push_back(std::move(ru));
    }
    for (Eigen::Index j = 0; j < n; ++j) d->L_x.push_back(differentiate(cost, VarKind::x, static_cast<std::size_t>(j)));
    for (Eigen::Index j = 0; j < m; ++j) d->L_u.push_back(differentiate(cost, VarKind::u, static_cast<std::size_t>(j)));

    auto env_of = [](const Vec& x, const Vec& u, double t) {
        EvalEnv env;
        env.t = t;
        env.x = std::span<const double>(x.data(), static_cast<std::size_t>(x.size()));
        env.u = std::span<const double>(u.data(), static_cast<std::size_t>(u.size()));
        return env;
    };

    FocpModel model;
    model.state_dim = n;
    model.control_dim = m;
    model.f = [d, n, env_of](const Vec& x, const Vec& u, double t) {
        Vec out(n);
        const EvalEnv env = env_of(x, u, t);
        for (Eigen::Index i = 0; i < n; ++i) out[i] = eval_or_nan(d->f[static_cast<std::size_t>(i)], env);
        return out;
    };
    model.L = [d, env_of](const Vec& x, const Vec& u, double t) { return eval_or_nan(d->L, env_of(x, u, t)); };
    model.f_x = [d, n](const Vec& x, const Vec& u, double t) {
        Mat out(n, n);
        for (Eigen::Index i = 0; i < n; ++i)
            for (Eigen::Index j = 0; j < n; ++j)
                out(i, j) = partial(d->f[static_cast<std::size_t>(i)],
                                    d->f_x[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)], x, u, t,
                                    VarKind::x, j);
        return out;
    };
    model.f_u = [d, n, m](const Vec& x, const Vec& u, double t) {
        Mat out(n, m);
        for (Eigen::Index i = 0; i < n; ++i)
            for (Eigen::Index j = 0; j < m; ++j)
                out(i, j) = partial(d->f[static_cast<std::size_t>(i)],
                                    d->f_u[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)], x, u, t,
                                    VarKind::u, j);
        return out;
    };
    model.L_x = [d, n](const Vec& x, const Vec& u, double t) {
        Vec out(n);
        for (Eigen::Index j = 0; j < n; ++j)
            out[j] = partial(d->L, d->L_x[static_cast<std::size_t>(j)], x, u, t, VarKind::x, j);
        return out;
    };
    model.L_u = [d, m](const Vec& x, const Vec& u, double t) {
        Vec out(m);
        for (Eigen::Index j = 0; j < m; ++j)
            out[j] = partial(d->L, d->L_u[static_cast<std::size_t>(j)], x, u, t, VarKind::u, j);
        return out;
    };
    return model;
}

} // namespace tsfrac
