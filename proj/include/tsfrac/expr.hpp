#pragma once

// Small arithmetic expression language for right-hand sides, running costs
// and reference signals.
//
//   expr    := term (('+' | '-') term)*
//   term    := unary (('*' | '/') unary)*
//   unary   := '-' unary | power
//   power   := primary ('^' unary)?
//   primary := number | name | name '(' expr (',' expr)* ')' | '(' expr ')'
//
// '^' binds tighter than unary minus and associates to the right, so -x^2 is
// -(x^2) and x^2^3 is x^(2^3). Variables are t, y, x, u, lambda and the
// indexed forms x1, x2, ..., u1, ..., lambda1, ... (1-based); pi is a
// constant. Functions: sin cos exp log sqrt abs and pow(a, b).

#include <cstddef>
#include <memory>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace tsfrac {

enum class VarKind { t, y, x, u, lambda };

class Expr {
public:
    enum class Kind { number, variable, negate, add, sub, mul, div, pow, call };
    enum class Func { sin, cos, exp, log, sqrt, abs, pow };

    struct Node {
        Kind kind = Kind::number;
        double value = 0.0;
        std::string name; // variable or function name as written
        VarKind var = VarKind::t;
        std::size_t index = 0; // component of x, u or lambda
        Func func = Func::sin;
        std::vector<Expr> args;
    };

    explicit Expr(std::shared_ptr<const Node> node) : node_(std::move(node)) {}

    const Node& node() const { return *node_; }
    Kind kind() const { return node_->kind; }

    static Expr number(double v);
    static Expr variable(const std::string& name);
    static Expr unary_minus(Expr a);
    static Expr binary(Kind k, Expr a, Expr b);
    static Expr call(Func f, std::vector<Expr> args);

private:
    std::shared_ptr<const Node> node_;
};

/// Throws ParseError (with a 1-based column) on malformed text or unknown
/// identifiers.
Expr parse_expr(std::string_view source);

/// Minimal-parenthesis text that parses back to a structurally equal tree.
std::string to_string(const Expr& e);

bool structurally_equal(const Expr& a, const Expr& b);

struct EvalEnv {
    double t = 0.0;
    double y = 0.0;
    std::span<const double> x;
    std::span<const double> u;
    std::span<const double> lambda;
};

/// Throws std::domain_error when a finite input produces a nonfinite value
/// (log of a nonpositive number and the like), std::invalid_argument when a
/// variable has no value in env.
double eval(const Expr& e, const EvalEnv& env);

/// Symbolic partial derivative with respect to one variable slot.
Expr differentiate(const Expr& e, VarKind var, std::size_t index = 0);

/// Variable names used by the expression.
std::set<std::string> variables(const Expr& e);

/// Largest component index used for a variable kind, plus one (0 if unused).
std::size_t components_used(const Expr& e, VarKind var);

} // namespace tsfrac
