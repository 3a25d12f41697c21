#include "tsfrac/expr.hpp"

#include <cctype>
#include <cmath>
#include <numbers>
#include <stdexcept>

#include <fmt/format.h>

#include "tsfrac/error.hpp"

namespace tsfrac {

namespace {

using Kind = Expr::Kind;
using Func = Expr::Func;

struct FuncInfo {
    const char* name;
    Func func;
    std::size_t arity;
};

constexpr FuncInfo kFuncs[] = {
    {"sin", Func::sin, 1}, {"cos", Func::cos, 1},   {"exp", Func::exp, 1}, {"log", Func::log, 1},
    {"sqrt", Func::sqrt, 1}, {"abs", Func::abs, 1}, {"pow", Func::pow, 2},
};

const FuncInfo* find_func(std::string_view name) {
    for (const auto& f : kFuncs) {
        if (name == f.name) {
            return &f;
        }
    }
    return nullptr;
}

const char* func_name(Func f) {
    for (const auto& info : kFuncs) {
        if (info.func == f) {
            return info.name;
        }
    }
    return "?";
}

// Splits "x", "x3", "lambda12" into kind and 0-based index.
bool classify_variable(std::string_view name, VarKind& kind, std::size_t& index) {
    if (name == "t" || name == "y") {
        kind = name == "t" ? VarKind::t : VarKind::y;
        index = 0;
        return true;
    }
    std::string_view stem;
    for (std::string_view s : {std::string_view("lambda"), std::string_view("x"), std::string_view("u")}) {
        if (name.substr(0, s.size()) == s) {
            stem = s;
            break;
        }
    }
    if (stem.empty()) {
        return false;
    }
    kind = stem == "x" ? VarKind::x : stem == "u" ? VarKind::u : VarKind::lambda;
    const std::string_view digits = name.substr(stem.size());
    if (digits.empty()) {
        index = 0;
        return true;
    }
    if (digits[0] == '0') {
        return false;
    }
    std::size_t v = 0;
    for (char c : digits) {
        if (!std::isdigit(static_cast<unsigned char>(c)) || v > 100000) {
            return false;
        }
        v = v * 10 + static_cast<std::size_t>(c - '0');
    }
    index = v - 1;
    return true;
}

class Parser {
public:
    explicit Parser(std::string_view src) : src_(src) {}

    Expr parse() {
        skip_ws();
        if (pos_ == src_.size()) {
            fail("empty expression", "number, name, '(' or '-'");
        }
        Expr e = expr();
        skip_ws();
        if (pos_ != src_.size()) {
            fail(fmt::format("unexpected '{}'", src_[pos_]), "operator or end of input");
        }
        return e;
    }

private:
    [[noreturn]] void fail(const std::string& what, const std::string& expected) const {
        throw ParseError(fmt::format("{}; expected {}", what, expected), pos_ + 1);
    }

    void skip_ws() {
        while (pos_ < src_.size() && std::isspace(static_cast<unsigned char>(src_[pos_]))) {
            ++pos_;
        }
    }

    bool accept(char c) {
        skip_ws();
        if (pos_ < src_.size() && src_[pos_] == c) {
            ++pos_;
            return true;
        }
        return false;
    }

    Expr expr() {
        Expr e = term();
        for (;;) {
            if (accept('+')) {
                e = Expr::binary(Kind::add, e, term());
            } else if (accept('-')) {
                e = Expr::binary(Kind::sub, e, term());
            } else {
                return e;
            }
        }
    }

    Expr term() {
        Expr e = unary();
        for (;;) {
            if (accept('*')) {
                e = Expr::binary(Kind::mul, e, unary());
            } else if (accept('/')) {
                e = Expr::binary(Kind::div, e, unary());
            } else {
                return e;
            }
        }
    }

    Expr unary() {
        if (accept('-')) {
            return Expr::unary_minus(unary());
        }
        return power();
    }

    Expr power() {
        Expr base = primary();
        if (accept('^')) {
            return Expr::binary(Kind::pow, base, unary());
        }
        return base;
    }

    Expr primary() {
        skip_ws();
        if (pos_ == src_.size()) {
            fail("unexpected end of input", "number, name, '(' or '-'");
        }
        const char c = src_[pos_];
        if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') {
            return number();
        }
        if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') {
            return name();
        }
        if (c == '(') {
            ++pos_;
            Expr e = expr();
            if (!accept(')')) {
                fail("unbalanced parenthesis", "')'");
            }
            return e;
        }
        fail(fmt::format("unexpected '{}'", c), "number, name, '(' or '-'");
    }

    Expr number() {
        const std::size_t start = pos_;
        auto digits = [&] {
            std::size_t n = 0;
            while (pos_ < src_.size() && std::isdigit(static_cast<unsigned char>(src_[pos_]))) {
                ++pos_;
                ++n;
            }
            return n;
        };
        std::size_t n = digits();
        if (pos_ < src_.size() && src_[pos_] == '.') {
            ++pos_;
            n += digits();
        }
        if (n == 0) {
            pos_ = start;
            fail("malformed number", "digit");
        }
        if (pos_ < src_.size() && (src_[pos_] == 'e' || src_[pos_] == 'E')) {
            ++pos_;
            if (pos_ < src_.size() && (src_[pos_] == '+' || src_[pos_] == '-')) {
                ++pos_;
            }
            if (digits() == 0) {
                fail("malformed exponent", "digit");
            }
        }
        const std::string text(src_.substr(start, pos_ - start));
        const double v = std::strtod(text.c_str(), nullptr);
        if (!std::isfinite(v)) {
            pos_ = start;
            fail(fmt::format("number {} out of range", text), "finite number");
        }
        return Expr::number(v);
    }

    Expr name() {
        const std::size_t start = pos_;
        while (pos_ < src_.size() &&
               (std::isalnum(static_cast<unsigned char>(src_[pos_])) || src_[pos_] == '_')) {
            ++pos_;
        }
        const std::string id(src_.substr(start, pos_ - start));
        if (const FuncInfo* f = find_func(id)) {
            if (!accept('(')) {
                fail(fmt::format("function {} needs arguments", id), "'('");
            }
            std::vector<Expr> args{expr()};
            while (accept(',')) {
                args.push_back(expr());
            }
            if (!accept(')')) {
                fail("unbalanced parenthesis", args.size() < f->arity ? "',' or ')'" : "')'");
            }
            if (args.size() != f->arity) {
                pos_ = start;
                fail(fmt::format("{} takes {} argument(s), got {}", id, f->arity, args.size()),
                     fmt::format("{} argument(s)", f->arity));
            }
            return Expr::call(f->func, std::move(args));
        }
        if (id == "pi") {
            return Expr::number(std::numbers::pi);
        }
        VarKind kind;
        std::size_t index;
        if (!classify_variable(id, kind, index)) {
            pos_ = start;
            fail(fmt::format("unknown identifier '{}'", id),
                 "t, y, x, u, lambda, an indexed variable, pi or a function name");
        }
        return Expr::variable(id);
    }

    std::string_view src_;
    std::size_t pos_ = 0;
};

// Binding strength of the text form; higher binds tighter.
int precedence(const Expr& e) {
    switch (e.kind()) {
    case Kind::add:
    case Kind::sub: return 1;
    case Kind::mul:
    case Kind::div: return 2;
    case Kind::negate: return 3;
    case Kind::pow: return 4;
    default: return 5;
    }
}

std::string format_number(double v) {
    if (v == std::numbers::pi) {
        return "pi";
    }
    return fmt::format("{}", v);
}

void print(const Expr& e, std::string& out);

void print_at(const Expr& e, int min_prec, std::string& out) {
    if (precedence(e) < min_prec) {
        out += '(';
        print(e, out);
        out += ')';
    } else {
        print(e, out);
    }
}

void print(const Expr& e, std::string& out) {
    const auto& n = e.node();
    switch (n.kind) {
    case Kind::number: out += format_number(n.value); return;
    case Kind::variable: out += n.name; return;
    case Kind::negate:
        out += '-';
        print_at(n.args[0], 3, out);
        return;
    case Kind::add:
    case Kind::sub:
        print_at(n.args[0], 1, out);
        out += n.kind == Kind::add ? " + " : " - ";
        print_at(n.args[1], 2, out);
        return;
    case Kind::mul:
    case Kind::div:
        print_at(n.args[0], 2, out);
        out += n.kind == Kind::mul ? '*' : '/';
        print_at(n.args[1], 3, out);
        return;
    case Kind::pow:
        print_at(n.args[0], 5, out);
        out += '^';
        print_at(n.args[1], 3, out);
        return;
    case Kind::call:
        out += func_name(n.func);
        out += '(';
        for (std::size_t i = 0; i < n.args.size(); ++i) {
            if (i > 0) {
                out += ", ";
            }
            print(n.args[i], out);
        }
        out += ')';
        return;
    }
}

double lookup(const Expr::Node& n, const EvalEnv& env) {
    std::span<const double> slot;
    switch (n.var) {
    case VarKind::t: return env.t;
    case VarKind::y: return env.y;
    case VarKind::x: slot = env.x; break;
    case VarKind::u: slot = env.u; break;
    case VarKind::lambda: slot = env.lambda; break;
    }
    if (n.index >= slot.size()) {
        throw std::invalid_argument(fmt::format("variable {} has no value here", n.name));
    }
    return slot[n.index];
}

double checked(double v, const char* what) {
    if (!std::isfinite(v)) {
        throw std::domain_error(fmt::format("{} is not finite", what));
    }
    return v;
}

bool is_number(const Expr& e, double v) { return e.kind() == Kind::number && e.node().value == v; }

bool depends_on(const Expr& e, VarKind var, std::size_t index) {
    const auto& n = e.node();
    if (n.kind == Kind::variable) {
        return n.var == var && n.index == index;
    }
    for (const Expr& a : n.args) {
        if (depends_on(a, var, index)) {
            return true;
        }
    }
    return false;
}

// Builders with light folding so derivatives stay readable.
Expr add(Expr a, Expr b) {
    if (is_number(a, 0.0)) return b;
    if (is_number(b, 0.0)) return a;
    return Expr::binary(Kind::add, a, b);
}

Expr sub(Expr a, Expr b) {
    if (is_number(b, 0.0)) return a;
    if (is_number(a, 0.0)) return Expr::unary_minus(b);
    return Expr::binary(Kind::sub, a, b);
}

Expr mul(Expr a, Expr b) {
    if (is_number(a, 0.0) || is_number(b, 0.0)) return Expr::number(0.0);
    if (is_number(a, 1.0)) return b;
    if (is_number(b, 1.0)) return a;
    return Expr::binary(Kind::mul, a, b);
}

Expr div(Expr a, Expr b) {
    if (is_number(a, 0.0)) return Expr::number(0.0);
    if (is_number(b, 1.0)) return a;
    return Expr::binary(Kind::div, a, b);
}

Expr neg(Expr a) {
    if (is_number(a, 0.0)) return a;
    if (a.kind() == Kind::negate) return a.node().args[0];
    return Expr::unary_minus(a);
}

Expr fn(Func f, Expr a) { return Expr::call(f, {a}); }

Expr power_rule(const Expr& a, const Expr& b, const Expr& da, const Expr& db, VarKind var, std::size_t index,
                const Expr& self) {
    if (!depends_on(b, var, index)) {
        Expr b1 = b.kind() == Kind::number ? Expr::number(b.node().value - 1.0)
                                           : Expr::binary(Kind::sub, b, Expr::number(1.0));
        Expr core = is_number(b1, 1.0) ? a : Expr::binary(Kind::pow, a, b1);
        if (is_number(b1, 0.0)) {
            core = Expr::number(1.0);
        }
        return mul(mul(b, core), da);
    }
    // d(a^b) = a^b (b' log a + b a'/a)
    return mul(self, add(mul(db, fn(Func::log, a)), div(mul(b, da), a)));
}

std::shared_ptr<Expr::Node> make_node(Kind k) {
    auto n = std::make_shared<Expr::Node>();
    n->kind = k;
    return n;
}

} // namespace

Expr Expr::number(double v) {
    // Negative constants are kept as negated literals so printing round-trips.
    if (v < 0.0) {
        return unary_minus(number(-v));
    }
    auto n = make_node(Kind::number);
    n->value = v;
    return Expr(std::move(n));
}

Expr Expr::variable(const std::string& name) {
    auto n = make_node(Kind::variable);
    if (!classify_variable(name, n->var, n->index)) {
        throw std::invalid_argument(fmt::format("unknown variable '{}'", name));
    }
    n->name = name;
    return Expr(std::move(n));
}

Expr Expr::unary_minus(Expr a) {
    auto n = make_node(Kind::negate);
    n->args = {std::move(a)};
    return Expr(std::move(n));
}

Expr Expr::binary(Kind k, Expr a, Expr b) {
    auto n = make_node(k);
    n->args = {std::move(a), std::move(b)};
    return Expr(std::move(n));
}

Expr Expr::call(Func f, std::vector<Expr> args) {
    auto n = make_node(Kind::call);
    n->func = f;
    n->name = func_name(f);
    n->args = std::move(args);
    return Expr(std::move(n));
}

Expr parse_expr(std::string_view source) { return Parser(source).parse(); }

std::string to_string(const Expr& e) {
    std::string out;
    print(e, out);
    return out;
}

bool structurally_equal(const Expr& a, const Expr& b) {
    const auto& x = a.node();
    const auto& y = b.node();
    if (x.kind != y.kind || x.args.size() != y.args.size()) {
        return false;
    }
    switch (x.kind) {
    case Kind::number:
        if (x.value != y.value) return false;
        break;
    case Kind::variable:
        if (x.var != y.var || x.index != y.index) return false;
        break;
    case Kind::call:
        if (x.func != y.func) return false;
        break;
    default: break;
    }
    for (std::size_t i = 0; i < x.args.size(); ++i) {
        if (!structurally_equal(x.args[i], y.args[i])) {
            return false;
        }
    }
    return true;
}

double eval(const Expr& e, const EvalEnv& env) {
    const auto& n = e.node();
    switch (n.kind) {
    case Kind::number: return n.value;
    case Kind::variable: return lookup(n, env);
    case Kind::negate: return -eval(n.args[0], env);
    case Kind::add: return checked(eval(n.args[0], env) + eval(n.args[1], env), "sum");
    case Kind::sub: return checked(eval(n.args[0], env) - eval(n.args[1], env), "difference");
    case Kind::mul: return checked(eval(n.args[0], env) * eval(n.args[1], env), "product");
    case Kind::div: {
        const double den = eval(n.args[1], env);
        if (den == 0.0) {
            throw std::domain_error("division by zero");
        }
        return checked(eval(n.args[0], env) / den, "quotient");
    }
    case Kind::pow: return checked(std::pow(eval(n.args[0], env), eval(n.args[1], env)), "power");
    case Kind::call: {
        const double a = eval(n.args[0], env);
        switch (n.func) {
        case Func::sin: return std::sin(a);
        case Func::cos: return std::cos(a);
        case Func::exp: return checked(std::exp(a), "exp");
        case Func::log:
            if (!(a > 0.0)) {
                throw std::domain_error(fmt::format("log of nonpositive value {}", a));
            }
            return std::log(a);
        case Func::sqrt:
            if (a < 0.0) {
                throw std::domain_error(fmt::format("sqrt of negative value {}", a));
            }
            return std::sqrt(a);
        case Func::abs: return std::abs(a);
        case Func::pow: return checked(std::pow(a, eval(n.args[1], env)), "pow");
        }
    }
    }
    throw std::logic_error("unreachable expression kind");
}

Expr differentiate(const Expr& e, VarKind var, std::size_t index) {
    const auto& n = e.node();
    auto d = [&](const Expr& a) { return differentiate(a, var, index); };
    switch (n.kind) {
    case Kind::number: return Expr::number(0.0);
    case Kind::variable: return Expr::number(n.var == var && n.index == index ? 1.0 : 0.0);
    case Kind::negate: return neg(d(n.args[0]));
    case Kind::add: return add(d(n.args[0]), d(n.args[1]));
    case Kind::sub: return sub(d(n.args[0]), d(n.args[1]));
    case Kind::mul: {
        const Expr& a = n.args[0];
        const Expr& b = n.args[1];
        return add(mul(d(a), b), mul(a, d(b)));
    }
    case Kind::div: {
        const Expr& a = n.args[0];
        const Expr& b = n.args[1];
        const Expr db = d(b);
        if (is_number(db, 0.0)) {
            return div(d(a), b);
        }
        return div(sub(mul(d(a), b), mul(a, db)), Expr::binary(Kind::pow, b, Expr::number(2.0)));
    }
    case Kind::pow: return power_rule(n.args[0], n.args[1], d(n.args[0]), d(n.args[1]), var, index, e);
    case Kind::call: {
        const Expr& a = n.args[0];
        const Expr da = d(a);
        switch (n.func) {
        case Func::sin: return mul(fn(Func::cos, a), da);
        case Func::cos: return neg(mul(fn(Func::sin, a), da));
        case Func::exp: return mul(e, da);
        case Func::log: return div(da, a);
        case Func::sqrt: return div(da, mul(Expr::number(2.0), e));
        case Func::abs: return div(mul(a, da), e);
        case Func::pow: return power_rule(a, n.args[1], da, d(n.args[1]), var, index, e);
        }
    }
    }
    throw std::logic_error("unreachable expression kind");
}

std::set<std::string> variables(const Expr& e) {
    std::set<std::string> out;
    const auto& n = e.node();
    if (n.kind == Kind::variable) {
        out.insert(n.name);
    }
    for (const Expr& a : n.args) {
        out.merge(variables(a));
    }
    return out;
}

std::size_t components_used(const Expr& e, VarKind var) {
    const auto& n = e.node();
    std::size_t m = n.kind == Kind::variable && n.var == var ? n.index + 1 : 0;
    for (const Expr& a : n.args) {
        m = std::max(m, components_used(a, var));
    }
    return m;
}

} // namespace tsfrac
