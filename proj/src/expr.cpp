#include "mwalk/expr.hpp"

#include <cctype>
#include <cmath>
#include <cstdlib>

#include <fmt/format.h>

namespace mw {

static Expr node(ExprKind k, Expr a = nullptr, Expr b = nullptr) {
    auto n = std::make_shared<ExprNode>();
    n->kind = k;
    n->a = std::move(a);
    n->b = std::move(b);
    return n;
}

Expr constant(double v) {
    auto n = std::make_shared<ExprNode>();
    n->kind = ExprKind::Constant;
    n->value = v;
    return n;
}

Expr variable(int index) {
    auto n = std::make_shared<ExprNode>();
    n->kind = ExprKind::Variable;
    n->var = index;
    return n;
}

static bool is_const(const Expr& e, double v) {
    return e->kind == ExprKind::Constant && e->value == v;
}

Expr add(Expr a, Expr b) {
    if (a->kind == ExprKind::Constant && b->kind == ExprKind::Constant)
        return constant(a->value + b->value);
    if (is_const(a, 0)) return b;
    if (is_const(b, 0)) return a;
    return node(ExprKind::Add, std::move(a), std::move(b));
}

Expr sub(Expr a, Expr b) {
    if (a->kind == ExprKind::Constant && b->kind == ExprKind::Constant)
        return constant(a->value - b->value);
    if (is_const(b, 0)) return a;
    if (is_const(a, 0)) return neg(std::move(b));
    return node(ExprKind::Sub, std::move(a), std::move(b));
}

Expr mul(Expr a, Expr b) {
    if (a->kind == ExprKind::Constant && b->kind == ExprKind::Constant)
        return constant(a->value * b->value);
    if (is_const(a, 0) || is_const(b, 0)) return constant(0);
    if (is_const(a, 1)) return b;
    if (is_const(b, 1)) return a;
    return node(ExprKind::Mul, std::move(a), std::move(b));
}

Expr div(Expr a, Expr b) {
    if (a->kind == ExprKind::Constant && b->kind == ExprKind::Constant &&
        b->value != 0)
        return constant(a->value / b->value);
    if (is_const(a, 0)) return constant(0);
    if (is_const(b, 1)) return a;
    return node(ExprKind::Div, std::move(a), std::move(b));
}

Expr pow(Expr a, Expr b) {
    if (is_const(b, 0)) return constant(1);
    if (is_const(b, 1)) return a;
    if (a->kind == ExprKind::Constant && b->kind == ExprKind::Constant)
        return constant(std::pow(a->value, b->value));
    return node(ExprKind::Pow, std::move(a), std::move(b));
}

Expr neg(Expr a) {
    if (a->kind == ExprKind::Constant) return constant(-a->value);
    if (a->kind == ExprKind::Neg) return a->a;
    return node(ExprKind::Neg, std::move(a));
}

Expr exp(Expr a) { return node(ExprKind::Exp, std::move(a)); }
Expr sin(Expr a) { return node(ExprKind::Sin, std::move(a)); }
Expr cos(Expr a) { return node(ExprKind::Cos, std::move(a)); }
Expr log(Expr a) { return node(ExprKind::Log, std::move(a)); }

// ---------------------------------------------------------------------------
// Parser: recursive descent.
//   expr   := term (('+'|'-') term)*
//   term   := unary (('*'|'/') unary)*
//   unary  := '-' unary | power
//   power  := atom ('^' unary)?          (right associative)
//   atom   := number | 'x'<int> | func '(' expr ')' | '(' expr ')'
// Pow binds tighter than unary minus, so -x1^2 == -(x1^2).

namespace {

class Parser {
public:
    Parser(const std::string& text, int dim) : s_(text), dim_(dim) {}

    Expr run() {
        Expr e = expr();
        skip_ws();
        if (pos_ != s_.size())
            throw ParseError(fmt::format("unexpected character '{}'", s_[pos_]), pos_);
        return e;
    }

private:
    const std::string& s_;
    int dim_;
    size_t pos_ = 0;

    void skip_ws() {
        while (pos_ < s_.size() && std::isspace(static_cast<unsigned char>(s_[pos_]))) ++pos_;
    }
    bool eat(char c) {
        skip_ws();
        if (pos_ < s_.size() && s_[pos_] == c) { ++pos_; return true; }
        return false;
    }
    char peek() {
        skip_ws();
        return pos_ < s_.size() ? s_[pos_] : '\0';
    }

    Expr expr() {
        Expr e = term();
        for (;;) {
            if (eat('+')) e = add(e, term());
            else if (eat('-')) e = sub(e, term());
            else return e;
        }
    }

    Expr term() {
        Expr e = unary();
        for (;;) {
            if (eat('*')) e = mul(e, unary());
            else if (eat('/')) e = div(e, unary());
            else return e;
        }
    }

    Expr unary() {
        if (eat('-')) return neg(unary());
        return power();
    }

    Expr power() {
        Expr base = atom();
        if (eat('^')) return pow(base, unary());
        return base;
    }

    Expr atom() {
        skip_ws();
        if (pos_ >= s_.size()) throw ParseError("unexpected end of expression", pos_);
        char c = s_[pos_];
        if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') return number();
        if (std::isalpha(static_cast<unsigned char>(c))) return identifier();
        if (c == '(') {
            ++pos_;
            Expr e = expr();
            if (!eat(')')) throw ParseError("expected ')'", pos_);
            return e;
        }
        throw ParseError(fmt::format("unexpected character '{}'", c), pos_);
    }

    Expr number() {
        const char* begin = s_.c_str() + pos_;
        char* end = nullptr;
        double v = std::strtod(begin, &end);
        if (end == begin || !std::isfinite(v))
            throw ParseError("invalid number", pos_);
        pos_ += static_cast<size_t>(end - begin);
        return constant(v);
    }

    Expr identifier() {
        size_t start = pos_;
        while (pos_ < s_.size() &&
               (std::isalnum(static_cast<unsigned char>(s_[pos_])) || s_[pos_] == '_'))
            ++pos_;
        std::string id = s_.substr(start, pos_ - start);
        if (id.size() >= 2 && id[0] == 'x' &&
            std::isdigit(static_cast<unsigned char>(id[1]))) {
            char* end = nullptr;
            long idx = std::strtol(id.c_str() + 1, &end, 10);
            if (*end != '\0')
                throw ParseError(fmt::format("unknown identifier '{}'", id), start);
            if (idx < 1 || idx > dim_)
                throw ParseError(
                    fmt::format("variable index out of range: {} (dim = {})", id, dim_),
                    start);
            return variable(static_cast<int>(idx - 1));
        }
        Expr (*fn)(Expr) = nullptr;
        if (id == "exp") fn = exp;
        else if (id == "sin") fn = sin;
        else if (id == "cos") fn = cos;
        else if (id == "log") fn = log;
        else throw ParseError(fmt::format("unknown identifier '{}'", id), start);
        if (!eat('(')) throw ParseError(fmt::format("expected '(' after {}", id), pos_);
        Expr arg = expr();
        if (!eat(')')) throw ParseError("expected ')'", pos_);
        return fn(arg);
    }
};

// Precedence levels used by the printer; negative constants print like a
// unary minus, so they share its level.
int prec(const Expr& e) {
    switch (e->kind) {
        case ExprKind::Add: case ExprKind::Sub: return 1;
        case ExprKind::Mul: case ExprKind::Div: return 2;
        case ExprKind::Neg: return 3;
        case ExprKind::Pow: return 4;
        case ExprKind::Constant: return e->value < 0 ? 3 : 5;
        default: return 5;
    }
}

void print(const Expr& e, std::string& out) {
    auto paren = [&out](const Expr& c, bool need) {
        if (need) out += '(';
        print(c, out);
        if (need) out += ')';
    };
    switch (e->kind) {
        case ExprKind::Constant: out += fmt::format("{}", e->value); break;
        case ExprKind::Variable: out += fmt::format("x{}", e->var + 1); break;
        case ExprKind::Add:
            paren(e->a, prec(e->a) < 1); out += '+'; paren(e->b, prec(e->b) <= 1);
            break;
        case ExprKind::Sub:
            paren(e->a, prec(e->a) < 1); out += '-'; paren(e->b, prec(e->b) <= 1);
            break;
        case ExprKind::Mul:
            paren(e->a, prec(e->a) < 2); out += '*'; paren(e->b, prec(e->b) <= 2);
            break;
        case ExprKind::Div:
            paren(e->a, prec(e->a) < 2); out += '/'; paren(e->b, prec(e->b) <= 2);
            break;
        case ExprKind::Pow:
            paren(e->a, prec(e->a) < 5); out += '^'; paren(e->b, prec(e->b) < 3);
            break;
        case ExprKind::Neg:
            out += '-'; paren(e->a, prec(e->a) < 3);
            break;
        case ExprKind::Exp: out += "exp("; print(e->a, out); out += ')'; break;
        case ExprKind::Sin: out += "sin("; print(e->a, out); out += ')'; break;
        case ExprKind::Cos: out += "cos("; print(e->a, out); out += ')'; break;
        case ExprKind::Log: out += "log("; print(e->a, out); out += ')'; break;
    }
}

}  // namespace

Expr parse_expression(const std::string& text, int dim) {
    if (text.empty()) throw ParseError("empty expression", 0);
    if (dim < 1) throw ParseError("dimension must be >= 1", 0);
    return Parser(text, dim).run();
}

std::string to_string(const Expr& e) {
    std::string out;
    print(e, out);
    return out;
}

double eval(const Expr& e, const double* x) {
    switch (e->kind) {
        case ExprKind::Constant: return e->value;
        case ExprKind::Variable: return x[e->var];
        case ExprKind::Add: return eval(e->a, x) + eval(e->b, x);
        case ExprKind::Sub: return eval(e->a, x) - eval(e->b, x);
        case ExprKind::Mul: return eval(e->a, x) * eval(e->b, x);
        case ExprKind::Div: return eval(e->a, x) / eval(e->b, x);
        case ExprKind::Pow: return std::pow(eval(e->a, x), eval(e->b, x));
        case ExprKind::Neg: return -eval(e->a, x);
        case ExprKind::Exp: return std::exp(eval(e->a, x));
        case ExprKind::Sin: return std::sin(eval(e->a, x));
        case ExprKind::Cos: return std::cos(eval(e->a, x));
        case ExprKind::Log: return std::log(eval(e->a, x));
    }
    return 0;  // unreachable
}

Expr diff(const Expr& e, int var) {
    switch (e->kind) {
        case ExprKind::Constant: return constant(0);
        case ExprKind::Variable: return constant(e->var == var ? 1 : 0);
        case ExprKind::Add: return add(diff(e->a, var), diff(e->b, var));
        case ExprKind::Sub: return sub(diff(e->a, var), diff(e->b, var));
        case ExprKind::Mul:
            return add(mul(diff(e->a, var), e->b), mul(e->a, diff(e->b, var)));
        case ExprKind::Div:
            return div(sub(mul(diff(e->a, var), e->b), mul(e->a, diff(e->b, var))),
                       pow(e->b, constant(2)));
        case ExprKind::Pow:
            if (e->b->kind == ExprKind::Constant) {
                double c = e->b->value;
                return mul(mul(constant(c), pow(e->a, constant(c - 1))),
                           diff(e->a, var));
            }
            // General rule; valid where the base is positive.
            return mul(pow(e->a, e->b),
                       add(mul(diff(e->b, var), log(e->a)),
                           div(mul(e->b, diff(e->a, var)), e->a)));
        case ExprKind::Neg: return neg(diff(e->a, var));
        case ExprKind::Exp: return mul(exp(e->a), diff(e->a, var));
        case ExprKind::Sin: return mul(cos(e->a), diff(e->a, var));
        case ExprKind::Cos: return neg(mul(sin(e->a), diff(e->a, var)));
        case ExprKind::Log: return div(diff(e->a, var), e->a);
    }
    return constant(0);  // unreachable
}

bool equal(const Expr& a, const Expr& b) {
    if (a.get() == b.get()) return true;
    if (a->kind != b->kind) return false;
    switch (a->kind) {
        case ExprKind::Constant: return a->value == b->value;
        case ExprKind::Variable: return a->var == b->var;
        default:
            if (a->a && !equal(a->a, b->a)) return false;
            if (a->b && !equal(a->b, b->b)) return false;
            return true;
    }
}

}  // namespace mw
