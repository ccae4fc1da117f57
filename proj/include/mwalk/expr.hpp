#pragma once

#include <memory>
#include <stdexcept>
#include <string>

namespace mw {

// Expression AST over variables x1..xd. `log` is not part of the input
// grammar; it only appears in derivatives of general powers, but the parser
// accepts it so that pretty-printed expressions always round-trip.
enum class ExprKind {
    Constant, Variable,
    Add, Sub, Mul, Div, Pow, Neg,
    Exp, Sin, Cos, Log
};

struct ExprNode;
using Expr = std::shared_ptr<const ExprNode>;

struct ExprNode {
    ExprKind kind;
    double value = 0.0;  // Constant
    int var = -1;        // Variable (0-based)
    Expr a, b;
};

struct ParseError : std::runtime_error {
    size_t position;
    ParseError(const std::string& msg, size_t pos)
        : std::runtime_error(msg), position(pos) {}
};

// Smart constructors; binary/unary ones fold constants and drop trivial
// identities (x+0, x*1, x^1, ...) so derivative trees stay small.
Expr constant(double v);
Expr variable(int index);
Expr add(Expr a, Expr b);
Expr sub(Expr a, Expr b);
Expr mul(Expr a, Expr b);
Expr div(Expr a, Expr b);
Expr pow(Expr a, Expr b);
Expr neg(Expr a);
Expr exp(Expr a);
Expr sin(Expr a);
Expr cos(Expr a);
Expr log(Expr a);

// Throws ParseError. dim bounds the accepted variable indices.
Expr parse_expression(const std::string& text, int dim);

std::string to_string(const Expr& e);

double eval(const Expr& e, const double* x);

// Partial derivative with respect to x_{var+1}.
Expr diff(const Expr& e, int var);

bool equal(const Expr& a, const Expr& b);

}  // namespace mw
