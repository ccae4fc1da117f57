#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "mwalk/expr.hpp"

using namespace mw;

static double eval1(const char* text, double x) {
    Expr e = parse_expression(text, 1);
    return eval(e, &x);
}

TEST_CASE("parser basics") {
    CHECK(eval1("1 + 2*3", 0.0) == 7.0);
    CHECK(eval1("(1+2)*3", 0.0) == 9.0);
    CHECK(eval1("x1^2", 3.0) == 9.0);
    CHECK(eval1("2*x1 - 1", 2.0) == 3.0);
    CHECK(eval1("exp(0)", 0.0) == 1.0);
    CHECK(eval1("sin(0) + cos(0)", 5.0) == 1.0);
    CHECK(eval1("6/3/2", 0.0) == 1.0);  // left assoc
    CHECK(eval1("2^3^2", 0.0) == 512.0);  // right assoc
    CHECK(eval1("-x1^2", 2.0) == -4.0);  // pow binds tighter than unary minus
    CHECK(eval1("1e-2 * x1", 100.0) == doctest::Approx(1.0));
}

TEST_CASE("parse errors carry a position") {
    CHECK_THROWS_AS(parse_expression("1 +", 1), ParseError);
    CHECK_THROWS_AS(parse_expression("x2", 1), ParseError);  // out of range var
    CHECK_THROWS_AS(parse_expression("(1+2", 1), ParseError);
    CHECK_THROWS_AS(parse_expression("foo(1)", 1), ParseError);
    try {
        parse_expression("1 + @", 1);
        FAIL("expected throw");
    } catch (const ParseError& e) {
        CHECK(e.position == 4);
    }
}

TEST_CASE("constant folding") {
    Expr e = parse_expression("2*3 + 0*x1", 1);
    CHECK(e->kind == ExprKind::Constant);
    CHECK(e->value == 6.0);
    Expr f = parse_expression("x1^1", 1);
    CHECK(f->kind == ExprKind::Variable);
}

TEST_CASE("print round trip") {
    for (const char* text : {"(x1^2 - 1)^2", "x1*x2 + sin(x1)/x2", "-x1 + 2",
                             "exp(-8*(x1-1)^2)", "x1^(x2+1)", "2 - (3 - x1)"}) {
        Expr e = parse_expression(text, 2);
        Expr r = parse_expression(to_string(e), 2);
        CHECK(equal(e, r));
        double x[2] = {0.37, -1.21};
        CHECK(eval(e, x) == doctest::Approx(eval(r, x)).epsilon(1e-14));
    }
}

TEST_CASE("derivatives match finite differences") {
    const char* exprs[] = {"(x1^2-1)^2", "sin(3*x1)*cos(x2)", "exp(-2*(x1+1)^2) + x2^3",
                           "x1/x2", "x1^3 + x2^(2)", "log(x1+3)"};
    for (const char* text : exprs) {
        Expr e = parse_expression(text, 2);
        for (int var = 0; var < 2; ++var) {
            Expr d = diff(e, var);
            double x[2] = {0.7, 1.3};
            const double h = 1e-6;
            double xp[2] = {x[0], x[1]}, xm[2] = {x[0], x[1]};
            xp[var] += h;
            xm[var] -= h;
            double fd = (eval(e, xp) - eval(e, xm)) / (2 * h);
            CHECK(eval(d, x) == doctest::Approx(fd).epsilon(1e-6));
        }
    }
}

TEST_CASE("derivative of constant and unrelated variable is zero") {
    Expr e = parse_expression("x1^2 + 7", 2);
    Expr d = diff(e, 1);
    CHECK(d->kind == ExprKind::Constant);
    CHECK(d->value == 0.0);
}

TEST_CASE("general power rule") {
    // d/dx x^x = x^x (ln x + 1)
    Expr e = parse_expression("x1^x1", 1);
    Expr d = diff(e, 0);
    double x = 1.7;
    double want = std::pow(x, x) * (std::log(x) + 1.0);
    CHECK(eval(d, &x) == doctest::Approx(want).epsilon(1e-12));
}

TEST_CASE("structural equality") {
    CHECK(equal(parse_expression("x1 + 1", 1), parse_expression("x1+1", 1)));
    CHECK_FALSE(equal(parse_expression("x1 + 1", 1), parse_expression("1 + x1", 1)));
}
