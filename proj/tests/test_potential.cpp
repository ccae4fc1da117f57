#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "mwalk/builtins.hpp"
#include "mwalk/potential.hpp"

using namespace mw;

TEST_CASE("parse potential text") {
    Potential p = Potential::parse(
        "# comment\n"
        "dim = 2\n"
        "domain = [-1, 1] x [0, 2]\n"
        "F = x1^2 + x2\n");
    CHECK(p.dim() == 2);
    CHECK(p.lo()[0] == -1.0);
    CHECK(p.hi()[1] == 2.0);
    double x[2] = {0.5, 1.0};
    CHECK(p.value(x) == doctest::Approx(1.25));
}

TEST_CASE("parse rejects bad input") {
    CHECK_THROWS_AS(Potential::parse("dim = 1\nF = x1\n"), PotentialError);
    CHECK_THROWS_AS(Potential::parse("dim = 2\ndomain = [-1,1]\nF = x1\n"), PotentialError);
    CHECK_THROWS_AS(Potential::parse("dim = 1\ndomain = [1,-1]\nF = x1\n"), PotentialError);
    CHECK_THROWS_AS(Potential::parse("dim = 1\ndomain = [-1,1]\nF = x2\n"), ParseError);
}

TEST_CASE("symbolic derivatives match finite differences on builtins") {
    for (const char* name : {"doublewell", "tilted", "fourwell", "twosaddle"}) {
        Potential p = builtin_potential(name);
        const int d = p.dim();
        std::vector<double> x(d), g(d), h(d * d);
        for (int i = 0; i < d; ++i) x[i] = 0.21 + 0.13 * i;
        p.gradient(x.data(), g.data());
        p.hessian(x.data(), h.data());
        const double dh = 1e-6;
        for (int i = 0; i < d; ++i) {
            std::vector<double> xp = x, xm = x;
            xp[i] += dh;
            xm[i] -= dh;
            double fd = (p.value(xp.data()) - p.value(xm.data())) / (2 * dh);
            CHECK(g[i] == doctest::Approx(fd).epsilon(1e-6));
            std::vector<double> gp(d), gm(d);
            p.gradient(xp.data(), gp.data());
            p.gradient(xm.data(), gm.data());
            for (int j = 0; j < d; ++j) {
                double fdh = (gp[j] - gm[j]) / (2 * dh);
                CHECK(h[i * d + j] == doctest::Approx(fdh).epsilon(1e-5));
            }
        }
    }
}

TEST_CASE("critical points of the double well") {
    Potential p = builtin_potential("doublewell");
    auto cps = find_critical_points(p);
    REQUIRE(cps.size() == 3);
    CHECK(cps[0].kind == CritKind::Minimum);
    CHECK(cps[1].kind == CritKind::Minimum);
    CHECK(cps[2].kind == CritKind::Saddle);
    CHECK(cps[0].x[0] == doctest::Approx(-1.0).epsilon(1e-9));
    CHECK(cps[1].x[0] == doctest::Approx(1.0).epsilon(1e-9));
    CHECK(std::abs(cps[2].x[0]) < 1e-9);
    CHECK(cps[2].mu() == doctest::Approx(4.0).epsilon(1e-8));
    CHECK(cps[2].grad_norm < 1e-8);
}

TEST_CASE("critical points of the four well") {
    Potential p = builtin_potential("fourwell");
    auto cps = find_critical_points(p);
    int minima = 0, saddles = 0, maxima = 0;
    for (const auto& cp : cps) {
        if (cp.kind == CritKind::Minimum) ++minima;
        if (cp.kind == CritKind::Saddle) ++saddles;
        if (cp.kind == CritKind::Maximum) ++maxima;
    }
    CHECK(minima == 4);
    CHECK(saddles == 4);
    CHECK(maxima == 1);
}

TEST_CASE("two-saddle potential has equal saddle heights and 1:4 curvatures") {
    Potential p = builtin_potential("twosaddle");
    auto cps = find_critical_points(p);
    std::vector<const CriticalPoint*> sad;
    for (const auto& cp : cps)
        if (cp.kind == CritKind::Saddle) sad.push_back(&cp);
    REQUIRE(sad.size() == 2);
    CHECK(sad[0]->f == doctest::Approx(sad[1]->f).epsilon(1e-10));
    double r = sad[0]->mu() / sad[1]->mu();
    if (r < 1) r = 1 / r;
    CHECK(r == doctest::Approx(4.0).epsilon(1e-6));
}

TEST_CASE("hypotheses hold on the builtins") {
    for (const char* name : {"doublewell", "tilted", "fourwell", "twosaddle", "singlewell"}) {
        Potential p = builtin_potential(name);
        auto cps = find_critical_points(p);
        auto rep = check_hypotheses(p, cps);
        INFO(name);
        CHECK(rep.ok());
    }
}

TEST_CASE("degenerate critical point is reported") {
    Potential p = Potential::parse("dim = 1\ndomain = [-1,1]\nF = x1^4\n");
    auto cps = find_critical_points(p);
    REQUIRE(cps.size() == 1);
    CHECK(cps[0].kind == CritKind::Degenerate);
    auto rep = check_hypotheses(p, cps);
    CHECK_FALSE(rep.ok());
}

TEST_CASE("boundary drift sign flag") {
    // F decreases toward the boundary: fails the default check, passes the
    // literal-sign variant
    Potential p = Potential::parse("dim = 1\ndomain = [-1,1]\nF = 0 - x1^2\n");
    auto cps = find_critical_points(p);
    CHECK_FALSE(check_hypotheses(p, cps).h4_ok);
    CHECK(check_hypotheses(p, cps, true).h4_ok);
}

TEST_CASE("saddle unstable direction is a unit eigenvector") {
    Potential p = builtin_potential("fourwell");
    auto cps = find_critical_points(p);
    for (const auto& cp : cps) {
        if (cp.kind != CritKind::Saddle) continue;
        auto v = cp.unstable_dir();
        double n2 = 0.0;
        for (double c : v) n2 += c * c;
        CHECK(n2 == doctest::Approx(1.0).epsilon(1e-12));
        CHECK(cp.eigvals[0] < 0);
        CHECK(cp.eigvals[1] > 0);
    }
}
