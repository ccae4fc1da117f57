#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "mwalk/builtins.hpp"
#include "mwalk/reduction.hpp"

using namespace mw;

namespace {

struct Setup {
    Potential pot;
    std::vector<CriticalPoint> cps;
    Lattice lat;
    Landscape scape;
    ReducedGraph g;
};

Setup make(const char* name, int N) {
    Potential pot = builtin_potential(name);
    auto cps = find_critical_points(pot);
    Lattice lat = build_lattice(pot, N);
    Landscape scape = build_landscape(pot, lat, cps);
    ReducedGraph g = build_reduced_graph(scape.decomps.back(), cps, lat.dim);
    return {std::move(pot), std::move(cps), std::move(lat), std::move(scape), std::move(g)};
}

}  // namespace

TEST_CASE("saddle weight from the hand Hessian") {
    // double well saddle at 0: F'' = -4, omega = sqrt(mu) = 2
    Setup s = make("doublewell", 30);
    REQUIRE(s.g.edges.size() == 1);
    CHECK(s.g.edges[0].c == doctest::Approx(2.0).epsilon(1e-8));
    CHECK(s.g.mu[0] == doctest::Approx(1.0 / std::sqrt(8.0)).epsilon(1e-7));
}

TEST_CASE("four-well graph is a 4-cycle with equal weights") {
    Setup s = make("fourwell", 24);
    CHECK(s.g.size() == 4);
    REQUIRE(s.g.edges.size() == 4);
    // saddle Hessian: mu = 0.8, lambda = 1.6 -> omega = sqrt(1/2)
    for (const auto& e : s.g.edges)
        CHECK(e.c == doctest::Approx(std::sqrt(0.5)).epsilon(1e-7));
    CHECK(s.g.isolated.empty());
    // diagonal wells are not directly joined
    for (const auto& e : s.g.edges) {
        const auto& wa = s.scape.decomps.back().wells[e.a];
        const auto& wb = s.scape.decomps.back().wells[e.b];
        double dot = 0.0;
        for (int i = 0; i < 2; ++i)
            dot += s.cps[wa.deepest[0]].x[i] * s.cps[wb.deepest[0]].x[i];
        CHECK(dot == doctest::Approx(0.0).epsilon(1e-6));  // adjacent corners
    }
}

TEST_CASE("graph capacity closed forms") {
    ReducedGraph g;
    g.dim = 1;
    g.mu = {1, 1, 1};
    g.h = {0, 0, 0};
    g.depth = {1, 1, 1};
    GraphEdge e01{0, 1, 2.0, {}}, e12{1, 2, 3.0, {}};
    g.edges = {e01, e12};
    // series: 1/(1/2 + 1/3)
    CHECK(graph_capacity(g, {0}, {2}) == doctest::Approx(1.2).epsilon(1e-12));
    // harmonic potential interpolates
    std::vector<double> V;
    graph_capacity(g, {0}, {2}, &V);
    CHECK(V[0] == 1.0);
    CHECK(V[2] == 0.0);
    CHECK(V[1] == doctest::Approx(0.4).epsilon(1e-12));  // 2(1-V1) = 3 V1
}

TEST_CASE("capacity is symmetric and monotone in added targets") {
    Setup s = make("twosaddle", 40);
    CHECK(s.g.size() == 3);
    double ab = graph_capacity(s.g, {0}, {1});
    double ba = graph_capacity(s.g, {1}, {0});
    CHECK(ab == doctest::Approx(ba).epsilon(1e-12));
    double abc = graph_capacity(s.g, {0}, {1, 2});
    CHECK(abc >= ab - 1e-15);
}

TEST_CASE("disconnected vertices carry no energy") {
    ReducedGraph g;
    g.dim = 1;
    g.mu = {1, 1, 1};
    g.h = {0, 0, 0};
    g.depth = {1, 1, 1};
    GraphEdge e{0, 1, 1.5, {}};
    g.edges = {e};  // vertex 2 isolated
    CHECK(graph_capacity(g, {0}, {1}) == doctest::Approx(1.5).epsilon(1e-12));
}

TEST_CASE("jump probabilities are rows of a stochastic matrix") {
    Setup s = make("twosaddle", 40);
    auto p = jump_probabilities(s.g);
    for (int a = 0; a < s.g.size(); ++a) {
        double tot = 0.0;
        for (int b = 0; b < s.g.size(); ++b) {
            CHECK(p[a][b] >= 0.0);
            tot += p[a][b];
        }
        CHECK(tot == doctest::Approx(1.0).epsilon(1e-12));
    }
}

TEST_CASE("exit distribution of the middle well is 1:2") {
    Setup s = make("twosaddle", 40);
    int middle = -1;
    const auto& dec = s.scape.decomps.back();
    for (size_t a = 0; a < dec.wells.size(); ++a)
        if (std::abs(s.cps[dec.wells[a].deepest[0]].x[0] - 0.243) < 0.05)
            middle = static_cast<int>(a);
    REQUIRE(middle >= 0);
    auto probs = exit_distribution(s.g, middle);
    REQUIRE(probs.size() == 2);
    double tot = probs[0].second + probs[1].second;
    CHECK(tot == doctest::Approx(1.0).epsilon(1e-12));
    double lo = std::min(probs[0].second, probs[1].second);
    CHECK(lo == doctest::Approx(1.0 / 3.0).epsilon(1e-5));
}

TEST_CASE("limit rates: shallow well moves first, deep well absorbs") {
    Setup s = make("tilted", 40);
    const auto& dec = s.scape.decomps.back();
    auto part = depth_partition(dec, 1e-10);
    auto scales = limit_rates(s.g, part);
    REQUIRE(scales.size() == 2);
    int shallow = dec.wells[0].depth < dec.wells[1].depth ? 0 : 1;
    int deep = 1 - shallow;
    CHECK(scales[0].T == std::vector<int>{shallow});
    CHECK(scales[0].r[shallow][deep] > 0.0);
    CHECK(scales[0].r[deep][shallow] == 0.0);  // deep well frozen at this scale
    // last scale has a single active well: no rates
    for (int a = 0; a < s.g.size(); ++a)
        for (int b = 0; b < s.g.size(); ++b) CHECK(scales[1].r[a][b] == 0.0);
    CHECK(scales[0].log_beta(40) == doctest::Approx(std::log(2 * M_PI * 40) + scales[0].theta * 40));
}

TEST_CASE("collapsed conductance equals the direct capacity for a pair") {
    Setup s = make("doublewell", 30);
    auto part = depth_partition(s.scape.decomps.back(), 1e-10);
    auto cm = collapsed_conductance_cm(s.g, part, 0);
    CHECK(cm[0][1] == doctest::Approx(graph_capacity(s.g, {0}, {1})).epsilon(1e-12));
    CHECK(cm[0][1] == doctest::Approx(cm[1][0]));
}

TEST_CASE("eyring-kramers predictions") {
    Setup s = make("doublewell", 30);
    auto pred = ek_predictions(s.g, s.lat, {0});
    CHECK(pred.kappa == doctest::Approx(2.0).epsilon(1e-7));
    CHECK(pred.graph_cap == doctest::Approx(2.0).epsilon(1e-7));
    REQUIRE(pred.boundary_saddles.size() == 1);
    // symmetric wells: equal predicted measures
    CHECK(pred.log_mu_hat[0] == doctest::Approx(pred.log_mu_hat[1]).epsilon(1e-7));
    CHECK_THROWS_AS(ek_predictions(s.g, s.lat, {0, 1}), ReductionError);
}
