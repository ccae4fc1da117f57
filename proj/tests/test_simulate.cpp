#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "mwalk/builtins.hpp"
#include "mwalk/reduction.hpp"
#include "mwalk/simulate.hpp"

using namespace mw;

TEST_CASE("rng streams are deterministic and distinct") {
    Rng a = Rng::stream(42, 0), b = Rng::stream(42, 0), c = Rng::stream(42, 1);
    bool differs = false;
    for (int i = 0; i < 256; ++i) {
        uint64_t va = a.next();
        CHECK(va == b.next());
        if (va != c.next()) differs = true;
    }
    CHECK(differs);
    double u = Rng::stream(7, 3).uniform();
    CHECK(u >= 0.0);
    CHECK(u < 1.0);
}

TEST_CASE("wilson interval sanity") {
    auto [lo, hi] = wilson_interval(50, 100);
    CHECK(lo > 0.39);
    CHECK(hi < 0.61);
    CHECK(lo < 0.5);
    CHECK(hi > 0.5);
    auto [l0, h0] = wilson_interval(0, 100);
    CHECK(l0 == 0.0);
    CHECK(h0 > 0.0);
    auto [l1, h1] = wilson_interval(100, 100);
    CHECK(h1 == 1.0);
}

TEST_CASE("trajectories are bitwise reproducible") {
    Potential p = builtin_potential("doublewell");
    Lattice lat = build_lattice(p, 30);
    LatticeChain chain(lat);
    int64_t s1 = lat.size() / 2, s2 = s1;
    Rng r1 = Rng::stream(9, 4), r2 = Rng::stream(9, 4);
    double t1 = 0, t2 = 0;
    for (int i = 0; i < 1000; ++i) {
        s1 = chain.step(s1, r1, t1);
        s2 = chain.step(s2, r2, t2);
        CHECK(s1 == s2);
    }
    CHECK(t1 == t2);
}

TEST_CASE("flat potential walk exits symmetrically") {
    Potential p = Potential::parse("dim = 1\ndomain = [-1,1]\nF = 0\n");
    Lattice lat = build_lattice(p, 20);
    LatticeChain chain(lat);
    std::vector<int16_t> stop(lat.size(), -1);
    stop[lat.size() / 2 - 10] = 0;
    stop[lat.size() / 2 + 10] = 1;
    int right = 0;
    const int n = 4000;
    for (int r = 0; r < n; ++r) {
        Rng rng = Rng::stream(11, r);
        auto hit = run_until_hit(chain, lat.size() / 2, stop, rng);
        CHECK_FALSE(hit.timed_out);
        if (hit.set_id == 1) ++right;
    }
    auto [lo, hi] = wilson_interval(right, n);
    CHECK(lo <= 0.5);
    CHECK(0.5 <= hi);
}

TEST_CASE("steep downhill start hits the stop set almost surely fast") {
    Potential p = builtin_potential("doublewell");
    Lattice lat = build_lattice(p, 60);
    LatticeChain chain(lat);
    // stop set one step downhill from a steep flank site
    int64_t x0 = lat.nearest_site(std::vector<double>{1.3}.data());
    std::vector<int16_t> stop(lat.size(), -1);
    stop[lat.neighbor(x0, 0, -1)] = 0;
    int quick = 0;
    for (int r = 0; r < 1000; ++r) {
        Rng rng = Rng::stream(13, r);
        auto hit = run_until_hit(chain, x0, stop, rng, 100);
        if (!hit.timed_out && hit.jumps <= 5) ++quick;
    }
    CHECK(quick >= 990);
}

TEST_CASE("exit windows in one dimension are a few sites at the saddle") {
    Potential p = builtin_potential("doublewell");
    auto cps = find_critical_points(p);
    Lattice lat = build_lattice(p, 50);
    Landscape scape = build_landscape(p, lat, cps);
    auto win = build_exit_windows(lat, scape, scape.decomps[0], 0);
    REQUIRE(win.saddles.size() == 1);
    CHECK(win.window_sites[0].size() >= 1);
    CHECK(win.window_sites[0].size() <= 3);
    double x;
    for (int64_t s : win.window_sites[0]) {
        lat.position(s, &x);
        CHECK(std::abs(x) <= 1.0 / lat.N + 1e-12);
        CHECK(lat.f[s] <= scape.decomps[0].height + win.delta_N + 4.0 / lat.N);
    }
}

TEST_CASE("two-saddle windows are disjoint at N=40") {
    Potential p = builtin_potential("twosaddle");
    auto cps = find_critical_points(p);
    Lattice lat = build_lattice(p, 40);
    Landscape scape = build_landscape(p, lat, cps);
    int middle = -1;
    const auto& dec = scape.decomps.back();
    for (size_t a = 0; a < dec.wells.size(); ++a)
        if (std::abs(cps[dec.wells[a].deepest[0]].x[0] - 0.243) < 0.05)
            middle = static_cast<int>(a);
    auto win = build_exit_windows(lat, scape, dec, middle);
    REQUIRE(win.saddles.size() == 2);
    for (int64_t s : win.window_sites[0])
        for (int64_t t : win.window_sites[1]) CHECK(s != t);
}

// shallow double well: barrier 0.15, so exits take ~e^{0.15 N} jumps
static const char* kShallow =
    "dim = 1\ndomain = [-1.5, 1.5]\nF = 0.15*(x1^2-1)^2\n";

TEST_CASE("shallow double well left well has a single exit window hit with frequency 1") {
    Potential p = Potential::parse(kShallow);
    auto cps = find_critical_points(p);
    Lattice lat = build_lattice(p, 30);
    Landscape scape = build_landscape(p, lat, cps);
    const auto& dec = scape.decomps[0];
    auto win = build_exit_windows(lat, scape, dec, 0);
    LatticeChain chain(lat);
    ExitExperimentOptions opt;
    opt.replicas = 100;
    opt.seed = 3;
    int64_t start = lat.nearest_site(cps[dec.wells[0].deepest[0]].x.data());
    auto rep = exit_experiment(chain, win, {start}, opt);
    CHECK(rep.outcomes[0].freq == doctest::Approx(1.0));
    int64_t total = 0;
    for (const auto& o : rep.outcomes) total += o.count;
    CHECK(total == opt.replicas);
    double fsum = 0.0;
    for (const auto& o : rep.outcomes) fsum += o.freq;
    CHECK(fsum == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("saddle crossing in 1D has no side exits") {
    Potential p = builtin_potential("doublewell");
    auto cps = find_critical_points(p);
    const CriticalPoint* z = nullptr;
    for (const auto& cp : cps)
        if (cp.kind == CritKind::Saddle) z = &cp;
    Lattice lat = build_lattice(p, 60);
    LatticeChain chain(lat);
    CrossingOptions opt;
    opt.replicas = 2000;
    opt.seed = 5;
    auto rep = saddle_crossing_experiment(chain, *z, opt);
    CHECK(rep.outcomes[2].count == 0);  // side faces unreachable in 1D
    CHECK(rep.outcomes[3].count == 0);  // no timeouts at this scale
    double p_plus = rep.outcomes[0].freq;
    CHECK(p_plus > 0.40);
    CHECK(p_plus < 0.60);
}

TEST_CASE("trace experiment accounts for all simulated time") {
    Potential p = builtin_potential("twosaddle");
    auto cps = find_critical_points(p);
    Lattice lat = build_lattice(p, 30);
    Landscape scape = build_landscape(p, lat, cps);
    const auto& dec = scape.decomps.back();
    auto E = metastable_sets(lat, scape, dec);
    auto g = build_reduced_graph(dec, cps, lat.dim);
    auto part = depth_partition(dec, 1e-10);
    auto scales = limit_rates(g, part);
    LatticeChain chain(lat);
    TraceOptions opt;
    opt.replicas = 20;
    opt.seed = 17;
    opt.horizon = 3.0;
    opt.max_jumps = 200'000;
    auto rep = trace_projection_experiment(chain, E, scales[0].T, scales[0].T[0],
                                           scales[0].log_beta(lat.N), scales[0].r, opt);
    double fsum = 0.0;
    for (const auto& o : rep.outcomes) fsum += o.freq;
    CHECK(fsum == doctest::Approx(1.0).epsilon(1e-3));
    CHECK(rep.stats.at("occupation_outside") >= 0.0);
    CHECK(rep.stats.at("occupation_outside") < 1.0);
    CHECK(rep.stats.count("transitions") == 1);
}

TEST_CASE("low boundary exit is monotone in the margin under shared seeds") {
    Potential p = Potential::parse(kShallow);
    auto cps = find_critical_points(p);
    Lattice lat = build_lattice(p, 40);
    Landscape scape = build_landscape(p, lat, cps);
    const auto& dec = scape.decomps.back();
    std::vector<char> D(lat.size(), 0);
    for (int64_t s : dec.wells[0].sites) D[s] = 1;
    int64_t start = lat.nearest_site(cps[dec.wells[0].deepest[0]].x.data());
    LatticeChain chain(lat);
    LowBoundaryOptions small, big;
    small.replicas = big.replicas = 300;
    small.seed = big.seed = 23;
    small.eps_N = 0.01;
    big.eps_N = 0.05;
    auto rs = low_boundary_exit_experiment(chain, D, start, small);
    auto rb = low_boundary_exit_experiment(chain, D, start, big);
    CHECK(rb.outcomes[0].count >= rs.outcomes[0].count);
    CHECK(rs.outcomes[0].freq >= 0.9);  // exits overwhelmingly through the low side
}

TEST_CASE("reports are worker-count independent") {
    // the per-replica streams are keyed by (seed, replica) only; rerunning
    // the same experiment must reproduce identical counts
    Potential p = Potential::parse(kShallow);
    auto cps = find_critical_points(p);
    Lattice lat = build_lattice(p, 25);
    Landscape scape = build_landscape(p, lat, cps);
    const auto& dec = scape.decomps[0];
    auto win = build_exit_windows(lat, scape, dec, 0);
    LatticeChain chain(lat);
    ExitExperimentOptions opt;
    opt.replicas = 50;
    opt.seed = 29;
    int64_t start = lat.nearest_site(cps[dec.wells[0].deepest[0]].x.data());
    auto r1 = exit_experiment(chain, win, {start}, opt);
    auto r2 = exit_experiment(chain, win, {start}, opt);
    REQUIRE(r1.replica_outcome.size() == r2.replica_outcome.size());
    for (size_t i = 0; i < r1.replica_outcome.size(); ++i)
        CHECK(r1.replica_outcome[i] == r2.replica_outcome[i]);
    CHECK(r1.total_jumps == r2.total_jumps);
}
