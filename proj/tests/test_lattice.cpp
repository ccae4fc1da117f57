#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>

#include "mwalk/builtins.hpp"
#include "mwalk/lattice.hpp"

using namespace mw;

TEST_CASE("lattice covers the open box interior") {
    Potential p = builtin_potential("doublewell");  // (-1.5, 1.5)
    Lattice lat = build_lattice(p, 10);
    // sites are k/N strictly inside the domain
    CHECK(lat.kmin[0] == -14);
    CHECK(lat.kmax[0] == 14);
    CHECK(lat.size() == 29);
    double x;
    lat.position(0, &x);
    CHECK(x == doctest::Approx(-1.4));
    for (int64_t s = 0; s < lat.size(); ++s) {
        lat.position(s, &x);
        CHECK(x > -1.5);
        CHECK(x < 1.5);
        CHECK(lat.f[s] == doctest::Approx(p.value(&x)));
    }
}

TEST_CASE("coords and site_of round trip in 2D") {
    Potential p = builtin_potential("fourwell");
    Lattice lat = build_lattice(p, 12);
    for (int64_t s = 0; s < lat.size(); s += 7) {
        int k[8];
        lat.coords(s, k);
        CHECK(lat.site_of(k) == s);
    }
    // neighbors at the edge are rejected
    int k[2] = {lat.kmin[0], lat.kmin[1]};
    int64_t corner = lat.site_of(k);
    CHECK(lat.neighbor(corner, 0, -1) == -1);
    CHECK(lat.neighbor(corner, 1, -1) == -1);
    CHECK(lat.neighbor(corner, 0, 1) >= 0);
}

TEST_CASE("rates are reversible with respect to the site weights") {
    Potential p = builtin_potential("tilted");
    Lattice lat = build_lattice(p, 20);
    for (int64_t s = 0; s + 1 < lat.size(); s += 3) {
        int64_t t = s + 1;
        CHECK(lat.c_scaled(s, t) == lat.c_scaled(t, s));
        // detailed balance: w(x) R(x,y) = w(y) R(y,x)
        double lhs = std::log(lat.w_scaled(s)) + lat.log_jump_rate(s, t);
        double rhs = std::log(lat.w_scaled(t)) + lat.log_jump_rate(t, s);
        CHECK(lhs == doctest::Approx(rhs).epsilon(1e-12));
    }
}

TEST_CASE("build preconditions") {
    Potential p = builtin_potential("doublewell");
    CHECK_THROWS_AS(build_lattice(p, 3), LatticeError);
    // N * (F range) beyond the exponent guard
    CHECK_THROWS_AS(build_lattice(p, 500), LatticeError);
    BuildLatticeOptions opt;
    opt.max_sites = 10;
    CHECK_THROWS_AS(build_lattice(p, 100, opt), LatticeError);
}

TEST_CASE("dump and load round trip") {
    Potential p = builtin_potential("twosaddle");
    Lattice lat = build_lattice(p, 15);
    std::string path = "/tmp/mwalk_test_lattice.bin";
    lat.dump(path);
    Lattice back = Lattice::load(path);
    std::remove(path.c_str());
    CHECK(back.dim == lat.dim);
    CHECK(back.N == lat.N);
    CHECK(back.size() == lat.size());
    CHECK(back.f_ref == lat.f_ref);
    for (int64_t s = 0; s < lat.size(); ++s) CHECK(back.f[s] == lat.f[s]);
}

TEST_CASE("lattice is connected") {
    Potential p = builtin_potential("fourwell");
    CHECK(lattice_connected(build_lattice(p, 8)));
}

TEST_CASE("partition sum approaches the Laplace asymptotics") {
    for (const char* name : {"doublewell", "singlewell"}) {
        Potential p = builtin_potential(name);
        auto cps = find_critical_points(p);
        double rho100 = partition_sum_check(build_lattice(p, 100), cps);
        double rho200 = partition_sum_check(build_lattice(p, 200), cps);
        INFO(name);
        CHECK(std::abs(rho200 - 1.0) < 0.05);
        CHECK(std::abs(rho200 - 1.0) < std::abs(rho100 - 1.0));
    }
}

TEST_CASE("f_ref defaults to the site minimum") {
    Potential p = builtin_potential("tilted");
    Lattice lat = build_lattice(p, 30);
    CHECK(lat.f_ref == lat.f_min);
    double wmax = 0.0;
    for (int64_t s = 0; s < lat.size(); ++s) wmax = std::max(wmax, lat.w_scaled(s));
    CHECK(wmax == doctest::Approx(1.0));
}
