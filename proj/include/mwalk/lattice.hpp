#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "mwalk/potential.hpp"

namespace mw {

struct LatticeError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// The chain's state space: Xi intersect N^-1 Z^d for an open box Xi.
// Since the domain is a box, the valid sites form a full integer box
// kmin[i]..kmax[i] per axis; the site index is row-major over that box.
//
// All weights are kept in scaled units relative to f_ref:
//   w(x) = exp(-N (F(x) - f_ref)),  c(x,y) = sqrt(w(x) w(y)).
// Solvers re-reference internally, so their outputs do not depend on f_ref.
class Lattice {
public:
    Lattice() = default;

    int dim = 0;
    int N = 0;
    std::vector<double> lo, hi;
    std::vector<int> kmin, kmax;    // site integer coords per axis
    std::vector<int> shape;         // kmax - kmin + 1
    std::vector<int64_t> stride;    // row-major strides
    std::vector<double> f;          // F per site
    double f_ref = 0.0;             // defaults to min F over sites
    double f_min = 0.0, f_max = 0.0;

    int64_t size() const { return static_cast<int64_t>(f.size()); }

    void coords(int64_t site, int* k) const {
        for (int i = 0; i < dim; ++i) {
            k[i] = kmin[i] + static_cast<int>(site / stride[i]);
            site %= stride[i];
        }
    }
    int64_t site_of(const int* k) const {
        int64_t s = 0;
        for (int i = 0; i < dim; ++i) s += static_cast<int64_t>(k[i] - kmin[i]) * stride[i];
        return s;
    }
    bool valid(const int* k) const {
        for (int i = 0; i < dim; ++i)
            if (k[i] < kmin[i] || k[i] > kmax[i]) return false;
        return true;
    }
    // Neighbor in direction +/- e_axis, or -1 outside the lattice.
    int64_t neighbor(int64_t site, int axis, int dir) const {
        int k[8];
        coords(site, k);
        k[axis] += dir;
        if (k[axis] < kmin[axis] || k[axis] > kmax[axis]) return -1;
        return site + static_cast<int64_t>(dir) * stride[axis];
    }
    void position(int64_t site, double* x) const {
        int k[8];
        coords(site, k);
        for (int i = 0; i < dim; ++i) x[i] = static_cast<double>(k[i]) / N;
    }
    int64_t nearest_site(const double* x) const {
        int k[8];
        for (int i = 0; i < dim; ++i) {
            int ki = static_cast<int>(std::lround(x[i] * N));
            ki = std::max(kmin[i], std::min(kmax[i], ki));
            k[i] = ki;
        }
        return site_of(k);
    }

    double w_scaled(int64_t site) const { return std::exp(-N * (f[site] - f_ref)); }
    double c_scaled(int64_t s1, int64_t s2) const {
        return std::exp(-0.5 * N * (f[s1] + f[s2] - 2.0 * f_ref));
    }
    // log R_N(x,y) = -(N/2)(F(y)-F(x)); rate is f_ref free.
    double log_jump_rate(int64_t from, int64_t to) const {
        return -0.5 * N * (f[to] - f[from]);
    }
    double holding_rate(int64_t site) const;

    void dump(const std::string& path) const;
    static Lattice load(const std::string& path);
};

struct BuildLatticeOptions {
    int64_t max_sites = 50'000'000;
    double max_scaled_exponent = 700.0;  // guard: N*(F range) beyond this throws
};

Lattice build_lattice(const Potential& pot, int N, const BuildLatticeOptions& opt = {});

// rho_N from the Laplace asymptotics of the partition sum; -> 1 as N grows.
double partition_sum_check(const Lattice& lat, const std::vector<CriticalPoint>& cps);

bool lattice_connected(const Lattice& lat);

}  // namespace mw
