#pragma once

#include <unordered_map>
#include <vector>

#include "mwalk/landscape.hpp"
#include "mwalk/lattice.hpp"
#include "mwalk/potential.hpp"

namespace mw {

struct CapacityError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Energies are carried as log of the f_ref-free quantity
//   sum_edges e^{-(N/2)(F(x)+F(y))} (df)^2  =  Z_N * Cap_N,
// so all reported ratios and kappa are invariant under f_ref shifts.
struct CapacityValue {
    double log_raw = 0.0;

    double log_scaled(const Lattice& lat) const { return log_raw + lat.N * lat.f_ref; }
    double scaled(const Lattice& lat) const { return std::exp(log_scaled(lat)); }
    // kappa_N = [Z_N/(2 pi N)^{d/2}] * 2 pi N * e^{N H} * Cap_N
    double kappa(const Lattice& lat, double H) const {
        double l = (1.0 - 0.5 * lat.dim) * std::log(2.0 * M_PI * lat.N) +
                   lat.N * H + log_raw;
        return std::exp(l);
    }
};

struct HarmonicSolution {
    std::vector<double> h;       // per site; 1 on A, 0 on B
    int iterations = 0;
    double rel_residual = 0.0;
    bool converged = false;
    CapacityValue energy;        // Dirichlet energy of h
};

struct SolveOptions {
    double cg_tol = 1e-13;
    int max_iter_extra = 2000;   // max_iter = 40 sqrt(free) + extra
    bool use_dense = false;      // force the direct dense solve (oracle path)
    bool force_cg = false;       // force CG even on small systems
    // By default small systems (<= dense_cutoff free sites) go through the
    // dense solve: deep wells make the conductance matrix too ill-conditioned
    // for CG to resolve the capacity at large N in one dimension.
    int64_t dense_cutoff = 4000;
};

HarmonicSolution solve_equilibrium_potential(const Lattice& lat,
                                             const std::vector<int64_t>& A,
                                             const std::vector<int64_t>& B,
                                             const SolveOptions& opt = {});

// Dirichlet energy of an arbitrary per-site function, in the log_raw units.
CapacityValue dirichlet_energy(const Lattice& lat, const std::vector<double>& V);

// Energy flux of h through the cut {x : h(x) >= level}; equals the capacity
// for the harmonic h (used as a cross-check).
CapacityValue flux_through_level(const Lattice& lat, const std::vector<double>& h,
                                 double level = 0.5);

// E[time to hit B] from every site (0 on B); exact linear solve.
std::vector<double> mean_hitting_time(const Lattice& lat,
                                      const std::vector<int64_t>& B,
                                      const SolveOptions& opt = {});

// Dirichlet upper bound from the Gaussian-CDF test function with mesoscopic
// boxes at the boundary saddles of A. eps_N <= 0 picks N^(-5/12).
CapacityValue test_function_upper_bound(const Potential& pot, const Lattice& lat,
                                        const Landscape& scape,
                                        const Decomposition& decomp,
                                        const std::vector<int>& A,
                                        double eps_N = -1.0,
                                        std::vector<double>* v_out = nullptr);

// Divergence-free unit flow through one saddle, from E^a to E^b.
struct FlowField {
    int dim = 0;
    // key = site*dim + axis; value = flow from site toward +axis.
    std::unordered_map<int64_t, double> edge_flow;
    std::vector<int64_t> source_sites, sink_sites;  // endpoints inside E^a / E^b
    double max_descent_excess = 0.0;  // worst F increase seen along extension paths

    void add(int64_t site, int axis, double delta) {
        edge_flow[site * dim + axis] += delta;
    }
    double divergence(const Lattice& lat, int64_t site) const;
    double max_abs() const;
    double flux_out(const Lattice& lat, const std::vector<char>& set_flags) const;
};

FlowField saddle_flow(const Potential& pot, const Lattice& lat,
                      const CriticalPoint& z, bool b_on_plus_side,
                      const std::vector<int64_t>& Ea, const std::vector<int64_t>& Eb,
                      double eps_N = -1.0);

// log of ||Phi||^2 in the same raw units as CapacityValue.
double flow_energy_log_raw(const Lattice& lat, const FlowField& flow);

// Thomson bound from the energy-weighted convex combination of per-saddle
// flows; all flows must share the E(A) -> E(A^c) source/sink convention.
CapacityValue flow_lower_bound(const Lattice& lat, const std::vector<FlowField>& flows,
                               FlowField* combined_out = nullptr);

}  // namespace mw
