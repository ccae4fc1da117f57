#pragma once

#include <vector>

#include "mwalk/lattice.hpp"
#include "mwalk/potential.hpp"

namespace mw {

struct LandscapeError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct SaddleLevel {
    double height = 0.0;            // H_i
    std::vector<int> saddles;       // indices into the critical point list
};

struct Well {
    std::vector<int64_t> sites;     // strict sublevel component
    std::vector<int> minima;        // minima cp indices inside the well
    std::vector<int> deepest;       // minima attaining h_min (within tol)
    double h_min = 0.0;             // F at the deepest minima
    double mu_measure = 0.0;        // sum over deepest of det(Hess)^(-1/2)
    double depth = 0.0;             // H_i - h_min
};

struct SaddleIncidence {
    int saddle = -1;                // cp index
    int well_plus = -1;             // well reached by the +v probe
    int well_minus = -1;            // well reached by the -v probe
};

// One component Omega^i_j of {F <= H_i} containing a level-i saddle,
// decomposed into its wells.
struct Decomposition {
    int level = 0;                  // 0-based index into the hierarchy
    double height = 0.0;            // H_i
    std::vector<int64_t> omega_sites;
    std::vector<Well> wells;
    std::vector<SaddleIncidence> saddles;
    std::vector<int> degenerate_saddles;  // both probes landed in the same well
};

struct DepthPartition {
    std::vector<double> theta;           // distinct depths ascending, theta[m]
    std::vector<std::vector<int>> T;     // wells at depth theta[m]
    std::vector<std::vector<int>> S;     // tails: S[m] = T[m] u ... u T[n-1]
};

struct Landscape {
    std::vector<CriticalPoint> cps;
    std::vector<SaddleLevel> levels;         // ascending heights
    std::vector<Decomposition> decomps;      // all (level, component) pairs
};

struct LandscapeOptions {
    double height_merge_factor = 1e-8;   // * (max F - min F)
    double depth_merge_factor = 1e-8;    // * (max F - min F)
    double glue_factor = 1e-9;           // * |H_i|
    double probe_factor = 4.0;           // probe offset = probe_factor / N
};

std::vector<SaddleLevel> build_saddle_levels(const std::vector<CriticalPoint>& cps,
                                             double height_merge_tol);

// Connected components of {F <= height} ({F < height} when strict).
// Returns per-site labels (-1 outside the sublevel) and the component count.
int sublevel_components(const Lattice& lat, double height, bool strict,
                        std::vector<int32_t>& labels);

Decomposition build_wells(const Potential& pot, const Lattice& lat,
                          const std::vector<CriticalPoint>& cps,
                          const std::vector<SaddleLevel>& levels, int level,
                          int component_of_saddle,  // cp index selecting Omega^i_j
                          const LandscapeOptions& opt = {});

Landscape build_landscape(const Potential& pot, const Lattice& lat,
                          const std::vector<CriticalPoint>& cps,
                          const LandscapeOptions& opt = {});

// E^a_N = {x in W_a : F(x) < H_i - eps}. eps <= 0 picks the default
// min(level gap, min depth)/2.
std::vector<std::vector<int64_t>> metastable_sets(const Lattice& lat,
                                                  const Landscape& scape,
                                                  const Decomposition& decomp,
                                                  double eps = -1.0);

double default_metastable_eps(const Landscape& scape, const Decomposition& decomp);

DepthPartition depth_partition(const Decomposition& decomp, double depth_merge_tol);

// Continuum steepest descent from x0 until the gradient vanishes; returns the
// index of the nearest classified minimum, or -1 on failure.
int descend_to_minimum(const Potential& pot, const std::vector<CriticalPoint>& cps,
                       const double* x0);

}  // namespace mw
