#pragma once

#include <string>
#include <vector>

#include "mwalk/builtins.hpp"
#include "mwalk/capacity.hpp"
#include "mwalk/landscape.hpp"
#include "mwalk/lattice.hpp"
#include "mwalk/potential.hpp"
#include "mwalk/reduction.hpp"

namespace mw {

struct CriterionResult {
    int id = 0;
    std::string name;
    bool pass = false;
    std::string detail;
    double seconds = 0.0;
};

// Full analysis pipeline for one potential at one N; used by the CLI and
// the acceptance suite.
struct Analysis {
    Potential pot;
    std::vector<CriticalPoint> cps;
    HypothesisReport hyp;
    Lattice lat;
    Landscape scape;
    int main_decomp = -1;  // index of the top-level decomposition, -1 if none

    const Decomposition& decomp() const { return scape.decomps.at(main_decomp); }
};

Analysis analyze_potential(const Potential& pot, int N,
                           const CritFindOptions& copt = {},
                           const LandscapeOptions& lopt = {});

// The acceptance suite: one result per criterion, in order.
std::vector<CriterionResult> run_acceptance(uint64_t seed = 1);

}  // namespace mw
