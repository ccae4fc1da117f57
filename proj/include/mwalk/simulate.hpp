#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "mwalk/landscape.hpp"
#include "mwalk/lattice.hpp"
#include "mwalk/rng.hpp"

namespace mw {

struct SimError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Precomputed jump table for the continuous-time chain: at x, hold for an
// Exp(lambda(x)) time, then jump to a neighbor with probability R(x,y)/lambda.
class LatticeChain {
public:
    explicit LatticeChain(const Lattice& lat);

    const Lattice& lattice() const { return *lat_; }
    double holding(int64_t site) const { return lambda_[site]; }
    double rate(int64_t site, int slot) const { return rate_[site * nslots_ + slot]; }
    int slots() const { return nslots_; }
    int64_t slot_target(int64_t site, int slot) const {
        return lat_->neighbor(site, slot >> 1, (slot & 1) ? 1 : -1);
    }

    // One event: returns the next site, adds the holding time to `t`.
    int64_t step(int64_t site, Rng& rng, double& t) const;

private:
    const Lattice* lat_;
    int nslots_;
    std::vector<double> rate_;
    std::vector<double> lambda_;
};

struct HitResult {
    int set_id = -1;       // which stop set was hit; -1 on timeout
    int64_t site = -1;
    double time = 0.0;
    int64_t jumps = 0;
    bool timed_out = false;
};

// stop_id: per-site stop-set index, -1 for interior sites.
HitResult run_until_hit(const LatticeChain& chain, int64_t x0,
                        const std::vector<int16_t>& stop_id, Rng& rng,
                        int64_t max_jumps = 1'000'000'000);

struct ExitWindows {
    std::vector<int> saddles;                    // cp indices, one per window
    std::vector<std::vector<int64_t>> window_sites;
    std::vector<int16_t> stop_id;  // window index, windows.size() = high surface, -1 free
    double delta_N = 0.0;
    double eps = 0.0;
    bool regime_warning = false;   // delta_N outside the asymptotic regime

    int high_id() const { return static_cast<int>(saddles.size()); }
};

// Default delta_N = max(2(d+2) ln N / N, N^-0.85).
double default_delta_N(int dim, int N);

// Hyperplane exit windows at the boundary saddles of well `a`: sites within
// 1/N of the plane through z normal to the unstable direction, within eps of
// z transversally, and with F <= H_i + delta_N. The rest of the stopping
// surface is every site with F > H_i + delta_N.
ExitWindows build_exit_windows(const Lattice& lat, const Landscape& scape,
                               const Decomposition& decomp, int a,
                               double delta_N = -1.0, double eps = -1.0);

struct Outcome {
    std::string name;
    int64_t count = 0;
    double freq = 0.0;
    double lo95 = 0.0, hi95 = 0.0;  // Wilson 95% interval
    double predicted = -1.0;        // < 0 when no prediction applies
};

struct ExperimentReport {
    std::string name;
    int N = 0;
    uint64_t seed = 0;
    int replicas = 0;
    double delta_N = 0.0, eps_N = 0.0;
    std::vector<Outcome> outcomes;          // frequencies sum to 1 incl. timeout
    std::vector<int> replica_outcome;       // outcome index per replica (may be empty)
    std::map<std::string, double> stats;    // experiment-specific scalars
    int64_t total_jumps = 0;
    double wall_seconds = 0.0;
};

// Wilson score interval for count successes out of n.
std::pair<double, double> wilson_interval(int64_t count, int64_t n, double z = 1.959963984540054);

struct ExitExperimentOptions {
    int replicas = 10000;
    uint64_t seed = 1;
    int64_t max_jumps = 1'000'000'000;
    std::vector<double> predicted;  // per window, optional
};

ExperimentReport exit_experiment(const LatticeChain& chain, const ExitWindows& windows,
                                 const std::vector<int64_t>& starts,
                                 const ExitExperimentOptions& opt);

struct CrossingOptions {
    int replicas = 10000;
    uint64_t seed = 1;
    double eps_N = -1.0;            // <= 0 picks N^(-7/16)
    int64_t max_jumps = 1'000'000'000;
};

// Start at the site nearest z; exit through the +v / -v faces of the
// mesoscopic box (elongated along v by max{1, (1+sum lambda_j)/mu}).
ExperimentReport saddle_crossing_experiment(const LatticeChain& chain,
                                            const CriticalPoint& z,
                                            const CrossingOptions& opt);

struct TraceOptions {
    int replicas = 100;
    uint64_t seed = 1;
    double horizon = 1.0;           // in units of beta_m
    int64_t max_jumps = 1'000'000'000;
    int min_transitions = 1;        // below this the rate stats are flagged
};

// Projected trajectory statistics at scale m: empirical rates between wells,
// occupation fraction outside the metastable sets, holding-time CV.
// Esets: per well the metastable site set; T: wells active at this scale;
// log_beta: log of the time unit; r_pred[a][b]: limiting rates (per beta_m).
ExperimentReport trace_projection_experiment(
    const LatticeChain& chain, const std::vector<std::vector<int64_t>>& Esets,
    const std::vector<int>& T, int start_well, double log_beta,
    const std::vector<std::vector<double>>& r_pred, const TraceOptions& opt);

struct LowBoundaryOptions {
    int replicas = 1000;
    uint64_t seed = 1;
    double eps_N = -1.0;            // <= 0 picks 1/N
    int64_t max_jumps = 1'000'000'000;
};

// From `start` inside the domain D (per-site flags), stop on the inner
// boundary of D; outcome "low" if the hit site is within 2 eps_N of the
// boundary minimum of F.
ExperimentReport low_boundary_exit_experiment(const LatticeChain& chain,
                                              const std::vector<char>& D,
                                              int64_t start,
                                              const LowBoundaryOptions& opt);

}  // namespace mw
