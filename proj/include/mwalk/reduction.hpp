#pragma once

#include <vector>

#include "mwalk/landscape.hpp"
#include "mwalk/lattice.hpp"

namespace mw {

struct ReductionError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct GraphEdge {
    int a = 0, b = 0;          // wells, a < b
    double c = 0.0;            // collapsed conductance: sum of omega over saddles
    std::vector<int> saddles;  // cp indices gluing a and b
};

struct ReducedGraph {
    int dim = 0;
    double height = 0.0;                  // H_i
    std::vector<double> mu;               // per well: mu(a)
    std::vector<double> h;                // per well: h_a
    std::vector<double> depth;            // per well: theta_a = H_i - h_a
    std::vector<GraphEdge> edges;
    std::vector<std::pair<int, double>> saddle_weights;  // (cp index, omega)
    std::vector<int> isolated;            // wells with no incident saddle

    int size() const { return static_cast<int>(mu.size()); }
    double conductance(int a, int b) const;
};

// omega(z) = mu / sqrt(-det Hess) = sqrt(mu / prod_{j>=2} lambda_j).
double saddle_weight(const CriticalPoint& z);

ReducedGraph build_reduced_graph(const Decomposition& decomp,
                                 const std::vector<CriticalPoint>& cps, int dim);

// Harmonic potential V (1 on A, 0 on B) and Cap = 1/2 sum c (dV)^2.
// Vertices disconnected from A u B get V = 0.
double graph_capacity(const ReducedGraph& g, const std::vector<int>& A,
                      const std::vector<int>& B,
                      std::vector<double>* potential_out = nullptr);

// c_m(a,b) for a,b in S_m via the three-capacity formula; equals the
// conductance of the network with the shallower wells eliminated.
std::vector<std::vector<double>> collapsed_conductance_cm(const ReducedGraph& g,
                                                          const DepthPartition& part,
                                                          int m);

struct MetastableScale {
    double theta = 0.0;
    std::vector<int> T, S, S_next;
    std::vector<std::vector<double>> c;   // c_m over all wells (0 outside S_m)
    std::vector<std::vector<double>> r;   // r_m(a,b); rows of S_{m+1} are 0
    double log_beta(int N) const { return std::log(2.0 * M_PI * N) + theta * N; }
};

std::vector<MetastableScale> limit_rates(const ReducedGraph& g,
                                         const DepthPartition& part);

// p(a,b) proportional to c(a,b); rows sum to 1.
std::vector<std::vector<double>> jump_probabilities(const ReducedGraph& g);

// omega(z)/sum over the saddles incident to well a; pairs (cp index, prob).
std::vector<std::pair<int, double>> exit_distribution(const ReducedGraph& g, int a);

struct EkPrediction {
    double kappa = 0.0;            // sum of omega over boundary saddles of A
    double graph_cap = 0.0;        // Cap_G(A, S \ A)
    std::vector<int> boundary_saddles;
    std::vector<double> log_mu_hat;  // per well, lattice-scaled measure prediction
};

// kappa_pred(A) and scaled well measures for the lattice's f_ref convention:
// log mu_hat(a) = (d/2) log(2 pi N) - N (h_a - f_ref) + log mu(a).
EkPrediction ek_predictions(const ReducedGraph& g, const Lattice& lat,
                            const std::vector<int>& A);

}  // namespace mw
