#include "mwalk/reduction.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include <fmt/format.h>

#include "mwalk/linalg.hpp"

namespace mw {

double ReducedGraph::conductance(int a, int b) const {
    for (const auto& e : edges)
        if ((e.a == a && e.b == b) || (e.a == b && e.b == a)) return e.c;
    return 0.0;
}

double saddle_weight(const CriticalPoint& z) {
    if (z.kind != CritKind::Saddle) throw ReductionError("saddle_weight needs a saddle");
    double mu = -z.eigvals[0];
    double prod = 1.0;
    for (size_t j = 1; j < z.eigvals.size(); ++j) prod *= z.eigvals[j];
    if (!(mu > 0) || !(prod > 0)) throw ReductionError("degenerate Hessian at saddle");
    return std::sqrt(mu / prod);
}

ReducedGraph build_reduced_graph(const Decomposition& decomp,
                                 const std::vector<CriticalPoint>& cps, int dim) {
    ReducedGraph g;
    g.dim = dim;
    g.height = decomp.height;
    const int nw = static_cast<int>(decomp.wells.size());
    g.mu.resize(nw);
    g.h.resize(nw);
    g.depth.resize(nw);
    for (int a = 0; a < nw; ++a) {
        g.mu[a] = decomp.wells[a].mu_measure;
        g.h[a] = decomp.wells[a].h_min;
        g.depth[a] = decomp.wells[a].depth;
    }
    std::map<std::pair<int, int>, GraphEdge> edges;
    std::vector<char> touched(nw, 0);
    for (const auto& inc : decomp.saddles) {
        double omega = saddle_weight(cps[inc.saddle]);
        g.saddle_weights.emplace_back(inc.saddle, omega);
        touched[inc.well_plus] = 1;
        touched[inc.well_minus] = 1;
        if (inc.well_plus == inc.well_minus) continue;  // degenerate gluing: no edge
        auto key = std::minmax(inc.well_plus, inc.well_minus);
        auto& e = edges[key];
        e.a = key.first;
        e.b = key.second;
        e.c += omega;
        e.saddles.push_back(inc.saddle);
    }
    for (auto& [k, e] : edges) g.edges.push_back(std::move(e));
    for (int a = 0; a < nw; ++a)
        if (!touched[a]) g.isolated.push_back(a);
    return g;
}

double graph_capacity(const ReducedGraph& g, const std::vector<int>& A,
                      const std::vector<int>& B, std::vector<double>* potential_out) {
    const int n = g.size();
    if (A.empty()) throw ReductionError("A empty");
    std::vector<int> role(n, 0);  // 0 free, 1 in A, 2 in B
    for (int a : A) role.at(a) = 1;
    for (int b : B) {
        if (role.at(b) == 1) throw ReductionError("A and B must be disjoint");
        role[b] = 2;
    }

    std::vector<double> V(n, 0.0);
    for (int a : A) V[a] = 1.0;

    // Free vertices reachable from A u B get solved; the rest stay at 0
    // (any constant works: they contribute no energy).
    std::vector<int> free;
    for (int v = 0; v < n; ++v)
        if (role[v] == 0) free.push_back(v);
    if (!free.empty()) {
        std::vector<int> pos(n, -1);
        for (size_t i = 0; i < free.size(); ++i) pos[free[i]] = static_cast<int>(i);
        const int nf = static_cast<int>(free.size());
        std::vector<double> M(static_cast<size_t>(nf) * nf, 0.0), rhs(nf, 0.0);
        std::vector<char> coupled(nf, 0);
        for (const auto& e : g.edges) {
            int pa = pos[e.a], pb = pos[e.b];
            if (pa >= 0) M[static_cast<size_t>(pa) * nf + pa] += e.c;
            if (pb >= 0) M[static_cast<size_t>(pb) * nf + pb] += e.c;
            if (pa >= 0 && pb >= 0) {
                M[static_cast<size_t>(pa) * nf + pb] -= e.c;
                M[static_cast<size_t>(pb) * nf + pa] -= e.c;
            } else if (pa >= 0) {
                rhs[pa] += e.c * V[e.b];
                coupled[pa] = 1;
            } else if (pb >= 0) {
                rhs[pb] += e.c * V[e.a];
                coupled[pb] = 1;
            }
        }
        // Regularize components with no path to A u B so the solve stays
        // nonsingular; their potential becomes 0.
        for (int i = 0; i < nf; ++i)
            if (M[static_cast<size_t>(i) * nf + i] == 0.0)
                M[static_cast<size_t>(i) * nf + i] = 1.0;
        // Detect fully disconnected free components via a BFS from A u B.
        std::vector<char> reach(n, 0);
        std::vector<int> stack;
        for (int v = 0; v < n; ++v)
            if (role[v] != 0) { reach[v] = 1; stack.push_back(v); }
        while (!stack.empty()) {
            int v = stack.back();
            stack.pop_back();
            for (const auto& e : g.edges) {
                int o = e.a == v ? e.b : (e.b == v ? e.a : -1);
                if (o >= 0 && !reach[o]) { reach[o] = 1; stack.push_back(o); }
            }
        }
        for (int i = 0; i < nf; ++i)
            if (!reach[free[i]]) {
                for (int j = 0; j < nf; ++j) {
                    M[static_cast<size_t>(i) * nf + j] = i == j ? 1.0 : 0.0;
                    M[static_cast<size_t>(j) * nf + i] = i == j ? 1.0 : 0.0;
                }
                rhs[i] = 0.0;
            }
        solve_dense(M, rhs, nf);
        for (int i = 0; i < nf; ++i) V[free[i]] = rhs[i];
    }

    double cap = 0.0;
    for (const auto& e : g.edges) {
        double dv = V[e.b] - V[e.a];
        cap += e.c * dv * dv;  // each undirected edge once = (1/2) sum over pairs
    }
    if (potential_out) *potential_out = std::move(V);
    return cap;
}

std::vector<std::vector<double>> collapsed_conductance_cm(const ReducedGraph& g,
                                                          const DepthPartition& part,
                                                          int m) {
    if (m < 0 || m >= static_cast<int>(part.theta.size()))
        throw ReductionError("scale index out of range");
    const std::vector<int>& S = part.S[m];
    if (S.size() < 2) throw ReductionError("S_m has fewer than two wells");
    const int n = g.size();
    std::vector<std::vector<double>> c(n, std::vector<double>(n, 0.0));
    auto without = [&](int a, int b) {
        std::vector<int> r;
        for (int v : S)
            if (v != a && v != b) r.push_back(v);
        return r;
    };
    for (size_t i = 0; i < S.size(); ++i) {
        for (size_t j = i + 1; j < S.size(); ++j) {
            int a = S[i], b = S[j];
            double capa = graph_capacity(g, {a}, without(a, -1));
            double capb = graph_capacity(g, {b}, without(b, -1));
            std::vector<int> rest = without(a, b);
            double capab = rest.empty() ? 0.0 : graph_capacity(g, {a, b}, rest);
            double v = 0.5 * (capa + capb - capab);
            c[a][b] = c[b][a] = v;
        }
    }
    return c;
}

std::vector<MetastableScale> limit_rates(const ReducedGraph& g,
                                         const DepthPartition& part) {
    const int n = g.size();
    std::vector<MetastableScale> scales;
    const int nm = static_cast<int>(part.theta.size());
    for (int m = 0; m < nm; ++m) {
        MetastableScale sc;
        sc.theta = part.theta[m];
        sc.T = part.T[m];
        sc.S = part.S[m];
        sc.S_next = m + 1 < nm ? part.S[m + 1] : std::vector<int>{};
        if (sc.S.size() >= 2) {
            sc.c = collapsed_conductance_cm(g, part, m);
        } else {
            sc.c.assign(n, std::vector<double>(n, 0.0));
        }
        sc.r.assign(n, std::vector<double>(n, 0.0));
        for (int a : sc.T)  // wells in S_{m+1} stay absorbing at this scale
            for (int b : sc.S)
                if (a != b) sc.r[a][b] = sc.c[a][b] / g.mu[a];
        scales.push_back(std::move(sc));
    }
    return scales;
}

std::vector<std::vector<double>> jump_probabilities(const ReducedGraph& g) {
    const int n = g.size();
    std::vector<std::vector<double>> p(n, std::vector<double>(n, 0.0));
    for (int a = 0; a < n; ++a) {
        double tot = 0.0;
        for (int b = 0; b < n; ++b) tot += g.conductance(a, b);
        if (tot <= 0)
            throw ReductionError(fmt::format("well {} has no incident saddle", a + 1));
        for (int b = 0; b < n; ++b) p[a][b] = g.conductance(a, b) / tot;
    }
    return p;
}

std::vector<std::pair<int, double>> exit_distribution(const ReducedGraph& g, int a) {
    std::vector<std::pair<int, double>> probs;
    double tot = 0.0;
    for (const auto& e : g.edges) {
        if (e.a != a && e.b != a) continue;
        for (int z : e.saddles) {
            for (const auto& [cp, om] : g.saddle_weights)
                if (cp == z) {
                    probs.emplace_back(z, om);
                    tot += om;
                }
        }
    }
    if (probs.empty()) throw ReductionError("well has no boundary saddles");
    for (auto& [z, p] : probs) p /= tot;
    return probs;
}

EkPrediction ek_predictions(const ReducedGraph& g, const Lattice& lat,
                            const std::vector<int>& A) {
    const int n = g.size();
    if (A.empty() || static_cast<int>(A.size()) >= n)
        throw ReductionError("A must be a proper nonempty subset of the wells");
    std::vector<char> inA(n, 0);
    for (int a : A) inA.at(a) = 1;

    EkPrediction pred;
    for (const auto& e : g.edges) {
        if (inA[e.a] == inA[e.b]) continue;
        for (int z : e.saddles) {
            pred.boundary_saddles.push_back(z);
            for (const auto& [cp, om] : g.saddle_weights)
                if (cp == z) pred.kappa += om;
        }
    }
    std::vector<int> B;
    for (int v = 0; v < n; ++v)
        if (!inA[v]) B.push_back(v);
    pred.graph_cap = graph_capacity(g, A, B);

    pred.log_mu_hat.resize(n);
    for (int a = 0; a < n; ++a)
        pred.log_mu_hat[a] = 0.5 * g.dim * std::log(2.0 * M_PI * lat.N) -
                             lat.N * (g.h[a] - lat.f_ref) + std::log(g.mu[a]);
    return pred;
}

}  // namespace mw
