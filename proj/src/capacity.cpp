#include "mwalk/capacity.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <queue>
#include <unordered_set>

#include <fmt/format.h>

#include "mwalk/linalg.hpp"

namespace mw {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

// Scaled edge conductances with a solve-local reference, so nothing here
// depends on the lattice's f_ref. c[axis][s] belongs to edge (s, s+e_axis).
struct EdgeScale {
    double log_ref = kNegInf;  // subtracted raw exponent
    std::vector<std::vector<double>> c;
};

EdgeScale build_edges(const Lattice& lat) {
    EdgeScale es;
    es.c.assign(lat.dim, std::vector<double>(lat.size(), 0.0));
    for (int axis = 0; axis < lat.dim; ++axis)
        for (int64_t s = 0; s < lat.size(); ++s) {
            int64_t t = lat.neighbor(s, axis, 1);
            if (t < 0) continue;
            es.log_ref = std::max(es.log_ref, -0.5 * lat.N * (lat.f[s] + lat.f[t]));
        }
    for (int axis = 0; axis < lat.dim; ++axis)
        for (int64_t s = 0; s < lat.size(); ++s) {
            int64_t t = lat.neighbor(s, axis, 1);
            if (t < 0) continue;
            es.c[axis][s] = std::exp(-0.5 * lat.N * (lat.f[s] + lat.f[t]) - es.log_ref);
        }
    return es;
}

double log_sum_exp(std::vector<double>& terms) {
    double m = kNegInf;
    for (double t : terms) m = std::max(m, t);
    if (m == kNegInf) return kNegInf;
    double s = 0.0;
    for (double t : terms) s += std::exp(t - m);
    return m + std::log(s);
}

struct FreeSystem {
    std::vector<int64_t> free_sites;
    std::vector<int64_t> pos;      // site -> free index, -1 elsewhere
    std::vector<double> diag;      // sum of incident conductances (all neighbors)
    const Lattice* lat = nullptr;
    const EdgeScale* es = nullptr;

    void apply(const std::vector<double>& x, std::vector<double>& y) const {
        const int64_t nf = static_cast<int64_t>(free_sites.size());
        for (int64_t i = 0; i < nf; ++i) {
            int64_t s = free_sites[i];
            double acc = diag[i] * x[i];
            for (int axis = 0; axis < lat->dim; ++axis) {
                int64_t t = lat->neighbor(s, axis, 1);
                if (t >= 0 && pos[t] >= 0) acc -= es->c[axis][s] * x[pos[t]];
                int64_t u = lat->neighbor(s, axis, -1);
                if (u >= 0 && pos[u] >= 0) acc -= es->c[axis][u] * x[pos[u]];
            }
            y[i] = acc;
        }
    }
};

FreeSystem build_system(const Lattice& lat, const EdgeScale& es,
                        const std::vector<char>& fixed) {
    FreeSystem sys;
    sys.lat = &lat;
    sys.es = &es;
    sys.pos.assign(lat.size(), -1);
    for (int64_t s = 0; s < lat.size(); ++s)
        if (!fixed[s]) {
            sys.pos[s] = static_cast<int64_t>(sys.free_sites.size());
            sys.free_sites.push_back(s);
        }
    sys.diag.resize(sys.free_sites.size());
    for (size_t i = 0; i < sys.free_sites.size(); ++i) {
        int64_t s = sys.free_sites[i];
        double d = 0.0;
        for (int axis = 0; axis < lat.dim; ++axis) {
            if (lat.neighbor(s, axis, 1) >= 0) d += es.c[axis][s];
            int64_t u = lat.neighbor(s, axis, -1);
            if (u >= 0) d += es.c[axis][u];
        }
        sys.diag[i] = d;
    }
    return sys;
}

struct CgResult {
    int iterations = 0;
    double rel_residual = 0.0;
    bool converged = false;
};

CgResult pcg(const FreeSystem& sys, const std::vector<double>& b,
             std::vector<double>& x, double tol, int max_iter) {
    const size_t n = b.size();
    x.assign(n, 0.0);
    CgResult res;
    double bnorm = norm2(b);
    if (bnorm == 0.0) {
        res.converged = true;
        return res;
    }
    std::vector<double> r = b, z(n), p(n), ap(n);
    auto precond = [&](const std::vector<double>& rr, std::vector<double>& zz) {
        for (size_t i = 0; i < n; ++i) zz[i] = sys.diag[i] > 0 ? rr[i] / sys.diag[i] : rr[i];
    };
    precond(r, z);
    p = z;
    double rz = dot(r, z);
    for (int it = 0; it < max_iter; ++it) {
        sys.apply(p, ap);
        double pap = dot(p, ap);
        if (!(pap > 0)) break;  // matrix numerically singular in this direction
        double alpha = rz / pap;
        for (size_t i = 0; i < n; ++i) x[i] += alpha * p[i];
        for (size_t i = 0; i < n; ++i) r[i] -= alpha * ap[i];
        res.iterations = it + 1;
        double rnorm = norm2(r);
        res.rel_residual = rnorm / bnorm;
        if (res.rel_residual <= tol) {
            res.converged = true;
            break;
        }
        precond(r, z);
        double rz_new = dot(r, z);
        double beta = rz_new / rz;
        rz = rz_new;
        for (size_t i = 0; i < n; ++i) p[i] = z[i] + beta * p[i];
    }
    if (!res.converged) {
        // recompute the true residual for the diagnostics
        std::vector<double> ax(n);
        sys.apply(x, ax);
        for (size_t i = 0; i < n; ++i) ax[i] -= b[i];
        res.rel_residual = norm2(ax) / bnorm;
        res.converged = res.rel_residual <= tol;
    }
    return res;
}

void dense_solve_system(const FreeSystem& sys, const std::vector<double>& b,
                        std::vector<double>& x) {
    const int nf = static_cast<int>(sys.free_sites.size());
    std::vector<double> M(static_cast<size_t>(nf) * nf, 0.0);
    for (int i = 0; i < nf; ++i) {
        int64_t s = sys.free_sites[i];
        M[static_cast<size_t>(i) * nf + i] = sys.diag[i] > 0 ? sys.diag[i] : 1.0;
        for (int axis = 0; axis < sys.lat->dim; ++axis) {
            int64_t t = sys.lat->neighbor(s, axis, 1);
            if (t >= 0 && sys.pos[t] >= 0)
                M[static_cast<size_t>(i) * nf + sys.pos[t]] -= sys.es->c[axis][s];
            int64_t u = sys.lat->neighbor(s, axis, -1);
            if (u >= 0 && sys.pos[u] >= 0)
                M[static_cast<size_t>(i) * nf + sys.pos[u]] -= sys.es->c[axis][u];
        }
    }
    x = b;
    solve_dense(M, x, nf);
}

}  // namespace

HarmonicSolution solve_equilibrium_potential(const Lattice& lat,
                                             const std::vector<int64_t>& A,
                                             const std::vector<int64_t>& B,
                                             const SolveOptions& opt) {
    if (A.empty() || B.empty()) throw CapacityError("A and B must be nonempty");
    std::vector<char> fixed(lat.size(), 0);
    std::vector<char> inA(lat.size(), 0);
    for (int64_t s : A) {
        fixed.at(s) = 1;
        inA[s] = 1;
    }
    for (int64_t s : B) {
        if (inA[s]) throw CapacityError("A and B must be disjoint");
        fixed.at(s) = 1;
    }

    EdgeScale es = build_edges(lat);
    FreeSystem sys = build_system(lat, es, fixed);
    const size_t nf = sys.free_sites.size();

    std::vector<double> b(nf, 0.0);
    for (size_t i = 0; i < nf; ++i) {
        int64_t s = sys.free_sites[i];
        for (int axis = 0; axis < lat.dim; ++axis)
            for (int dir : {-1, 1}) {
                int64_t t = lat.neighbor(s, axis, dir);
                if (t >= 0 && inA[t])
                    b[i] += dir > 0 ? es.c[axis][s] : es.c[axis][t];
            }
    }

    HarmonicSolution sol;
    std::vector<double> x;
    bool dense = opt.use_dense ||
                 (!opt.force_cg && static_cast<int64_t>(nf) <= opt.dense_cutoff);
    if (dense) {
        dense_solve_system(sys, b, x);
        sol.converged = true;
        sol.iterations = 1;
    } else {
        int max_iter = static_cast<int>(40 * std::sqrt(static_cast<double>(nf))) +
                       opt.max_iter_extra;
        CgResult cg = pcg(sys, b, x, opt.cg_tol, max_iter);
        // one refinement restart: solve for the correction on the true residual
        std::vector<double> r(nf), d;
        sys.apply(x, r);
        for (size_t i = 0; i < nf; ++i) r[i] = b[i] - r[i];
        CgResult cg2 = pcg(sys, r, d, opt.cg_tol, max_iter);
        for (size_t i = 0; i < nf; ++i) x[i] += d[i];
        sol.iterations = cg.iterations + cg2.iterations;
        sol.rel_residual = cg2.rel_residual;
        sol.converged = cg.converged || cg2.converged;
    }

    sol.h.assign(lat.size(), 0.0);
    for (int64_t s : A) sol.h[s] = 1.0;
    for (size_t i = 0; i < nf; ++i) {
        // maximum principle: project solver noise back into [0, 1]
        sol.h[sys.free_sites[i]] = std::clamp(x[i], 0.0, 1.0);
    }
    // The Dirichlet sum of an iterative solution is dominated by solver noise
    // on the large well-bottom conductances; the flux through the half level
    // only sees the saddle neighborhood, where the solution is sharp.
    sol.energy = flux_through_level(lat, sol.h);
    return sol;
}

CapacityValue dirichlet_energy(const Lattice& lat, const std::vector<double>& V) {
    std::vector<double> terms;
    for (int axis = 0; axis < lat.dim; ++axis)
        for (int64_t s = 0; s < lat.size(); ++s) {
            int64_t t = lat.neighbor(s, axis, 1);
            if (t < 0) continue;
            double dv = V[t] - V[s];
            if (dv == 0.0) continue;
            terms.push_back(-0.5 * lat.N * (lat.f[s] + lat.f[t]) + 2.0 * std::log(std::abs(dv)));
        }
    CapacityValue cv;
    cv.log_raw = log_sum_exp(terms);
    return cv;
}

CapacityValue flux_through_level(const Lattice& lat, const std::vector<double>& h,
                                 double level) {
    // sum over edges crossing the cut of c(x,y)(h(x)-h(y)), x on the high side
    double m = kNegInf;
    std::vector<std::pair<double, double>> signed_terms;  // (log magnitude, sign)
    for (int axis = 0; axis < lat.dim; ++axis)
        for (int64_t s = 0; s < lat.size(); ++s) {
            int64_t t = lat.neighbor(s, axis, 1);
            if (t < 0) continue;
            bool hs = h[s] >= level, ht = h[t] >= level;
            if (hs == ht) continue;
            double dh = hs ? h[s] - h[t] : h[t] - h[s];
            if (dh == 0.0) continue;
            double l = -0.5 * lat.N * (lat.f[s] + lat.f[t]) + std::log(std::abs(dh));
            signed_terms.emplace_back(l, dh > 0 ? 1.0 : -1.0);
            m = std::max(m, l);
        }
    CapacityValue cv;
    if (signed_terms.empty()) {
        cv.log_raw = kNegInf;
        return cv;
    }
    double acc = 0.0;
    for (auto& [l, sg] : signed_terms) acc += sg * std::exp(l - m);
    cv.log_raw = m + std::log(std::abs(acc));
    return cv;
}

std::vector<double> mean_hitting_time(const Lattice& lat,
                                      const std::vector<int64_t>& B,
                                      const SolveOptions& opt) {
    if (B.empty()) throw CapacityError("target set empty");
    std::vector<char> fixed(lat.size(), 0);
    for (int64_t s : B) fixed.at(s) = 1;

    EdgeScale es = build_edges(lat);

    if (lat.dim == 1) {
        // Exact Green's function via resistance prefix sums. Every term is
        // positive, so the e^{N theta} dynamic range of u costs no digits;
        // the general LU path saturates once that range passes 1/ulp.
        const int64_t n = lat.size();
        double wref = kNegInf;
        for (int64_t s = 0; s < n; ++s)
            if (!fixed[s]) wref = std::max(wref, -static_cast<double>(lat.N) * lat.f[s]);
        std::vector<double> pi(n);
        for (int64_t s = 0; s < n; ++s)
            pi[s] = std::exp(-static_cast<double>(lat.N) * lat.f[s] - wref);
        const auto& c = es.c[0];  // c[i] is the edge (i, i+1)
        auto res = [&](int64_t i) { return 1.0 / c[i]; };
        const double corr = std::exp(wref - es.log_ref);
        std::vector<double> u(n, 0.0);
        for (int64_t l = 0; l < n;) {
            if (fixed[l]) {
                ++l;
                continue;
            }
            int64_t r = l;
            while (r + 1 < n && !fixed[r + 1]) ++r;
            const bool lf = l > 0, rf = r < n - 1;
            const int64_t m = r - l + 1;
            if (!lf && !rf) throw CapacityError("target set unreachable");
            if (lf && rf) {
                // Dirichlet at both ends: G(i,y) = a_{i^y} b_{i v y} / T with
                // a, b the resistances to the left/right absorbing site.
                std::vector<double> a(m), bb(m);
                a[0] = res(l - 1);
                for (int64_t i = 1; i < m; ++i) a[i] = a[i - 1] + res(l + i - 1);
                bb[m - 1] = res(r);
                for (int64_t i = m - 2; i >= 0; --i) bb[i] = bb[i + 1] + res(l + i);
                const double T = a[m - 1] + res(r);
                std::vector<double> Q(m);  // sum_{y>i} b_y pi_y
                double acc = 0.0;
                for (int64_t i = m - 1; i >= 0; --i) {
                    Q[i] = acc;
                    acc += bb[i] * pi[l + i];
                }
                acc = 0.0;  // running sum_{y<=i} a_y pi_y
                for (int64_t i = 0; i < m; ++i) {
                    acc += a[i] * pi[l + i];
                    u[l + i] = (bb[i] * acc + a[i] * Q[i]) / T * corr;
                }
            } else {
                // one absorbing end, the other reflecting: G(i,y) = a_{i^y}
                // with a the resistance to the absorbing side
                std::vector<double> a(m);
                if (lf) {
                    a[0] = res(l - 1);
                    for (int64_t i = 1; i < m; ++i) a[i] = a[i - 1] + res(l + i - 1);
                } else {
                    a[0] = res(r);  // index 0 = site r, counting from the right
                    for (int64_t i = 1; i < m; ++i) a[i] = a[i - 1] + res(r - i);
                }
                auto site = [&](int64_t i) { return lf ? l + i : r - i; };
                std::vector<double> S(m);  // sum_{y>i} pi_y (toward the wall)
                double acc = 0.0;
                for (int64_t i = m - 1; i >= 0; --i) {
                    S[i] = acc;
                    acc += pi[site(i)];
                }
                acc = 0.0;  // running sum_{y<=i} a_y pi_y
                for (int64_t i = 0; i < m; ++i) {
                    acc += a[i] * pi[site(i)];
                    u[site(i)] = (acc + a[i] * S[i]) * corr;
                }
            }
            l = r + 1;
        }
        return u;
    }

    FreeSystem sys = build_system(lat, es, fixed);
    const size_t nf = sys.free_sites.size();

    // RHS: scaled site weights, with their own reference.
    double wref = kNegInf;
    for (size_t i = 0; i < nf; ++i)
        wref = std::max(wref, -static_cast<double>(lat.N) * lat.f[sys.free_sites[i]]);
    std::vector<double> b(nf);
    for (size_t i = 0; i < nf; ++i)
        b[i] = std::exp(-static_cast<double>(lat.N) * lat.f[sys.free_sites[i]] - wref);

    std::vector<double> x;
    if (opt.use_dense ||
        (!opt.force_cg && static_cast<int64_t>(nf) <= opt.dense_cutoff)) {
        dense_solve_system(sys, b, x);
    } else {
        int max_iter = static_cast<int>(40 * std::sqrt(static_cast<double>(nf))) +
                       opt.max_iter_extra;
        CgResult cg = pcg(sys, b, x, opt.cg_tol, max_iter);
        if (!cg.converged)
            throw CapacityError(fmt::format(
                "hitting-time solve did not converge (residual {})", cg.rel_residual));
    }

    // undo the two references: u_true = u * exp(wref - log_ref)
    double corr = std::exp(wref - es.log_ref);
    std::vector<double> u(lat.size(), 0.0);
    for (size_t i = 0; i < nf; ++i) u[sys.free_sites[i]] = x[i] * corr;
    return u;
}

// ---------------------------------------------------------------------------
// Dirichlet upper bound

CapacityValue test_function_upper_bound(const Potential& pot, const Lattice& lat,
                                        const Landscape& scape,
                                        const Decomposition& decomp,
                                        const std::vector<int>& A, double eps_N,
                                        std::vector<double>* v_out) {
    const int d = lat.dim;
    if (eps_N <= 0) eps_N = std::pow(lat.N, -5.0 / 12.0);
    std::vector<char> inA(decomp.wells.size(), 0);
    for (int a : A) inA.at(a) = 1;

    struct Box {
        const CriticalPoint* z;
        double sigma;                 // +1 if the A side is the +v side
        std::vector<double> widths;   // per eigen direction (0 = along v)
    };
    std::vector<Box> boxes;
    double theta_min = std::numeric_limits<double>::infinity();
    for (const auto& inc : decomp.saddles) {
        bool pa = inA[inc.well_plus], ma = inA[inc.well_minus];
        if (pa == ma) continue;
        const CriticalPoint& z = scape.cps[inc.saddle];
        Box box;
        box.z = &z;
        box.sigma = pa ? 1.0 : -1.0;
        box.widths.resize(d);
        // The Gaussian profile has sd 1/sqrt(N mu); the along-v half-width
        // must cover several sd or the 0/1 mismatch at the box edge dominates
        // the energy. Cap the box so it stays clear of every other critical
        // point (engulfing a well bottom breaks the boundary conditions).
        double eps_b = std::max(eps_N, 4.0 / std::sqrt(lat.N * z.mu()));
        double stretch = 1.0;
        for (int j = 1; j < d; ++j)
            stretch = std::max(stretch, 2.0 * std::sqrt(z.mu() / z.eigvals[j]));
        double dmin = std::numeric_limits<double>::infinity();
        for (const auto& cp : scape.cps) {
            if (&cp == &z) continue;
            double r2 = 0.0;
            for (int i = 0; i < d; ++i) {
                double dx = cp.x[i] - z.x[i];
                r2 += dx * dx;
            }
            dmin = std::min(dmin, std::sqrt(r2));
        }
        if (std::isfinite(dmin)) eps_b = std::min(eps_b, 0.45 * dmin / stretch);
        box.widths[0] = eps_b;
        for (int j = 1; j < d; ++j)
            box.widths[j] = 2.0 * std::sqrt(z.mu() / z.eigvals[j]) * eps_b;
        boxes.push_back(std::move(box));
    }
    if (boxes.empty()) throw CapacityError("A has no boundary saddles");

    // The boundary values live on the metastable sets; shrink any box that
    // would swallow one of their sites.
    {
        auto E = metastable_sets(lat, scape, decomp);
        std::vector<double> xe(d);
        for (Box& box : boxes) {
            const CriticalPoint& z = *box.z;
            double scale = 1.0;
            for (const auto& set : E)
                for (int64_t s : set) {
                    lat.position(s, xe.data());
                    double q = 0.0;
                    for (int e = 0; e < d; ++e) {
                        double proj = 0.0;
                        for (int i = 0; i < d; ++i)
                            proj += (xe[i] - z.x[i]) *
                                    z.eigvecs[i + static_cast<size_t>(d) * e];
                        q = std::max(q, std::abs(proj) / box.widths[e]);
                    }
                    if (q < 1.0 / 0.9) scale = std::min(scale, 0.9 * q);
                }
            if (scale < 1.0)
                for (int e = 0; e < d; ++e) box.widths[e] *= scale;
        }
    }
    for (const Box& box : boxes)
        theta_min = std::min(theta_min, box.z->mu() * box.widths[0] * box.widths[0]);
    const double level_cut = decomp.height + theta_min;

    // Mark box membership; boxes must not overlap.
    std::vector<int16_t> box_id(lat.size(), 0);
    std::vector<double> p(d), x(d);
    for (size_t bi = 0; bi < boxes.size(); ++bi) {
        const Box& box = boxes[bi];
        const CriticalPoint& z = *box.z;
        std::vector<int> klo(d), khi(d), k(d);
        for (int i = 0; i < d; ++i) {
            double r = 0.0;
            for (int e = 0; e < d; ++e)
                r += box.widths[e] * std::abs(z.eigvecs[i + static_cast<size_t>(d) * e]);
            klo[i] = std::max(lat.kmin[i], static_cast<int>(std::floor((z.x[i] - r) * lat.N)));
            khi[i] = std::min(lat.kmax[i], static_cast<int>(std::ceil((z.x[i] + r) * lat.N)));
        }
        k = klo;
        for (;;) {
            for (int i = 0; i < d; ++i) x[i] = static_cast<double>(k[i]) / lat.N;
            bool in = true;
            for (int e = 0; e < d && in; ++e) {
                double proj = 0.0;
                for (int i = 0; i < d; ++i)
                    proj += (x[i] - z.x[i]) * z.eigvecs[i + static_cast<size_t>(d) * e];
                in = std::abs(proj) <= box.widths[e];
            }
            if (in) {
                int64_t s = lat.site_of(k.data());
                if (box_id[s] != 0 && box_id[s] != static_cast<int16_t>(bi + 1))
                    throw CapacityError(fmt::format(
                        "saddle boxes overlap at eps_N = {}; retry with eps_N <= {}",
                        eps_N, eps_N / 2));
                box_id[s] = static_cast<int16_t>(bi + 1);
            }
            int axis = d - 1;
            while (axis >= 0 && ++k[axis] > khi[axis]) k[axis--] = klo[axis];
            if (axis < 0) break;
        }
    }

    // Components of the enlarged sublevel with the boxes removed.
    std::vector<int32_t> labels(lat.size(), -1);
    {
        int next = 0;
        std::queue<int64_t> q;
        for (int64_t s0 = 0; s0 < lat.size(); ++s0) {
            if (labels[s0] >= 0 || box_id[s0] != 0 || lat.f[s0] >= level_cut) continue;
            labels[s0] = next;
            q.push(s0);
            while (!q.empty()) {
                int64_t s = q.front();
                q.pop();
                for (int axis = 0; axis < d; ++axis)
                    for (int dir : {-1, 1}) {
                        int64_t t = lat.neighbor(s, axis, dir);
                        if (t >= 0 && labels[t] < 0 && box_id[t] == 0 && lat.f[t] < level_cut) {
                            labels[t] = next;
                            q.push(t);
                        }
                    }
            }
            ++next;
        }
        std::vector<char> hasA(next, 0), hasB(next, 0);
        for (size_t a = 0; a < decomp.wells.size(); ++a)
            for (int64_t s : decomp.wells[a].sites) {
                if (labels[s] < 0) continue;
                (inA[a] ? hasA : hasB)[labels[s]] = 1;
            }
        for (int c = 0; c < next; ++c)
            if (hasA[c] && hasB[c])
                throw CapacityError(
                    "saddle boxes do not separate the wells; increase N or eps_N");
        // reuse labels as side markers: 1 = A side, 0 = B side
        for (int64_t s = 0; s < lat.size(); ++s)
            if (labels[s] >= 0) labels[s] = hasA[labels[s]] ? 1 : 0;
    }

    std::vector<double> V(lat.size(), 0.5);
    for (int64_t s = 0; s < lat.size(); ++s) {
        if (box_id[s] != 0) {
            if (lat.f[s] >= level_cut) continue;  // outside the sublevel: 1/2
            const Box& box = boxes[box_id[s] - 1];
            const CriticalPoint& z = *box.z;
            lat.position(s, x.data());
            double proj = 0.0;
            for (int i = 0; i < d; ++i) proj += (x[i] - z.x[i]) * z.eigvecs[i];
            // Gaussian CDF with variance 1/(N mu)
            V[s] = 0.5 * std::erfc(-box.sigma * proj * std::sqrt(0.5 * lat.N * z.mu()));
        } else if (lat.f[s] < level_cut) {
            V[s] = labels[s] == 1 ? 1.0 : 0.0;
        }
    }
    if (v_out) *v_out = V;
    return dirichlet_energy(lat, V);
}

// ---------------------------------------------------------------------------
// Thomson flows

double FlowField::divergence(const Lattice& lat, int64_t site) const {
    double div = 0.0;
    for (int axis = 0; axis < dim; ++axis) {
        auto it = edge_flow.find(site * dim + axis);
        if (it != edge_flow.end()) div += it->second;
        int64_t u = lat.neighbor(site, axis, -1);
        if (u >= 0) {
            auto jt = edge_flow.find(u * dim + axis);
            if (jt != edge_flow.end()) div -= jt->second;
        }
    }
    return div;
}

double FlowField::max_abs() const {
    double m = 0.0;
    for (const auto& [k, v] : edge_flow) m = std::max(m, std::abs(v));
    return m;
}

double FlowField::flux_out(const Lattice& lat, const std::vector<char>& set_flags) const {
    double flux = 0.0;
    for (const auto& [key, v] : edge_flow) {
        int64_t s = key / dim;
        int axis = static_cast<int>(key % dim);
        int64_t t = lat.neighbor(s, axis, 1);
        if (t < 0) continue;
        bool fs = set_flags[s], ft = set_flags[t];
        if (fs == ft) continue;
        flux += fs ? v : -v;
    }
    return flux;
}

namespace {

// Steepest-descent site path from `start` into the site set `target`,
// staircased to lattice steps and loop-erased.
std::vector<int64_t> descend_site_path(const Potential& pot, const Lattice& lat,
                                       int64_t start, const std::vector<char>& target,
                                       double* excess_out) {
    const int d = lat.dim;
    std::vector<int64_t> path;
    std::unordered_map<int64_t, size_t> index_of;
    auto push_site = [&](int64_t s) {
        auto it = index_of.find(s);
        if (it != index_of.end()) {
            for (size_t i = it->second + 1; i < path.size(); ++i) index_of.erase(path[i]);
            path.resize(it->second + 1);
        } else {
            index_of[s] = path.size();
            path.push_back(s);
        }
    };
    push_site(start);
    if (target[start]) return path;

    std::vector<double> pos(d), g(d);
    lat.position(start, pos.data());
    const double f0 = lat.f[start];
    double excess = 0.0;
    const double h = 0.25 / lat.N;
    const long max_steps = 2000L * lat.N * std::max(1.0, pot.diameter());
    int64_t cur = start;

    for (long step = 0; step < max_steps; ++step) {
        pot.gradient(pos.data(), g.data());
        double gn = norm2(g);
        if (!(gn > 1e-14))
            throw CapacityError("descent path stalled before reaching the target set");
        for (int i = 0; i < d; ++i) {
            pos[i] -= h * g[i] / gn;
            pos[i] = std::max(lat.lo[i] + 1e-12, std::min(lat.hi[i] - 1e-12, pos[i]));
        }
        int64_t ns = lat.nearest_site(pos.data());
        while (cur != ns) {
            // staircase: move one axis at a time, taking the lowest-F corner
            int kc[8], kn[8];
            lat.coords(cur, kc);
            lat.coords(ns, kn);
            int best_axis = -1;
            double best_f = std::numeric_limits<double>::infinity();
            int64_t best_site = -1;
            for (int axis = 0; axis < d; ++axis) {
                if (kn[axis] == kc[axis]) continue;
                int64_t cand = lat.neighbor(cur, axis, kn[axis] > kc[axis] ? 1 : -1);
                if (cand >= 0 && lat.f[cand] < best_f) {
                    best_f = lat.f[cand];
                    best_axis = axis;
                    best_site = cand;
                }
            }
            if (best_axis < 0) break;
            cur = best_site;
            excess = std::max(excess, lat.f[cur] - f0);
            push_site(cur);
            if (target[cur]) {
                if (excess_out) *excess_out = std::max(*excess_out, excess);
                return path;
            }
        }
    }
    throw CapacityError("descent path exceeded its step budget");
}

}  // namespace

FlowField saddle_flow(const Potential& pot, const Lattice& lat,
                      const CriticalPoint& z, bool b_on_plus_side,
                      const std::vector<int64_t>& Ea, const std::vector<int64_t>& Eb,
                      double eps_N) {
    const int d = lat.dim;
    if (eps_N <= 0) eps_N = std::pow(lat.N, -0.4);
    FlowField flow;
    flow.dim = d;

    std::vector<double> v = z.unstable_dir();
    if (!b_on_plus_side)
        for (double& c : v) c = -c;
    // Reflect axes so the flow direction components are non-negative.
    std::vector<int> dir(d, 1);
    std::vector<double> vm(d);
    std::vector<int> jset;
    double vsum = 0.0;
    for (int i = 0; i < d; ++i) {
        dir[i] = v[i] >= 0 ? 1 : -1;
        vm[i] = std::abs(v[i]);
        if (vm[i] > 1e-12) {
            jset.push_back(i);
            vsum += vm[i];
        }
    }
    if (jset.empty()) throw CapacityError("degenerate unstable direction");

    auto vdot = [&](int64_t site, std::vector<double>& xbuf) {
        lat.position(site, xbuf.data());
        double pv = 0.0;
        for (int i = 0; i < d; ++i) pv += (xbuf[i] - z.x[i]) * v[i];
        return pv;
    };
    std::vector<double> xb(d);
    // transverse quadratic form y.Mcheck y = sum_j lambda_j (y.w_j)^2
    auto qform = [&](int64_t site) {
        lat.position(site, xb.data());
        double q = 0.0;
        for (int j = 1; j < d; ++j) {
            double pj = 0.0;
            for (int i = 0; i < d; ++i)
                pj += (xb[i] - z.x[i]) * z.eigvecs[i + static_cast<size_t>(d) * j];
            q += z.eigvals[j] * pj * pj;
        }
        return q;
    };

    // Box: all half-widths eps_N in the saddle eigenbasis.
    std::unordered_set<int64_t> boxset;
    {
        std::vector<int> klo(d), khi(d), k(d);
        for (int i = 0; i < d; ++i) {
            double r = 0.0;
            for (int e = 0; e < d; ++e)
                r += eps_N * std::abs(z.eigvecs[i + static_cast<size_t>(d) * e]);
            klo[i] = std::max(lat.kmin[i], static_cast<int>(std::floor((z.x[i] - r) * lat.N)) - 1);
            khi[i] = std::min(lat.kmax[i], static_cast<int>(std::ceil((z.x[i] + r) * lat.N)) + 1);
        }
        k = klo;
        for (;;) {
            bool in = true;
            for (int e = 0; e < d && in; ++e) {
                double proj = 0.0;
                for (int i = 0; i < d; ++i)
                    proj += (static_cast<double>(k[i]) / lat.N - z.x[i]) *
                            z.eigvecs[i + static_cast<size_t>(d) * e];
                in = std::abs(proj) <= eps_N;
            }
            if (in) boxset.insert(lat.site_of(k.data()));
            int axis = d - 1;
            while (axis >= 0 && ++k[axis] > khi[axis]) k[axis--] = klo[axis];
            if (axis < 0) break;
        }
        if (boxset.empty()) throw CapacityError("flow box contains no lattice sites");
    }

    // Sources: sites just below the box in the flow directions.
    std::unordered_set<int64_t> sources;
    for (int64_t s : boxset)
        for (int j : jset) {
            int64_t y = lat.neighbor(s, j, -dir[j]);
            if (y >= 0 && !boxset.count(y) && vdot(y, xb) < -eps_N) sources.insert(y);
        }
    if (sources.empty()) throw CapacityError("flow has no source layer (N too small)");

    // Cone: closure of the box under the +dir moves, cut at p.v <= eps_N.
    std::unordered_set<int64_t> cone = boxset;
    {
        std::vector<int64_t> stack(boxset.begin(), boxset.end());
        while (!stack.empty()) {
            int64_t s = stack.back();
            stack.pop_back();
            for (int j : jset) {
                int64_t t = lat.neighbor(s, j, dir[j]);
                if (t >= 0 && !cone.count(t) && vdot(t, xb) <= eps_N) {
                    cone.insert(t);
                    stack.push_back(t);
                }
            }
        }
    }
    for (int64_t s : sources) cone.erase(s);

    auto get = [&flow, d](int64_t s, int axis) {
        auto it = flow.edge_flow.find(s * d + axis);
        return it == flow.edge_flow.end() ? 0.0 : it->second;
    };
    // flow from s to its +dir[j] neighbor t; stored toward +axis orientation
    auto add_dir = [&](int64_t s, int j, double val) {
        if (dir[j] > 0)
            flow.add(s, j, val);
        else
            flow.add(lat.neighbor(s, j, -1), j, -val);
    };
    auto get_dir = [&](int64_t s, int j) {
        if (dir[j] > 0) return get(s, j);
        int64_t u = lat.neighbor(s, j, -1);
        return u >= 0 ? -get(u, j) : 0.0;
    };

    // Initial Gaussian flow on cone and source edges.
    auto seed_site = [&](int64_t s) {
        double phi = std::exp(-0.5 * lat.N * qform(s));
        for (int j : jset) {
            int64_t t = lat.neighbor(s, j, dir[j]);
            if (t < 0) continue;
            if (!cone.count(t) && vdot(t, xb) <= eps_N) continue;  // sideways out
            add_dir(s, j, vm[j] * phi);
        }
    };
    for (int64_t s : sources) seed_site(s);
    for (int64_t s : cone) seed_site(s);

    // Divergence repair, processed in increasing p.v order.
    std::vector<std::pair<double, int64_t>> order;
    order.reserve(cone.size());
    for (int64_t s : cone) order.emplace_back(vdot(s, xb), s);
    std::sort(order.begin(), order.end());
    for (auto& [pv, s] : order) {
        double inflow = 0.0, outflow = 0.0;
        for (int j : jset) {
            int64_t u = lat.neighbor(s, j, -dir[j]);
            if (u >= 0) inflow += get_dir(u, j);
            outflow += get_dir(s, j);
        }
        double delta = inflow - outflow;
        double wsum = 0.0;
        for (int j : jset)
            if (lat.neighbor(s, j, dir[j]) >= 0) wsum += vm[j];
        if (wsum <= 0) throw CapacityError("flow repair hit a dead-end site");
        for (int j : jset) {
            int64_t t = lat.neighbor(s, j, dir[j]);
            if (t < 0) continue;
            add_dir(s, j, delta * vm[j] / wsum);
        }
    }

    // Normalize the through-flux to one.
    double flux = 0.0;
    for (int64_t s : sources)
        for (int j : jset) flux += get_dir(s, j);
    if (!(flux > 0)) throw CapacityError("flow has zero flux");
    for (auto& [k, val] : flow.edge_flow) val /= flux;

    // Extend: sources pull unit flux up from E^a, sinks push it down to E^b.
    std::vector<char> flagsA(lat.size(), 0), flagsB(lat.size(), 0);
    for (int64_t s : Ea) flagsA[s] = 1;
    for (int64_t s : Eb) flagsB[s] = 1;

    std::unordered_set<int64_t> sinks;
    for (const auto& [key, val] : flow.edge_flow) {
        int64_t s = key / d;
        int axis = static_cast<int>(key % d);
        int64_t t = lat.neighbor(s, axis, 1);
        if (t >= 0 && !cone.count(t) && !sources.count(t) && vdot(t, xb) > eps_N && val > 0)
            sinks.insert(t);
        if (!cone.count(s) && !sources.count(s) && vdot(s, xb) > eps_N && val < 0)
            sinks.insert(s);
    }

    for (int64_t s : sources) {
        double phi = 0.0;
        for (int j : jset) phi += get_dir(s, j);
        if (phi == 0.0) continue;
        auto path = descend_site_path(pot, lat, s, flagsA, &flow.max_descent_excess);
        for (size_t i = 0; i + 1 < path.size(); ++i) {
            // flow runs from path[i+1] back toward path[i]
            int64_t a = path[i], b = path[i + 1];
            for (int axis = 0; axis < d; ++axis) {
                if (b == lat.neighbor(a, axis, 1)) flow.add(a, axis, -phi);
                else if (b == lat.neighbor(a, axis, -1)) flow.add(b, axis, phi);
            }
        }
        flow.source_sites.push_back(path.back());
    }
    for (int64_t t : sinks) {
        // net inflow at the sink (divergence is net outflow)
        double psi = -flow.divergence(lat, t);
        if (psi <= 0) continue;
        auto path = descend_site_path(pot, lat, t, flagsB, &flow.max_descent_excess);
        for (size_t i = 0; i + 1 < path.size(); ++i) {
            int64_t a = path[i], b = path[i + 1];
            for (int axis = 0; axis < d; ++axis) {
                if (b == lat.neighbor(a, axis, 1)) flow.add(a, axis, psi);
                else if (b == lat.neighbor(a, axis, -1)) flow.add(b, axis, -psi);
            }
        }
        flow.sink_sites.push_back(path.back());
    }
    return flow;
}

double flow_energy_log_raw(const Lattice& lat, const FlowField& flow) {
    std::vector<double> terms;
    terms.reserve(flow.edge_flow.size());
    for (const auto& [key, val] : flow.edge_flow) {
        if (val == 0.0) continue;
        int64_t s = key / flow.dim;
        int axis = static_cast<int>(key % flow.dim);
        int64_t t = lat.neighbor(s, axis, 1);
        if (t < 0) throw CapacityError("flow stored on a missing edge");
        terms.push_back(2.0 * std::log(std::abs(val)) +
                        0.5 * lat.N * (lat.f[s] + lat.f[t]));
    }
    return log_sum_exp(terms);
}

CapacityValue flow_lower_bound(const Lattice& lat, const std::vector<FlowField>& flows,
                               FlowField* combined_out) {
    if (flows.empty()) throw CapacityError("no flows supplied");
    std::vector<double> loge(flows.size());
    double emin = std::numeric_limits<double>::infinity();
    for (size_t i = 0; i < flows.size(); ++i) {
        loge[i] = flow_energy_log_raw(lat, flows[i]);
        emin = std::min(emin, loge[i]);
    }
    double wsum = 0.0;
    std::vector<double> theta(flows.size());
    for (size_t i = 0; i < flows.size(); ++i) {
        theta[i] = std::exp(emin - loge[i]);  // proportional to 1/energy
        wsum += theta[i];
    }
    FlowField combined;
    combined.dim = flows[0].dim;
    for (size_t i = 0; i < flows.size(); ++i) {
        double th = theta[i] / wsum;
        for (const auto& [key, val] : flows[i].edge_flow)
            combined.edge_flow[key] += th * val;
        combined.source_sites.insert(combined.source_sites.end(),
                                     flows[i].source_sites.begin(),
                                     flows[i].source_sites.end());
        combined.sink_sites.insert(combined.sink_sites.end(),
                                   flows[i].sink_sites.begin(),
                                   flows[i].sink_sites.end());
        combined.max_descent_excess =
            std::max(combined.max_descent_excess, flows[i].max_descent_excess);
    }
    CapacityValue cv;
    cv.log_raw = -flow_energy_log_raw(lat, combined);
    if (combined_out) *combined_out = std::move(combined);
    return cv;
}

}  // namespace mw
