#include "mwalk/landscape.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <queue>

#include <fmt/format.h>

#include "mwalk/linalg.hpp"

namespace mw {

std::vector<SaddleLevel> build_saddle_levels(const std::vector<CriticalPoint>& cps,
                                             double height_merge_tol) {
    std::vector<int> saddles;
    for (int i = 0; i < static_cast<int>(cps.size()); ++i)
        if (cps[i].kind == CritKind::Saddle) saddles.push_back(i);
    if (saddles.empty()) throw LandscapeError("no saddle points supplied");
    std::sort(saddles.begin(), saddles.end(),
              [&](int a, int b) { return cps[a].f < cps[b].f; });

    std::vector<SaddleLevel> levels;
    for (int s : saddles) {
        if (!levels.empty() && cps[s].f <= levels.back().height + height_merge_tol) {
            levels.back().saddles.push_back(s);
        } else {
            SaddleLevel lvl;
            lvl.height = cps[s].f;  // height of the first saddle in the group
            lvl.saddles.push_back(s);
            levels.push_back(std::move(lvl));
        }
    }
    return levels;
}

int sublevel_components(const Lattice& lat, double height, bool strict,
                        std::vector<int32_t>& labels) {
    labels.assign(lat.size(), -1);
    auto in_set = [&](int64_t s) {
        return strict ? lat.f[s] < height : lat.f[s] <= height;
    };
    int next = 0;
    std::queue<int64_t> q;
    for (int64_t s0 = 0; s0 < lat.size(); ++s0) {
        if (labels[s0] >= 0 || !in_set(s0)) continue;
        labels[s0] = next;
        q.push(s0);
        while (!q.empty()) {
            int64_t s = q.front();
            q.pop();
            for (int axis = 0; axis < lat.dim; ++axis)
                for (int dir : {-1, 1}) {
                    int64_t nb = lat.neighbor(s, axis, dir);
                    if (nb >= 0 && labels[nb] < 0 && in_set(nb)) {
                        labels[nb] = next;
                        q.push(nb);
                    }
                }
        }
        ++next;
    }
    return next;
}

int descend_to_minimum(const Potential& pot, const std::vector<CriticalPoint>& cps,
                       const double* x0) {
    const int d = pot.dim();
    std::vector<double> x(x0, x0 + d), g(d);
    const double diam = pot.diameter();
    const double h = std::min(1e-3 * diam, 0.05);
    const double prox = std::max(0.01 * diam, 2.0 * h);
    const int max_steps = 200000;

    auto nearest_minimum = [&](double radius) {
        int best = -1;
        double best_d = radius;
        for (int i = 0; i < static_cast<int>(cps.size()); ++i) {
            if (cps[i].kind != CritKind::Minimum) continue;
            double dist = 0.0;
            for (int k = 0; k < d; ++k) dist += (cps[i].x[k] - x[k]) * (cps[i].x[k] - x[k]);
            dist = std::sqrt(dist);
            if (dist < best_d) { best_d = dist; best = i; }
        }
        return best;
    };

    for (int step = 0; step < max_steps; ++step) {
        int hit = nearest_minimum(prox);
        if (hit >= 0) return hit;
        pot.gradient(x.data(), g.data());
        double gn = norm2(g);
        if (!std::isfinite(gn)) return -1;
        if (gn < 1e-12) return nearest_minimum(10 * prox);
        for (int k = 0; k < d; ++k) {
            x[k] -= h * g[k] / gn;
            // H4 keeps descent inside; clamp as a numerical guard
            x[k] = std::max(pot.lo()[k] + 1e-12, std::min(pot.hi()[k] - 1e-12, x[k]));
        }
    }
    return nearest_minimum(10 * prox);
}

Decomposition build_wells(const Potential& pot, const Lattice& lat,
                          const std::vector<CriticalPoint>& cps,
                          const std::vector<SaddleLevel>& levels, int level,
                          int component_of_saddle, const LandscapeOptions& opt) {
    if (level < 0 || level >= static_cast<int>(levels.size()))
        throw LandscapeError("level out of range");
    const SaddleLevel& lvl = levels[level];
    const double H = lvl.height;
    const double glue = opt.glue_factor * std::max(std::abs(H), 1e-12);
    const int d = lat.dim;

    // Discrete slack: near a saddle that falls between lattice sites, F at the
    // closest sites exceeds H by up to ~lambda_max/N^2; without this slack the
    // closed sublevel can lose the pass that joins the two wells.
    double lam_max = 0.0;
    for (int s : lvl.saddles)
        for (double l : cps[s].eigvals) lam_max = std::max(lam_max, std::abs(l));
    const double slack = glue + lam_max / (static_cast<double>(lat.N) * lat.N);

    std::vector<int32_t> closed_labels;
    sublevel_components(lat, H + slack, false, closed_labels);

    // Probe each level saddle along +/- v and descend to minima.
    struct Probe { int saddle; int min_plus; int min_minus; };
    std::vector<Probe> probes;
    const double eps_probe = opt.probe_factor / lat.N;
    for (int s : lvl.saddles) {
        const CriticalPoint& z = cps[s];
        std::vector<double> v = z.unstable_dir();
        std::vector<double> p(d);
        Probe pr{s, -1, -1};
        for (int sign : {1, -1}) {
            for (int k = 0; k < d; ++k) p[k] = z.x[k] + sign * eps_probe * v[k];
            int m = descend_to_minimum(pot, cps, p.data());
            (sign > 0 ? pr.min_plus : pr.min_minus) = m;
        }
        if (pr.min_plus < 0 || pr.min_minus < 0)
            throw LandscapeError(fmt::format(
                "steepest descent from saddle at ({}) did not reach a minimum",
                fmt::join(z.x, ", ")));
        probes.push_back(pr);
    }

    auto min_label = [&](int m) {
        int64_t site = lat.nearest_site(cps[m].x.data());
        return closed_labels[site];
    };

    int target_label = -1;
    for (const auto& pr : probes)
        if (pr.saddle == component_of_saddle) target_label = min_label(pr.min_plus);
    if (target_label < 0)
        throw LandscapeError("selected saddle does not identify a component");

    Decomposition dec;
    dec.level = level;
    dec.height = H;
    for (int64_t s = 0; s < lat.size(); ++s)
        if (closed_labels[s] == target_label) dec.omega_sites.push_back(s);

    // Wells: components of the strict sublevel inside Omega. The cut sits a
    // discretization slack below H: a site can sample the pass up to
    // ~lambda/(8 N^2) below the saddle height, which would bridge the wells.
    std::vector<int32_t> open_labels;
    sublevel_components(lat, H - slack, true, open_labels);
    std::vector<int> well_of_label;  // open component label -> well index
    {
        std::vector<int32_t> labels_here;
        for (int64_t s : dec.omega_sites)
            if (open_labels[s] >= 0) labels_here.push_back(open_labels[s]);
        std::sort(labels_here.begin(), labels_here.end());
        labels_here.erase(std::unique(labels_here.begin(), labels_here.end()),
                          labels_here.end());
        int maxl = labels_here.empty() ? -1 : labels_here.back();
        well_of_label.assign(maxl + 1, -1);
        for (size_t i = 0; i < labels_here.size(); ++i)
            well_of_label[labels_here[i]] = static_cast<int>(i);
        dec.wells.resize(labels_here.size());
    }
    for (int64_t s : dec.omega_sites)
        if (open_labels[s] >= 0)
            dec.wells[well_of_label[open_labels[s]]].sites.push_back(s);

    // Attach minima and depth data.
    const double fr = lat.f_max - lat.f_min;
    const double depth_tol = opt.depth_merge_factor * std::max(fr, 1e-12);
    for (int m = 0; m < static_cast<int>(cps.size()); ++m) {
        if (cps[m].kind != CritKind::Minimum) continue;
        int64_t site = lat.nearest_site(cps[m].x.data());
        if (open_labels[site] < 0 || closed_labels[site] != target_label) continue;
        int w = well_of_label[open_labels[site]];
        if (w >= 0) dec.wells[w].minima.push_back(m);
    }
    for (auto& well : dec.wells) {
        if (well.minima.empty())
            throw LandscapeError("well without a classified minimum (increase seeds_per_axis?)");
        well.h_min = std::numeric_limits<double>::infinity();
        for (int m : well.minima) well.h_min = std::min(well.h_min, cps[m].f);
        for (int m : well.minima) {
            if (cps[m].f > well.h_min + depth_tol) continue;
            well.deepest.push_back(m);
            double det = 1.0;
            for (double l : cps[m].eigvals) det *= l;
            well.mu_measure += 1.0 / std::sqrt(det);
        }
        well.depth = H - well.h_min;
        if (!(well.depth > 0)) throw LandscapeError("non-positive well depth");
    }

    // Saddle incidences via the probe minima.
    auto well_of_min = [&](int m) {
        for (int w = 0; w < static_cast<int>(dec.wells.size()); ++w)
            for (int mm : dec.wells[w].minima)
                if (mm == m) return w;
        return -1;
    };
    for (const auto& pr : probes) {
        if (min_label(pr.min_plus) != target_label) continue;
        SaddleIncidence inc;
        inc.saddle = pr.saddle;
        inc.well_plus = well_of_min(pr.min_plus);
        inc.well_minus = well_of_min(pr.min_minus);
        if (inc.well_plus < 0 || inc.well_minus < 0)
            throw LandscapeError("saddle probe landed outside the component's wells");
        if (inc.well_plus == inc.well_minus)
            dec.degenerate_saddles.push_back(pr.saddle);
        dec.saddles.push_back(inc);
    }
    return dec;
}

Landscape build_landscape(const Potential& pot, const Lattice& lat,
                          const std::vector<CriticalPoint>& cps,
                          const LandscapeOptions& opt) {
    Landscape scape;
    scape.cps = cps;
    const double fr = lat.f_max - lat.f_min;
    scape.levels = build_saddle_levels(cps, opt.height_merge_factor * std::max(fr, 1e-12));
    for (int i = 0; i < static_cast<int>(scape.levels.size()); ++i) {
        std::vector<int> remaining = scape.levels[i].saddles;
        while (!remaining.empty()) {
            Decomposition dec = build_wells(pot, lat, cps, scape.levels, i,
                                            remaining.front(), opt);
            std::vector<int> in_dec;
            for (const auto& inc : dec.saddles) in_dec.push_back(inc.saddle);
            std::vector<int> rest;
            for (int s : remaining)
                if (std::find(in_dec.begin(), in_dec.end(), s) == in_dec.end())
                    rest.push_back(s);
            if (rest.size() == remaining.size())
                throw LandscapeError("component assignment did not consume its saddle");
            remaining = std::move(rest);
            scape.decomps.push_back(std::move(dec));
        }
    }
    return scape;
}

double default_metastable_eps(const Landscape& scape, const Decomposition& decomp) {
    double H_prev = -std::numeric_limits<double>::infinity();
    for (const auto& w : decomp.wells) H_prev = std::max(H_prev, -1e300);
    // H_{i-1} := min F for the first level
    if (decomp.level > 0) {
        H_prev = scape.levels[decomp.level - 1].height;
    } else {
        H_prev = std::numeric_limits<double>::infinity();
        for (const auto& w : decomp.wells) H_prev = std::min(H_prev, w.h_min);
    }
    double gap = decomp.height - H_prev;
    double min_depth = std::numeric_limits<double>::infinity();
    for (const auto& w : decomp.wells) min_depth = std::min(min_depth, w.depth);
    return 0.5 * std::min(gap, min_depth);
}

std::vector<std::vector<int64_t>> metastable_sets(const Lattice& lat,
                                                  const Landscape& scape,
                                                  const Decomposition& decomp,
                                                  double eps) {
    if (eps <= 0) eps = default_metastable_eps(scape, decomp);
    double H_prev = decomp.level > 0 ? scape.levels[decomp.level - 1].height
                                     : std::numeric_limits<double>::infinity();
    if (decomp.level > 0 && !(eps < decomp.height - H_prev))
        throw LandscapeError("eps exceeds the gap to the previous level");
    const double cut = decomp.height - eps;
    std::vector<std::vector<int64_t>> sets(decomp.wells.size());
    for (size_t a = 0; a < decomp.wells.size(); ++a) {
        for (int64_t s : decomp.wells[a].sites)
            if (lat.f[s] < cut) sets[a].push_back(s);
        if (sets[a].empty())
            throw LandscapeError(fmt::format(
                "metastable set of well {} is empty (eps = {} too large for N = {})",
                a + 1, eps, lat.N));
    }
    return sets;
}

DepthPartition depth_partition(const Decomposition& decomp, double depth_merge_tol) {
    const int nw = static_cast<int>(decomp.wells.size());
    std::vector<int> order(nw);
    for (int i = 0; i < nw; ++i) order[i] = i;
    std::sort(order.begin(), order.end(), [&](int a, int b) {
        return decomp.wells[a].depth < decomp.wells[b].depth;
    });

    DepthPartition part;
    for (int idx : order) {
        double th = decomp.wells[idx].depth;
        if (!part.theta.empty() && th <= part.theta.back() + depth_merge_tol) {
            part.T.back().push_back(idx);
        } else {
            part.theta.push_back(th);
            part.T.push_back({idx});
        }
    }
    const int n = static_cast<int>(part.theta.size());
    part.S.resize(n);
    for (int m = n - 1; m >= 0; --m) {
        part.S[m] = part.T[m];
        if (m + 1 < n)
            part.S[m].insert(part.S[m].end(), part.S[m + 1].begin(), part.S[m + 1].end());
        std::sort(part.S[m].begin(), part.S[m].end());
    }
    return part;
}

}  // namespace mw
