#include "mwalk/simulate.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <limits>
#include <thread>

#include <fmt/format.h>

namespace mw {

namespace {

template <class Fn>
void run_replicas(int replicas, Fn&& fn) {
    unsigned nw = std::max(1u, std::thread::hardware_concurrency());
    nw = std::min<unsigned>(nw, static_cast<unsigned>(replicas));
    if (nw <= 1) {
        for (int r = 0; r < replicas; ++r) fn(r);
        return;
    }
    std::atomic<int> next{0};
    std::vector<std::thread> pool;
    for (unsigned w = 0; w < nw; ++w)
        pool.emplace_back([&] {
            for (;;) {
                int r = next.fetch_add(1);
                if (r >= replicas) break;
                fn(r);
            }
        });
    for (auto& t : pool) t.join();
}

void finalize_outcomes(ExperimentReport& rep) {
    int64_t total = 0;
    for (auto& o : rep.outcomes) total += o.count;
    for (auto& o : rep.outcomes) {
        o.freq = total > 0 ? static_cast<double>(o.count) / total : 0.0;
        auto [lo, hi] = wilson_interval(o.count, total);
        o.lo95 = lo;
        o.hi95 = hi;
    }
}

struct Timer {
    std::chrono::steady_clock::time_point t0 = std::chrono::steady_clock::now();
    double seconds() const {
        return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    }
};

}  // namespace

std::pair<double, double> wilson_interval(int64_t count, int64_t n, double z) {
    if (n <= 0) return {0.0, 1.0};
    double p = static_cast<double>(count) / n;
    double z2n = z * z / n;
    double denom = 1.0 + z2n;
    double center = (p + z2n / 2.0) / denom;
    double half = z * std::sqrt(p * (1.0 - p) / n + z2n / (4.0 * n)) / denom;
    double lo = count == 0 ? 0.0 : std::max(0.0, center - half);
    double hi = count == n ? 1.0 : std::min(1.0, center + half);
    return {lo, hi};
}

LatticeChain::LatticeChain(const Lattice& lat) : lat_(&lat), nslots_(2 * lat.dim) {
    rate_.assign(lat.size() * static_cast<int64_t>(nslots_), 0.0);
    lambda_.assign(lat.size(), 0.0);
    for (int64_t s = 0; s < lat.size(); ++s) {
        double tot = 0.0;
        for (int axis = 0; axis < lat.dim; ++axis)
            for (int dir : {-1, 1}) {
                int64_t t = lat.neighbor(s, axis, dir);
                if (t < 0) continue;
                double r = std::exp(lat.log_jump_rate(s, t));
                rate_[s * nslots_ + axis * 2 + (dir > 0 ? 1 : 0)] = r;
                tot += r;
            }
        if (!(tot > 0)) throw SimError("isolated lattice site");
        lambda_[s] = tot;
    }
}

int64_t LatticeChain::step(int64_t site, Rng& rng, double& t) const {
    const double lam = lambda_[site];
    t += rng.exponential(lam);
    double u = rng.uniform() * lam;
    const double* r = &rate_[site * nslots_];
    double acc = 0.0;
    int slot = 0;
    for (; slot < nslots_ - 1; ++slot) {
        acc += r[slot];
        if (u < acc) break;
    }
    // the last slot absorbs rounding; skip over zero-rate trailing slots
    while (r[slot] == 0.0 && slot > 0) --slot;
    return slot_target(site, slot);
}

HitResult run_until_hit(const LatticeChain& chain, int64_t x0,
                        const std::vector<int16_t>& stop_id, Rng& rng,
                        int64_t max_jumps) {
    if (stop_id[x0] >= 0) throw SimError("start site is in a stop set");
    HitResult res;
    int64_t s = x0;
    for (int64_t j = 0; j < max_jumps; ++j) {
        s = chain.step(s, rng, res.time);
        ++res.jumps;
        if (stop_id[s] >= 0) {
            res.set_id = stop_id[s];
            res.site = s;
            return res;
        }
    }
    res.site = s;
    res.timed_out = true;
    return res;
}

double default_delta_N(int dim, int N) {
    return std::max(2.0 * (dim + 2) * std::log(static_cast<double>(N)) / N,
                    std::pow(static_cast<double>(N), -0.85));
}

ExitWindows build_exit_windows(const Lattice& lat, const Landscape& scape,
                               const Decomposition& decomp, int a,
                               double delta_N, double eps) {
    const int d = lat.dim;
    if (delta_N <= 0) delta_N = default_delta_N(d, lat.N);

    std::vector<int> saddles;
    for (const auto& inc : decomp.saddles)
        if (inc.well_plus == a || inc.well_minus == a)
            if (std::find(saddles.begin(), saddles.end(), inc.saddle) == saddles.end())
                saddles.push_back(inc.saddle);
    if (saddles.empty()) throw SimError("well has no boundary saddles");

    if (eps <= 0) {
        double mind = std::numeric_limits<double>::infinity();
        for (size_t i = 0; i < saddles.size(); ++i)
            for (size_t j = i + 1; j < saddles.size(); ++j) {
                double d2 = 0.0;
                for (int k = 0; k < d; ++k) {
                    double dx = scape.cps[saddles[i]].x[k] - scape.cps[saddles[j]].x[k];
                    d2 += dx * dx;
                }
                mind = std::min(mind, std::sqrt(d2));
            }
        eps = std::min(0.3, 0.4 * mind);
    }

    ExitWindows win;
    win.saddles = saddles;
    win.delta_N = delta_N;
    win.eps = eps;
    // the two regime conditions pull against each other at desk-scale N
    double decay = (d + 1) * std::log(static_cast<double>(lat.N)) - lat.N * delta_N;
    win.regime_warning = delta_N >= std::pow(lat.N, -0.75) || decay >= 0.0;

    const double cut = decomp.height + delta_N;
    win.stop_id.assign(lat.size(), -1);
    for (int64_t s = 0; s < lat.size(); ++s)
        if (lat.f[s] > cut) win.stop_id[s] = static_cast<int16_t>(saddles.size());

    win.window_sites.resize(saddles.size());
    std::vector<double> x(d), p(d);
    for (size_t wi = 0; wi < saddles.size(); ++wi) {
        const CriticalPoint& z = scape.cps[saddles[wi]];
        std::vector<double> v = z.unstable_dir();
        std::vector<int> klo(d), khi(d), k(d);
        for (int i = 0; i < d; ++i) {
            double r = eps + 2.0 / lat.N;
            klo[i] = std::max(lat.kmin[i], static_cast<int>(std::floor((z.x[i] - r) * lat.N)));
            khi[i] = std::min(lat.kmax[i], static_cast<int>(std::ceil((z.x[i] + r) * lat.N)));
        }
        k = klo;
        for (;;) {
            for (int i = 0; i < d; ++i) {
                x[i] = static_cast<double>(k[i]) / lat.N;
                p[i] = x[i] - z.x[i];
            }
            double pv = 0.0, p2 = 0.0;
            for (int i = 0; i < d; ++i) {
                pv += p[i] * v[i];
                p2 += p[i] * p[i];
            }
            double perp2 = p2 - pv * pv;
            int64_t s = lat.site_of(k.data());
            if (std::abs(pv) <= 1.0 / lat.N + 1e-12 && perp2 <= eps * eps &&
                lat.f[s] <= cut) {
                if (win.stop_id[s] >= 0 && win.stop_id[s] < static_cast<int16_t>(saddles.size()) &&
                    win.stop_id[s] != static_cast<int16_t>(wi))
                    throw SimError("exit windows overlap; reduce eps");
                win.stop_id[s] = static_cast<int16_t>(wi);
                win.window_sites[wi].push_back(s);
            }
            int axis = d - 1;
            while (axis >= 0 && ++k[axis] > khi[axis]) k[axis--] = klo[axis];
            if (axis < 0) break;
        }
        if (win.window_sites[wi].empty())
            throw SimError(fmt::format(
                "empty exit window; need delta_N >= about {} at this N",
                std::abs(scape.cps[saddles[wi]].eigvals[0]) / (lat.N * lat.N) + 1.0 / lat.N));
    }
    return win;
}

ExperimentReport exit_experiment(const LatticeChain& chain, const ExitWindows& windows,
                                 const std::vector<int64_t>& starts,
                                 const ExitExperimentOptions& opt) {
    if (opt.replicas < 1 || starts.empty()) throw SimError("bad exit experiment setup");
    Timer timer;
    const int nw = static_cast<int>(windows.saddles.size());
    const int n_outcomes = nw + 2;  // windows, high surface, timeout

    std::vector<int> result(opt.replicas);
    std::vector<int64_t> jumps(opt.replicas);
    run_replicas(opt.replicas, [&](int r) {
        Rng rng = Rng::stream(opt.seed, static_cast<uint64_t>(r));
        int64_t x0 = starts[r % starts.size()];
        HitResult hit = run_until_hit(chain, x0, windows.stop_id, rng, opt.max_jumps);
        result[r] = hit.timed_out ? n_outcomes - 1 : hit.set_id;
        jumps[r] = hit.jumps;
    });

    ExperimentReport rep;
    rep.name = "exit";
    rep.N = chain.lattice().N;
    rep.seed = opt.seed;
    rep.replicas = opt.replicas;
    rep.delta_N = windows.delta_N;
    rep.eps_N = windows.eps;
    rep.outcomes.resize(n_outcomes);
    for (int w = 0; w < nw; ++w) {
        rep.outcomes[w].name = fmt::format("window_saddle_{}", windows.saddles[w]);
        if (w < static_cast<int>(opt.predicted.size()))
            rep.outcomes[w].predicted = opt.predicted[w];
    }
    rep.outcomes[nw].name = "high_surface";
    rep.outcomes[nw + 1].name = "timeout";
    rep.replica_outcome = result;
    for (int r = 0; r < opt.replicas; ++r) {
        ++rep.outcomes[result[r]].count;
        rep.total_jumps += jumps[r];
    }
    finalize_outcomes(rep);
    rep.wall_seconds = timer.seconds();
    return rep;
}

ExperimentReport saddle_crossing_experiment(const LatticeChain& chain,
                                            const CriticalPoint& z,
                                            const CrossingOptions& opt) {
    const Lattice& lat = chain.lattice();
    const int d = lat.dim;
    double eps = opt.eps_N > 0 ? opt.eps_N : std::pow(static_cast<double>(lat.N), -7.0 / 16.0);
    double lam_sum = 0.0;
    for (int j = 1; j < d; ++j) lam_sum += z.eigvals[j];
    const double aspect = std::max(1.0, (1.0 + lam_sum) / z.mu());
    const double vlen = aspect * eps;
    std::vector<double> v = z.unstable_dir();
    // Transverse confinement: the stable directions perform an OU motion with
    // stationary sd 1/sqrt(N lambda_j); the side faces must sit several sd out
    // or side exits dominate before the unstable direction leaves the box.
    std::vector<double> wside(d, 0.0);
    for (int j = 1; j < d; ++j)
        wside[j] = std::max(2.0 * std::sqrt(z.mu() / z.eigvals[j]) * eps,
                            4.0 / std::sqrt(lat.N * z.eigvals[j]));

    // exit face of a site: 0 = +v, 1 = -v, 2 = side, -1 = inside the box
    auto face = [&](int64_t s) {
        double x[8];
        lat.position(s, x);
        double pv = 0.0;
        for (int i = 0; i < d; ++i) pv += (x[i] - z.x[i]) * v[i];
        if (pv > vlen) return 0;
        if (pv < -vlen) return 1;
        for (int j = 1; j < d; ++j) {
            double pj = 0.0;
            for (int i = 0; i < d; ++i)
                pj += (x[i] - z.x[i]) * z.eigvecs[i + static_cast<size_t>(d) * j];
            if (std::abs(pj) > wside[j]) return 2;
        }
        return -1;
    };

    int64_t start = lat.nearest_site(z.x.data());
    if (face(start) >= 0) throw SimError("saddle box contains no interior sites");

    Timer timer;
    std::vector<int> result(opt.replicas);
    std::vector<int64_t> jumps(opt.replicas);
    run_replicas(opt.replicas, [&](int r) {
        Rng rng = Rng::stream(opt.seed, static_cast<uint64_t>(r));
        int64_t s = start;
        double t = 0.0;
        int out = 3;  // timeout
        for (int64_t j = 0; j < opt.max_jumps; ++j) {
            s = chain.step(s, rng, t);
            int f = face(s);
            if (f >= 0) {
                out = f;
                jumps[r] = j + 1;
                break;
            }
        }
        result[r] = out;
    });

    ExperimentReport rep;
    rep.name = "saddle_crossing";
    rep.N = lat.N;
    rep.seed = opt.seed;
    rep.replicas = opt.replicas;
    rep.eps_N = eps;
    rep.outcomes.resize(4);
    rep.outcomes[0] = {"plus_face", 0, 0, 0, 0, 0.5};
    rep.outcomes[1] = {"minus_face", 0, 0, 0, 0, 0.5};
    rep.outcomes[2] = {"side_face", 0, 0, 0, 0, 0.0};
    rep.outcomes[3].name = "timeout";
    rep.replica_outcome = result;
    for (int r = 0; r < opt.replicas; ++r) {
        ++rep.outcomes[result[r]].count;
        rep.total_jumps += jumps[r];
    }
    finalize_outcomes(rep);
    rep.stats["box_aspect"] = aspect;
    rep.wall_seconds = timer.seconds();
    return rep;
}

ExperimentReport trace_projection_experiment(
    const LatticeChain& chain, const std::vector<std::vector<int64_t>>& Esets,
    const std::vector<int>& T, int start_well, double log_beta,
    const std::vector<std::vector<double>>& r_pred, const TraceOptions& opt) {
    const Lattice& lat = chain.lattice();
    const int nwells = static_cast<int>(Esets.size());
    std::vector<int16_t> well_id(lat.size(), -1);
    for (int a = 0; a < nwells; ++a)
        for (int64_t s : Esets[a]) well_id[s] = static_cast<int16_t>(a);
    if (Esets.at(start_well).empty()) throw SimError("empty start set");
    if (log_beta > 700.0) throw SimError("horizon overflows the time scale");
    const double horizon_time = opt.horizon * std::exp(log_beta);

    std::vector<char> inT(nwells, 0);
    for (int a : T) inT.at(a) = 1;

    struct Rep {
        std::vector<double> time_in;          // per current-well label
        double time_outside = 0.0, total_time = 0.0;
        std::vector<int64_t> trans;           // nwells*nwells transition counts
        std::vector<double> stays;            // completed stay durations, T wells
        int64_t jumps = 0;
        bool horizon_reached = false;
    };
    std::vector<Rep> reps(opt.replicas);

    Timer timer;
    run_replicas(opt.replicas, [&](int r) {
        Rng rng = Rng::stream(opt.seed, static_cast<uint64_t>(r));
        Rep& rp = reps[r];
        rp.time_in.assign(nwells, 0.0);
        rp.trans.assign(static_cast<size_t>(nwells) * nwells, 0);
        int64_t s = Esets[start_well][0];
        int cur = start_well;
        double stay_start = 0.0, t = 0.0;
        for (int64_t j = 0; j < opt.max_jumps; ++j) {
            double t_before = t;
            int64_t s_next = chain.step(s, rng, t);
            double dt = t - t_before;
            // exclusive attribution: the label matches the site whenever the
            // site is inside an E-set, so outside time is counted once
            if (well_id[s] < 0)
                rp.time_outside += dt;
            else
                rp.time_in[cur] += dt;
            s = s_next;
            ++rp.jumps;
            int w = well_id[s];
            if (w >= 0 && w != cur) {
                ++rp.trans[static_cast<size_t>(cur) * nwells + w];
                if (inT[cur]) rp.stays.push_back(t - stay_start);
                cur = w;
                stay_start = t;
            }
            if (t >= horizon_time) {
                rp.horizon_reached = true;
                break;
            }
        }
        rp.total_time = t;
    });

    ExperimentReport rep;
    rep.name = "trace_projection";
    rep.N = lat.N;
    rep.seed = opt.seed;
    rep.replicas = opt.replicas;

    std::vector<double> time_in(nwells, 0.0);
    std::vector<int64_t> trans(static_cast<size_t>(nwells) * nwells, 0);
    double outside = 0.0, total = 0.0;
    std::vector<double> stays;
    int timeouts = 0;
    for (const Rep& rp : reps) {
        for (int a = 0; a < nwells; ++a) time_in[a] += rp.time_in[a];
        for (size_t i = 0; i < trans.size(); ++i) trans[i] += rp.trans[i];
        outside += rp.time_outside;
        total += rp.total_time;
        stays.insert(stays.end(), rp.stays.begin(), rp.stays.end());
        rep.total_jumps += rp.jumps;
        if (!rp.horizon_reached) ++timeouts;
    }

    rep.stats["occupation_outside"] = total > 0 ? outside / total : 0.0;
    rep.stats["timeout_replicas"] = timeouts;
    int64_t total_trans = 0;
    for (int a : T)
        for (int b = 0; b < nwells; ++b) {
            int64_t c = trans[static_cast<size_t>(a) * nwells + b];
            total_trans += c;
            if (a != b && time_in[a] > 0) {
                double rate = static_cast<double>(c) / time_in[a];
                rep.stats[fmt::format("rate_{}_{}", a, b)] = rate;
                double pred = r_pred.empty() ? 0.0 : r_pred[a][b];
                if (pred > 0) {
                    rep.stats[fmt::format("rate_ratio_{}_{}", a, b)] =
                        rate * std::exp(log_beta) / pred;
                }
            }
        }
    rep.stats["transitions"] = static_cast<double>(total_trans);
    rep.stats["partial"] = total_trans < opt.min_transitions ? 1.0 : 0.0;
    if (stays.size() >= 2) {
        double m = 0.0;
        for (double x : stays) m += x;
        m /= stays.size();
        double var = 0.0;
        for (double x : stays) var += (x - m) * (x - m);
        var /= (stays.size() - 1);
        rep.stats["holding_cv"] = std::sqrt(var) / m;
        // quantile-ratio test: for Exp, q75/q25 = ln(4)/ln(4/3)
        std::sort(stays.begin(), stays.end());
        double q25 = stays[stays.size() / 4], q75 = stays[(3 * stays.size()) / 4];
        if (q25 > 0) rep.stats["quantile_ratio"] = (q75 / q25) / (std::log(4.0) / std::log(4.0 / 3.0));
    }

    // outcomes: time fractions per well label plus outside
    rep.outcomes.resize(nwells + 1);
    for (int a = 0; a < nwells; ++a) {
        rep.outcomes[a].name = fmt::format("well_{}", a);
        rep.outcomes[a].count = static_cast<int64_t>(1e6 * (total > 0 ? time_in[a] / total : 0));
    }
    rep.outcomes[nwells].name = "outside_sets";
    rep.outcomes[nwells].count = static_cast<int64_t>(1e6 * (total > 0 ? outside / total : 0));
    for (auto& o : rep.outcomes) o.freq = static_cast<double>(o.count) / 1e6;
    rep.wall_seconds = timer.seconds();
    return rep;
}

ExperimentReport low_boundary_exit_experiment(const LatticeChain& chain,
                                              const std::vector<char>& D,
                                              int64_t start,
                                              const LowBoundaryOptions& opt) {
    const Lattice& lat = chain.lattice();
    if (!D.at(start)) throw SimError("start site is outside the domain");
    double eps = opt.eps_N > 0 ? opt.eps_N : 1.0 / lat.N;

    // inner boundary: domain sites with a lattice neighbor outside the domain
    std::vector<int64_t> boundary;
    for (int64_t s = 0; s < lat.size(); ++s) {
        if (!D[s]) continue;
        bool edge = false;
        for (int axis = 0; axis < lat.dim && !edge; ++axis)
            for (int dir : {-1, 1}) {
                int64_t t = lat.neighbor(s, axis, dir);
                if (t >= 0 && !D[t]) {
                    edge = true;
                    break;
                }
            }
        if (edge) boundary.push_back(s);
    }
    if (boundary.empty()) throw SimError("domain has no inner boundary");
    double fmin = std::numeric_limits<double>::infinity();
    for (int64_t s : boundary) fmin = std::min(fmin, lat.f[s]);

    std::vector<int16_t> stop_id(lat.size(), -1);
    int low_count = 0;
    for (int64_t s : boundary) {
        bool low = lat.f[s] <= fmin + 2.0 * eps;
        stop_id[s] = low ? 0 : 1;
        if (low) ++low_count;
    }
    if (low_count == 0) throw SimError("low boundary set is empty");
    if (stop_id[start] >= 0) throw SimError("start site lies on the boundary");

    Timer timer;
    std::vector<int> result(opt.replicas);
    std::vector<int64_t> jumps(opt.replicas);
    run_replicas(opt.replicas, [&](int r) {
        Rng rng = Rng::stream(opt.seed, static_cast<uint64_t>(r));
        HitResult hit = run_until_hit(chain, start, stop_id, rng, opt.max_jumps);
        result[r] = hit.timed_out ? 2 : hit.set_id;
        jumps[r] = hit.jumps;
    });

    ExperimentReport rep;
    rep.name = "low_boundary_exit";
    rep.N = lat.N;
    rep.seed = opt.seed;
    rep.replicas = opt.replicas;
    rep.eps_N = eps;
    rep.outcomes.resize(3);
    rep.outcomes[0] = {"low_boundary", 0, 0, 0, 0, 1.0};
    rep.outcomes[1].name = "high_boundary";
    rep.outcomes[2].name = "timeout";
    rep.replica_outcome = result;
    for (int r = 0; r < opt.replicas; ++r) {
        ++rep.outcomes[result[r]].count;
        rep.total_jumps += jumps[r];
    }
    finalize_outcomes(rep);
    rep.stats["boundary_sites"] = static_cast<double>(boundary.size());
    rep.stats["low_boundary_sites"] = static_cast<double>(low_count);
    rep.wall_seconds = timer.seconds();
    return rep;
}

}  // namespace mw
