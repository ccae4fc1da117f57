#include <cstdlib>
#include <ctime>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <json.hpp>

#include "mwalk/builtins.hpp"
#include "mwalk/capacity.hpp"
#include "mwalk/expr.hpp"
#include "mwalk/landscape.hpp"
#include "mwalk/lattice.hpp"
#include "mwalk/linalg.hpp"
#include "mwalk/reduction.hpp"
#include "mwalk/simulate.hpp"
#include "mwalk/verify.hpp"

using json = nlohmann::ordered_json;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitHypothesis = 3;
constexpr int kExitNumerical = 4;
constexpr int kExitAcceptance = 5;
constexpr const char* kSchemaVersion = "1";

struct Options {
    std::string potential;
    std::vector<int> Ns = {60};
    std::string out_dir;
    std::string config_path;
    std::string experiment = "exit";
    int replicas = 1000;
    uint64_t seed = 1;
    double eps_N = -1.0;
    double delta_N = -1.0;
    double horizon = 1.0;
    int64_t max_jumps = 1'000'000'000;
    int well = 0;
    bool force = false;
    bool literal_boundary_sign = false;
    bool csv = false;
};

void load_config(Options& o) {
    if (o.config_path.empty()) return;
    std::ifstream in(o.config_path);
    if (!in) throw std::invalid_argument(fmt::format("config file '{}' not found", o.config_path));
    json cfg = json::parse(in);
    if (cfg.contains("potential")) o.potential = cfg["potential"].get<std::string>();
    if (cfg.contains("N")) {
        o.Ns.clear();
        if (cfg["N"].is_array())
            for (auto& v : cfg["N"]) o.Ns.push_back(v.get<int>());
        else
            o.Ns.push_back(cfg["N"].get<int>());
    }
    if (cfg.contains("out_dir")) o.out_dir = cfg["out_dir"].get<std::string>();
    if (cfg.contains("experiment")) o.experiment = cfg["experiment"].get<std::string>();
    if (cfg.contains("replicas")) o.replicas = cfg["replicas"].get<int>();
    if (cfg.contains("seed")) o.seed = cfg["seed"].get<uint64_t>();
    if (cfg.contains("eps_N")) o.eps_N = cfg["eps_N"].get<double>();
    if (cfg.contains("delta_N")) o.delta_N = cfg["delta_N"].get<double>();
    if (cfg.contains("horizon")) o.horizon = cfg["horizon"].get<double>();
    if (cfg.contains("max_jumps")) o.max_jumps = cfg["max_jumps"].get<int64_t>();
    if (cfg.contains("well")) o.well = cfg["well"].get<int>();
    if (cfg.contains("force")) o.force = cfg["force"].get<bool>();
    if (cfg.contains("literal_boundary_sign"))
        o.literal_boundary_sign = cfg["literal_boundary_sign"].get<bool>();
}

void write_file(const std::string& path, const std::string& content) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw std::runtime_error(fmt::format("cannot write '{}'", path));
    out << content;
}

void write_json(const Options& o, const std::string& name, const json& j) {
    std::string dir = o.out_dir.empty() ? "." : o.out_dir;
    write_file(fmt::format("{}/{}", dir, name), j.dump(2) + "\n");
    // timestamps live in a sidecar so the main artifacts stay byte-stable
    json meta;
    meta["schema_version"] = kSchemaVersion;
    meta["written_at"] = static_cast<int64_t>(std::time(nullptr));
    write_file(fmt::format("{}/{}.meta", dir, name), meta.dump(2) + "\n");
}

json cp_to_json(const mw::CriticalPoint& cp) {
    json j;
    j["x"] = cp.x;
    j["F"] = cp.f;
    j["kind"] = mw::to_string(cp.kind);
    j["grad_norm"] = cp.grad_norm;
    j["eigenvalues"] = cp.eigvals;
    return j;
}

json hyp_to_json(const mw::HypothesisReport& hyp) {
    json j;
    j["h1_ok"] = hyp.h1_ok;
    j["h2_ok"] = hyp.h2_ok;
    j["h3_ok"] = hyp.h3_ok;
    j["h4_ok"] = hyp.h4_ok;
    j["h1_lipschitz_estimate"] = hyp.h1_lipschitz_estimate;
    j["violations"] = hyp.violations;
    return j;
}

json decomp_to_json(const mw::Analysis& an, const mw::Decomposition& dec) {
    json j;
    j["level"] = dec.level;
    j["height"] = dec.height;
    json wells = json::array();
    for (const auto& w : dec.wells) {
        json jw;
        jw["h_min"] = w.h_min;
        jw["depth"] = w.depth;
        jw["mu_measure"] = w.mu_measure;
        jw["sites"] = w.sites.size();
        json mins = json::array();
        for (int m : w.deepest) mins.push_back(an.scape.cps[m].x);
        jw["deepest_minima"] = mins;
        wells.push_back(jw);
    }
    j["wells"] = wells;
    json sads = json::array();
    for (const auto& inc : dec.saddles) {
        json js;
        js["saddle"] = an.scape.cps[inc.saddle].x;
        js["well_plus"] = inc.well_plus;
        js["well_minus"] = inc.well_minus;
        sads.push_back(js);
    }
    j["saddles"] = sads;
    return j;
}

int check_hyp(const mw::Analysis& an, const Options& o) {
    if (an.hyp.ok() || o.force) return kExitOk;
    std::cerr << "hypothesis check failed:\n";
    for (const auto& v : an.hyp.violations) std::cerr << "  " << v << "\n";
    std::cerr << "use --force to continue anyway\n";
    return kExitHypothesis;
}

int cmd_analyze(const Options& o) {
    mw::Potential pot = mw::load_potential(o.potential);
    json out;
    out["schema_version"] = kSchemaVersion;
    out["potential"] = o.potential;
    json per_n = json::array();
    for (int N : o.Ns) {
        mw::Analysis an = mw::analyze_potential(pot, N);
        if (int rc = check_hyp(an, o)) return rc;
        json j;
        j["N"] = N;
        j["sites"] = an.lat.size();
        j["f_min"] = an.lat.f_min;
        j["f_max"] = an.lat.f_max;
        json cps = json::array();
        for (const auto& cp : an.cps) cps.push_back(cp_to_json(cp));
        j["critical_points"] = cps;
        j["hypotheses"] = hyp_to_json(an.hyp);
        json levels = json::array();
        for (const auto& lv : an.scape.levels) {
            json jl;
            jl["height"] = lv.height;
            jl["saddles"] = lv.saddles.size();
            levels.push_back(jl);
        }
        j["saddle_levels"] = levels;
        json decs = json::array();
        for (const auto& dec : an.scape.decomps) decs.push_back(decomp_to_json(an, dec));
        j["decompositions"] = decs;
        bool has_min = false;
        for (const auto& cp : an.cps) has_min = has_min || cp.kind == mw::CritKind::Minimum;
        if (has_min) j["rho_N"] = mw::partition_sum_check(an.lat, an.cps);
        per_n.push_back(j);
    }
    out["results"] = per_n;
    write_json(o, "analyze.json", out);
    return kExitOk;
}

int cmd_reduce(const Options& o) {
    mw::Potential pot = mw::load_potential(o.potential);
    json out;
    out["schema_version"] = kSchemaVersion;
    out["potential"] = o.potential;
    json per_n = json::array();
    for (int N : o.Ns) {
        mw::Analysis an = mw::analyze_potential(pot, N);
        if (int rc = check_hyp(an, o)) return rc;
        if (an.main_decomp < 0)
            throw std::invalid_argument("potential has no saddles; nothing to reduce");
        const auto& dec = an.decomp();
        auto g = mw::build_reduced_graph(dec, an.scape.cps, an.lat.dim);
        json j;
        j["N"] = N;
        j["height"] = g.height;
        j["well_measures"] = g.mu;
        j["well_heights"] = g.h;
        j["well_depths"] = g.depth;
        json edges = json::array();
        for (const auto& e : g.edges) {
            json je;
            je["a"] = e.a;
            je["b"] = e.b;
            je["conductance"] = e.c;
            edges.push_back(je);
        }
        j["edges"] = edges;
        j["jump_probabilities"] = mw::jump_probabilities(g);
        auto part = mw::depth_partition(dec, 1e-8 * (an.lat.f_max - an.lat.f_min));
        auto scales = mw::limit_rates(g, part);
        json jscales = json::array();
        for (const auto& sc : scales) {
            json js;
            js["theta"] = sc.theta;
            js["T"] = sc.T;
            js["S"] = sc.S;
            js["log_beta"] = sc.log_beta(N);
            js["rates"] = sc.r;
            jscales.push_back(js);
        }
        j["scales"] = jscales;
        per_n.push_back(j);
    }
    out["results"] = per_n;
    write_json(o, "reduce.json", out);
    return kExitOk;
}

int cmd_capacity(const Options& o) {
    mw::Potential pot = mw::load_potential(o.potential);
    json out;
    out["schema_version"] = kSchemaVersion;
    out["potential"] = o.potential;
    std::string csv = "N,kappa_exact,kappa_pred,upper_bound,lower_bound\n";
    json per_n = json::array();
    for (int N : o.Ns) {
        mw::Analysis an = mw::analyze_potential(pot, N);
        if (int rc = check_hyp(an, o)) return rc;
        if (an.main_decomp < 0)
            throw std::invalid_argument("potential has no saddles; no capacities to compute");
        const auto& dec = an.decomp();
        int a = o.well;
        if (a < 0 || a >= static_cast<int>(dec.wells.size()))
            throw std::invalid_argument("well index out of range");
        auto E = mw::metastable_sets(an.lat, an.scape, dec);
        std::vector<int64_t> Eb;
        for (size_t w = 0; w < E.size(); ++w)
            if (static_cast<int>(w) != a) Eb.insert(Eb.end(), E[w].begin(), E[w].end());
        auto g = mw::build_reduced_graph(dec, an.scape.cps, an.lat.dim);
        auto pred = mw::ek_predictions(g, an.lat, {a});
        auto sol = mw::solve_equilibrium_potential(an.lat, E[a], Eb);
        double kap = sol.energy.kappa(an.lat, dec.height);
        double ub = mw::test_function_upper_bound(pot, an.lat, an.scape, dec, {a}, o.eps_N)
                        .kappa(an.lat, dec.height);
        std::vector<mw::FlowField> flows;
        for (const auto& inc : dec.saddles) {
            if ((inc.well_plus != a && inc.well_minus != a) ||
                inc.well_plus == inc.well_minus)
                continue;
            flows.push_back(mw::saddle_flow(pot, an.lat, an.scape.cps[inc.saddle],
                                            inc.well_plus != a, E[a], Eb));
        }
        double lb = mw::flow_lower_bound(an.lat, flows).kappa(an.lat, dec.height);
        json j;
        j["N"] = N;
        j["well"] = a;
        j["kappa_exact"] = kap;
        j["kappa_pred"] = pred.kappa;
        j["upper_bound"] = ub;
        j["lower_bound"] = lb;
        j["cg_iterations"] = sol.iterations;
        j["cg_residual"] = sol.rel_residual;
        per_n.push_back(j);
        csv += fmt::format("{},{},{},{},{}\n", N, kap, pred.kappa, ub, lb);
    }
    out["results"] = per_n;
    write_json(o, "capacity.json", out);
    std::string dir = o.out_dir.empty() ? "." : o.out_dir;
    write_file(dir + "/capacity.csv", csv);
    return kExitOk;
}

json report_to_json(const mw::ExperimentReport& rep) {
    json j;
    j["experiment"] = rep.name;
    j["N"] = rep.N;
    j["seed"] = rep.seed;
    j["replicas"] = rep.replicas;
    j["delta_N"] = rep.delta_N;
    j["eps_N"] = rep.eps_N;
    json outs = json::array();
    for (const auto& oc : rep.outcomes) {
        json jo;
        jo["name"] = oc.name;
        jo["count"] = oc.count;
        jo["freq"] = oc.freq;
        jo["wilson95"] = {oc.lo95, oc.hi95};
        if (oc.predicted >= 0) jo["predicted"] = oc.predicted;
        outs.push_back(jo);
    }
    j["outcomes"] = outs;
    j["stats"] = rep.stats;
    j["total_jumps"] = rep.total_jumps;
    return j;
}

int cmd_simulate(const Options& o) {
    mw::Potential pot = mw::load_potential(o.potential);
    json out;
    out["schema_version"] = kSchemaVersion;
    out["potential"] = o.potential;
    json per_n = json::array();
    std::string csv = "N,replica,outcome\n";
    for (int N : o.Ns) {
        mw::Analysis an = mw::analyze_potential(pot, N);
        if (int rc = check_hyp(an, o)) return rc;
        mw::LatticeChain chain(an.lat);
        mw::ExperimentReport rep;
        if (o.experiment == "exit") {
            const auto& dec = an.decomp();
            auto windows = mw::build_exit_windows(an.lat, an.scape, dec, o.well,
                                                  o.delta_N, o.eps_N);
            auto g = mw::build_reduced_graph(dec, an.scape.cps, an.lat.dim);
            auto pr = mw::exit_distribution(g, o.well);
            mw::ExitExperimentOptions opt;
            opt.replicas = o.replicas;
            opt.seed = o.seed;
            opt.max_jumps = o.max_jumps;
            for (int z : windows.saddles)
                for (auto& [cp, p] : pr)
                    if (cp == z) opt.predicted.push_back(p);
            int64_t start = an.lat.nearest_site(
                an.scape.cps[dec.wells[o.well].deepest[0]].x.data());
            rep = mw::exit_experiment(chain, windows, {start}, opt);
        } else if (o.experiment == "crossing") {
            const mw::CriticalPoint* z = nullptr;
            for (const auto& cp : an.cps)
                if (cp.kind == mw::CritKind::Saddle) {
                    z = &cp;
                    break;
                }
            if (!z) throw std::invalid_argument("potential has no saddle");
            mw::CrossingOptions opt;
            opt.replicas = o.replicas;
            opt.seed = o.seed;
            opt.eps_N = o.eps_N;
            opt.max_jumps = o.max_jumps;
            rep = mw::saddle_crossing_experiment(chain, *z, opt);
        } else if (o.experiment == "trace") {
            const auto& dec = an.decomp();
            auto E = mw::metastable_sets(an.lat, an.scape, dec);
            auto g = mw::build_reduced_graph(dec, an.scape.cps, an.lat.dim);
            auto part = mw::depth_partition(dec, 1e-8 * (an.lat.f_max - an.lat.f_min));
            auto scales = mw::limit_rates(g, part);
            mw::TraceOptions opt;
            opt.replicas = o.replicas;
            opt.seed = o.seed;
            opt.horizon = o.horizon;
            opt.max_jumps = o.max_jumps;
            rep = mw::trace_projection_experiment(chain, E, scales[0].T, o.well,
                                                  scales[0].log_beta(N), scales[0].r, opt);
        } else if (o.experiment == "lowboundary") {
            const auto& dec = an.decomp();
            std::vector<char> D(an.lat.size(), 0);
            for (int64_t s : dec.wells.at(o.well).sites) D[s] = 1;
            int64_t start = an.lat.nearest_site(
                an.scape.cps[dec.wells[o.well].deepest[0]].x.data());
            mw::LowBoundaryOptions opt;
            opt.replicas = o.replicas;
            opt.seed = o.seed;
            opt.eps_N = o.eps_N;
            opt.max_jumps = o.max_jumps;
            rep = mw::low_boundary_exit_experiment(chain, D, start, opt);
        } else {
            throw std::invalid_argument(fmt::format("unknown experiment '{}'", o.experiment));
        }
        per_n.push_back(report_to_json(rep));
        for (size_t r = 0; r < rep.replica_outcome.size(); ++r)
            csv += fmt::format("{},{},{}\n", N, r,
                               rep.outcomes[rep.replica_outcome[r]].name);
    }
    out["results"] = per_n;
    write_json(o, fmt::format("simulate_{}.json", o.experiment), out);
    if (o.csv) {
        std::string dir = o.out_dir.empty() ? "." : o.out_dir;
        write_file(fmt::format("{}/simulate_{}.csv", dir, o.experiment), csv);
    }
    return kExitOk;
}

int cmd_verify(const Options& o) {
    auto results = mw::run_acceptance(o.seed);
    json out;
    out["schema_version"] = kSchemaVersion;
    json jr = json::array();
    bool all = true;
    for (const auto& r : results) {
        std::cout << fmt::format("criterion {:2d} [{}] {}: {}\n", r.id,
                                 r.pass ? "PASS" : "FAIL", r.name, r.detail);
        all = all && r.pass;
        json j;
        j["id"] = r.id;
        j["name"] = r.name;
        j["pass"] = r.pass;
        j["detail"] = r.detail;
        jr.push_back(j);
    }
    out["criteria"] = jr;
    out["all_pass"] = all;
    write_json(o, "verify.json", out);
    std::cout << (all ? "all criteria passed\n" : "some criteria FAILED\n");
    return all ? kExitOk : kExitAcceptance;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"metastability analysis of the lattice random walk in a potential"};
    app.require_subcommand(1);

    Options o;
    const char* env_out = std::getenv("MWALK_OUT_DIR");
    if (env_out) o.out_dir = env_out;

    // pre-scan for --config so explicit flags can override its values
    for (int i = 1; i < argc - 1; ++i)
        if (std::string(argv[i]) == "--config") o.config_path = argv[i + 1];
    try {
        load_config(o);
    } catch (const std::exception& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kExitConfig;
    }

    auto add_common = [&](CLI::App* cmd, bool needs_potential) {
        if (needs_potential)
            cmd->add_option("potential", o.potential,
                            "builtin name or .pot file path");
        cmd->add_option("-N,--N", o.Ns, "lattice resolution(s)");
        cmd->add_option("--out", o.out_dir, "output directory");
        cmd->add_option("--config", o.config_path, "JSON config file");
        cmd->add_option("--seed", o.seed, "PRNG seed");
        cmd->add_flag("--force", o.force, "continue despite hypothesis violations");
        cmd->add_flag("--literal-boundary-sign", o.literal_boundary_sign,
                      "check the literal boundary drift sign");
    };

    auto* analyze = app.add_subcommand("analyze", "critical points, hypotheses, hierarchy");
    add_common(analyze, true);
    auto* reduce = app.add_subcommand("reduce", "reduced well graph and limiting rates");
    add_common(reduce, true);
    auto* capacity = app.add_subcommand("capacity", "exact capacity, bounds, predictions");
    add_common(capacity, true);
    capacity->add_option("--well", o.well, "source well index");
    capacity->add_option("--eps", o.eps_N, "test-function box width");
    auto* simulate = app.add_subcommand("simulate", "Monte Carlo experiments");
    add_common(simulate, true);
    simulate->add_option("--experiment", o.experiment,
                         "exit | crossing | trace | lowboundary");
    simulate->add_option("--replicas", o.replicas, "replica count");
    simulate->add_option("--well", o.well, "well index");
    simulate->add_option("--eps", o.eps_N, "experiment length scale");
    simulate->add_option("--delta", o.delta_N, "stopping level offset");
    simulate->add_option("--horizon", o.horizon, "trace horizon in beta units");
    simulate->add_option("--max-jumps", o.max_jumps, "per-replica jump budget");
    simulate->add_flag("--csv", o.csv, "dump per-replica outcomes as CSV");
    auto* verify = app.add_subcommand("verify", "run the acceptance suite");
    add_common(verify, false);

    CLI11_PARSE(app, argc, argv);

    try {
        if (analyze->parsed()) return cmd_analyze(o);
        if (reduce->parsed()) return cmd_reduce(o);
        if (capacity->parsed()) return cmd_capacity(o);
        if (simulate->parsed()) return cmd_simulate(o);
        if (verify->parsed()) return cmd_verify(o);
    } catch (const mw::PotentialError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const std::invalid_argument& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const mw::NumericalError& e) {
        std::cerr << "numerical error: " << e.what() << "\n";
        return kExitNumerical;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitNumerical;
    }
    return kExitConfig;
}
