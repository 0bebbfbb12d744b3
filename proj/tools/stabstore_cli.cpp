// stabstore: command-line front end for grid generation, stability
// assessment, stability storage and the seeded studies.

#include <CLI11.hpp>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <set>
#include <string>
#include <thread>
#include <vector>

#include "stabstore/config.hpp"
#include "stabstore/harness.hpp"
#include "stabstore/storage.hpp"
#include "stabstore/time_domain.hpp"

namespace fs = std::filesystem;
using nlohmann::ordered_json;
using namespace stabstore;

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitNumeric = 3;

struct Options {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::string out = ".";
    unsigned jobs = 1;
    std::string format = "csv";
};

struct Session {
    Options opt;
    RunConfig cfg;
    std::string config_dir;

    void write(const std::string& name, const std::string& body) const {
        fs::create_directories(opt.out);
        const auto path = fs::path(opt.out) / name;
        std::ofstream f(path, std::ios::binary);
        if (!f) throw SchemaError("cannot write '" + path.string() + "'");
        f << body;
        std::cerr << "wrote " << path.string() << "\n";
    }

    void write_table(const std::string& stem, const Table& t) const {
        write(stem + "." + opt.format, opt.format == "json" ? t.json() : t.csv());
    }

    GridGraph grid() const { return resolve_grid(cfg, config_dir); }

    std::vector<std::string> pool(const GridGraph& g) const { return candidate_inverter_nodes(g, cfg.siting); }

    std::vector<SourceParams> fleet(const GridGraph& g) const {
        if (!cfg.sources.empty()) {
            std::set<std::string> seen;
            for (std::size_t i = 0; i < cfg.sources.size(); ++i) {
                const auto& n = cfg.sources[i].node;
                if (!g.find(n)) throw SchemaError("field /sources/" + std::to_string(i) + "/node: unknown node '" + n + "'");
                if (!seen.insert(n).second)
                    throw SchemaError("field /sources/" + std::to_string(i) + "/node: second source at '" + n + "'");
            }
            return resolve_sources(cfg);
        }
        auto sc = cfg.scenario;
        sc.placement_pool = pool(g);
        return allocate(g, sc).sources;
    }

    StudyContext study(const GridGraph& g) const {
        StudyContext ctx;
        ctx.grid = &g;
        ctx.pool = pool(g);
        ctx.scenario = cfg.scenario;
        ctx.jobs = opt.jobs;
        return ctx;
    }
};

ordered_json sources_json(const std::vector<SourceParams>& sources) {
    ordered_json arr = ordered_json::array();
    for (const auto& s : sources) {
        ordered_json j{{"node", s.node}, {"kind", std::string(to_string(s.kind))}};
        if (s.finite_droop()) {
            j["capacity"] = s.capacity;
            j["inertia"] = s.inertia;
            j["k_f"] = s.k_f;
            j["k_v"] = s.k_v;
            j["t_c"] = s.t_c;
        }
        arr.push_back(std::move(j));
    }
    return arr;
}

ordered_json run_header(const Session& s, const std::string& command) {
    const auto& sc = s.cfg.scenario;
    ordered_json j;
    j["command"] = command;
    j["scenario"] = {{"snsp", sc.snsp}, {"n_inv", sc.n_inv}, {"h_total", sc.h_total}, {"s_total", sc.s_total},
                     {"r0", sc.r0},     {"t_c", sc.t_c},     {"seed", sc.rng_seed},  {"explicit_sources", !s.cfg.sources.empty()}};
    return j;
}

std::string dump(const ordered_json& j) { return j.dump(2) + "\n"; }

int cmd_gen_grid(const Session& s) {
    const auto g = s.grid();
    s.write("grid.json", serialize_grid(g));
    std::size_t loads = 0;
    for (const auto& n : g.nodes()) loads += n.kind == NodeKind::load;
    Table t{{"nodes", "branches", "substations", "loads", "candidates"}, {}};
    t.add({fmt(g.nodes().size()), fmt(g.branches().size()), fmt(g.substations().size()), fmt(loads),
           fmt(s.pool(g).size())});
    s.write_table("grid_summary", t);
    return 0;
}

int cmd_assess(const Session& s, bool full_modes) {
    const auto g = s.grid();
    const auto sources = s.fleet(g);
    const auto a = assess_full(g, sources, {}, {});
    auto j = run_header(s, full_modes ? "modes" : "assess");
    j["sources"] = sources_json(sources);
    j["f_star_hz"] = a.op.f_star;
    j["powerflow_iterations"] = a.op.iterations;
    j["modes"] = to_json(a.modes);
    j["state_labels"] = a.ss.state_labels;
    s.write("run.json", dump(j));
    if (full_modes) {
        s.write_table("modes", modes_table(a.modes));
    } else {
        Table t{{"zeta", "dominant_real", "dominant_imag", "stable", "retained", "discarded", "f_star_hz"}, {}};
        t.add({fmt(a.modes.zeta), fmt(a.modes.dominant.real()), fmt(a.modes.dominant.imag()),
               a.modes.stable ? "1" : "0", fmt(a.modes.retained), fmt(a.modes.discarded), fmt(a.op.f_star)});
        s.write_table("assess", t);
    }
    std::cerr << "zeta = " << format_number(a.modes.zeta) << (a.modes.stable ? " (stable)" : " (unstable)") << "\n";
    return 0;
}

int cmd_dsm(const Session& s) {
    const auto g = s.grid();
    const auto sources = s.fleet(g);
    Table t{{"node", "G", "B", "Gp", "Bp", "k_f", "k_v", "dsm"}, {}};
    ordered_json arr = ordered_json::array();
    for (const auto& src : sources) {
        if (src.kind != SourceKind::virtual_sg) continue;
        const auto th = thevenin_at(g, sources, src.node, {src.node, 0.0, 0.0});
        const double d = dsm(th, src);
        t.add({src.node, fmt(th.G), fmt(th.B), fmt(th.Gp), fmt(th.Bp), fmt(src.k_f), fmt(src.k_v), fmt(d)});
        arr.push_back({{"node", src.node}, {"G", th.G}, {"B", th.B}, {"Gp", th.Gp}, {"Bp", th.Bp}, {"dsm", d}});
    }
    auto j = run_header(s, "dsm");
    j["sources"] = sources_json(sources);
    j["dsm"] = arr;
    s.write("run.json", dump(j));
    s.write_table("dsm", t);
    return 0;
}

int cmd_stabilize(const Session& s) {
    const auto g = s.grid();
    const auto sources = s.fleet(g);
    const auto vsgs = vsg_nodes_of(sources);
    const auto participants = s.cfg.participants ? *s.cfg.participants : vsgs;
    for (const auto& p : participants)
        if (std::find(vsgs.begin(), vsgs.end(), p) == vsgs.end())
            throw SchemaError("field /storage/participants: '" + p + "' hosts no VSG");
    const auto r = stabilization_study(g, sources, participants, s.cfg.storage);
    auto j = run_header(s, "stabilize");
    j["sources"] = sources_json(sources);
    j["participants"] = participants;
    j["rounds_used"] = r.rounds_used;
    j["before"] = to_json(r.before);
    j["after"] = to_json(r.after);
    j["dsm"] = ordered_json::array();
    for (const auto& d : r.reports) j["dsm"].push_back(to_json(d));
    s.write("run.json", dump(j));
    s.write_table("dsm", dsm_table(r.reports));
    Table t{{"zeta_before", "zeta_after", "stable_before", "stable_after", "participants", "rounds_used"}, {}};
    t.add({fmt(r.before.zeta), fmt(r.after.zeta), r.before.stable ? "1" : "0", r.after.stable ? "1" : "0",
           fmt(participants.size()), fmt(static_cast<std::size_t>(r.rounds_used))});
    s.write_table("stabilize", t);
    std::cerr << "zeta " << format_number(r.before.zeta) << " -> " << format_number(r.after.zeta) << "\n";
    return 0;
}

std::size_t count_failed(const std::vector<RunRecord>& recs) {
    std::size_t n = 0;
    for (const auto& r : recs) n += !r.ok;
    return n;
}

void report_failures(const std::vector<RunRecord>& recs) {
    std::cerr << recs.size() << " runs, " << count_failed(recs) << " failed\n";
}

int cmd_sweep_heatmap(const Session& s) {
    const auto g = s.grid();
    const auto r = heatmap_sweep(s.study(g), s.cfg.sweep);
    s.write("runs.json", records_json(r.records));
    s.write_table("heatmap", heatmap_table(r));
    report_failures(r.records);
    return 0;
}

int cmd_sweep_placement(const Session& s) {
    const auto g = s.grid();
    const auto ctx = s.study(g);
    const auto& sp = s.cfg.sweep;
    std::vector<RunRecord> all;
    Table t{{"h_total", "snsp", "n_inv", "n_ok", "n_failed", "q1", "median", "q3", "mean"}, {}};
    for (double h : sp.h_grid)
        for (double snsp : sp.snsp_grid)
            for (auto n : sp.n_inv_grid) {
                auto d = placement_distribution(ctx, snsp, n, h, sp.n_trials, sp.base_seed);
                for (auto& row : distribution_table(d, h, snsp, n).rows) t.add(row);
                for (auto& rec : d.records) all.push_back(std::move(rec));
            }
    s.write("runs.json", records_json(all));
    s.write_table("placement", t);
    report_failures(all);
    return 0;
}

int cmd_sweep_participation(const Session& s) {
    const auto g = s.grid();
    const auto& sc = s.cfg.scenario;
    const auto& sp = s.cfg.sweep;
    const auto r = participation_sweep(s.study(g), sc.snsp, sc.n_inv, sc.h_total, sp.participation, sp.L_v_options,
                                       sp.n_trials, sp.base_seed);
    s.write("runs.json", records_json(r.records));
    s.write_table("participation", participation_table(r));
    report_failures(r.records);
    return 0;
}

int cmd_intervene(const Session& s) {
    if (!s.cfg.intervention_node) throw SchemaError("field /intervention/node: missing");
    const auto g = s.grid();
    const auto sources = s.fleet(g);
    const auto& node = *s.cfg.intervention_node;
    if (!g.find(node)) throw SchemaError("field /intervention/node: unknown node '" + node + "'");
    for (const auto& src : sources)
        if (src.node == node) throw SchemaError("field /intervention/node: '" + node + "' already hosts a source");
    const auto r = intervention_study(g, sources, make_infinite_bus(*s.cfg.intervention_node, s.cfg.scenario.v0,
                                                                    s.cfg.scenario.f0));
    auto j = run_header(s, "intervene");
    j["sources"] = sources_json(sources);
    j["node"] = r.node;
    j["before"] = to_json(r.before);
    j["after"] = to_json(r.after);
    s.write("run.json", dump(j));
    Table t{{"node", "zeta_before", "zeta_after", "stable_before", "stable_after"}, {}};
    t.add({r.node, fmt(r.before.zeta), fmt(r.after.zeta), r.before.stable ? "1" : "0", r.after.stable ? "1" : "0"});
    s.write_table("intervene", t);
    return 0;
}

int cmd_simulate(const Session& s) {
    if (s.cfg.disturbance.node.empty()) throw SchemaError("field /disturbance/node: missing");
    const auto g = s.grid();
    const auto sources = s.fleet(g);
    const auto a = assess_full(g, sources, {}, {});
    const auto tr = simulate_step(g, sources, {}, a, s.cfg.disturbance);
    s.write("trace.csv", trace_csv(tr));

    std::string signal;
    if (s.cfg.prony_signal) {
        signal = *s.cfg.prony_signal;
    } else {
        for (const auto& src : sources)
            if (src.kind == SourceKind::virtual_sg) {
                signal = "dPf[" + src.node + "]";
                break;
            }
        if (signal.empty() && !tr.labels.empty()) signal = tr.labels[1 % tr.labels.size()];
    }
    Table t{{"signal", "zeta_prony", "zeta_eigen", "prony_real", "prony_imag", "fit_residual"}, {}};
    auto j = run_header(s, "simulate");
    j["sources"] = sources_json(sources);
    j["disturbance"] = {{"node", s.cfg.disturbance.node}, {"dP", s.cfg.disturbance.dP},
                        {"t_step", s.cfg.disturbance.t_step}, {"t_end", s.cfg.disturbance.t_end},
                        {"dt", s.cfg.disturbance.dt}};
    j["modes"] = to_json(a.modes);
    if (!signal.empty()) {
        const auto f = prony_analyze(tr, signal, s.cfg.disturbance.t_step, s.cfg.prony);
        t.add({signal, fmt(f.zeta), fmt(a.modes.zeta), fmt(f.dominant.real()), fmt(f.dominant.imag()),
               fmt(f.residual)});
        j["prony"] = {{"signal", signal}, {"zeta", f.zeta}, {"dominant", {f.dominant.real(), f.dominant.imag()}},
                      {"residual", f.residual}};
    }
    s.write("run.json", dump(j));
    s.write_table("prony", t);
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Small-signal stability and stability storage for grids with virtual synchronous generators"};
    app.require_subcommand(1);
    app.fallthrough();
    Options opt;
    std::uint64_t seed = 0;
    app.add_option("--config", opt.config, "JSON run configuration")->check(CLI::ExistingFile);
    auto* seed_opt = app.add_option("--seed", seed, "Override scenario and sweep seeds");
    app.add_option("--out", opt.out, "Output directory")->capture_default_str();
    app.add_option("--jobs", opt.jobs, "Worker threads for sweeps")->check(CLI::Range(1u, 1024u))->capture_default_str();
    app.add_option("--format", opt.format, "Aggregated table format")
        ->check(CLI::IsMember({"csv", "json"}))
        ->capture_default_str();

    const std::vector<std::pair<std::string, std::string>> commands = {
        {"gen-grid", "Write the configured grid (file or synthetic) as JSON"},
        {"assess", "Damping ratio of the dominant mode"},
        {"modes", "Full eigenvalue list"},
        {"dsm", "Thevenin admittance and stability metric per VSG"},
        {"stabilize", "Run the stability-storage loop on the participants"},
        {"sweep-heatmap", "Mean damping over an (SNSP, N) grid of seeded placements"},
        {"sweep-placement", "Damping distributions (quartiles) per scenario"},
        {"sweep-participation", "Damping before/after fixed virtual impedance by participation"},
        {"intervene", "Add an infinite bus and reassess"},
        {"simulate", "Load-step response and Prony damping estimate"},
    };
    for (const auto& [name, help] : commands) app.add_subcommand(name, help);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e);
    }
    if (seed_opt->count() > 0) opt.seed = seed;

    const std::string command = app.get_subcommands().front()->get_name();
    try {
        Session s;
        s.opt = opt;
        if (!opt.config.empty()) {
            s.cfg = load_config(opt.config);
            s.config_dir = fs::path(opt.config).parent_path().string();
        }
        if (opt.seed) {
            s.cfg.scenario.rng_seed = *opt.seed;
            s.cfg.sweep.base_seed = *opt.seed;
        }
        if (command == "gen-grid") return cmd_gen_grid(s);
        if (command == "assess") return cmd_assess(s, false);
        if (command == "modes") return cmd_assess(s, true);
        if (command == "dsm") return cmd_dsm(s);
        if (command == "stabilize") return cmd_stabilize(s);
        if (command == "sweep-heatmap") return cmd_sweep_heatmap(s);
        if (command == "sweep-placement") return cmd_sweep_placement(s);
        if (command == "sweep-participation") return cmd_sweep_participation(s);
        if (command == "intervene") return cmd_intervene(s);
        if (command == "simulate") return cmd_simulate(s);
    } catch (const SchemaError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const ValidationError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const GenerationError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const AllocationError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitNumeric;
    } catch (const fs::filesystem_error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitConfig;
    }
    return kExitConfig;
}
