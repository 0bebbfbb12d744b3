#pragma once

// Run configuration: one JSON document shared by every CLI subcommand.
//
// {
//   "grid":         {"file": "grid.json"}  or  {"synthetic": {"seed": 1, "n_substations": 9, ...}},
//   "siting":       {"exclude_substations": true, "allow_load_colocation": true},
//   "scenario":     {"snsp": 0.5, "n_inv": 10, "h_total": 4, "s_total": 1, "r0": 3, "t_c": .., "seed": 1},
//   "sources":      [{"node": "sub01", "kind": "rotating", "capacity": 0.5, "inertia": 4}, ...],
//   "sweep":        {"snsp_grid": [..], "n_inv_grid": [..], "h_grid": [..], "n_trials": 100,
//                    "base_seed": 1, "participation": [..], "L_v_options": [..]},
//   "storage":      {"damping_trigger": 0, "dsm_target": 0.001, "dL": 2e-4, "L_max": 0.02,
//                    "kappa": 1, "rounds": 1, "participants": "all" | ["node", ..]},
//   "intervention": {"node": "jn0003"},
//   "disturbance":  {"node": "ld0001", "dP": 0.01, "t_step": 0.2, "t_end": 3, "dt": 0.001},
//   "prony":        {"model_order": 6, "window": 0, "skip": 0, "samples": 240, "fit_tolerance": 0.05,
//                    "signal": "dPf[jn0003]"}
// }
//
// Every section is optional. Unknown keys are rejected. An explicit "sources"
// list replaces the seeded allocation; missing inertia constants are then
// shared out from the listed capacities and scenario.h_total.

#include <cstdint>
#include <optional>
#include <set>
#include <string>
#include <variant>
#include <vector>

#include "json.hpp"
#include "stabstore/errors.hpp"
#include "stabstore/grid.hpp"
#include "stabstore/harness.hpp"
#include "stabstore/scenario.hpp"
#include "stabstore/storage.hpp"
#include "stabstore/time_domain.hpp"

namespace stabstore {

struct SourceSpec {
    std::string node;
    SourceKind kind = SourceKind::virtual_sg;
    double capacity = 0.0;
    std::optional<double> inertia;
};

struct RunConfig {
    std::optional<std::string> grid_file;
    SynthOptions synthetic;
    SitingOptions siting;
    ScenarioConfig scenario;
    std::vector<SourceSpec> sources;
    SweepSpec sweep;
    StorageControllerConfig storage;
    std::optional<std::vector<std::string>> participants;  // empty optional = every VSG
    std::optional<std::string> intervention_node;
    DisturbanceSpec disturbance;
    PronyConfig prony;
    std::optional<std::string> prony_signal;
};

namespace detail {

inline void known_keys(const json& obj, const std::string& path, std::initializer_list<const char*> keys) {
    if (!obj.is_object()) throw SchemaError("field " + path + ": expected an object");
    const std::set<std::string> allowed(keys.begin(), keys.end());
    for (const auto& [k, v] : obj.items())
        if (!allowed.count(k)) throw SchemaError("field " + path + "/" + k + ": unknown key");
}

template <class T>
void opt_number(const json& obj, const char* key, const std::string& path, T& out) {
    if (!obj.contains(key)) return;
    const auto& v = obj.at(key);
    if constexpr (std::is_integral_v<T>) {
        const bool ok = std::is_unsigned_v<T> ? v.is_number_unsigned() : v.is_number_integer();
        if (!ok) throw SchemaError("field " + path + "/" + key + ": expected an integer");
        out = v.get<T>();
    } else {
        if (!v.is_number()) throw SchemaError("field " + path + "/" + key + ": expected a number");
        out = v.get<T>();
    }
}

inline void opt_bool(const json& obj, const char* key, const std::string& path, bool& out) {
    if (!obj.contains(key)) return;
    if (!obj.at(key).is_boolean()) throw SchemaError("field " + path + "/" + key + ": expected a boolean");
    out = obj.at(key).get<bool>();
}

template <class T>
std::vector<T> number_list(const json& obj, const char* key, const std::string& path) {
    const auto& v = array_at(obj, key, path);
    std::vector<T> out;
    for (std::size_t i = 0; i < v.size(); ++i) {
        const auto p = path + "/" + key + "/" + std::to_string(i);
        if constexpr (std::is_integral_v<T>) {
            if (!v[i].is_number_unsigned()) throw SchemaError("field " + p + ": expected a non-negative integer");
        } else if (!v[i].is_number()) {
            throw SchemaError("field " + p + ": expected a number");
        }
        out.push_back(v[i].get<T>());
    }
    return out;
}

inline SourceKind source_kind(const std::string& s, const std::string& path) {
    if (s == "rotating") return SourceKind::rotating;
    if (s == "virtual") return SourceKind::virtual_sg;
    if (s == "infinite_bus") return SourceKind::infinite_bus;
    throw SchemaError("field " + path + ": unknown source kind '" + s + "'");
}

}  // namespace detail

inline RunConfig config_from_json(const nlohmann::json& doc) {
    using detail::json;
    RunConfig c;
    if (doc.is_null()) return c;
    detail::known_keys(doc, "", {"grid", "siting", "scenario", "sources", "sweep", "storage", "intervention",
                                 "disturbance", "prony"});

    if (doc.contains("grid")) {
        const auto& g = doc.at("grid");
        detail::known_keys(g, "/grid", {"file", "synthetic"});
        if (g.contains("file") == g.contains("synthetic"))
            throw SchemaError("field /grid: give exactly one of 'file' or 'synthetic'");
        if (g.contains("file")) c.grid_file = detail::string_at(g, "file", "/grid");
        if (g.contains("synthetic")) {
            const auto& s = g.at("synthetic");
            const std::string p = "/grid/synthetic";
            detail::known_keys(s, p, {"seed", "n_substations", "n_loads", "loading_factor", "load_power_factor"});
            detail::opt_number(s, "seed", p, c.synthetic.seed);
            detail::opt_number(s, "n_substations", p, c.synthetic.n_substations);
            detail::opt_number(s, "n_loads", p, c.synthetic.n_loads);
            detail::opt_number(s, "loading_factor", p, c.synthetic.loading_factor);
            detail::opt_number(s, "load_power_factor", p, c.synthetic.load_power_factor);
        }
    }
    if (doc.contains("siting")) {
        const auto& s = doc.at("siting");
        detail::known_keys(s, "/siting", {"exclude_substations", "allow_load_colocation"});
        detail::opt_bool(s, "exclude_substations", "/siting", c.siting.exclude_substations);
        detail::opt_bool(s, "allow_load_colocation", "/siting", c.siting.allow_load_colocation);
    }
    if (doc.contains("scenario")) {
        const auto& s = doc.at("scenario");
        const std::string p = "/scenario";
        detail::known_keys(s, p, {"snsp", "n_inv", "h_total", "s_total", "r0", "t_c", "seed", "f0", "v0"});
        detail::opt_number(s, "snsp", p, c.scenario.snsp);
        detail::opt_number(s, "n_inv", p, c.scenario.n_inv);
        detail::opt_number(s, "h_total", p, c.scenario.h_total);
        detail::opt_number(s, "s_total", p, c.scenario.s_total);
        detail::opt_number(s, "r0", p, c.scenario.r0);
        detail::opt_number(s, "t_c", p, c.scenario.t_c);
        detail::opt_number(s, "seed", p, c.scenario.rng_seed);
        detail::opt_number(s, "f0", p, c.scenario.f0);
        detail::opt_number(s, "v0", p, c.scenario.v0);
        if (!(c.scenario.snsp >= 0.0 && c.scenario.snsp <= 1.0)) throw SchemaError("field /scenario/snsp: outside [0, 1]");
        if (!(c.scenario.h_total > 0.0)) throw SchemaError("field /scenario/h_total: must be > 0");
        if (!(c.scenario.t_c > 0.0)) throw SchemaError("field /scenario/t_c: must be > 0");
        if (!(c.scenario.r0 >= 0.0)) throw SchemaError("field /scenario/r0: must be >= 0");
    }
    if (doc.contains("sources")) {
        const auto& arr = detail::array_at(doc, "sources", "");
        for (std::size_t i = 0; i < arr.size(); ++i) {
            const auto p = "/sources/" + std::to_string(i);
            detail::known_keys(arr[i], p, {"node", "kind", "capacity", "inertia"});
            SourceSpec s;
            s.node = detail::string_at(arr[i], "node", p);
            s.kind = detail::source_kind(detail::string_at(arr[i], "kind", p), p + "/kind");
            if (s.kind != SourceKind::infinite_bus) {
                s.capacity = detail::number_at(arr[i], "capacity", p);
                if (!(s.capacity > 0.0)) throw SchemaError("field " + p + "/capacity: must be > 0");
                if (arr[i].contains("inertia")) {
                    s.inertia = detail::number_at(arr[i], "inertia", p);
                    if (!(*s.inertia > 0.0)) throw SchemaError("field " + p + "/inertia: must be > 0");
                }
            }
            c.sources.push_back(std::move(s));
        }
    }
    if (doc.contains("sweep")) {
        const auto& s = doc.at("sweep");
        const std::string p = "/sweep";
        detail::known_keys(s, p, {"snsp_grid", "n_inv_grid", "h_grid", "n_trials", "base_seed", "participation",
                                  "L_v_options"});
        if (s.contains("snsp_grid")) c.sweep.snsp_grid = detail::number_list<double>(s, "snsp_grid", p);
        if (s.contains("n_inv_grid")) c.sweep.n_inv_grid = detail::number_list<std::size_t>(s, "n_inv_grid", p);
        if (s.contains("h_grid")) c.sweep.h_grid = detail::number_list<double>(s, "h_grid", p);
        if (s.contains("participation")) c.sweep.participation = detail::number_list<double>(s, "participation", p);
        if (s.contains("L_v_options")) c.sweep.L_v_options = detail::number_list<double>(s, "L_v_options", p);
        detail::opt_number(s, "n_trials", p, c.sweep.n_trials);
        detail::opt_number(s, "base_seed", p, c.sweep.base_seed);
        c.sweep.validate();
    }
    if (doc.contains("storage")) {
        const auto& s = doc.at("storage");
        const std::string p = "/storage";
        detail::known_keys(s, p, {"damping_trigger", "dsm_target", "dL", "L_max", "kappa", "rounds", "participants"});
        detail::opt_number(s, "damping_trigger", p, c.storage.damping_trigger);
        detail::opt_number(s, "dsm_target", p, c.storage.dsm_target);
        detail::opt_number(s, "dL", p, c.storage.dL);
        detail::opt_number(s, "L_max", p, c.storage.L_max);
        detail::opt_number(s, "kappa", p, c.storage.kappa);
        detail::opt_number(s, "rounds", p, c.storage.rounds);
        if (s.contains("participants")) {
            const auto& v = s.at("participants");
            if (v.is_string() && v.get<std::string>() == "all") {
                c.participants.reset();
            } else if (v.is_array()) {
                std::vector<std::string> list;
                for (std::size_t i = 0; i < v.size(); ++i) {
                    if (!v[i].is_string())
                        throw SchemaError("field /storage/participants/" + std::to_string(i) + ": expected a string");
                    list.push_back(v[i].get<std::string>());
                }
                c.participants = std::move(list);
            } else {
                throw SchemaError("field /storage/participants: expected \"all\" or a list of node ids");
            }
        }
        try {
            c.storage.validate();
        } catch (const Error& e) {
            throw SchemaError(std::string("field /storage: ") + e.what());
        }
    }
    if (doc.contains("intervention")) {
        const auto& s = doc.at("intervention");
        detail::known_keys(s, "/intervention", {"node"});
        c.intervention_node = detail::string_at(s, "node", "/intervention");
    }
    if (doc.contains("disturbance")) {
        const auto& s = doc.at("disturbance");
        const std::string p = "/disturbance";
        detail::known_keys(s, p, {"node", "dP", "t_step", "t_end", "dt"});
        if (s.contains("node")) c.disturbance.node = detail::string_at(s, "node", p);
        detail::opt_number(s, "dP", p, c.disturbance.dP);
        detail::opt_number(s, "t_step", p, c.disturbance.t_step);
        detail::opt_number(s, "t_end", p, c.disturbance.t_end);
        detail::opt_number(s, "dt", p, c.disturbance.dt);
        try {
            c.disturbance.validate();
        } catch (const Error& e) {
            throw SchemaError(std::string("field /disturbance: ") + e.what());
        }
    }
    if (doc.contains("prony")) {
        const auto& s = doc.at("prony");
        const std::string p = "/prony";
        detail::known_keys(s, p, {"model_order", "window", "skip", "samples", "fit_tolerance", "signal"});
        detail::opt_number(s, "model_order", p, c.prony.model_order);
        detail::opt_number(s, "window", p, c.prony.window);
        detail::opt_number(s, "skip", p, c.prony.skip);
        detail::opt_number(s, "samples", p, c.prony.samples);
        detail::opt_number(s, "fit_tolerance", p, c.prony.fit_tolerance);
        if (s.contains("signal")) c.prony_signal = detail::string_at(s, "signal", p);
        try {
            c.prony.validate();
        } catch (const Error& e) {
            throw SchemaError(std::string("field /prony: ") + e.what());
        }
    }
    return c;
}

inline RunConfig parse_config(std::string_view text) { return config_from_json(detail::parse_document(text)); }

inline RunConfig load_config(const std::string& path) { return parse_config(detail::read_file(path)); }

/// Grid named by the config: a file (relative paths resolve against
/// `base_dir`) or the synthetic generator.
inline GridGraph resolve_grid(const RunConfig& c, const std::string& base_dir = "") {
    if (!c.grid_file) return synth_topology(c.synthetic);
    std::string path = *c.grid_file;
    if (!base_dir.empty() && !path.empty() && path.front() != '/') path = base_dir + "/" + path;
    return load_grid(path);
}

/// Explicit fleet from the "sources" list. Inertia constants not given are
/// shared out over the finite sources' capacities.
inline std::vector<SourceParams> resolve_sources(const RunConfig& c) {
    const auto& sc = c.scenario;
    std::vector<double> caps;
    bool need_allocation = false;
    for (const auto& s : c.sources) {
        if (s.kind == SourceKind::infinite_bus) continue;
        caps.push_back(s.capacity);
        need_allocation |= !s.inertia.has_value();
    }
    std::vector<double> h;
    if (need_allocation && !caps.empty()) h = inertia_allocation(caps, sc.h_total);
    std::vector<SourceParams> out;
    std::size_t k = 0;
    for (const auto& s : c.sources) {
        if (s.kind == SourceKind::infinite_bus) {
            out.push_back(make_infinite_bus(s.node, sc.v0, sc.f0));
            continue;
        }
        const double inertia = s.inertia ? *s.inertia : h[k];
        out.push_back(make_droop_source(s.node, s.kind, s.capacity, inertia, sc.t_c, sc.r0, sc.f0, sc.v0));
        ++k;
    }
    return out;
}

}  // namespace stabstore
