#pragma once

// Tiered radial distribution network: data model, validation, the JSON grid
// schema, and a seeded synthetic generator.

#include <algorithm>
#include <array>
#include <cmath>
#include <complex>
#include <cstdint>
#include <fstream>
#include <map>
#include <numeric>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "json.hpp"
#include "stabstore/errors.hpp"
#include "stabstore/random.hpp"

namespace stabstore {

using Complex = std::complex<double>;

inline constexpr int kTierCount = 8;

struct TierSpec {
    int tier = 0;
    double r_per_km = 0.0;      // ohm/km
    double x_per_km = 0.0;      // ohm/km at f0
    double voltage_base = 0.0;  // line-to-line V

    bool operator==(const TierSpec&) const = default;
};

enum class NodeKind { substation, junction, load };

inline std::string_view to_string(NodeKind k) {
    switch (k) {
        case NodeKind::substation: return "substation";
        case NodeKind::junction: return "junction";
        case NodeKind::load: return "load";
    }
    return "?";
}

struct Node {
    std::string id;
    NodeKind kind = NodeKind::junction;
    Complex demand{0.0, 0.0};  // per-unit on the system base, loads only

    bool operator==(const Node&) const = default;
};

struct Branch {
    std::string from;
    std::string to;
    int tier = 0;
    double length_km = 0.0;
    Complex impedance{0.0, 0.0};  // ohm at f0
    // True when the impedance came from the document rather than the tier table.
    bool explicit_impedance = false;

    bool operator==(const Branch&) const = default;
};

/// 132/33/11 kV distribution ladder: R/X rises from 0.2 on Tier-0 feeders to
/// about 6 on Tier-7 service lines. Grids can carry their own table.
inline std::vector<TierSpec> default_tier_table() {
    return {
        {0, 0.06, 0.30, 132e3},
        {1, 0.10, 0.30, 132e3},
        {2, 0.15, 0.30, 132e3},
        {3, 0.25, 0.30, 33e3},
        {4, 0.30, 0.25, 33e3},
        {5, 0.35, 0.20, 11e3},
        {6, 0.40, 0.10, 11e3},
        {7, 0.50, 0.08, 11e3},
    };
}

/// Validated, immutable network. Construction checks every structural
/// invariant and throws ValidationError naming the offending item.
class GridGraph {
public:
    GridGraph(std::vector<TierSpec> tiers, std::vector<Node> nodes, std::vector<Branch> branches,
              double f0 = 50.0, double s_base = 10e9)
        : tiers_(std::move(tiers)),
          nodes_(std::move(nodes)),
          branches_(std::move(branches)),
          f0_(f0),
          s_base_(s_base) {
        validate_tiers();
        validate_nodes();
        validate_branches();
        validate_topology();
    }

    const std::vector<TierSpec>& tiers() const noexcept { return tiers_; }
    const std::vector<Node>& nodes() const noexcept { return nodes_; }
    const std::vector<Branch>& branches() const noexcept { return branches_; }
    double f0() const noexcept { return f0_; }
    double omega0() const noexcept { return 2.0 * M_PI * f0_; }
    double s_base() const noexcept { return s_base_; }

    std::optional<std::size_t> find(std::string_view id) const {
        auto it = index_.find(std::string(id));
        if (it == index_.end()) return std::nullopt;
        return it->second;
    }

    std::size_t index_of(std::string_view id) const {
        if (auto i = find(id)) return *i;
        throw ValidationError("unknown node '" + std::string(id) + "'");
    }

    const Node& node(std::string_view id) const { return nodes_[index_of(id)]; }

    const TierSpec& tier(int t) const {
        for (const auto& spec : tiers_) {
            if (spec.tier == t) return spec;
        }
        throw ValidationError("tier " + std::to_string(t) + " missing from tier table");
    }

    /// Branch indices incident to each node.
    const std::vector<std::vector<std::size_t>>& incidence() const noexcept { return incident_; }

    std::size_t branch_from(std::size_t b) const noexcept { return ends_[b].first; }
    std::size_t branch_to(std::size_t b) const noexcept { return ends_[b].second; }

    /// Lowest tier index among incident branches, i.e. the node's feeder level.
    int node_tier(std::size_t i) const {
        int t = kTierCount;
        for (auto b : incident_[i]) t = std::min(t, branches_[b].tier);
        return t == kTierCount ? 0 : t;
    }

    /// Base voltage for converting physical quantities at this node to per unit.
    double node_voltage_base(std::size_t i) const { return tier(node_tier(i)).voltage_base; }

    double node_impedance_base(std::size_t i) const {
        const double v = node_voltage_base(i);
        return v * v / s_base_;
    }

    double branch_impedance_base(std::size_t b) const {
        const double v = tier(branches_[b].tier).voltage_base;
        return v * v / s_base_;
    }

    /// Substation-to-substation branches interconnect subnetworks.
    bool is_tie(std::size_t b) const {
        return nodes_[ends_[b].first].kind == NodeKind::substation &&
               nodes_[ends_[b].second].kind == NodeKind::substation;
    }

    /// Node indices of the substations, in document order.
    const std::vector<std::size_t>& substations() const noexcept { return substations_; }

    /// Position within substations() of the subnetwork that holds node i.
    std::size_t subnetwork_of(std::size_t i) const noexcept { return subnet_[i]; }

    /// Number of load nodes in each subnetwork.
    std::vector<std::size_t> loads_per_subnetwork() const {
        std::vector<std::size_t> counts(substations_.size(), 0);
        for (std::size_t i = 0; i < nodes_.size(); ++i) {
            if (nodes_[i].kind == NodeKind::load) ++counts[subnet_[i]];
        }
        return counts;
    }

    bool operator==(const GridGraph& o) const {
        return tiers_ == o.tiers_ && nodes_ == o.nodes_ && branches_ == o.branches_ &&
               f0_ == o.f0_ && s_base_ == o.s_base_;
    }

private:
    struct DisjointSet {
        std::vector<std::size_t> parent;
        explicit DisjointSet(std::size_t n) : parent(n) {
            std::iota(parent.begin(), parent.end(), std::size_t{0});
        }
        std::size_t find(std::size_t x) {
            while (parent[x] != x) x = parent[x] = parent[parent[x]];
            return x;
        }
        bool unite(std::size_t a, std::size_t b) {
            a = find(a);
            b = find(b);
            if (a == b) return false;
            parent[b] = a;
            return true;
        }
    };

    void validate_tiers() {
        if (tiers_.empty()) throw ValidationError("tier table is empty");
        std::sort(tiers_.begin(), tiers_.end(),
                  [](const TierSpec& a, const TierSpec& b) { return a.tier < b.tier; });
        for (std::size_t k = 0; k < tiers_.size(); ++k) {
            const auto& t = tiers_[k];
            const auto name = "tier " + std::to_string(t.tier);
            if (t.tier < 0 || t.tier >= kTierCount) throw ValidationError(name + ": index outside 0..7");
            if (k > 0 && tiers_[k - 1].tier == t.tier) throw ValidationError(name + ": duplicated");
            if (!(t.r_per_km > 0.0)) throw ValidationError(name + ": r_per_km must be > 0");
            if (!(t.x_per_km > 0.0)) throw ValidationError(name + ": x_per_km must be > 0");
            if (!(t.voltage_base > 0.0)) throw ValidationError(name + ": voltage_base must be > 0");
            if (k > 0 && t.voltage_base > tiers_[k - 1].voltage_base)
                throw ValidationError(name + ": voltage_base increases with tier index");
        }
        if (!(f0_ > 0.0)) throw ValidationError("f0 must be > 0");
        if (!(s_base_ > 0.0)) throw ValidationError("s_base must be > 0");
    }

    void validate_nodes() {
        for (std::size_t i = 0; i < nodes_.size(); ++i) {
            const auto& n = nodes_[i];
            if (n.id.empty()) throw ValidationError("node " + std::to_string(i) + " has empty id");
            if (!index_.emplace(n.id, i).second) throw ValidationError("duplicate node id '" + n.id + "'");
            if (n.kind != NodeKind::load && n.demand != Complex{})
                throw ValidationError("node '" + n.id + "': demand on a non-load node");
            if (n.demand.real() < 0.0)
                throw ValidationError("node '" + n.id + "': negative real demand");
            if (n.kind == NodeKind::substation) substations_.push_back(i);
        }
        if (substations_.empty()) throw ValidationError("grid has no substation");
    }

    void validate_branches() {
        incident_.assign(nodes_.size(), {});
        ends_.reserve(branches_.size());
        for (std::size_t b = 0; b < branches_.size(); ++b) {
            auto& br = branches_[b];
            const auto name = "branch " + br.from + "-" + br.to;
            auto f = find(br.from);
            auto t = find(br.to);
            if (!f) throw ValidationError(name + ": unknown node '" + br.from + "'");
            if (!t) throw ValidationError(name + ": unknown node '" + br.to + "'");
            if (*f == *t) throw ValidationError(name + ": from == to");
            const auto& spec = tier(br.tier);
            if (!br.explicit_impedance) {
                if (!(br.length_km > 0.0)) throw ValidationError(name + ": length must be > 0");
                br.impedance = br.length_km * Complex(spec.r_per_km, spec.x_per_km);
            } else if (br.length_km < 0.0) {
                throw ValidationError(name + ": negative length");
            }
            if (!(br.impedance.real() > 0.0) || !(br.impedance.imag() > 0.0))
                throw ValidationError(name + ": impedance needs Re > 0 and Im > 0");
            ends_.emplace_back(*f, *t);
            incident_[*f].push_back(b);
            incident_[*t].push_back(b);
        }
    }

    void validate_topology() {
        const std::size_t n = nodes_.size();
        DisjointSet trees(n);
        for (std::size_t b = 0; b < branches_.size(); ++b) {
            if (is_tie(b)) continue;
            if (!trees.unite(ends_[b].first, ends_[b].second)) {
                throw ValidationError("cycle detected at branch " + branches_[b].from + "-" +
                                      branches_[b].to);
            }
        }
        std::map<std::size_t, std::size_t> root_to_subnet;
        for (std::size_t k = 0; k < substations_.size(); ++k) {
            auto r = trees.find(substations_[k]);
            if (!root_to_subnet.emplace(r, k).second) {
                throw ValidationError("substations '" + nodes_[substations_[root_to_subnet[r]]].id +
                                      "' and '" + nodes_[substations_[k]].id +
                                      "' share one subnetwork");
            }
        }
        subnet_.assign(n, 0);
        for (std::size_t i = 0; i < n; ++i) {
            auto it = root_to_subnet.find(trees.find(i));
            if (it == root_to_subnet.end())
                throw ValidationError("node '" + nodes_[i].id + "' is not reachable from a substation");
            subnet_[i] = it->second;
        }
        DisjointSet all(n);
        for (std::size_t b = 0; b < branches_.size(); ++b) all.unite(ends_[b].first, ends_[b].second);
        for (std::size_t i = 1; i < n; ++i) {
            if (all.find(i) != all.find(0))
                throw ValidationError("grid is not connected (node '" + nodes_[i].id + "')");
        }
    }

    std::vector<TierSpec> tiers_;
    std::vector<Node> nodes_;
    std::vector<Branch> branches_;
    double f0_;
    double s_base_;
    std::map<std::string, std::size_t, std::less<>> index_;
    std::vector<std::vector<std::size_t>> incident_;
    std::vector<std::pair<std::size_t, std::size_t>> ends_;
    std::vector<std::size_t> substations_;
    std::vector<std::size_t> subnet_;
};

// ---------------------------------------------------------------------------
// Grid schema (JSON)
//
// {
//   "bases":    {"f0_hz": 50, "s_base_va": 1e10},
//   "tiers":    [{"tier": 0, "r_ohm_per_km": .., "x_ohm_per_km": .., "voltage_base_v": ..}],
//   "nodes":    [{"id": "sub01", "kind": "substation"},
//                {"id": "ld0001", "kind": "load", "demand_pu": {"p": .., "q": ..}}],
//   "branches": [{"from": "a", "to": "b", "tier": 7, "length_km": 0.4,
//                 "impedance_ohm": {"r": .., "x": ..}}]     // impedance_ohm optional
// }
// ---------------------------------------------------------------------------

namespace detail {

using json = nlohmann::json;

inline const json& require(const json& obj, const std::string& key, const std::string& path) {
    if (!obj.is_object()) throw SchemaError("field " + path + ": expected an object");
    auto it = obj.find(key);
    if (it == obj.end()) throw SchemaError("field " + path + "/" + key + ": missing");
    return *it;
}

inline double number_at(const json& obj, const std::string& key, const std::string& path) {
    const auto& v = require(obj, key, path);
    if (!v.is_number()) throw SchemaError("field " + path + "/" + key + ": expected a number");
    return v.get<double>();
}

inline std::string string_at(const json& obj, const std::string& key, const std::string& path) {
    const auto& v = require(obj, key, path);
    if (!v.is_string()) throw SchemaError("field " + path + "/" + key + ": expected a string");
    return v.get<std::string>();
}

inline int int_at(const json& obj, const std::string& key, const std::string& path) {
    const auto& v = require(obj, key, path);
    if (!v.is_number_integer()) throw SchemaError("field " + path + "/" + key + ": expected an integer");
    return v.get<int>();
}

inline const json& array_at(const json& obj, const std::string& key, const std::string& path) {
    const auto& v = require(obj, key, path);
    if (!v.is_array()) throw SchemaError("field " + path + "/" + key + ": expected an array");
    return v;
}

inline json parse_document(std::string_view text) {
    try {
        return json::parse(text.begin(), text.end());
    } catch (const json::parse_error& e) {
        std::size_t line = 1;
        const std::size_t upto = std::min<std::size_t>(e.byte, text.size());
        for (std::size_t i = 0; i + 1 < upto; ++i) line += text[i] == '\n';
        throw SchemaError("parse error at line " + std::to_string(line) + ": " + e.what());
    }
}

inline std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw SchemaError("cannot open '" + path + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

}  // namespace detail

inline GridGraph grid_from_json(const nlohmann::json& doc) {
    using namespace detail;
    const auto& bases = require(doc, "bases", "");
    const double f0 = number_at(bases, "f0_hz", "/bases");
    const double s_base = number_at(bases, "s_base_va", "/bases");

    std::vector<TierSpec> tiers;
    const auto& jt = array_at(doc, "tiers", "");
    for (std::size_t k = 0; k < jt.size(); ++k) {
        const auto p = "/tiers/" + std::to_string(k);
        tiers.push_back({int_at(jt[k], "tier", p), number_at(jt[k], "r_ohm_per_km", p),
                         number_at(jt[k], "x_ohm_per_km", p), number_at(jt[k], "voltage_base_v", p)});
    }

    std::vector<Node> nodes;
    const auto& jn = array_at(doc, "nodes", "");
    for (std::size_t k = 0; k < jn.size(); ++k) {
        const auto p = "/nodes/" + std::to_string(k);
        Node n;
        n.id = string_at(jn[k], "id", p);
        const auto kind = string_at(jn[k], "kind", p);
        if (kind == "substation") n.kind = NodeKind::substation;
        else if (kind == "junction") n.kind = NodeKind::junction;
        else if (kind == "load") n.kind = NodeKind::load;
        else throw SchemaError("field " + p + "/kind: unknown kind '" + kind + "'");
        if (jn[k].contains("demand_pu")) {
            const auto& d = jn[k]["demand_pu"];
            n.demand = {number_at(d, "p", p + "/demand_pu"), number_at(d, "q", p + "/demand_pu")};
        }
        nodes.push_back(std::move(n));
    }

    std::vector<Branch> branches;
    const auto& jb = array_at(doc, "branches", "");
    for (std::size_t k = 0; k < jb.size(); ++k) {
        const auto p = "/branches/" + std::to_string(k);
        Branch b;
        b.from = string_at(jb[k], "from", p);
        b.to = string_at(jb[k], "to", p);
        b.tier = int_at(jb[k], "tier", p);
        if (jb[k].contains("length_km")) b.length_km = number_at(jb[k], "length_km", p);
        if (jb[k].contains("impedance_ohm")) {
            const auto& z = jb[k]["impedance_ohm"];
            b.impedance = {number_at(z, "r", p + "/impedance_ohm"), number_at(z, "x", p + "/impedance_ohm")};
            b.explicit_impedance = true;
        } else if (!jb[k].contains("length_km")) {
            throw SchemaError("field " + p + ": needs length_km or impedance_ohm");
        }
        branches.push_back(std::move(b));
    }
    return GridGraph(std::move(tiers), std::move(nodes), std::move(branches), f0, s_base);
}

inline nlohmann::ordered_json grid_to_json(const GridGraph& g) {
    nlohmann::ordered_json doc;
    doc["bases"] = {{"f0_hz", g.f0()}, {"s_base_va", g.s_base()}};
    auto& tiers = doc["tiers"] = nlohmann::ordered_json::array();
    for (const auto& t : g.tiers()) {
        tiers.push_back({{"tier", t.tier},
                         {"r_ohm_per_km", t.r_per_km},
                         {"x_ohm_per_km", t.x_per_km},
                         {"voltage_base_v", t.voltage_base}});
    }
    auto& nodes = doc["nodes"] = nlohmann::ordered_json::array();
    for (const auto& n : g.nodes()) {
        nlohmann::ordered_json j = {{"id", n.id}, {"kind", std::string(to_string(n.kind))}};
        if (n.kind == NodeKind::load) j["demand_pu"] = {{"p", n.demand.real()}, {"q", n.demand.imag()}};
        nodes.push_back(std::move(j));
    }
    auto& branches = doc["branches"] = nlohmann::ordered_json::array();
    for (const auto& b : g.branches()) {
        nlohmann::ordered_json j = {{"from", b.from}, {"to", b.to}, {"tier", b.tier}, {"length_km", b.length_km}};
        if (b.explicit_impedance) j["impedance_ohm"] = {{"r", b.impedance.real()}, {"x", b.impedance.imag()}};
        branches.push_back(std::move(j));
    }
    return doc;
}

inline GridGraph parse_grid(std::string_view text) { return grid_from_json(detail::parse_document(text)); }

inline std::string serialize_grid(const GridGraph& g) { return grid_to_json(g).dump(2) + "\n"; }

inline GridGraph load_grid(const std::string& path) { return parse_grid(detail::read_file(path)); }

inline void save_grid(const GridGraph& g, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw SchemaError("cannot write '" + path + "'");
    out << serialize_grid(g);
}

// ---------------------------------------------------------------------------
// Synthetic topology
// ---------------------------------------------------------------------------

struct SynthOptions {
    std::uint64_t seed = 1;
    std::size_t n_substations = 9;
    std::size_t n_loads = 200;
    std::vector<TierSpec> tier_table = default_tier_table();
    // fanout_profile[t], t < 7: Tier-t children of each skeleton node one level
    // up (the substation for t = 0); 0 ends the skeleton. fanout_profile[7]:
    // load capacity of each skeleton leaf, attached through Tier-7 lines.
    std::array<int, kTierCount> fanout_profile{3, 2, 2, 1, 0, 0, 0, 4};
    std::array<std::pair<double, double>, kTierCount> length_km{{
        {2.0, 6.0}, {1.0, 4.0}, {0.5, 2.0}, {0.5, 1.5},
        {0.3, 1.2}, {0.3, 1.0}, {0.2, 0.8}, {0.05, 0.4},
    }};
    std::pair<double, double> tie_length_km{8.0, 20.0};
    double loading_factor = 0.8;
    double load_power_factor = 1.0;
    double f0 = 50.0;
    double s_base = 10e9;
};

namespace detail {

inline std::string padded(std::string_view prefix, std::size_t k, std::size_t width) {
    auto s = std::to_string(k);
    if (s.size() < width) s.insert(0, width - s.size(), '0');
    return std::string(prefix) + s;
}

}  // namespace detail

/// Forest of tiered trees rooted at substations, substations tied into a
/// ring by Tier-0 lines. Deterministic for a fixed seed.
inline GridGraph synth_topology(const SynthOptions& opt) {
    if (opt.n_substations < 1) throw GenerationError("need at least one substation");
    if (opt.n_loads < opt.n_substations) throw GenerationError("need n_loads >= n_substations");
    if (opt.fanout_profile[0] < 1) throw GenerationError("fanout_profile[0] must be >= 1");
    if (opt.fanout_profile[7] < 1) throw GenerationError("fanout_profile[7] must be >= 1");

    // Skeleton shape, identical for every subnetwork.
    struct Slot {
        int parent;  // -1 = substation
        int tier;
    };
    std::vector<Slot> skeleton;
    std::vector<int> frontier{-1};
    for (int t = 0; t < kTierCount - 1 && opt.fanout_profile[t] > 0; ++t) {
        std::vector<int> next;
        for (int p : frontier) {
            for (int c = 0; c < opt.fanout_profile[t]; ++c) {
                skeleton.push_back({p, t});
                next.push_back(static_cast<int>(skeleton.size()) - 1);
            }
        }
        frontier = std::move(next);
    }
    const std::vector<int> leaves = frontier;
    const auto per_leaf = static_cast<std::size_t>(opt.fanout_profile[7]);
    const std::size_t capacity = leaves.size() * per_leaf;
    if (capacity * opt.n_substations < opt.n_loads) {
        throw GenerationError("fanout profile places at most " +
                              std::to_string(capacity * opt.n_substations) + " loads, need " +
                              std::to_string(opt.n_loads));
    }

    Rng rng(opt.seed);
    // Loads per (substation, leaf); every substation gets at least one.
    std::vector<std::vector<std::size_t>> used(opt.n_substations, std::vector<std::size_t>(leaves.size(), 0));
    std::vector<std::size_t> sub_used(opt.n_substations, 0);
    std::vector<std::pair<std::size_t, std::size_t>> placement;  // (substation, leaf) per load
    auto place = [&](std::size_t s) {
        std::vector<std::size_t> open;
        for (std::size_t l = 0; l < leaves.size(); ++l)
            if (used[s][l] < per_leaf) open.push_back(l);
        const auto l = open[rng.below(open.size())];
        ++used[s][l];
        ++sub_used[s];
        placement.emplace_back(s, l);
    };
    for (std::size_t s = 0; s < opt.n_substations; ++s) place(s);
    for (std::size_t k = opt.n_substations; k < opt.n_loads; ++k) {
        std::vector<std::size_t> open;
        for (std::size_t s = 0; s < opt.n_substations; ++s)
            if (sub_used[s] < capacity) open.push_back(s);
        place(open[rng.below(open.size())]);
    }

    std::vector<Node> nodes;
    std::vector<Branch> branches;
    const std::size_t sub_width = std::max<std::size_t>(2, std::to_string(opt.n_substations).size());
    const std::size_t load_width = std::max<std::size_t>(4, std::to_string(opt.n_loads).size());
    const std::size_t jn_width =
        std::max<std::size_t>(4, std::to_string(skeleton.size() * opt.n_substations).size());
    for (std::size_t s = 0; s < opt.n_substations; ++s)
        nodes.push_back({detail::padded("sub", s + 1, sub_width), NodeKind::substation, {}});

    auto length = [&](int tier) {
        const auto [lo, hi] = opt.length_km[static_cast<std::size_t>(tier)];
        return rng.uniform(lo, hi);
    };

    // Skeleton slots are kept only when a load hangs below them.
    std::size_t junction_count = 0;
    std::vector<std::vector<std::string>> slot_id(opt.n_substations,
                                                  std::vector<std::string>(skeleton.size()));
    for (std::size_t s = 0; s < opt.n_substations; ++s) {
        std::vector<bool> live(skeleton.size(), false);
        for (std::size_t l = 0; l < leaves.size(); ++l) {
            if (used[s][l] == 0) continue;
            for (int v = leaves[l]; v >= 0; v = skeleton[static_cast<std::size_t>(v)].parent)
                live[static_cast<std::size_t>(v)] = true;
        }
        for (std::size_t v = 0; v < skeleton.size(); ++v) {
            if (!live[v]) continue;
            auto id = detail::padded("jn", ++junction_count, jn_width);
            const auto& parent = skeleton[v].parent < 0
                                     ? nodes[s].id
                                     : slot_id[s][static_cast<std::size_t>(skeleton[v].parent)];
            branches.push_back({parent, id, skeleton[v].tier, length(skeleton[v].tier), {}, false});
            nodes.push_back({id, NodeKind::junction, {}});
            slot_id[s][v] = std::move(id);
        }
    }

    const double p_each = opt.loading_factor / static_cast<double>(opt.n_loads);
    const double pf = std::clamp(opt.load_power_factor, 1e-6, 1.0);
    const double q_each = p_each * std::sqrt(1.0 / (pf * pf) - 1.0);
    for (std::size_t k = 0; k < placement.size(); ++k) {
        const auto [s, l] = placement[k];
        auto id = detail::padded("ld", k + 1, load_width);
        const auto& parent = slot_id[s][static_cast<std::size_t>(leaves[l])];
        branches.push_back({parent, id, 7, length(7), {}, false});
        nodes.push_back({std::move(id), NodeKind::load, {p_each, q_each}});
    }

    if (opt.n_substations >= 2) {
        const std::size_t ties = opt.n_substations == 2 ? 1 : opt.n_substations;
        for (std::size_t s = 0; s < ties; ++s) {
            const auto& a = nodes[s].id;
            const auto& b = nodes[(s + 1) % opt.n_substations].id;
            branches.push_back({a, b, 0, rng.uniform(opt.tie_length_km.first, opt.tie_length_km.second), {}, false});
        }
    }
    return GridGraph(opt.tier_table, std::move(nodes), std::move(branches), opt.f0, opt.s_base);
}

// ---------------------------------------------------------------------------
// Inverter siting
// ---------------------------------------------------------------------------

struct SitingOptions {
    bool exclude_substations = true;
    bool allow_load_colocation = true;
};

/// Nodes with at least one incident Tier-1 or Tier-2 branch, sorted by id.
inline std::vector<std::string> candidate_inverter_nodes(const GridGraph& g, const SitingOptions& opt = {}) {
    std::vector<std::string> out;
    for (std::size_t i = 0; i < g.nodes().size(); ++i) {
        const auto& n = g.nodes()[i];
        if (opt.exclude_substations && n.kind == NodeKind::substation) continue;
        if (!opt.allow_load_colocation && n.kind == NodeKind::load) continue;
        const auto& inc = g.incidence()[i];
        const bool hit = std::any_of(inc.begin(), inc.end(), [&](std::size_t b) {
            return g.branches()[b].tier == 1 || g.branches()[b].tier == 2;
        });
        if (hit) out.push_back(n.id);
    }
    std::sort(out.begin(), out.end());
    return out;
}

}  // namespace stabstore
