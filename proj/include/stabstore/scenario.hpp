#pragma once

// Scenario -> source fleet: capacity shares, inertia allocation and droop gains.

#include <Eigen/Dense>

#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>
#include <string>
#include <vector>

#include "stabstore/errors.hpp"
#include "stabstore/grid.hpp"
#include "stabstore/random.hpp"

namespace stabstore {

enum class SourceKind { rotating, virtual_sg, infinite_bus };

inline std::string_view to_string(SourceKind k) {
    switch (k) {
        case SourceKind::rotating: return "rotating";
        case SourceKind::virtual_sg: return "virtual";
        case SourceKind::infinite_bus: return "infinite_bus";
    }
    return "?";
}

/// One generator. Rotating machines and VSGs share the droop + power-filter
/// model; the swing-equation view is H = T_c / (2 k_f), D = 1 / k_f.
struct SourceParams {
    std::string node;
    SourceKind kind = SourceKind::virtual_sg;
    double capacity = 0.0;  // pu on system base
    double inertia = 0.0;   // s
    double damping = 0.0;   // pu, 1/k_f
    double k_f = 0.0;       // pu Hz / pu W
    double k_v = 0.0;       // pu V / pu VAR
    double t_c = 1.0 / (4.0 * std::numbers::pi);  // s
    double f0 = 50.0;
    double v0 = 1.0;

    bool finite_droop() const noexcept { return kind != SourceKind::infinite_bus; }
    double omega_c() const noexcept { return 1.0 / t_c; }

    bool operator==(const SourceParams&) const = default;
};

struct DroopGains {
    double k_f;
    double k_v;
};

inline DroopGains droop_gains(double inertia, double t_c, double r0) {
    if (!(inertia > 0.0) || !(t_c > 0.0)) throw AllocationError("droop_gains needs H > 0 and t_c > 0");
    const double k_f = t_c / (2.0 * inertia);
    return {k_f, r0 * k_f};
}

/// Source with droop gains derived from its inertia constant.
inline SourceParams make_droop_source(std::string node, SourceKind kind, double capacity, double inertia,
                                      double t_c, double r0, double f0 = 50.0, double v0 = 1.0) {
    const auto g = droop_gains(inertia, t_c, r0);
    SourceParams s;
    s.node = std::move(node);
    s.kind = kind;
    s.capacity = capacity;
    s.inertia = inertia;
    s.damping = 1.0 / g.k_f;
    s.k_f = g.k_f;
    s.k_v = g.k_v;
    s.t_c = t_c;
    s.f0 = f0;
    s.v0 = v0;
    return s;
}

/// Ideal source: zero droop, infinite inertia.
inline SourceParams make_infinite_bus(std::string node, double v0 = 1.0, double f0 = 50.0) {
    SourceParams s;
    s.node = std::move(node);
    s.kind = SourceKind::infinite_bus;
    s.inertia = std::numeric_limits<double>::infinity();
    s.damping = std::numeric_limits<double>::infinity();
    s.f0 = f0;
    s.v0 = v0;
    return s;
}

struct ScenarioConfig {
    double snsp = 0.5;
    std::size_t n_inv = 10;
    double h_total = 4.0;
    double s_total = 1.0;
    double s_demand = 0.8;
    double r0 = 3.0;
    double t_c = 1.0 / (4.0 * std::numbers::pi);
    std::uint64_t rng_seed = 1;
    std::vector<std::string> placement_pool;
    double f0 = 50.0;
    double v0 = 1.0;
};

struct AllocationResult {
    std::vector<SourceParams> sources;
    std::vector<double> beta;  // per substation, document order
    double achieved_snsp = 0.0;
};

/// Fraction of finite-droop capacity supplied by VSGs.
inline double snsp_of(const std::vector<SourceParams>& sources) {
    double virt = 0.0;
    double total = 0.0;
    bool any = false;
    for (const auto& s : sources) {
        if (!s.finite_droop()) continue;
        any = true;
        total += s.capacity;
        if (s.kind == SourceKind::virtual_sg) virt += s.capacity;
    }
    if (!any || total <= 0.0) throw AllocationError("snsp_of: empty fleet");
    return virt / total;
}

/// Capacities only (inertia and gains left zero). Rotating machines sit at
/// substations, VSGs are drawn without replacement from the placement pool.
inline AllocationResult capacity_shares(const GridGraph& g, const ScenarioConfig& cfg) {
    if (!(cfg.snsp >= 0.0 && cfg.snsp <= 1.0)) throw AllocationError("snsp outside [0, 1]");
    if (!(cfg.s_total > 0.0)) throw AllocationError("s_total must be > 0");
    const bool no_inverters = cfg.snsp == 0.0;
    const bool no_machines = cfg.snsp == 1.0;
    const std::size_t n_inv = no_inverters ? 0 : cfg.n_inv;
    if (n_inv == 0 && !no_inverters) throw AllocationError("snsp > 0 with no inverters");
    if (n_inv > cfg.placement_pool.size()) {
        throw AllocationError("cannot place " + std::to_string(n_inv) + " inverters in a pool of " +
                              std::to_string(cfg.placement_pool.size()));
    }

    AllocationResult out;
    const auto counts = g.loads_per_subnetwork();
    const double total_loads = static_cast<double>(std::accumulate(counts.begin(), counts.end(), std::size_t{0}));
    if (total_loads <= 0.0) throw AllocationError("grid has no loads");
    for (auto c : counts) out.beta.push_back(static_cast<double>(c) / total_loads);

    if (!no_machines) {
        for (std::size_t k = 0; k < counts.size(); ++k) {
            if (counts[k] == 0) continue;  // beta = 0 would give a zero-capacity machine
            SourceParams s;
            s.node = g.nodes()[g.substations()[k]].id;
            s.kind = SourceKind::rotating;
            s.capacity = out.beta[k] * cfg.s_total * (1.0 - cfg.snsp);
            s.t_c = cfg.t_c;
            s.f0 = cfg.f0;
            s.v0 = cfg.v0;
            out.sources.push_back(std::move(s));
        }
    }

    Rng rng(cfg.rng_seed);
    for (auto idx : rng.sample(cfg.placement_pool.size(), n_inv)) {
        SourceParams s;
        s.node = cfg.placement_pool[idx];
        s.kind = SourceKind::virtual_sg;
        s.capacity = cfg.s_total * cfg.snsp / static_cast<double>(n_inv);
        s.t_c = cfg.t_c;
        s.f0 = cfg.f0;
        s.v0 = cfg.v0;
        out.sources.push_back(std::move(s));
    }
    out.achieved_snsp = snsp_of(out.sources);
    return out;
}

/// Solves the inertia-sharing system: total inertia fixed, each H_i
/// proportional to S_i (first row: sum H_i S_i = S_total H_total;
/// row k: S_k H_1 - S_1 H_k = 0).
inline std::vector<double> inertia_allocation(const std::vector<double>& capacities, double h_total) {
    const auto n = static_cast<Eigen::Index>(capacities.size());
    if (n == 0) throw AllocationError("inertia_allocation: no sources");
    if (!(h_total > 0.0)) throw AllocationError("inertia_allocation: h_total must be > 0");
    for (double s : capacities) {
        if (!(s > 0.0)) throw AllocationError("inertia_allocation: singular system (capacity <= 0)");
    }
    const double s_total = std::accumulate(capacities.begin(), capacities.end(), 0.0);

    Eigen::MatrixXd m = Eigen::MatrixXd::Zero(n, n);
    Eigen::VectorXd rhs = Eigen::VectorXd::Zero(n);
    for (Eigen::Index j = 0; j < n; ++j) m(0, j) = capacities[static_cast<std::size_t>(j)];
    for (Eigen::Index k = 1; k < n; ++k) {
        m(k, 0) = capacities[static_cast<std::size_t>(k)];
        m(k, k) = -capacities[0];
    }
    rhs(0) = s_total * h_total;
    const Eigen::VectorXd h = m.partialPivLu().solve(rhs);
    return {h.data(), h.data() + n};
}

/// Full fleet for a scenario: capacities, inertia constants and droop gains.
inline AllocationResult allocate(const GridGraph& g, const ScenarioConfig& cfg) {
    auto out = capacity_shares(g, cfg);
    std::vector<double> caps;
    for (const auto& s : out.sources) caps.push_back(s.capacity);
    const auto h = inertia_allocation(caps, cfg.h_total);
    for (std::size_t i = 0; i < out.sources.size(); ++i) {
        auto& s = out.sources[i];
        s = make_droop_source(s.node, s.kind, s.capacity, h[i], cfg.t_c, cfg.r0, cfg.f0, cfg.v0);
    }
    return out;
}

}  // namespace stabstore
