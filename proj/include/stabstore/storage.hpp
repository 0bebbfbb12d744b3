#pragma once

// Distributed stability metric, incentive, and the adaptive virtual-impedance
// loop ("stability storage") run by each participating VSG.

#include <algorithm>
#include <cmath>
#include <map>
#include <string>
#include <vector>

#include "stabstore/errors.hpp"
#include "stabstore/network.hpp"
#include "stabstore/small_signal.hpp"

namespace stabstore {

/// Local instability contribution of one VSG, from the Thevenin admittance it
/// sees (static G + jB, dynamic G' + jB'), its droop gains and the power
/// filter cut-off omega_c = 1 / T_c. Zero at infinite electrical distance.
inline double dsm(const TheveninAdmittance& th, double k_f, double k_v, double omega_c) {
    const double den = 1.0 - k_v * th.B;
    if (den == 0.0 || !std::isfinite(den)) throw NumericError("dsm: 1 - k_v B vanishes");
    if (!(omega_c > 0.0)) throw NumericError("dsm: omega_c must be > 0");
    const double bracket = th.Bp - 2.0 * k_v * th.Gp * th.G / den +
                           k_v * th.G * th.G * (1.0 - omega_c * k_v * th.Bp) / (omega_c * den * den);
    return 0.5 * omega_c * k_f * bracket;
}

inline double dsm(const TheveninAdmittance& th, const SourceParams& s) { return dsm(th, s.k_f, s.k_v, s.omega_c()); }

/// Payment for the DSM reduction a VSG achieved; zero without contribution,
/// capped at kappa * dsm0 once the metric reaches zero.
inline double incentive(double dsm0, double dsm_now, double kappa) {
    if (!(kappa > 0.0)) throw NumericError("incentive: kappa must be > 0");
    return kappa * std::max(0.0, dsm0 - std::max(dsm_now, 0.0));
}

struct StorageControllerConfig {
    double damping_trigger = 0.0;
    double dsm_target = 0.001;
    double dL = 0.2e-3;    // H
    double L_max = 20e-3;  // H
    double kappa = 1.0;
    int rounds = 1;

    void validate() const {
        if (!(dsm_target > 0.0)) throw Error("storage config: dsm_target must be > 0");
        if (!(dL > 0.0)) throw Error("storage config: dL must be > 0");
        if (!(L_max >= dL)) throw Error("storage config: L_max must be >= dL");
        if (!(kappa > 0.0)) throw Error("storage config: kappa must be > 0");
        if (rounds < 1) throw Error("storage config: rounds must be >= 1");
    }
};

/// Per-inverter metering record.
struct DsmReport {
    std::string node;
    double dsm = 0.0;        // raw metric at the committed L_v
    double dsm0 = 0.0;       // metric at L_v = 0
    double dsm_final = 0.0;  // metric once every participant has committed
    double L_v = 0.0;        // H
    double incentive = 0.0;
    bool converged = true;
};

namespace detail {

inline const SourceParams& vsg_at(const std::vector<SourceParams>& sources, const std::string& node) {
    auto it = std::find_if(sources.begin(), sources.end(), [&](const SourceParams& s) { return s.node == node; });
    if (it == sources.end() || it->kind != SourceKind::virtual_sg)
        throw NetworkError("node '" + node + "' hosts no VSG");
    return *it;
}

/// Number of dL steps in L_max, tolerant to the binary representation of both.
inline long step_count(const StorageControllerConfig& cfg) {
    const double r = cfg.L_max / cfg.dL;
    const double n = std::round(r);
    return std::abs(r - n) < 1e-9 * std::max(1.0, r) ? static_cast<long>(n) : static_cast<long>(std::floor(r));
}

}  // namespace detail

/// Adaptive loop of one VSG. Below the damping trigger it raises its
/// emulated inductance in dL steps, starting from `start_L`, until its DSM
/// drops below the target or L_max is reached.
inline DsmReport stabilize_local(const std::string& node, const GridGraph& g, const std::vector<SourceParams>& sources,
                                 const StorageControllerConfig& cfg, double measured_zeta,
                                 const std::vector<VirtualImpedance>& committed = {}, double start_L = 0.0) {
    cfg.validate();
    const auto& src = detail::vsg_at(sources, node);
    const auto net = grid_thevenin(g, sources, node, committed);
    auto metric = [&](double L) { return dsm(net.with({node, L, 0.0}), src); };

    DsmReport r;
    r.node = node;
    r.dsm0 = metric(0.0);
    if (measured_zeta >= cfg.damping_trigger) {
        r.L_v = std::clamp(start_L, 0.0, cfg.L_max);
        r.dsm = r.L_v == 0.0 ? r.dsm0 : metric(r.L_v);
        r.dsm_final = r.dsm;
        r.incentive = incentive(r.dsm0, r.dsm, cfg.kappa);
        r.converged = true;
        return r;
    }
    const long n_max = detail::step_count(cfg);
    long k = static_cast<long>(std::ceil(std::clamp(start_L, 0.0, cfg.L_max) / cfg.dL - 1e-9));
    auto L_of = [&](long step) { return std::min(static_cast<double>(step) * cfg.dL, cfg.L_max); };
    double L = L_of(k);
    double d = metric(L);
    while (!(d < cfg.dsm_target) && k < n_max) {
        ++k;
        L = L_of(k);
        d = metric(L);
    }
    if (!(d < cfg.dsm_target) && L < cfg.L_max) {
        L = cfg.L_max;
        d = metric(L);
    }
    r.L_v = L;
    r.dsm = d;
    r.dsm_final = d;
    r.converged = d < cfg.dsm_target;
    r.incentive = incentive(r.dsm0, r.dsm, cfg.kappa);
    return r;
}

struct StabilizationResult {
    ModeReport before;
    ModeReport after;
    std::vector<DsmReport> reports;  // participants, node-id order
    std::vector<VirtualImpedance> impedances;
    int rounds_used = 0;
};

/// Every participant runs its local loop in node-id order, each seeing the
/// impedances already committed by the others. The trigger is the damping
/// measured on the unmodified system; further rounds (cfg.rounds > 1) rerun
/// the loops from their current L_v while the system stays below trigger.
inline StabilizationResult stabilize_all(const GridGraph& g, const std::vector<SourceParams>& sources,
                                         std::vector<std::string> participants, const StorageControllerConfig& cfg,
                                         const AssessOptions& assess_opt = {}) {
    cfg.validate();
    std::sort(participants.begin(), participants.end());
    participants.erase(std::unique(participants.begin(), participants.end()), participants.end());
    for (const auto& p : participants) detail::vsg_at(sources, p);

    StabilizationResult out;
    out.before = assess(g, sources, {}, assess_opt);
    out.after = out.before;
    if (participants.empty()) return out;

    std::map<std::string, double> L;
    std::map<std::string, DsmReport> latest;
    double measured = out.before.zeta;
    auto committed = [&]() {
        std::vector<VirtualImpedance> v;
        for (const auto& [node, l] : L)
            if (l > 0.0) v.push_back({node, l, 0.0});
        return v;
    };
    for (int round = 0; round < cfg.rounds; ++round) {
        if (measured >= cfg.damping_trigger) break;
        ++out.rounds_used;
        for (const auto& p : participants) {
            auto rep = stabilize_local(p, g, sources, cfg, measured, committed(), L[p]);
            if (auto prev = latest.find(p); prev != latest.end()) rep.dsm0 = prev->second.dsm0;
            rep.incentive = incentive(rep.dsm0, rep.dsm, cfg.kappa);
            L[p] = rep.L_v;
            latest[p] = rep;
        }
        out.after = assess(g, sources, committed(), assess_opt);
        measured = out.after.zeta;
    }
    out.impedances = committed();
    for (const auto& p : participants) {
        DsmReport rep;
        if (auto it = latest.find(p); it != latest.end()) {
            rep = it->second;
        } else {
            rep.node = p;
            rep.dsm0 = rep.dsm = dsm(thevenin_at(g, sources, p, {p, 0.0, 0.0}), detail::vsg_at(sources, p));
        }
        rep.dsm_final = dsm(thevenin_at(g, sources, p, {p, L[p], 0.0}, out.impedances), detail::vsg_at(sources, p));
        out.reports.push_back(rep);
    }
    return out;
}

}  // namespace stabstore
