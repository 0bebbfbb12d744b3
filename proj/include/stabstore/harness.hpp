#pragma once

// Seeded Monte Carlo studies: heatmaps, placement distributions, the
// infinite-bus intervention, participation sweeps and stabilization bundles.

#include "json.hpp"

#include <algorithm>
#include <atomic>
#include <bit>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <exception>
#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "stabstore/errors.hpp"
#include "stabstore/grid.hpp"
#include "stabstore/random.hpp"
#include "stabstore/scenario.hpp"
#include "stabstore/small_signal.hpp"
#include "stabstore/storage.hpp"

namespace stabstore {

// ---------------------------------------------------------------------------
// Worker pool
// ---------------------------------------------------------------------------

/// Evaluates fn(0..count-1) on `jobs` threads. Results land at their own
/// index, so the output never depends on completion order.
template <class Fn>
auto parallel_map(std::size_t count, unsigned jobs, Fn fn) -> std::vector<decltype(fn(std::size_t{}))> {
    using R = decltype(fn(std::size_t{}));
    std::vector<std::optional<R>> slots(count);
    std::atomic<std::size_t> next{0};
    std::exception_ptr failure;
    std::mutex failure_mutex;
    auto worker = [&]() {
        for (std::size_t i = next++; i < count; i = next++) {
            try {
                slots[i].emplace(fn(i));
            } catch (...) {
                std::lock_guard lock(failure_mutex);
                if (!failure) failure = std::current_exception();
            }
        }
    };
    const unsigned n = std::max(1u, std::min<unsigned>(jobs, static_cast<unsigned>(std::max<std::size_t>(count, 1))));
    if (n == 1) {
        worker();
    } else {
        std::vector<std::jthread> pool;
        for (unsigned t = 0; t < n; ++t) pool.emplace_back(worker);
    }
    if (failure) std::rethrow_exception(failure);
    std::vector<R> out;
    out.reserve(count);
    for (auto& s : slots) out.push_back(std::move(*s));
    return out;
}

// ---------------------------------------------------------------------------
// Statistics
// ---------------------------------------------------------------------------

struct Quartiles {
    double q1 = 0.0;
    double median = 0.0;
    double q3 = 0.0;

    bool operator==(const Quartiles&) const = default;
};

inline double mean_of(const std::vector<double>& v) {
    if (v.empty()) return std::nan("");
    double s = 0.0;
    for (double x : v) s += x;
    return s / static_cast<double>(v.size());
}

/// Linear interpolation between order statistics at (n - 1) p.
inline double quantile(std::vector<double> v, double p) {
    if (v.empty()) return std::nan("");
    std::sort(v.begin(), v.end());
    const double pos = p * static_cast<double>(v.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const auto hi = std::min(lo + 1, v.size() - 1);
    return v[lo] + (pos - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

inline Quartiles quartiles_of(const std::vector<double>& v) {
    return {quantile(v, 0.25), quantile(v, 0.5), quantile(v, 0.75)};
}

// ---------------------------------------------------------------------------
// Records
// ---------------------------------------------------------------------------

/// Seed-bearing key of a heatmap cell. Excludes h_total so every inertia
/// level sees the same placements.
inline std::uint64_t cell_key(double snsp, std::size_t n_inv) {
    return mix64(std::bit_cast<std::uint64_t>(snsp)) ^ mix64(0x9e3779b97f4a7c15ULL + n_inv);
}

inline std::uint64_t trial_seed(std::uint64_t base_seed, double snsp, std::size_t n_inv, std::size_t trial) {
    return derive_seed(base_seed, cell_key(snsp, n_inv), trial);
}

struct RunRecord {
    std::string study;
    double snsp = 0.0;
    std::size_t n_inv = 0;
    double h_total = 0.0;
    std::size_t trial = 0;
    std::uint64_t seed = 0;
    std::optional<double> participation;
    std::optional<double> L_v;  // H
    bool ok = true;
    std::string error;
    double zeta_before = std::nan("");
    std::optional<double> zeta_after;
    Complex dominant{0.0, 0.0};
    std::vector<std::string> vsg_nodes;
    std::vector<std::string> participants;
    std::vector<DsmReport> dsm;
    double wall_time = 0.0;  // s; not serialized

    bool same_result(const RunRecord& o) const {
        auto eq = [](double a, double b) { return std::bit_cast<std::uint64_t>(a) == std::bit_cast<std::uint64_t>(b); };
        auto eq_opt = [&](const std::optional<double>& a, const std::optional<double>& b) {
            return a.has_value() == b.has_value() && (!a || eq(*a, *b));
        };
        if (!(study == o.study && eq(snsp, o.snsp) && n_inv == o.n_inv && eq(h_total, o.h_total) && trial == o.trial &&
              seed == o.seed && eq_opt(participation, o.participation) && eq_opt(L_v, o.L_v) && ok == o.ok &&
              error == o.error && eq(zeta_before, o.zeta_before) && eq_opt(zeta_after, o.zeta_after) &&
              eq(dominant.real(), o.dominant.real()) && eq(dominant.imag(), o.dominant.imag()) &&
              vsg_nodes == o.vsg_nodes && participants == o.participants && dsm.size() == o.dsm.size()))
            return false;
        for (std::size_t k = 0; k < dsm.size(); ++k) {
            const auto &a = dsm[k], &b = o.dsm[k];
            if (!(a.node == b.node && eq(a.dsm, b.dsm) && eq(a.dsm0, b.dsm0) && eq(a.dsm_final, b.dsm_final) &&
                  eq(a.L_v, b.L_v) && eq(a.incentive, b.incentive) && a.converged == b.converged))
                return false;
        }
        return true;
    }
};

/// Shared scenario parameters of a study; snsp, n_inv, h_total and the
/// placement seed vary per run.
struct StudyContext {
    const GridGraph* grid = nullptr;
    std::vector<std::string> pool;  // candidate VSG nodes
    ScenarioConfig scenario;        // template
    AssessOptions assess;
    unsigned jobs = 1;
};

inline std::vector<std::string> vsg_nodes_of(const std::vector<SourceParams>& sources) {
    std::vector<std::string> out;
    for (const auto& s : sources)
        if (s.kind == SourceKind::virtual_sg) out.push_back(s.node);
    return out;
}

inline ScenarioConfig scenario_at(const StudyContext& ctx, double snsp, std::size_t n_inv, double h_total,
                                  std::uint64_t seed) {
    ScenarioConfig c = ctx.scenario;
    c.snsp = snsp;
    c.n_inv = n_inv;
    c.h_total = h_total;
    c.rng_seed = seed;
    c.placement_pool = ctx.pool;
    return c;
}

namespace detail {

template <class Body>
void guarded(RunRecord& r, Body body) {
    const auto t0 = std::chrono::steady_clock::now();
    try {
        body();
    } catch (const Error& e) {
        r.ok = false;
        r.error = e.what();
    }
    r.wall_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

}  // namespace detail

/// One seeded placement, assessed. Failures are captured in the record.
inline RunRecord run_assessment(const StudyContext& ctx, double snsp, std::size_t n_inv, double h_total,
                                std::size_t trial, std::uint64_t seed, std::string study = "assess") {
    RunRecord r;
    r.study = std::move(study);
    r.snsp = snsp;
    r.n_inv = n_inv;
    r.h_total = h_total;
    r.trial = trial;
    r.seed = seed;
    detail::guarded(r, [&] {
        const auto alloc = allocate(*ctx.grid, scenario_at(ctx, snsp, n_inv, h_total, seed));
        r.vsg_nodes = vsg_nodes_of(alloc.sources);
        const auto m = assess(*ctx.grid, alloc.sources, {}, ctx.assess);
        r.zeta_before = m.zeta;
        r.dominant = m.dominant;
    });
    return r;
}

// ---------------------------------------------------------------------------
// Studies
// ---------------------------------------------------------------------------

struct SweepSpec {
    std::vector<double> snsp_grid{0.0, 0.25, 0.5, 0.75, 1.0};
    std::vector<std::size_t> n_inv_grid{2, 5, 10, 20, 40};
    std::vector<double> h_grid{4.0};
    std::size_t n_trials = 100;
    std::uint64_t base_seed = 1;
    std::vector<double> participation{1.0};
    std::vector<double> L_v_options{0.2e-3, 2e-3, 20e-3};

    void validate() const {
        if (n_trials < 1) throw SchemaError("sweep: n_trials must be >= 1");
        if (snsp_grid.empty() || n_inv_grid.empty() || h_grid.empty()) throw SchemaError("sweep: empty grid");
        for (double s : snsp_grid)
            if (!(s >= 0.0 && s <= 1.0)) throw SchemaError("sweep: snsp outside [0, 1]");
        for (double h : h_grid)
            if (!(h > 0.0)) throw SchemaError("sweep: h_total must be > 0");
        for (double p : participation)
            if (!(p >= 0.0 && p <= 1.0)) throw SchemaError("sweep: participation outside [0, 1]");
        for (double l : L_v_options)
            if (!(l >= 0.0)) throw SchemaError("sweep: L_v must be >= 0");
    }
};

struct HeatmapCell {
    double h_total = 0.0;
    double snsp = 0.0;
    std::size_t n_inv = 0;
    double mean_zeta = 0.0;
    std::size_t n_ok = 0;
    std::size_t n_failed = 0;
    bool flagged = false;  // more than 10% of trials failed
};

struct HeatmapResult {
    std::vector<RunRecord> records;  // (h, snsp, n_inv, trial) order
    std::vector<HeatmapCell> cells;
};

inline HeatmapCell aggregate_cell(const std::vector<RunRecord>& recs) {
    HeatmapCell c;
    if (recs.empty()) return c;
    c.h_total = recs.front().h_total;
    c.snsp = recs.front().snsp;
    c.n_inv = recs.front().n_inv;
    std::vector<double> z;
    for (const auto& r : recs) {
        if (r.ok) z.push_back(r.zeta_before);
        else ++c.n_failed;
    }
    c.n_ok = z.size();
    c.mean_zeta = mean_of(z);
    c.flagged = 10 * c.n_failed > recs.size();
    return c;
}

inline HeatmapResult heatmap_sweep(const StudyContext& ctx, const SweepSpec& spec) {
    spec.validate();
    struct Job {
        double h, snsp;
        std::size_t n, trial;
    };
    std::vector<Job> jobs;
    for (double h : spec.h_grid)
        for (double s : spec.snsp_grid)
            for (auto n : spec.n_inv_grid)
                for (std::size_t t = 0; t < spec.n_trials; ++t) jobs.push_back({h, s, n, t});
    HeatmapResult out;
    out.records = parallel_map(jobs.size(), ctx.jobs, [&](std::size_t i) {
        const auto& j = jobs[i];
        return run_assessment(ctx, j.snsp, j.n, j.h, j.trial, trial_seed(spec.base_seed, j.snsp, j.n, j.trial),
                              "heatmap");
    });
    for (std::size_t k = 0; k < out.records.size(); k += spec.n_trials) {
        std::vector<RunRecord> cell(out.records.begin() + static_cast<std::ptrdiff_t>(k),
                                    out.records.begin() + static_cast<std::ptrdiff_t>(k + spec.n_trials));
        out.cells.push_back(aggregate_cell(cell));
    }
    return out;
}

struct DistributionResult {
    std::vector<RunRecord> records;
    std::vector<double> samples;  // zeta of the successful trials, trial order
    Quartiles quartiles;
    std::size_t n_failed = 0;
};

inline DistributionResult summarize_distribution(std::vector<RunRecord> records) {
    DistributionResult out;
    out.records = std::move(records);
    for (const auto& r : out.records) {
        if (r.ok) out.samples.push_back(r.zeta_before);
        else ++out.n_failed;
    }
    out.quartiles = quartiles_of(out.samples);
    return out;
}

inline DistributionResult placement_distribution(const StudyContext& ctx, double snsp, std::size_t n_inv,
                                                 double h_total, std::size_t n_trials, std::uint64_t base_seed) {
    if (n_trials < 1) throw SchemaError("placement: n_trials must be >= 1");
    auto recs = parallel_map(n_trials, ctx.jobs, [&](std::size_t t) {
        return run_assessment(ctx, snsp, n_inv, h_total, t, trial_seed(base_seed, snsp, n_inv, t), "placement");
    });
    return summarize_distribution(std::move(recs));
}

struct InterventionResult {
    ModeReport before;
    ModeReport after;
    std::string node;
};

/// Adds an ideal source at `node` and reassesses.
inline InterventionResult intervention_study(const GridGraph& g, const std::vector<SourceParams>& sources,
                                             const SourceParams& new_source, const AssessOptions& opt = {}) {
    if (new_source.kind != SourceKind::infinite_bus) throw AllocationError("intervention source must be an infinite bus");
    InterventionResult r;
    r.node = new_source.node;
    r.before = assess(g, sources, {}, opt);
    auto with = sources;
    with.push_back(new_source);
    r.after = assess(g, with, {}, opt);
    return r;
}

/// Participants of a trial: the first round(fraction * n) entries of a
/// seeded permutation, so larger fractions extend smaller ones.
inline std::vector<std::string> choose_participants(const std::vector<std::string>& vsgs, double fraction,
                                                    std::uint64_t seed) {
    auto order = vsgs;
    Rng rng(derive_seed(seed, 0x7061727469636970ULL, 0));
    rng.shuffle(order);
    const auto count = static_cast<std::size_t>(std::floor(fraction * static_cast<double>(vsgs.size()) + 0.5));
    order.resize(std::min(count, order.size()));
    std::sort(order.begin(), order.end());
    return order;
}

struct ParticipationGroup {
    double fraction = 0.0;
    double L_v = 0.0;
    std::vector<double> before;
    std::vector<double> after;
    Quartiles before_q;
    Quartiles after_q;
    std::size_t n_failed = 0;
};

struct ParticipationResult {
    std::vector<RunRecord> records;  // (trial, fraction, L_v) order
    std::vector<ParticipationGroup> groups;  // (fraction, L_v) order
};

inline std::vector<ParticipationGroup> group_participation(const std::vector<RunRecord>& records,
                                                           const std::vector<double>& fractions,
                                                           const std::vector<double>& L_v_options) {
    std::vector<ParticipationGroup> groups;
    for (double f : fractions)
        for (double l : L_v_options) {
            ParticipationGroup gr;
            gr.fraction = f;
            gr.L_v = l;
            for (const auto& r : records) {
                if (r.participation != f || r.L_v != l) continue;
                if (!r.ok || !r.zeta_after) {
                    ++gr.n_failed;
                    continue;
                }
                gr.before.push_back(r.zeta_before);
                gr.after.push_back(*r.zeta_after);
            }
            gr.before_q = quartiles_of(gr.before);
            gr.after_q = quartiles_of(gr.after);
            groups.push_back(std::move(gr));
        }
    return groups;
}

namespace detail {

/// Fills participants and zeta_after of a record whose base assessment succeeded.
inline void apply_participation(const StudyContext& ctx, const AllocationResult& alloc, RunRecord& r) {
    r.participants = choose_participants(r.vsg_nodes, *r.participation, r.seed);
    guarded(r, [&] {
        std::vector<VirtualImpedance> vis;
        for (const auto& p : r.participants) vis.push_back({p, *r.L_v, 0.0});
        r.zeta_after =
            r.participants.empty() ? r.zeta_before : assess(*ctx.grid, alloc.sources, vis, ctx.assess).zeta;
    });
}

}  // namespace detail

/// Every participant contributes the same fixed L_v; no adaptive loop.
inline ParticipationResult participation_sweep(const StudyContext& ctx, double snsp, std::size_t n_inv,
                                               double h_total, const std::vector<double>& fractions,
                                               const std::vector<double>& L_v_options, std::size_t n_trials,
                                               std::uint64_t base_seed) {
    if (n_trials < 1) throw SchemaError("participation: n_trials must be >= 1");
    if (fractions.empty() || L_v_options.empty()) throw SchemaError("participation: empty fraction or L_v list");
    for (double f : fractions)
        if (!(f >= 0.0 && f <= 1.0)) throw SchemaError("participation: fraction outside [0, 1]");
    for (double l : L_v_options)
        if (!(l >= 0.0)) throw SchemaError("participation: L_v must be >= 0");

    auto per_trial = parallel_map(n_trials, ctx.jobs, [&](std::size_t t) {
        const auto seed = trial_seed(base_seed, snsp, n_inv, t);
        auto base = run_assessment(ctx, snsp, n_inv, h_total, t, seed, "participation");
        std::vector<RunRecord> recs;
        std::optional<AllocationResult> alloc;
        if (base.ok) alloc = allocate(*ctx.grid, scenario_at(ctx, snsp, n_inv, h_total, seed));
        for (double f : fractions)
            for (double l : L_v_options) {
                RunRecord r = base;
                r.participation = f;
                r.L_v = l;
                if (!base.ok) {
                    recs.push_back(std::move(r));
                    continue;
                }
                detail::apply_participation(ctx, *alloc, r);
                recs.push_back(std::move(r));
            }
        return recs;
    });
    ParticipationResult out;
    for (auto& v : per_trial)
        for (auto& r : v) out.records.push_back(std::move(r));
    out.groups = group_participation(out.records, fractions, L_v_options);
    return out;
}

/// Recomputes one record from its coordinates (study, snsp, n_inv,
/// h_total, trial, seed and, for participation records, fraction and L_v).
inline RunRecord regenerate(const StudyContext& ctx, const RunRecord& coords) {
    auto r = run_assessment(ctx, coords.snsp, coords.n_inv, coords.h_total, coords.trial, coords.seed, coords.study);
    if (!coords.participation) return r;
    if (!coords.L_v) throw SchemaError("regenerate: participation record without L_v");
    r.participation = coords.participation;
    r.L_v = coords.L_v;
    if (r.ok) detail::apply_participation(ctx, allocate(*ctx.grid, scenario_at(ctx, r.snsp, r.n_inv, r.h_total, r.seed)), r);
    return r;
}

/// assess -> stabilize_all -> assess, with the per-inverter breakdown.
inline StabilizationResult stabilization_study(const GridGraph& g, const std::vector<SourceParams>& sources,
                                               const std::vector<std::string>& participants,
                                               const StorageControllerConfig& cfg, const AssessOptions& opt = {}) {
    return stabilize_all(g, sources, participants, cfg, opt);
}

// ---------------------------------------------------------------------------
// Serialization
// ---------------------------------------------------------------------------

/// Shortest round-trip decimal form; identical bytes for identical doubles.
inline std::string format_number(double x) {
    if (std::isnan(x)) return "nan";
    if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof buf, x);
    return std::string(buf, res.ptr);
}

inline nlohmann::ordered_json number_json(double x) {
    if (std::isfinite(x)) return x;
    return nullptr;
}

inline nlohmann::ordered_json to_json(const DsmReport& r) {
    return {{"node", r.node},           {"dsm", number_json(r.dsm)},     {"dsm0", number_json(r.dsm0)},
            {"dsm_final", number_json(r.dsm_final)}, {"L_v_h", r.L_v}, {"incentive", number_json(r.incentive)},
            {"converged", r.converged}};
}

inline nlohmann::ordered_json to_json(const ModeReport& m) {
    nlohmann::ordered_json eig = nlohmann::ordered_json::array();
    for (const auto& l : m.eigenvalues) eig.push_back({l.real(), l.imag()});
    return {{"zeta", m.zeta},
            {"stable", m.stable},
            {"dominant", {m.dominant.real(), m.dominant.imag()}},
            {"retained", m.retained},
            {"discarded", m.discarded},
            {"eigenvalues", eig},
            {"warnings", m.warnings}};
}

inline nlohmann::ordered_json to_json(const RunRecord& r) {
    nlohmann::ordered_json j;
    j["study"] = r.study;
    j["snsp"] = r.snsp;
    j["n_inv"] = r.n_inv;
    j["h_total"] = r.h_total;
    j["trial"] = r.trial;
    j["seed"] = r.seed;
    if (r.participation) j["participation"] = *r.participation;
    if (r.L_v) j["L_v_h"] = *r.L_v;
    j["ok"] = r.ok;
    if (!r.ok) j["error"] = r.error;
    j["zeta_before"] = number_json(r.zeta_before);
    if (r.zeta_after) j["zeta_after"] = number_json(*r.zeta_after);
    j["dominant"] = {r.dominant.real(), r.dominant.imag()};
    j["vsg_nodes"] = r.vsg_nodes;
    if (r.participation) j["participants"] = r.participants;
    if (!r.dsm.empty()) {
        j["dsm"] = nlohmann::ordered_json::array();
        for (const auto& d : r.dsm) j["dsm"].push_back(to_json(d));
    }
    return j;
}

inline std::string records_json(const std::vector<RunRecord>& recs) {
    nlohmann::ordered_json arr = nlohmann::ordered_json::array();
    for (const auto& r : recs) arr.push_back(to_json(r));
    return arr.dump(2) + "\n";
}

/// Minimal table used for every aggregated output.
struct Table {
    std::vector<std::string> columns;
    std::vector<std::vector<std::string>> rows;

    void add(std::vector<std::string> row) {
        if (row.size() != columns.size()) throw Error("table row width mismatch");
        rows.push_back(std::move(row));
    }

    std::string csv() const {
        std::ostringstream os;
        for (std::size_t c = 0; c < columns.size(); ++c) os << (c ? "," : "") << columns[c];
        os << '\n';
        for (const auto& r : rows) {
            for (std::size_t c = 0; c < r.size(); ++c) os << (c ? "," : "") << r[c];
            os << '\n';
        }
        return os.str();
    }

    std::string json() const {
        nlohmann::ordered_json arr = nlohmann::ordered_json::array();
        for (const auto& r : rows) {
            nlohmann::ordered_json o;
            for (std::size_t c = 0; c < columns.size(); ++c) {
                const auto& cell = r[c];
                double x = 0.0;
                const auto res = std::from_chars(cell.data(), cell.data() + cell.size(), x);
                if (res.ec == std::errc() && res.ptr == cell.data() + cell.size() && std::isfinite(x))
                    o[columns[c]] = x;
                else
                    o[columns[c]] = cell;
            }
            arr.push_back(std::move(o));
        }
        return arr.dump(2) + "\n";
    }
};

inline std::string fmt(double x) { return format_number(x); }
inline std::string fmt(std::size_t x) { return std::to_string(x); }

inline Table heatmap_table(const HeatmapResult& r) {
    Table t{{"h_total", "snsp", "n_inv", "mean_zeta", "n_ok", "n_failed", "flagged"}, {}};
    for (const auto& c : r.cells)
        t.add({fmt(c.h_total), fmt(c.snsp), fmt(c.n_inv), fmt(c.mean_zeta), fmt(c.n_ok), fmt(c.n_failed),
               c.flagged ? "1" : "0"});
    return t;
}

inline Table distribution_table(const DistributionResult& r, double h_total, double snsp, std::size_t n_inv) {
    Table t{{"h_total", "snsp", "n_inv", "n_ok", "n_failed", "q1", "median", "q3", "mean"}, {}};
    t.add({fmt(h_total), fmt(snsp), fmt(n_inv), fmt(r.samples.size()), fmt(r.n_failed), fmt(r.quartiles.q1),
           fmt(r.quartiles.median), fmt(r.quartiles.q3), fmt(mean_of(r.samples))});
    return t;
}

inline Table participation_table(const ParticipationResult& r) {
    Table t{{"participation", "L_v_h", "n_ok", "n_failed", "before_q1", "before_median", "before_q3", "after_q1",
             "after_median", "after_q3"},
            {}};
    for (const auto& g : r.groups)
        t.add({fmt(g.fraction), fmt(g.L_v), fmt(g.after.size()), fmt(g.n_failed), fmt(g.before_q.q1),
               fmt(g.before_q.median), fmt(g.before_q.q3), fmt(g.after_q.q1), fmt(g.after_q.median),
               fmt(g.after_q.q3)});
    return t;
}

inline Table dsm_table(const std::vector<DsmReport>& reps) {
    Table t{{"node", "dsm0", "dsm", "dsm_final", "L_v_h", "incentive", "converged"}, {}};
    for (const auto& d : reps)
        t.add({d.node, fmt(d.dsm0), fmt(d.dsm), fmt(d.dsm_final), fmt(d.L_v), fmt(d.incentive),
               d.converged ? "1" : "0"});
    return t;
}

inline Table modes_table(const ModeReport& m) {
    Table t{{"index", "real", "imag", "abs", "zeta"}, {}};
    for (std::size_t k = 0; k < m.eigenvalues.size(); ++k) {
        const auto& l = m.eigenvalues[k];
        t.add({fmt(k), fmt(l.real()), fmt(l.imag()), fmt(std::abs(l)), fmt(detail::damping_ratio(l))});
    }
    return t;
}

}  // namespace stabstore
