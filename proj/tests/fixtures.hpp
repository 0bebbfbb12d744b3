#pragma once

// Small hand-built grids shared by the unit and acceptance tests.

#include <cmath>
#include <numbers>
#include <string>
#include <vector>

#include "stabstore/grid.hpp"
#include "stabstore/network.hpp"
#include "stabstore/random.hpp"
#include "stabstore/scenario.hpp"

namespace fixtures {

using namespace stabstore;

inline constexpr double kTc = 1.0 / (4.0 * std::numbers::pi);

/// Transmission-level ladder (400/275/132/66/33/11 kV). Fixture grids keep
/// this table so they do not move with the synthetic defaults.
inline std::vector<TierSpec> tiers() {
    return {
        {0, 0.030, 0.320, 400e3}, {1, 0.045, 0.340, 275e3}, {2, 0.040, 0.150, 132e3}, {3, 0.060, 0.150, 132e3},
        {4, 0.050, 0.060, 66e3},  {5, 0.020, 0.020, 33e3},  {6, 0.030, 0.020, 33e3},  {7, 0.005, 0.002, 11e3},
    };
}

struct Case {
    GridGraph grid;
    std::vector<SourceParams> sources;
};

/// One VSG behind a short, lossy 11 kV line to an infinite bus, with a small
/// load hanging off the VSG bus. Unstable without virtual impedance.
inline Case stock_single_vsg(int tier = 7, double length_km = 0.1) {
    std::vector<Node> nodes = {{"sub", NodeKind::substation, {}},
                               {"inv", NodeKind::junction, {}},
                               {"ld", NodeKind::load, {0.05, 0.0}}};
    std::vector<Branch> branches = {{"sub", "inv", tier, length_km, {}, false}, {"inv", "ld", 7, 0.1, {}, false}};
    GridGraph g(tiers(), nodes, branches);
    std::vector<SourceParams> s = {make_infinite_bus("sub"),
                                   make_droop_source("inv", SourceKind::virtual_sg, 0.1, 0.5, kTc, 3.0)};
    return {std::move(g), std::move(s)};
}

/// VSG co-located with a load at the end of one line from an infinite bus.
/// k_v = 0, so the linear model is the 3-state system with a closed-form
/// characteristic polynomial.
inline Case companion_case(double length_km = 0.1, double k_f = 0.5) {
    std::vector<Node> nodes = {{"sub", NodeKind::substation, {}}, {"ld", NodeKind::load, {0.02, 0.01}}};
    std::vector<Branch> branches = {{"sub", "ld", 7, length_km, {}, false}};
    GridGraph g(tiers(), nodes, branches);
    SourceParams v = make_droop_source("ld", SourceKind::virtual_sg, 0.1, kTc / (2.0 * k_f), kTc, 0.0);
    return {std::move(g), {make_infinite_bus("sub"), v}};
}

/// Two substations tied by a 400 kV line. A rotating machine at subA, a large
/// VSG at inv2 and a small VSG (inv1) 0.5 km from subA on an 11 kV line.
/// The small VSG's high droop gain makes the system unstable.
inline Case three_source(double small_capacity = 0.05, double small_length_km = 0.5) {
    std::vector<Node> nodes = {{"subA", NodeKind::substation, {}}, {"subB", NodeKind::substation, {}},
                               {"jnA", NodeKind::junction, {}},    {"ldA", NodeKind::load, {0.4, 0.0}},
                               {"ldB", NodeKind::load, {0.4, 0.0}}, {"inv1", NodeKind::junction, {}},
                               {"inv2", NodeKind::junction, {}}};
    std::vector<Branch> branches = {{"subA", "subB", 0, 20.0, {}, false}, {"subA", "jnA", 2, 5.0, {}, false},
                                    {"jnA", "ldA", 5, 2.0, {}, false},    {"subB", "ldB", 2, 5.0, {}, false},
                                    {"subA", "inv1", 7, small_length_km, {}, false},
                                    {"subB", "inv2", 2, 3.0, {}, false}};
    GridGraph g(tiers(), nodes, branches);
    const std::vector<double> c = {1.0 - 0.4 - small_capacity, 0.4, small_capacity};
    const auto h = inertia_allocation(c, 4.0);
    std::vector<SourceParams> s = {make_droop_source("subA", SourceKind::rotating, c[0], h[0], kTc, 3.0),
                                   make_droop_source("inv2", SourceKind::virtual_sg, c[1], h[1], kTc, 3.0),
                                   make_droop_source("inv1", SourceKind::virtual_sg, c[2], h[2], kTc, 3.0)};
    return {std::move(g), std::move(s)};
}

/// Random connected network on n nodes (spanning tree plus extra edges) with
/// positive series R, L and some shunts. Node 0 always carries a shunt.
inline NetworkModel random_model(Rng& rng, std::size_t n, double omega0 = 2.0 * std::numbers::pi * 50.0) {
    NetworkModel m(omega0);
    for (std::size_t i = 0; i < n; ++i) m.add_node("n" + std::to_string(i));
    for (std::size_t i = 1; i < n; ++i)
        m.add_series(rng.below(i), i, rng.uniform(0.01, 0.5), rng.uniform(0.5e-3, 5e-3));
    const std::size_t extra = rng.below(n);
    for (std::size_t e = 0; e < extra; ++e) {
        const auto a = rng.below(n), b = rng.below(n);
        if (a != b) m.add_series(a, b, rng.uniform(0.01, 0.5), rng.uniform(0.5e-3, 5e-3));
    }
    m.add_shunt(0, Complex(rng.uniform(0.1, 1.0), rng.uniform(-0.3, 0.3)));
    for (std::size_t i = 1; i < n; ++i)
        if (rng.uniform() < 0.4) m.add_shunt(i, Complex(rng.uniform(0.0, 1.0), rng.uniform(-0.3, 0.3)));
    return m;
}

/// Derivative of a holomorphic matrix function at 0 from samples on a
/// circle of radius r: f'(0) = (1 / N) sum_k f(r w^k) w^-k / r.
template <class F>
auto contour_derivative(F f, double r = 1.0, int n = 32) {
    using M = decltype(f(Complex{}));
    M acc = f(Complex{r, 0.0}) * 0.0;
    for (int k = 0; k < n; ++k) {
        const Complex w = std::polar(1.0, 2.0 * std::numbers::pi * k / n);
        acc += f(r * w) * (1.0 / (static_cast<double>(n) * r * w));
    }
    return acc;
}

}  // namespace fixtures
