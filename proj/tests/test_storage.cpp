#include <catch_amalgamated.hpp>

#include "fixtures.hpp"
#include "stabstore/storage.hpp"

using namespace stabstore;
using Catch::Matchers::ContainsSubstring;
using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;

TEST_CASE("DSM formula on hand-picked admittances", "[storage]") {
    CHECK(dsm(TheveninAdmittance{}, 0.0, 0.0, 1.0) == 0.0);
    CHECK(dsm(TheveninAdmittance{0.0, 0.0, 0.0, 0.0}, 0.3, 0.9, 4.0 * std::numbers::pi) == 0.0);

    // k_v = 0 leaves only the B' term.
    const TheveninAdmittance th{2.0, -5.0, 0.01, 0.03};
    CHECK_THAT(dsm(th, 0.1, 0.0, 10.0), WithinRel(0.5 * 10.0 * 0.1 * 0.03, 1e-15));

    // General case: 1 - k_v B = 3.5, bracket by hand.
    const double kf = 0.1, kv = 0.5, wc = 10.0;
    const double den = 1.0 - kv * th.B;
    const double bracket = 0.03 - 2.0 * 0.5 * 0.01 * 2.0 / 3.5 + 0.5 * 4.0 * (1.0 - 10.0 * 0.5 * 0.03) / (10.0 * 3.5 * 3.5);
    CHECK(den == 3.5);
    CHECK_THAT(dsm(th, kf, kv, wc), WithinRel(0.5 * wc * kf * bracket, 1e-14));

    SourceParams s = make_droop_source("x", SourceKind::virtual_sg, 0.1, 0.5, fixtures::kTc, 3.0);
    CHECK(dsm(th, s) == dsm(th, s.k_f, s.k_v, 1.0 / s.t_c));

    CHECK_THROWS_AS(dsm(TheveninAdmittance{0.0, 2.0, 0.0, 0.0}, 0.1, 0.5, 1.0), NumericError);
    CHECK_THROWS_AS(dsm(th, 0.1, 0.5, 0.0), NumericError);
}

TEST_CASE("incentive pays for DSM reduction only", "[storage]") {
    CHECK(incentive(0.5, 0.2, 2.0) == 2.0 * 0.3);
    CHECK(incentive(0.5, 0.7, 1.0) == 0.0);
    CHECK(incentive(0.5, -0.3, 1.0) == 0.5);
    CHECK(incentive(0.5, 0.5, 1.0) == 0.0);
    CHECK_THROWS_AS(incentive(0.5, 0.2, 0.0), NumericError);
}

TEST_CASE("DSM on the stock fixture decreases and saturates at zero", "[storage]") {
    const auto c = fixtures::stock_single_vsg();
    const auto th = grid_thevenin(c.grid, c.sources, "inv");
    const auto& vsg = c.sources[1];
    const double d0 = dsm(th.with({"inv", 0.0, 0.0}), vsg);
    CHECK(d0 > 0.1);
    double prev = d0, prev_inc = 0.0;
    for (int k = 0; k <= 100; ++k) {
        const double L = k * 0.2e-3;
        const double d = dsm(th.with({"inv", L, 0.0}), vsg);
        const double inc = incentive(d0, d, 1.0);
        CHECK(d <= prev);
        CHECK(inc >= 0.0);
        CHECK(inc >= prev_inc);
        prev = d;
        prev_inc = inc;
    }
    CHECK(prev < 1e-6 * d0);
    CHECK(prev >= 0.0);
    CHECK_THAT(prev_inc, WithinRel(d0, 1e-5));

    // Same numbers from the convenience wrapper.
    CHECK(dsm(thevenin_at(c.grid, c.sources, "inv", {"inv", 2e-3, 0.0}), vsg) ==
          dsm(th.with({"inv", 2e-3, 0.0}), vsg));
}

TEST_CASE("controller config validation", "[storage]") {
    StorageControllerConfig cfg;
    CHECK_NOTHROW(cfg.validate());
    auto bad = cfg;
    bad.dsm_target = 0.0;
    CHECK_THROWS_AS(bad.validate(), Error);
    bad = cfg;
    bad.dL = 0.0;
    CHECK_THROWS_AS(bad.validate(), Error);
    bad = cfg;
    bad.L_max = cfg.dL / 2.0;
    CHECK_THROWS_AS(bad.validate(), Error);
    bad = cfg;
    bad.rounds = 0;
    CHECK_THROWS_AS(bad.validate(), Error);
    bad = cfg;
    bad.kappa = -1.0;
    CHECK_THROWS_AS(bad.validate(), Error);
    CHECK(detail::step_count(cfg) == 100);
}

TEST_CASE("local loop stops at the first step below target", "[storage]") {
    const auto c = fixtures::stock_single_vsg();
    const auto& vsg = c.sources[1];
    for (double target : {0.3, 0.05, 1e-3, 1e-5}) {
        StorageControllerConfig cfg;
        cfg.dsm_target = target;
        const auto r = stabilize_local("inv", c.grid, c.sources, cfg, -0.1);

        // Dense sweep oracle.
        double expect_L = cfg.L_max;
        for (int k = 0; k <= 100; ++k) {
            const double L = k * cfg.dL;
            if (dsm(thevenin_at(c.grid, c.sources, "inv", {"inv", L, 0.0}), vsg) < target) {
                expect_L = L;
                break;
            }
        }
        CHECK_THAT(r.L_v, WithinAbs(expect_L, 1e-12));
        CHECK(r.dsm < target);
        CHECK(r.converged);
        CHECK(r.dsm_final == r.dsm);
        CHECK(r.incentive == incentive(r.dsm0, r.dsm, cfg.kappa));
    }
}

TEST_CASE("local loop caps at L_max and honours the trigger", "[storage]") {
    const auto c = fixtures::stock_single_vsg();
    StorageControllerConfig cfg;
    cfg.dsm_target = 1e-30;
    cfg.L_max = 3e-3;
    const auto capped = stabilize_local("inv", c.grid, c.sources, cfg, -0.1);
    CHECK(capped.L_v == 3e-3);
    CHECK_FALSE(capped.converged);

    cfg = {};
    const auto idle = stabilize_local("inv", c.grid, c.sources, cfg, 0.2);
    CHECK(idle.L_v == 0.0);
    CHECK(idle.dsm == idle.dsm0);
    CHECK(idle.incentive == 0.0);

    const auto held = stabilize_local("inv", c.grid, c.sources, cfg, 0.2, {}, 1e-3);
    CHECK(held.L_v == 1e-3);
    CHECK(held.dsm < held.dsm0);

    // Resuming from a committed value never lowers it.
    const auto resumed = stabilize_local("inv", c.grid, c.sources, cfg, -0.1, {}, 15e-3);
    CHECK(resumed.L_v >= 15e-3);

    CHECK_THROWS_AS(stabilize_local("sub", c.grid, c.sources, cfg, -0.1), NetworkError);
}

TEST_CASE("DSM of an isolated VSG is zero", "[storage]") {
    std::vector<Node> nodes = {{"sub", NodeKind::substation, {}}, {"inv", NodeKind::junction, {}}};
    GridGraph g(fixtures::tiers(), nodes, {{"sub", "inv", 2, 1.0}});
    const std::vector<SourceParams> s = {make_droop_source("inv", SourceKind::virtual_sg, 0.1, 1.0, fixtures::kTc, 3.0)};
    CHECK(dsm(thevenin_at(g, s, "inv", {"inv", 0.0, 0.0}), s[0]) == 0.0);
}

TEST_CASE("stabilize_all restores damping on the three-source fixture", "[storage]") {
    const auto c = fixtures::three_source();
    StorageControllerConfig cfg;
    const auto r = stabilize_all(c.grid, c.sources, {"inv2", "inv1", "inv1"}, cfg);
    CHECK(r.before.zeta < 0.0);
    CHECK(r.after.zeta > 0.0);
    CHECK(r.rounds_used == 1);
    REQUIRE(r.reports.size() == 2);
    CHECK(r.reports[0].node == "inv1");
    CHECK(r.reports[1].node == "inv2");
    CHECK(r.reports[0].dsm0 > r.reports[1].dsm0);
    for (const auto& rep : r.reports) {
        CHECK(rep.dsm_final < cfg.dsm_target);
        CHECK(rep.incentive >= 0.0);
        CHECK(rep.converged);
    }
    // dsm_final is the metric with every commitment in place.
    for (const auto& rep : r.reports) {
        const auto& vsg = detail::vsg_at(c.sources, rep.node);
        CHECK(rep.dsm_final == dsm(thevenin_at(c.grid, c.sources, rep.node, {rep.node, rep.L_v, 0.0}, r.impedances), vsg));
    }
    for (const auto& vi : r.impedances) CHECK(vi.L_v > 0.0);
    CHECK(assess(c.grid, c.sources, r.impedances).zeta == r.after.zeta);
}

TEST_CASE("stabilize_all edge cases", "[storage]") {
    const auto c = fixtures::three_source();
    StorageControllerConfig cfg;
    const auto none = stabilize_all(c.grid, c.sources, {}, cfg);
    CHECK(none.reports.empty());
    CHECK(none.after == none.before);
    CHECK_THROWS_AS(stabilize_all(c.grid, c.sources, {"subA"}, cfg), NetworkError);

    // Already above trigger: nothing runs, metrics are still reported.
    cfg.damping_trigger = -0.5;
    const auto idle = stabilize_all(c.grid, c.sources, {"inv1"}, cfg);
    CHECK(idle.rounds_used == 0);
    REQUIRE(idle.reports.size() == 1);
    CHECK(idle.reports[0].L_v == 0.0);
    CHECK(idle.reports[0].dsm == idle.reports[0].dsm0);
    CHECK(idle.impedances.empty());

    // A trigger above reach keeps every round busy and L_v never falls.
    cfg.damping_trigger = 0.99;
    cfg.rounds = 3;
    const auto busy = stabilize_all(c.grid, c.sources, {"inv1", "inv2"}, cfg);
    CHECK(busy.rounds_used == 3);
    cfg.rounds = 1;
    const auto once = stabilize_all(c.grid, c.sources, {"inv1", "inv2"}, cfg);
    for (std::size_t k = 0; k < 2; ++k) {
        CHECK(busy.reports[k].L_v >= once.reports[k].L_v);
        CHECK(busy.reports[k].dsm0 == once.reports[k].dsm0);
    }
}
