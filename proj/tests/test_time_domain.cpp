#include <catch_amalgamated.hpp>

#include "fixtures.hpp"
#include "stabstore/storage.hpp"
#include "stabstore/time_domain.hpp"

using namespace stabstore;
using Catch::Matchers::ContainsSubstring;
using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;

namespace {

StateSpace two_state(double sigma, double omega) {
    StateSpace ss;
    ss.A.resize(2, 2);
    ss.A << sigma, omega, -omega, sigma;
    ss.E = Eigen::MatrixXd::Identity(2, 2);
    ss.state_labels = {"x1", "x2"};
    return ss;
}

/// x(t) = A^-1 (exp(A (t - t0)) - I) c for a step input c at t0.
Eigen::Vector2d closed_form(double sigma, double omega, const Eigen::Vector2d& c, double tau) {
    if (tau < 0.0) return Eigen::Vector2d::Zero();
    Eigen::Matrix2d a, ex;
    a << sigma, omega, -omega, sigma;
    const double e = std::exp(sigma * tau);
    ex << e * std::cos(omega * tau), e * std::sin(omega * tau), -e * std::sin(omega * tau), e * std::cos(omega * tau);
    return a.inverse() * (ex - Eigen::Matrix2d::Identity()) * c;
}

SimTrace synthetic(const std::function<double(double)>& f, double dt = 1e-3, double t_end = 3.0) {
    SimTrace tr;
    tr.labels = {"y"};
    tr.signals.resize(1);
    for (std::size_t k = 0; k <= static_cast<std::size_t>(std::llround(t_end / dt)); ++k) {
        const double t = static_cast<double>(k) * dt;
        tr.time.push_back(t);
        tr.signals[0].push_back(f(t));
    }
    return tr;
}

}  // namespace

TEST_CASE("RK4 step response matches the 2x2 closed form", "[time_domain]") {
    const auto ss = two_state(-1.0, 2.0);
    const Eigen::VectorXd b = Eigen::Vector2d(0.0, 1.0);
    DisturbanceSpec d{"", 0.01, 0.2, 3.0, 1e-3};
    const auto tr = simulate_linear(ss, b, d);
    REQUIRE(tr.time.size() == 3001);
    double sq = 0.0;
    for (std::size_t k = 0; k < tr.time.size(); ++k) {
        const auto x = closed_form(-1.0, 2.0, b * 0.01, tr.time[k] - 0.2);
        sq += std::pow(tr.signals[0][k] - x(0), 2) + std::pow(tr.signals[1][k] - x(1), 2);
    }
    CHECK(std::sqrt(sq / static_cast<double>(2 * tr.time.size())) < 1e-6);
    CHECK(tr.labels == std::vector<std::string>{"x1", "x2"});
    CHECK(tr.signal("x1") == tr.signals[0]);

    // Halving dt changes the samples by far less than the tolerance.
    d.dt = 0.5e-3;
    const auto fine = simulate_linear(ss, b, d);
    double diff = 0.0;
    for (std::size_t k = 0; k < tr.time.size(); ++k)
        diff = std::max(diff, std::abs(tr.signals[0][k] - fine.signals[0][2 * k]));
    CHECK(diff < 1e-7);
}

TEST_CASE("zero step gives a zero trace and unstable models grow", "[time_domain]") {
    const Eigen::VectorXd b = Eigen::Vector2d(1.0, 0.0);
    const auto flat = simulate_linear(two_state(-1.0, 2.0), b, {"", 0.0, 0.2, 1.0, 1e-3});
    for (const auto& s : flat.signals)
        for (double v : s) CHECK(v == 0.0);

    const auto grow = simulate_linear(two_state(0.5, 3.0), b, {"", 0.01, 0.2, 6.0, 1e-3});
    double early = 0.0, late = 0.0;
    for (std::size_t k = 0; k < grow.time.size(); ++k) {
        const double v = std::abs(grow.signals[0][k]);
        if (grow.time[k] < 1.5) early = std::max(early, v);
        if (grow.time[k] > 4.5) late = std::max(late, v);
    }
    CHECK(late > 5.0 * early);

    // Nothing moves before the step.
    const auto stepped = simulate_linear(two_state(-1.0, 2.0), b, {"", 0.01, 0.5, 1.0, 1e-3});
    for (std::size_t k = 0; k <= 500; ++k) CHECK(stepped.signals[0][k] == 0.0);
    CHECK(stepped.signals[0][501] != 0.0);
}

TEST_CASE("simulation argument errors", "[time_domain]") {
    const auto ss = two_state(-1.0, 2.0);
    const Eigen::VectorXd b = Eigen::Vector2d(1.0, 0.0);
    CHECK_THROWS_WITH(simulate_linear(ss, b, {"", 0.01, 0.2, 3.0, 0.1}), ContainsSubstring("fastest mode"));
    CHECK_THROWS_AS(simulate_linear(ss, b, {"", 0.01, 0.2, 3.0, 0.0}), NumericError);
    CHECK_THROWS_AS(simulate_linear(ss, b, {"", 0.01, 3.0, 3.0, 1e-3}), NumericError);
    CHECK_THROWS_AS(simulate_linear(ss, b, {"", 0.5, 0.2, 3.0, 1e-3}), NumericError);
    CHECK_THROWS_AS(simulate_linear(ss, Eigen::VectorXd::Zero(3), {"", 0.01, 0.2, 3.0, 1e-3}), NumericError);
    auto singular = ss;
    singular.E(1, 1) = 0.0;
    CHECK_THROWS_WITH(simulate_linear(singular, b, {"", 0.01, 0.2, 3.0, 1e-3}), ContainsSubstring("singular"));
    CHECK_THAT(spectral_radius(ss), WithinRel(std::sqrt(5.0), 1e-12));
}

TEST_CASE("disturbance vector is the derivative of the injections w.r.t. a load step", "[time_domain]") {
    const auto c = fixtures::three_source();
    const std::vector<VirtualImpedance> vis = {{"inv1", 1e-3, 0.0}};
    const auto a = assess_full(c.grid, c.sources, vis);
    const auto net = source_network(c.grid, c.sources, vis, c.grid.omega0());
    const ComplexVector u = phasors(a.op.V, a.op.delta);
    for (const std::string node : {"ldA", "ldB", "inv2"}) {
        const auto b = disturbance_vector(c.grid, c.sources, vis, a, node);
        auto s_of = [&](double dy) {
            auto m = net.model;
            m.add_shunt(c.grid.index_of(node), dy);
            const ComplexMatrix y = reduce_model(m, net.terminals).first;
            return ComplexVector(u.cwiseProduct((y * u).conjugate()));
        };
        const double h = 1e-6;
        const ComplexVector ds = (s_of(h) - s_of(-h)) / (2.0 * h);
        for (std::size_t p = 0; p < a.ss.finite_sources.size(); ++p) {
            const auto i = static_cast<Eigen::Index>(a.ss.finite_sources[p]);
            const double tc = c.sources[a.ss.finite_sources[p]].t_c;
            const auto k = static_cast<Eigen::Index>(3 * p);
            CHECK(b(k) == 0.0);
            CHECK_THAT(b(k + 1), WithinAbs(ds(i).real() / tc, 1e-6 * std::abs(ds(i)) / tc + 1e-12));
            CHECK_THAT(b(k + 2), WithinAbs(ds(i).imag() / tc, 1e-6 * std::abs(ds(i)) / tc + 1e-12));
        }
    }
}

TEST_CASE("grid step response carries voltage signals", "[time_domain]") {
    const auto c = fixtures::stock_single_vsg();
    const auto a = assess_full(c.grid, c.sources);
    DisturbanceSpec d{"ld", 0.01, 0.2, 1.0, 1e-4};
    const auto tr = simulate_step(c.grid, c.sources, {}, a, d);
    CHECK(tr.labels == std::vector<std::string>{"ddelta[inv]", "dPf[inv]", "dQf[inv]", "dV[inv]"});
    const auto& q = tr.signal("dQf[inv]");
    const auto& v = tr.signal("dV[inv]");
    for (std::size_t k = 0; k < q.size(); ++k) CHECK(v[k] == -c.sources[1].k_v * q[k]);
    CHECK_THROWS_AS(tr.signal("nope"), NumericError);

    const auto csv = trace_csv(tr);
    CHECK(csv.rfind("time,ddelta[inv],dPf[inv],dQf[inv],dV[inv]\n0,0,0,0,0\n", 0) == 0);
    CHECK(static_cast<std::size_t>(std::count(csv.begin(), csv.end(), '\n')) == tr.time.size() + 1);
}

TEST_CASE("Prony recovers synthetic damped sinusoids", "[time_domain]") {
    SECTION("single mode after a step") {
        const double sigma = -0.5, omega = 10.0;
        const auto tr = synthetic([&](double t) {
            const double tau = t - 0.2;
            return tau < 0.0 ? 0.0 : std::exp(sigma * tau) * std::cos(omega * tau);
        });
        const double zeta = -sigma / std::hypot(sigma, omega);
        const auto f = prony_analyze(tr, "y", 0.2, {});
        CHECK_THAT(f.zeta, WithinRel(zeta, 0.02));
        CHECK_THAT(f.dominant.imag(), WithinRel(omega, 0.02));
        CHECK(f.residual < 1e-6);
    }
    SECTION("undamped") {
        const auto tr = synthetic([](double t) { return std::cos(7.0 * t); });
        CHECK_THAT(prony_damping(tr, "y", 0.2), WithinAbs(0.0, 1e-6));
    }
    SECTION("two modes, least damped reported") {
        const auto tr = synthetic([](double t) {
            return std::exp(-0.3 * t) * std::cos(6.0 * t) + 2.0 * std::exp(-3.0 * t) * std::cos(20.0 * t + 1.0);
        });
        CHECK_THAT(prony_damping(tr, "y", 0.0), WithinRel(0.3 / std::hypot(0.3, 6.0), 0.02));
    }
    SECTION("settling offset and ramp do not consume model order") {
        const auto tr = synthetic([](double t) { return 0.5 + 0.2 * t + std::exp(-0.4 * t) * std::sin(8.0 * t); });
        CHECK_THAT(prony_damping(tr, "y", 0.0), WithinRel(0.4 / std::hypot(0.4, 8.0), 0.02));
    }
    SECTION("growing oscillation gives negative damping") {
        const auto tr = synthetic([](double t) { return std::exp(0.2 * t) * std::cos(5.0 * t); });
        CHECK_THAT(prony_damping(tr, "y", 0.0), WithinRel(-0.2 / std::hypot(0.2, 5.0), 0.02));
    }
}

TEST_CASE("Prony argument and fit errors", "[time_domain]") {
    PronyConfig bad;
    bad.model_order = 5;
    CHECK_THROWS_AS(bad.validate(), NumericError);
    bad = {};
    bad.fit_tolerance = 0.0;
    CHECK_THROWS_AS(bad.validate(), NumericError);

    CHECK_THROWS_WITH(prony_fit(std::vector<double>(10, 1.0), 1e-3, {}), ContainsSubstring("at least 25"));
    CHECK_THROWS_WITH(prony_fit(std::vector<double>(100, 1.0), 1e-3, {}), ContainsSubstring("no variation"));

    Rng rng(1);
    std::vector<double> noise(400);
    for (auto& v : noise) v = rng.uniform(-1.0, 1.0);
    CHECK_THROWS_WITH(prony_fit(noise, 1e-3, {}), ContainsSubstring("residual"));

    const auto tr = synthetic([](double t) { return std::cos(7.0 * t); }, 1e-3, 1.0);
    PronyConfig long_window;
    long_window.window = 5.0;
    CHECK_THROWS_AS(prony_analyze(tr, "y", 0.2, long_window), NumericError);
    CHECK_THROWS_AS(prony_analyze(tr, "y", 1.0, {}), NumericError);
}

TEST_CASE("Prony damping on linear-model traces agrees with the eigenmodes", "[time_domain]") {
    SECTION("single VSG against an infinite bus") {
        for (int tier : {5, 7}) {
            const auto c = fixtures::stock_single_vsg(tier, 0.1);
            const auto a = assess_full(c.grid, c.sources);
            REQUIRE(std::abs(a.modes.zeta) >= 0.02);
            const auto tr = simulate_step(c.grid, c.sources, {}, a, {"ld", 0.01, 0.2, 3.0, 1e-4});
            CHECK_THAT(prony_damping(tr, "dPf[inv]", 0.2), WithinRel(a.modes.zeta, 0.05));
        }
    }
    SECTION("three-source fixture before and after stabilization") {
        const auto c = fixtures::three_source();
        const auto st = stabilize_all(c.grid, c.sources, {"inv1", "inv2"}, {});
        for (int pass = 0; pass < 2; ++pass) {
            const auto vis = pass ? st.impedances : std::vector<VirtualImpedance>{};
            const auto a = assess_full(c.grid, c.sources, vis);
            REQUIRE(std::abs(a.modes.zeta) >= 0.02);
            const double dt = std::min(1e-3, 0.1 / spectral_radius(a.ss));
            const auto tr = simulate_step(c.grid, c.sources, vis, a, {"ldA", 0.01, 0.2, pass ? 4.0 : 1.0, dt});
            for (const std::string sig : {"dPf[inv2]", "dPf[subA]"})
                CHECK_THAT(prony_damping(tr, sig, 0.2), WithinRel(a.modes.zeta, 0.05));
        }
    }
}
