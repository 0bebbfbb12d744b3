#pragma once

// Independent reference computations shared by the unit and acceptance tests.

#include <algorithm>
#include <cmath>
#include <numbers>
#include <utility>
#include <vector>

#include <Eigen/Eigenvalues>

#include "fixtures.hpp"
#include "stabstore/small_signal.hpp"

namespace oracles {

using namespace stabstore;

template <class M>
double rel_err(const M& a, const M& b) {
    return (a - b).norm() / std::max(b.norm(), 1e-300);
}

inline double rel_err(Complex a, Complex b) { return std::abs(a - b) / std::max(std::abs(b), 1e-300); }

inline std::vector<Complex> sorted(std::vector<Complex> v) {
    std::sort(v.begin(), v.end(), [](Complex a, Complex b) {
        if (a.real() != b.real()) return a.real() < b.real();
        return a.imag() < b.imag();
    });
    return v;
}

inline std::vector<Eigen::Index> random_keep(Rng& rng, Eigen::Index n) {
    const auto k = 1 + static_cast<Eigen::Index>(rng.below(static_cast<std::size_t>(n - 1)));
    auto idx = rng.sample(static_cast<std::size_t>(n), static_cast<std::size_t>(k));
    return {idx.begin(), idx.end()};
}

/// Zero-injection oracle: drive the kept nodes with unit voltages one at a
/// time, solve the full system with those voltages imposed, and read the
/// kept currents.
inline ComplexMatrix zero_injection_oracle(const ComplexMatrix& y, const std::vector<Eigen::Index>& keep) {
    const auto n = y.rows();
    const auto m = static_cast<Eigen::Index>(keep.size());
    ComplexMatrix out(m, m);
    for (Eigen::Index c = 0; c < m; ++c) {
        ComplexMatrix sys = y;
        ComplexVector rhs = ComplexVector::Zero(n);
        for (Eigen::Index k = 0; k < m; ++k) {
            sys.row(keep[static_cast<std::size_t>(k)]).setZero();
            sys(keep[static_cast<std::size_t>(k)], keep[static_cast<std::size_t>(k)]) = 1.0;
            rhs(keep[static_cast<std::size_t>(k)]) = k == c ? 1.0 : 0.0;
        }
        const ComplexVector v = sys.fullPivLu().solve(rhs);
        const ComplexVector i = y * v;
        for (Eigen::Index r = 0; r < m; ++r) out(r, c) = i(keep[static_cast<std::size_t>(r)]);
    }
    return out;
}

/// Nonlinear descriptor residual around an operating point, in deviation
/// variables x = (ddelta, dPf, dQf) per finite source and their rates xd.
struct NonlinearModel {
    const ReducedNetwork& net;
    const std::vector<SourceParams>& src;
    const OperatingPoint& op;
    std::vector<std::size_t> finite;

    ComplexVector injection(const Eigen::VectorXd& x, const Eigen::VectorXd& xd) const {
        const auto m = static_cast<Eigen::Index>(src.size());
        ComplexVector u(m), ud = ComplexVector::Zero(m);
        for (Eigen::Index i = 0; i < m; ++i)
            u(i) = std::polar(op.V[static_cast<std::size_t>(i)], op.delta[static_cast<std::size_t>(i)]);
        for (std::size_t p = 0; p < finite.size(); ++p) {
            const auto i = static_cast<Eigen::Index>(finite[p]);
            const auto k = static_cast<Eigen::Index>(3 * p);
            const double kv = src[finite[p]].k_v;
            const double v = op.V[finite[p]] - kv * x(k + 2);
            const double d = op.delta[finite[p]] + x(k);
            u(i) = std::polar(v, d);
            ud(i) = u(i) * (kJ * xd(k) - kv * xd(k + 2) / v);
        }
        return u.cwiseProduct((net.Y0 * u + net.Y1 * ud).conjugate());
    }

    /// Right-hand side of the filter equations, without the E terms.
    Eigen::VectorXd rhs(const Eigen::VectorXd& x, const Eigen::VectorXd& xd) const {
        const auto s = injection(x, xd);
        Eigen::VectorXd f(x.size());
        for (std::size_t p = 0; p < finite.size(); ++p) {
            const auto& so = src[finite[p]];
            const auto i = static_cast<Eigen::Index>(finite[p]);
            const auto k = static_cast<Eigen::Index>(3 * p);
            const double omega0 = 2.0 * std::numbers::pi * so.f0;
            f(k) = -omega0 * so.k_f * x(k + 1);
            f(k + 1) = (s(i).real() - op.P[finite[p]] - x(k + 1)) / so.t_c;
            f(k + 2) = (s(i).imag() - op.Q[finite[p]] - x(k + 2)) / so.t_c;
        }
        return f;
    }
};

/// Central differences of rhs w.r.t. x (gives A) and xd (gives I - E).
inline std::pair<Eigen::MatrixXd, Eigen::MatrixXd> fd_descriptor(const NonlinearModel& nm, double h = 1e-6) {
    const auto n = static_cast<Eigen::Index>(3 * nm.finite.size());
    Eigen::MatrixXd a(n, n), e = Eigen::MatrixXd::Identity(n, n);
    const Eigen::VectorXd z = Eigen::VectorXd::Zero(n);
    for (Eigen::Index c = 0; c < n; ++c) {
        Eigen::VectorXd dx = z;
        dx(c) = h;
        a.col(c) = (nm.rhs(dx, z) - nm.rhs(-dx, z)) / (2.0 * h);
        e.col(c) -= (nm.rhs(z, dx) - nm.rhs(z, -dx)) / (2.0 * h);
    }
    return {a, e};
}

struct CompanionOracle {
    double delta;                  // VSG angle, branch nearest zero
    std::vector<Complex> eigen;    // sorted
};

/// Single VSG (k_v = 0) on a T7 line to an infinite bus, with its load at
/// the VSG node. Two-bus admittances by hand from the tier table, then the
/// cubic (T_c l + 1)(T_c l^2 + (1 + w0 k_f D) l + w0 k_f K) via its
/// companion matrix.
inline CompanionOracle companion_oracle(const fixtures::Case& c, double length_km) {
    const auto& g = c.grid;
    const auto& vsg = c.sources[1];
    const double w0 = g.omega0();
    const auto& t = g.tier(7);
    const double zb = t.voltage_base * t.voltage_base / g.s_base();
    const double r = length_km * t.r_per_km / zb;
    const double l = length_km * t.x_per_km / w0 / zb;
    const Complex z = r + kJ * w0 * l;
    const Complex y_vs = -1.0 / z;
    const Complex y_vv = 1.0 / z + std::conj(g.node("ld").demand);
    const Complex y1_vv = -l / (z * z);

    // P(delta, ddelta/dt) = G_vv + |Y_vs| cos(delta - theta) - B'_vv ddelta/dt at V = 1.
    const double theta = std::arg(y_vs);
    const double a0 = std::acos(-y_vv.real() / std::abs(y_vs));
    double delta = theta + a0, alt = theta - a0;
    auto wrap = [](double x) { return std::remainder(x, 2.0 * std::numbers::pi); };
    if (std::abs(wrap(alt)) < std::abs(wrap(delta))) delta = alt;
    const double K = -std::abs(y_vs) * std::sin(delta - theta);
    const double D = -y1_vv.imag();

    const double tc = vsg.t_c, wk = w0 * vsg.k_f;
    const double a2 = tc, a1 = 1.0 + wk * D, a00 = wk * K;
    const double c3 = tc * a2, c2 = tc * a1 + a2, c1 = tc * a00 + a1, c0 = a00;
    Eigen::Matrix3d comp = Eigen::Matrix3d::Zero();
    comp(0, 0) = -c2 / c3;
    comp(0, 1) = -c1 / c3;
    comp(0, 2) = -c0 / c3;
    comp(1, 0) = 1.0;
    comp(2, 1) = 1.0;
    Eigen::EigenSolver<Eigen::Matrix3d> es(comp, false);
    return {wrap(delta), sorted({es.eigenvalues().data(), es.eigenvalues().data() + 3})};
}

}  // namespace oracles
