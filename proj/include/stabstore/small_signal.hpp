#pragma once

// Droop equilibrium, linearized descriptor model and modal analysis of a
// mixed fleet of rotating and virtual synchronous generators.
//
// Per finite-droop source i (inner voltage/current loops ideal):
//   d(delta_i)/dt = -omega0 k_f,i dP_f,i
//   T_c dP_f,i/dt = dP_i - dP_f,i
//   T_c dQ_f,i/dt = dQ_i - dQ_f,i,         dV_i = -k_v,i dQ_f,i
// with S_i = u_i conj((Y0 u + Y1 du/dt)_i), u_i = V_i exp(j delta_i).

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <optional>
#include <string>
#include <vector>

#include "stabstore/errors.hpp"
#include "stabstore/network.hpp"
#include "stabstore/scenario.hpp"

namespace stabstore {

struct OperatingPoint {
    std::vector<double> V;      // pu
    std::vector<double> delta;  // rad, reference source at 0
    double f_star = 50.0;       // Hz
    std::vector<double> P;      // pu
    std::vector<double> Q;      // pu
    int iterations = 0;
    double residual = 0.0;
};

struct PowerflowOptions {
    double tol = 1e-10;
    int max_iter = 50;
};

/// Partial derivatives of complex injections S_i w.r.t. angles and magnitudes.
struct InjectionJacobian {
    Eigen::MatrixXd dP_ddelta, dP_dV, dQ_ddelta, dQ_dV;
};

inline ComplexVector phasors(const std::vector<double>& V, const std::vector<double>& delta) {
    ComplexVector u(static_cast<Eigen::Index>(V.size()));
    for (std::size_t i = 0; i < V.size(); ++i) u(static_cast<Eigen::Index>(i)) = std::polar(V[i], delta[i]);
    return u;
}

/// S = u .* conj(Y u)
inline ComplexVector injections(const ComplexMatrix& y, const ComplexVector& u) {
    return u.cwiseProduct((y * u).conjugate());
}

/// dS_i/d(delta_k) = j (delta_ik S_i - T_ik), dS_i/dV_k = (delta_ik S_i + T_ik) / V_k,
/// where T_ik = u_i conj(Y_ik u_k).
inline InjectionJacobian injection_jacobian(const ComplexMatrix& y, const ComplexVector& u) {
    const auto n = u.size();
    const ComplexVector s = injections(y, u);
    InjectionJacobian j{Eigen::MatrixXd(n, n), Eigen::MatrixXd(n, n), Eigen::MatrixXd(n, n), Eigen::MatrixXd(n, n)};
    for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index k = 0; k < n; ++k) {
            const Complex t = u(i) * std::conj(y(i, k) * u(k));
            const Complex diag = i == k ? s(i) : Complex{};
            const Complex d_delta = kJ * (diag - t);
            const Complex d_v = (diag + t) / std::abs(u(k));
            j.dP_ddelta(i, k) = d_delta.real();
            j.dQ_ddelta(i, k) = d_delta.imag();
            j.dP_dV(i, k) = d_v.real();
            j.dQ_dV(i, k) = d_v.imag();
        }
    }
    return j;
}

namespace detail {

struct FleetIndex {
    std::vector<std::size_t> finite;
    std::vector<std::size_t> fixed;  // infinite buses
};

inline FleetIndex index_fleet(const std::vector<SourceParams>& sources) {
    FleetIndex f;
    for (std::size_t i = 0; i < sources.size(); ++i)
        (sources[i].finite_droop() ? f.finite : f.fixed).push_back(i);
    return f;
}

}  // namespace detail

/// Newton solve of network injections = droop injections. Unknowns are the
/// finite sources' angles (minus the reference) and magnitudes, plus the
/// common frequency when no infinite bus pins it.
inline OperatingPoint droop_powerflow(const ReducedNetwork& net, const std::vector<SourceParams>& sources,
                                      const PowerflowOptions& opt = {}) {
    const auto m = sources.size();
    if (m == 0) throw EquilibriumError("no sources", 0.0);
    if (static_cast<std::size_t>(net.Y0.rows()) != m) throw EquilibriumError("network/fleet size mismatch", 0.0);
    const auto fleet = detail::index_fleet(sources);
    const bool anchored = !fleet.fixed.empty();
    const double f0 = sources.front().f0;

    OperatingPoint op;
    op.V.resize(m);
    op.delta.assign(m, 0.0);
    op.f_star = f0;
    for (std::size_t i = 0; i < m; ++i) op.V[i] = sources[i].v0;

    const std::size_t nf = fleet.finite.size();
    // Unknown layout: [angles of finite sources except reference | V of finite | w]
    std::vector<std::size_t> angle_src;
    for (std::size_t p = 0; p < nf; ++p)
        if (anchored || p > 0) angle_src.push_back(fleet.finite[p]);
    const auto na = static_cast<Eigen::Index>(angle_src.size());
    const auto nv = static_cast<Eigen::Index>(nf);
    const Eigen::Index nx = na + nv + (anchored ? 0 : 1);
    double w = 0.0;  // (f0 - f*) / f0

    auto residual = [&](Eigen::VectorXd& f) {
        const ComplexVector s = injections(net.Y0, phasors(op.V, op.delta));
        f.resize(2 * nv);
        for (Eigen::Index p = 0; p < nv; ++p) {
            const auto i = fleet.finite[static_cast<std::size_t>(p)];
            const auto& src = sources[i];
            f(p) = s(static_cast<Eigen::Index>(i)).real() - w / src.k_f;
            // k_v = 0 holds the terminal voltage at its set point.
            f(nv + p) = src.k_v == 0.0 ? op.V[i] - src.v0
                                       : s(static_cast<Eigen::Index>(i)).imag() - (src.v0 - op.V[i]) / src.k_v;
        }
    };

    Eigen::VectorXd f;
    if (nf > 0) {
        residual(f);
        int it = 0;
        for (; f.cwiseAbs().maxCoeff() >= opt.tol; ++it) {
            if (it >= opt.max_iter) {
                throw EquilibriumError("droop power flow did not converge after " + std::to_string(opt.max_iter) +
                                           " iterations (residual " + std::to_string(f.cwiseAbs().maxCoeff()) + ")",
                                       f.cwiseAbs().maxCoeff());
            }
            const auto jac = injection_jacobian(net.Y0, phasors(op.V, op.delta));
            Eigen::MatrixXd J = Eigen::MatrixXd::Zero(2 * nv, nx);
            for (Eigen::Index p = 0; p < nv; ++p) {
                const auto i = static_cast<Eigen::Index>(fleet.finite[static_cast<std::size_t>(p)]);
                const auto& src = sources[static_cast<std::size_t>(i)];
                for (Eigen::Index a = 0; a < na; ++a) {
                    const auto k = static_cast<Eigen::Index>(angle_src[static_cast<std::size_t>(a)]);
                    J(p, a) = jac.dP_ddelta(i, k);
                    J(nv + p, a) = jac.dQ_ddelta(i, k);
                }
                for (Eigen::Index q = 0; q < nv; ++q) {
                    const auto k = static_cast<Eigen::Index>(fleet.finite[static_cast<std::size_t>(q)]);
                    J(p, na + q) = jac.dP_dV(i, k);
                    J(nv + p, na + q) = jac.dQ_dV(i, k);
                }
                if (src.k_v == 0.0) {
                    J.row(nv + p).setZero();
                    J(nv + p, na + p) = 1.0;
                } else {
                    J(nv + p, na + p) += 1.0 / src.k_v;
                }
                if (!anchored) J(p, na + nv) = -1.0 / src.k_f;
            }
            const Eigen::VectorXd dx = J.fullPivLu().solve(-f);
            if (!dx.allFinite()) throw EquilibriumError("singular power-flow Jacobian", f.cwiseAbs().maxCoeff());

            const auto save_v = op.V;
            const auto save_d = op.delta;
            const double save_w = w;
            const double f_norm = f.norm();
            double step = 1.0;
            for (int ls = 0; ls < 12; ++ls, step *= 0.5) {
                op.V = save_v;
                op.delta = save_d;
                w = save_w;
                for (Eigen::Index a = 0; a < na; ++a) op.delta[angle_src[static_cast<std::size_t>(a)]] += step * dx(a);
                for (Eigen::Index q = 0; q < nv; ++q) op.V[fleet.finite[static_cast<std::size_t>(q)]] += step * dx(na + q);
                if (!anchored) w += step * dx(na + nv);
                if (std::any_of(op.V.begin(), op.V.end(), [](double v) { return !(v > 0.0); })) continue;
                residual(f);
                if (f.norm() < f_norm) break;
            }
            if (std::any_of(op.V.begin(), op.V.end(), [](double v) { return !(v > 0.0); }))
                throw EquilibriumError("voltage collapse during power flow", f_norm);
        }
        op.iterations = it;
        op.residual = f.cwiseAbs().maxCoeff();
    }
    op.f_star = f0 * (1.0 - w);
    const ComplexVector s = injections(net.Y0, phasors(op.V, op.delta));
    op.P.resize(m);
    op.Q.resize(m);
    for (std::size_t i = 0; i < m; ++i) {
        op.P[i] = s(static_cast<Eigen::Index>(i)).real();
        op.Q[i] = s(static_cast<Eigen::Index>(i)).imag();
    }
    return op;
}

struct StateSpace {
    Eigen::MatrixXd E;
    Eigen::MatrixXd A;
    std::vector<std::string> state_labels;
    std::vector<std::size_t> finite_sources;  // fleet index of each state triple
    bool anchored = false;                    // an infinite bus fixes the angle reference
};

struct LinearizeOptions {
    bool use_dynamic_admittance = true;
};

inline StateSpace linearize(const ReducedNetwork& net, const std::vector<SourceParams>& sources,
                            const OperatingPoint& op, const LinearizeOptions& opt = {}) {
    const auto m = static_cast<Eigen::Index>(sources.size());
    if (net.Y0.rows() != m || net.Y1.rows() != m || static_cast<Eigen::Index>(op.V.size()) != m)
        throw NumericError("linearize: dimension mismatch between network, fleet and operating point");
    const auto fleet = detail::index_fleet(sources);
    const auto nf = static_cast<Eigen::Index>(fleet.finite.size());
    const ComplexVector u = phasors(op.V, op.delta);
    const auto jac = injection_jacobian(net.Y0, u);

    StateSpace ss;
    ss.E = Eigen::MatrixXd::Identity(3 * nf, 3 * nf);
    ss.A = Eigen::MatrixXd::Zero(3 * nf, 3 * nf);
    ss.finite_sources = fleet.finite;
    ss.anchored = !fleet.fixed.empty();
    for (Eigen::Index p = 0; p < nf; ++p) {
        const auto& node = sources[fleet.finite[static_cast<std::size_t>(p)]].node;
        ss.state_labels.push_back("ddelta[" + node + "]");
        ss.state_labels.push_back("dPf[" + node + "]");
        ss.state_labels.push_back("dQf[" + node + "]");
    }

    for (Eigen::Index p = 0; p < nf; ++p) {
        const auto i = static_cast<Eigen::Index>(fleet.finite[static_cast<std::size_t>(p)]);
        const auto& src = sources[static_cast<std::size_t>(i)];
        const double omega0 = 2.0 * std::numbers::pi * src.f0;
        const double inv_tc = 1.0 / src.t_c;
        const Eigen::Index rd = 3 * p, rp = 3 * p + 1, rq = 3 * p + 2;

        ss.A(rd, rp) = -omega0 * src.k_f;
        ss.A(rp, rp) = -inv_tc;
        ss.A(rq, rq) = -inv_tc;
        for (Eigen::Index q = 0; q < nf; ++q) {
            const auto k = static_cast<Eigen::Index>(fleet.finite[static_cast<std::size_t>(q)]);
            const double kv = sources[static_cast<std::size_t>(k)].k_v;
            const Eigen::Index cd = 3 * q, cq = 3 * q + 2;
            ss.A(rp, cd) += inv_tc * jac.dP_ddelta(i, k);
            ss.A(rq, cd) += inv_tc * jac.dQ_ddelta(i, k);
            ss.A(rp, cq) -= inv_tc * kv * jac.dP_dV(i, k);
            ss.A(rq, cq) -= inv_tc * kv * jac.dQ_dV(i, k);
            if (opt.use_dynamic_admittance) {
                // Rate terms: dS_i += -j T1_ik d(delta_k)/dt + T1_ik / V_k dV_k/dt
                const Complex t1 = u(i) * std::conj(net.Y1(i, k) * u(k));
                const Complex d_delta = -kJ * t1;
                const Complex d_v = t1 / std::abs(u(k));
                ss.E(rp, cd) -= inv_tc * d_delta.real();
                ss.E(rq, cd) -= inv_tc * d_delta.imag();
                ss.E(rp, cq) += inv_tc * kv * d_v.real();
                ss.E(rq, cq) += inv_tc * kv * d_v.imag();
            }
        }
    }
    return ss;
}

struct ModeReport {
    std::vector<Complex> eigenvalues;  // all finite eigenvalues, sorted
    Complex dominant{0.0, 0.0};
    double zeta = 1.0;
    bool stable = true;
    std::size_t retained = 0;
    std::size_t discarded = 0;  // near-zero modes removed
    std::vector<std::string> warnings;

    bool operator==(const ModeReport&) const = default;
};

namespace detail {

inline bool mode_order(const Complex& a, const Complex& b) {
    if (a.real() != b.real()) return a.real() > b.real();
    return a.imag() > b.imag();
}

inline double damping_ratio(const Complex& l) {
    const double mag = std::abs(l);
    if (mag == 0.0) return 0.0;
    return std::clamp(-l.real() / mag, -1.0, 1.0);
}

}  // namespace detail

/// Roots of det(lambda E - A) = 0. Near-zero modes (the angle-reference
/// freedom) are dropped before the dominant mode is chosen.
inline ModeReport eigenmodes(const StateSpace& ss, double zero_tol = 1e-8) {
    ModeReport r;
    const auto n = ss.A.rows();
    if (n == 0) return r;

    std::vector<Complex> all;
    std::size_t infinite = 0;
    if (ss.E.isIdentity(0.0)) {
        Eigen::EigenSolver<Eigen::MatrixXd> es(ss.A, false);
        if (es.info() != Eigen::Success) throw NumericError("eigensolver failed");
        for (Eigen::Index k = 0; k < n; ++k) all.push_back(es.eigenvalues()(k));
    } else {
        Eigen::GeneralizedEigenSolver<Eigen::MatrixXd> ges(ss.A, ss.E, false);
        if (ges.info() != Eigen::Success) throw NumericError("generalized eigensolver failed");
        const auto& alphas = ges.alphas();
        const auto& betas = ges.betas();
        const double scale = ss.E.cwiseAbs().maxCoeff();
        for (Eigen::Index k = 0; k < n; ++k) {
            if (std::abs(betas(k)) <= 1e-14 * scale) {
                ++infinite;
                continue;
            }
            all.push_back(alphas(k) / betas(k));
        }
    }
    if (infinite > 0) r.warnings.push_back(std::to_string(infinite) + " infinite eigenvalue(s): E is singular");
    std::sort(all.begin(), all.end(), detail::mode_order);
    r.eigenvalues = all;

    std::vector<Complex> kept;
    for (const auto& l : all) {
        if (std::abs(l) < zero_tol) ++r.discarded;
        else kept.push_back(l);
    }
    const std::size_t expected = ss.anchored ? 0 : 1;
    if (r.discarded != expected) {
        r.warnings.push_back("degenerate model: " + std::to_string(r.discarded) + " near-zero mode(s), expected " +
                             std::to_string(expected));
    }
    r.retained = kept.size();
    if (kept.empty()) return r;

    // The dominant mode is the oscillatory pair with the largest real part;
    // among ties the larger |Im|. A real mode takes over only when it is
    // non-decaying and beyond every pair, or when no pair exists.
    auto pick = [](const std::vector<Complex>& modes) {
        Complex best = modes.front();
        for (const auto& l : modes) {
            const double tol = 1e-12 * std::max(1.0, std::abs(best.real()));
            if (l.real() > best.real() + tol ||
                (std::abs(l.real() - best.real()) <= tol && std::abs(l.imag()) > std::abs(best.imag()))) {
                best = l;
            }
        }
        return best;
    };
    std::vector<Complex> pairs;
    for (const auto& l : kept)
        if (std::abs(l.imag()) > 1e-9 * std::max(1.0, std::abs(l))) pairs.push_back(l);
    const Complex top = pick(kept);
    Complex best = top;
    if (!pairs.empty()) {
        best = pick(pairs);
        if (top.real() >= 0.0 && top.real() > best.real()) best = top;
    }
    r.dominant = Complex(best.real(), std::abs(best.imag()));
    r.zeta = detail::damping_ratio(r.dominant);
    r.stable = r.dominant.real() < 0.0;
    return r;
}

struct AssessOptions {
    bool use_dynamic_admittance = true;
    double zero_tol = 1e-8;
    PowerflowOptions powerflow{};
};

/// Every intermediate of one assessment.
struct Assessment {
    ReducedNetwork network;
    OperatingPoint op;
    StateSpace ss;
    ModeReport modes;
};

/// build -> reduce -> power flow -> linearize -> eigenmodes.
inline Assessment assess_full(const GridGraph& g, const std::vector<SourceParams>& sources,
                              const std::vector<VirtualImpedance>& vis = {}, const AssessOptions& opt = {}) {
    Assessment a;
    try {
        a.network = reduce_network(g, sources, vis);
    } catch (const Error& e) {
        throw StageError("reduce", e.what());
    }
    try {
        a.op = droop_powerflow(a.network, sources, opt.powerflow);
    } catch (const Error& e) {
        throw StageError("powerflow", e.what());
    }
    try {
        a.ss = linearize(a.network, sources, a.op, {opt.use_dynamic_admittance});
    } catch (const Error& e) {
        throw StageError("linearize", e.what());
    }
    try {
        a.modes = eigenmodes(a.ss, opt.zero_tol);
    } catch (const Error& e) {
        throw StageError("eigen", e.what());
    }
    return a;
}

inline ModeReport assess(const GridGraph& g, const std::vector<SourceParams>& sources,
                         const std::vector<VirtualImpedance>& vis = {}, const AssessOptions& opt = {}) {
    return assess_full(g, sources, vis, opt).modes;
}

}  // namespace stabstore
