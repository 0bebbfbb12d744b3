#pragma once

// Step response of the linearized model (fixed-step RK4) and Prony damping
// estimation on a single measured signal.

#include <Eigen/Dense>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <complex>
#include <limits>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "stabstore/errors.hpp"
#include "stabstore/network.hpp"
#include "stabstore/small_signal.hpp"

namespace stabstore {

struct DisturbanceSpec {
    std::string node;
    double dP = 0.01;  // pu load step
    double t_step = 0.2;
    double t_end = 3.0;
    double dt = 1e-3;
    double max_step = 0.05;  // |dP| bound for linear validity

    void validate() const {
        if (!(dt > 0.0)) throw NumericError("disturbance: dt must be > 0");
        if (!(t_step >= 0.0 && t_step < t_end)) throw NumericError("disturbance: need 0 <= t_step < t_end");
        if (!(std::abs(dP) <= max_step)) throw NumericError("disturbance: |dP| exceeds the small-signal bound");
    }
};

struct SimTrace {
    std::vector<double> time;
    std::vector<std::string> labels;
    std::vector<std::vector<double>> signals;  // one series per label

    std::size_t index_of(const std::string& label) const {
        auto it = std::find(labels.begin(), labels.end(), label);
        if (it == labels.end()) throw NumericError("trace has no signal '" + label + "'");
        return static_cast<std::size_t>(it - labels.begin());
    }
    const std::vector<double>& signal(const std::string& label) const { return signals[index_of(label)]; }
};

/// Input vector b of E x' = A x + b dP for a load step of 1 pu at `node`.
/// The step perturbs the reduced Y0 by a a^T, which changes each source's
/// injection by u_i conj(a_i sum_k a_k u_k).
inline Eigen::VectorXd disturbance_vector(const GridGraph& g, const std::vector<SourceParams>& sources,
                                          const std::vector<VirtualImpedance>& vis, const Assessment& a,
                                          const std::string& node) {
    const ComplexVector coupling = load_step_coupling(g, sources, vis, node);
    const ComplexVector u = phasors(a.op.V, a.op.delta);
    const Complex common = (coupling.array() * u.array()).sum();
    Eigen::VectorXd b = Eigen::VectorXd::Zero(a.ss.A.rows());
    for (std::size_t p = 0; p < a.ss.finite_sources.size(); ++p) {
        const auto i = static_cast<Eigen::Index>(a.ss.finite_sources[p]);
        const auto& src = sources[static_cast<std::size_t>(i)];
        const Complex ds = u(i) * std::conj(coupling(i) * common);
        b(3 * static_cast<Eigen::Index>(p) + 1) = ds.real() / src.t_c;
        b(3 * static_cast<Eigen::Index>(p) + 2) = ds.imag() / src.t_c;
    }
    return b;
}

/// Largest |lambda| of the pencil (A, E); bounds the admissible RK4 step.
inline double spectral_radius(const StateSpace& ss) {
    if (ss.A.rows() == 0) return 0.0;
    Eigen::FullPivLU<Eigen::MatrixXd> lu(ss.E);
    if (!lu.isInvertible()) throw NumericError("descriptor matrix E is singular");
    const Eigen::MatrixXd m = lu.solve(ss.A);
    Eigen::EigenSolver<Eigen::MatrixXd> es(m, false);
    if (es.info() != Eigen::Success) throw NumericError("eigensolver failed");
    return es.eigenvalues().cwiseAbs().maxCoeff();
}

/// Integrates E x' = A x + b dP H(t - t_step) from rest with fixed-step RK4.
/// The input is held per step, so t_step is snapped to the sample grid.
inline SimTrace simulate_linear(const StateSpace& ss, const Eigen::VectorXd& b, const DisturbanceSpec& dist) {
    dist.validate();
    const auto n = ss.A.rows();
    if (b.size() != n) throw NumericError("simulate: input vector size mismatch");
    Eigen::FullPivLU<Eigen::MatrixXd> lu(ss.E);
    if (!lu.isInvertible()) throw NumericError("descriptor matrix E is singular");
    const Eigen::MatrixXd m = lu.solve(ss.A);
    const Eigen::VectorXd c = lu.solve(b) * dist.dP;
    const double rho = spectral_radius(ss);
    if (rho > 0.0 && dist.dt > 0.1 / rho) {
        std::ostringstream os;
        os << "dt = " << dist.dt << " s does not resolve the fastest mode (need dt <= " << 0.1 / rho << " s)";
        throw NumericError(os.str());
    }

    const auto steps = static_cast<std::size_t>(std::llround(dist.t_end / dist.dt));
    const auto k_step = static_cast<std::size_t>(std::llround(dist.t_step / dist.dt));
    SimTrace tr;
    tr.labels = ss.state_labels;
    if (tr.labels.size() != static_cast<std::size_t>(n)) {
        tr.labels.clear();
        for (Eigen::Index k = 0; k < n; ++k) tr.labels.push_back("x" + std::to_string(k));
    }
    tr.signals.assign(static_cast<std::size_t>(n), std::vector<double>(steps + 1, 0.0));
    tr.time.resize(steps + 1);

    Eigen::VectorXd x = Eigen::VectorXd::Zero(n);
    const double h = dist.dt;
    for (std::size_t k = 0; k <= steps; ++k) {
        tr.time[k] = static_cast<double>(k) * h;
        for (Eigen::Index j = 0; j < n; ++j) tr.signals[static_cast<std::size_t>(j)][k] = x(j);
        if (k == steps) break;
        const bool on = k >= k_step;
        auto f = [&](const Eigen::VectorXd& y) -> Eigen::VectorXd {
            Eigen::VectorXd d = m * y;
            if (on) d += c;
            return d;
        };
        const Eigen::VectorXd k1 = f(x);
        const Eigen::VectorXd k2 = f(x + 0.5 * h * k1);
        const Eigen::VectorXd k3 = f(x + 0.5 * h * k2);
        const Eigen::VectorXd k4 = f(x + h * k3);
        x += (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    }
    return tr;
}

/// Load-step response of an assessed system. Adds dV[node] = -k_v dQf.
inline SimTrace simulate_step(const GridGraph& g, const std::vector<SourceParams>& sources,
                              const std::vector<VirtualImpedance>& vis, const Assessment& a,
                              const DisturbanceSpec& dist) {
    const auto b = disturbance_vector(g, sources, vis, a, dist.node);
    auto tr = simulate_linear(a.ss, b, dist);
    for (std::size_t p = 0; p < a.ss.finite_sources.size(); ++p) {
        const auto& src = sources[a.ss.finite_sources[p]];
        std::vector<double> dv = tr.signals[3 * p + 2];
        for (auto& v : dv) v = -src.k_v * v + 0.0;
        tr.labels.push_back("dV[" + src.node + "]");
        tr.signals.push_back(std::move(dv));
    }
    return tr;
}

inline std::string trace_csv(const SimTrace& tr) {
    std::string out = "time";
    for (const auto& l : tr.labels) out += "," + l;
    out += '\n';
    char buf[64];
    auto put = [&](double x) { out.append(buf, std::to_chars(buf, buf + sizeof buf, x).ptr); };
    for (std::size_t k = 0; k < tr.time.size(); ++k) {
        put(tr.time[k]);
        for (const auto& s : tr.signals) {
            out += ',';
            put(s[k]);
        }
        out += '\n';
    }
    return out;
}

// ---------------------------------------------------------------------------
// Prony analysis
// ---------------------------------------------------------------------------

struct PronyConfig {
    int model_order = 6;
    double window = 0.0;          // s after the fit start; 0 takes the rest of the trace
    double skip = 0.0;            // s between t_step and the fit start
    std::size_t samples = 240;    // target count after decimation
    double fit_tolerance = 0.05;  // max relative RMS residual of the fit
    double amplitude_floor = 1e-3;  // modes below this share of the peak amplitude are ignored
    double rank_tolerance = 1e-10;  // relative singular-value cut in the prediction solve

    void validate() const {
        if (model_order < 2 || model_order % 2 != 0) throw NumericError("prony: model_order must be even and >= 2");
        if (window < 0.0 || skip < 0.0) throw NumericError("prony: window and skip must be >= 0");
        if (!(fit_tolerance > 0.0)) throw NumericError("prony: fit_tolerance must be > 0");
        if (samples < 4 * static_cast<std::size_t>(model_order) + 1)
            throw NumericError("prony: samples must be >= 4 * model_order + 1");
    }
};

struct PronyMode {
    Complex s;          // continuous-time pole, 1/s
    double amplitude;   // |residue|
};

struct PronyFit {
    std::vector<PronyMode> modes;  // significant modes, DC excluded, by decreasing real part
    Complex dominant{0.0, 0.0};
    double zeta = 1.0;
    double residual = 0.0;  // relative RMS
    double sample_time = 0.0;
};

/// Fits sum_k r_k z_k^n to uniformly spaced samples. The series is
/// differenced first so that a settled offset (or a ramp from a free angle
/// reference) does not consume model order.
inline PronyFit prony_fit(const std::vector<double>& y_raw, double ts, const PronyConfig& cfg) {
    cfg.validate();
    const int p = cfg.model_order;
    if (y_raw.size() < 4 * static_cast<std::size_t>(p) + 1)
        throw NumericError("prony: need at least " + std::to_string(4 * p + 1) + " samples for order " +
                           std::to_string(p));
    std::vector<double> y(y_raw.size() - 1);
    for (std::size_t k = 0; k + 1 < y_raw.size(); ++k) y[k] = y_raw[k + 1] - y_raw[k];
    const auto n = static_cast<Eigen::Index>(y.size());
    const double scale = Eigen::Map<const Eigen::VectorXd>(y.data(), n).cwiseAbs().maxCoeff();
    if (!(scale > 0.0) || !std::isfinite(scale)) throw NumericError("prony: signal has no variation");

    // Forward linear prediction y[k] = sum_i c_i y[k - i].
    Eigen::MatrixXd h(n - p, p);
    Eigen::VectorXd rhs(n - p);
    for (Eigen::Index r = 0; r < n - p; ++r) {
        for (Eigen::Index i = 0; i < p; ++i) h(r, i) = y[static_cast<std::size_t>(r + p - 1 - i)] / scale;
        rhs(r) = y[static_cast<std::size_t>(r + p)] / scale;
    }
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(h, Eigen::ComputeThinU | Eigen::ComputeThinV);
    svd.setThreshold(cfg.rank_tolerance);
    if (svd.rank() == 0) throw NumericError("prony: prediction matrix is numerically zero");
    const Eigen::VectorXd coef = svd.solve(rhs);

    // Roots of z^p - c_1 z^(p-1) - ... - c_p via the companion matrix.
    Eigen::MatrixXd comp = Eigen::MatrixXd::Zero(p, p);
    for (Eigen::Index i = 0; i < p; ++i) comp(0, i) = coef(i);
    for (Eigen::Index i = 1; i < p; ++i) comp(i, i - 1) = 1.0;
    Eigen::EigenSolver<Eigen::MatrixXd> es(comp, false);
    if (es.info() != Eigen::Success) throw NumericError("prony: root finding failed");
    const Eigen::VectorXcd z = es.eigenvalues();

    // Residues by least squares on the Vandermonde system.
    Eigen::MatrixXcd vdm(n, p);
    for (Eigen::Index i = 0; i < p; ++i) {
        Complex zk{1.0, 0.0};
        for (Eigen::Index r = 0; r < n; ++r) {
            vdm(r, i) = zk;
            zk *= z(i);
        }
    }
    const Eigen::VectorXcd yc = Eigen::Map<const Eigen::VectorXd>(y.data(), n).cast<Complex>() / scale;
    const Eigen::VectorXcd amp = vdm.completeOrthogonalDecomposition().solve(yc);
    const Eigen::VectorXcd fit = vdm * amp;

    PronyFit out;
    out.sample_time = ts;
    out.residual = (fit - yc).norm() / std::max(yc.norm(), std::numeric_limits<double>::min());
    if (!(out.residual <= cfg.fit_tolerance)) {
        std::ostringstream os;
        os << "prony: fit residual " << out.residual << " exceeds tolerance " << cfg.fit_tolerance;
        throw NumericError(os.str());
    }
    double peak = 0.0;
    for (Eigen::Index i = 0; i < p; ++i) peak = std::max(peak, std::abs(amp(i)));
    const double dc_tol = 1e-6 / ts;
    for (Eigen::Index i = 0; i < p; ++i) {
        if (std::abs(z(i)) == 0.0) continue;
        const Complex s = std::log(z(i)) / ts;
        if (std::abs(s) < dc_tol) continue;
        if (std::abs(amp(i)) < cfg.amplitude_floor * peak) continue;
        out.modes.push_back({s, std::abs(amp(i)) * scale});
    }
    if (out.modes.empty()) throw NumericError("prony: no significant oscillatory content");
    std::sort(out.modes.begin(), out.modes.end(), [](const PronyMode& a, const PronyMode& b) {
        if (a.s.real() != b.s.real()) return a.s.real() > b.s.real();
        return a.s.imag() > b.s.imag();
    });

    // Same rule as the eigenvalue assessor: oscillatory pairs first.
    const PronyMode* best = nullptr;
    for (const auto& m : out.modes)
        if (std::abs(m.s.imag()) > 1e-9 * std::max(1.0, std::abs(m.s)) && (!best || m.s.real() > best->s.real()))
            best = &m;
    const PronyMode& top = out.modes.front();
    if (!best || (top.s.real() >= 0.0 && top.s.real() > best->s.real())) best = &top;
    out.dominant = Complex(best->s.real(), std::abs(best->s.imag()));
    out.zeta = std::clamp(-out.dominant.real() / std::abs(out.dominant), -1.0, 1.0);
    return out;
}

/// Damping ratio of the least-damped mode in one signal of a trace, fitted
/// on the post-step window.
inline PronyFit prony_analyze(const SimTrace& tr, const std::string& signal, double t_step, const PronyConfig& cfg) {
    cfg.validate();
    if (tr.time.size() < 2) throw NumericError("prony: trace too short");
    const auto& y = tr.signal(signal);
    const double dt = tr.time[1] - tr.time[0];
    const double t0 = t_step + cfg.skip;
    const double t1 = cfg.window > 0.0 ? t0 + cfg.window : tr.time.back();
    if (t1 > tr.time.back() + 0.5 * dt) throw NumericError("prony: window extends past the end of the trace");
    auto first = static_cast<std::size_t>(std::ceil(t0 / dt - 1e-9));
    auto last = std::min(tr.time.size() - 1, static_cast<std::size_t>(std::floor(t1 / dt + 1e-9)));
    if (first >= last) throw NumericError("prony: empty fit window");
    const std::size_t avail = last - first + 1;
    const std::size_t stride = std::max<std::size_t>(1, avail / std::max<std::size_t>(cfg.samples, 1));
    std::vector<double> s;
    for (std::size_t k = first; k <= last; k += stride) s.push_back(y[k]);
    return prony_fit(s, dt * static_cast<double>(stride), cfg);
}

inline double prony_damping(const SimTrace& tr, const std::string& signal, double t_step, const PronyConfig& cfg = {}) {
    return prony_analyze(tr, signal, t_step, cfg).zeta;
}

}  // namespace stabstore
