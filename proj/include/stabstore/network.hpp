#pragma once

// Per-unit admittance matrices in the rotating frame, Kron reduction onto
// source terminals, virtual impedances and Thevenin equivalents.
//
// A series element R + sL (physical) seen in a frame rotating at omega0 has
// impedance Z(s) = R + (s + j omega0) L. The static admittance is evaluated
// at s = 0, the dynamic admittance is dY/ds at s = 0.

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <Eigen/SparseLU>

#include <algorithm>
#include <cmath>
#include <complex>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "stabstore/errors.hpp"
#include "stabstore/grid.hpp"
#include "stabstore/scenario.hpp"

namespace stabstore {

using ComplexMatrix = Eigen::MatrixXcd;
using ComplexVector = Eigen::VectorXcd;
using SparseComplexMatrix = Eigen::SparseMatrix<Complex>;

inline constexpr Complex kJ{0.0, 1.0};

/// Emulated series output impedance of a VSG, physical units.
struct VirtualImpedance {
    std::string node;
    double L_v = 0.0;  // H
    double R_v = 0.0;  // ohm

    bool is_zero() const noexcept { return L_v == 0.0 && R_v == 0.0; }
};

/// Series R-L element between two network nodes, per unit (r in pu, l in pu*s).
struct SeriesElement {
    std::size_t a;
    std::size_t b;
    double r;
    double l;
};

/// Flat element list of the per-unit network; matrices are stamped on demand.
class NetworkModel {
public:
    explicit NetworkModel(double omega0) : omega0_(omega0) {}

    double omega0() const noexcept { return omega0_; }
    std::size_t size() const noexcept { return labels_.size(); }
    const std::vector<std::string>& labels() const noexcept { return labels_; }
    const std::vector<SeriesElement>& series() const noexcept { return series_; }
    const std::vector<std::pair<std::size_t, Complex>>& shunts() const noexcept { return shunts_; }

    std::size_t add_node(std::string label) {
        labels_.push_back(std::move(label));
        return labels_.size() - 1;
    }

    void add_series(std::size_t a, std::size_t b, double r, double l) {
        if (!(r >= 0.0) || !(l >= 0.0) || (r == 0.0 && l == 0.0))
            throw NetworkError("zero or negative impedance between '" + labels_[a] + "' and '" + labels_[b] + "'");
        series_.push_back({a, b, r, l});
    }

    /// Static shunt admittance to ground (constant-impedance load).
    void add_shunt(std::size_t a, Complex y) { shunts_.emplace_back(a, y); }

    Complex element_admittance(const SeriesElement& e, Complex s) const {
        return 1.0 / (e.r + (s + kJ * omega0_) * e.l);
    }

    Complex element_admittance_derivative(const SeriesElement& e) const {
        const Complex z = e.r + kJ * omega0_ * e.l;
        return -e.l / (z * z);
    }

    ComplexMatrix admittance(Complex s = 0.0) const {
        ComplexMatrix y = ComplexMatrix::Zero(static_cast<Eigen::Index>(size()), static_cast<Eigen::Index>(size()));
        for (const auto& e : series_) stamp(y, e, element_admittance(e, s));
        for (const auto& [a, ys] : shunts_) y(idx(a), idx(a)) += ys;
        return y;
    }

    ComplexMatrix dynamic_admittance() const {
        ComplexMatrix y = ComplexMatrix::Zero(static_cast<Eigen::Index>(size()), static_cast<Eigen::Index>(size()));
        for (const auto& e : series_) stamp(y, e, element_admittance_derivative(e));
        return y;
    }

    SparseComplexMatrix admittance_sparse(Complex s = 0.0) const {
        std::vector<Eigen::Triplet<Complex>> t;
        for (const auto& e : series_) stamp_triplets(t, e, element_admittance(e, s));
        for (const auto& [a, ys] : shunts_) t.emplace_back(idx(a), idx(a), ys);
        return build_sparse(t);
    }

    SparseComplexMatrix dynamic_admittance_sparse() const {
        std::vector<Eigen::Triplet<Complex>> t;
        for (const auto& e : series_) stamp_triplets(t, e, element_admittance_derivative(e));
        return build_sparse(t);
    }

private:
    static Eigen::Index idx(std::size_t i) { return static_cast<Eigen::Index>(i); }

    static void stamp(ComplexMatrix& y, const SeriesElement& e, Complex v) {
        y(idx(e.a), idx(e.a)) += v;
        y(idx(e.b), idx(e.b)) += v;
        y(idx(e.a), idx(e.b)) -= v;
        y(idx(e.b), idx(e.a)) -= v;
    }

    static void stamp_triplets(std::vector<Eigen::Triplet<Complex>>& t, const SeriesElement& e, Complex v) {
        t.emplace_back(idx(e.a), idx(e.a), v);
        t.emplace_back(idx(e.b), idx(e.b), v);
        t.emplace_back(idx(e.a), idx(e.b), -v);
        t.emplace_back(idx(e.b), idx(e.a), -v);
    }

    SparseComplexMatrix build_sparse(const std::vector<Eigen::Triplet<Complex>>& t) const {
        SparseComplexMatrix m(idx(size()), idx(size()));
        m.setFromTriplets(t.begin(), t.end());
        m.makeCompressed();
        return m;
    }

    double omega0_;
    std::vector<std::string> labels_;
    std::vector<SeriesElement> series_;
    std::vector<std::pair<std::size_t, Complex>> shunts_;
};

/// Per-unit network of a grid: branches as series R-L elements, loads as
/// constant shunt admittances conj(S) / |V_nom|^2 at V_nom = 1 pu.
inline NetworkModel network_model(const GridGraph& g, double omega0) {
    NetworkModel m(omega0);
    for (const auto& n : g.nodes()) m.add_node(n.id);
    const double omega_grid = g.omega0();
    for (std::size_t b = 0; b < g.branches().size(); ++b) {
        const auto& br = g.branches()[b];
        const double zb = g.branch_impedance_base(b);
        m.add_series(g.branch_from(b), g.branch_to(b), br.impedance.real() / zb,
                     br.impedance.imag() / omega_grid / zb);
    }
    for (std::size_t i = 0; i < g.nodes().size(); ++i) {
        const auto& n = g.nodes()[i];
        if (n.kind == NodeKind::load && n.demand != Complex{}) m.add_shunt(i, std::conj(n.demand));
    }
    return m;
}

/// Bus admittance matrix over all grid nodes, in grid node order.
inline ComplexMatrix build_ybus(const GridGraph& g, double omega0) { return network_model(g, omega0).admittance(); }

/// dY/ds at s = 0; load shunts contribute nothing.
inline ComplexMatrix dynamic_ybus(const GridGraph& g, double omega0) {
    return network_model(g, omega0).dynamic_admittance();
}

// ---------------------------------------------------------------------------
// Kron reduction (dense)
// ---------------------------------------------------------------------------

namespace detail {

inline std::vector<Eigen::Index> complement(Eigen::Index n, const std::vector<Eigen::Index>& keep) {
    std::vector<bool> kept(static_cast<std::size_t>(n), false);
    for (auto k : keep) {
        if (k < 0 || k >= n) throw NetworkError("kron_reduce: keep index out of range");
        if (kept[static_cast<std::size_t>(k)]) throw NetworkError("kron_reduce: duplicate keep index");
        kept[static_cast<std::size_t>(k)] = true;
    }
    std::vector<Eigen::Index> out;
    for (Eigen::Index i = 0; i < n; ++i)
        if (!kept[static_cast<std::size_t>(i)]) out.push_back(i);
    return out;
}

inline Eigen::PartialPivLU<ComplexMatrix> factor_eliminated(const ComplexMatrix& yee) {
    Eigen::PartialPivLU<ComplexMatrix> lu(yee);
    const double rcond = lu.rcond();
    if (!(rcond > 1e-14)) {
        throw NetworkError("kron_reduce: eliminated block is singular (rcond estimate " + std::to_string(rcond) + ")");
    }
    return lu;
}

}  // namespace detail

/// Schur complement Y_kk - Y_ke Y_ee^-1 Y_ek, rows/cols in `keep` order.
inline ComplexMatrix kron_reduce(const ComplexMatrix& y, const std::vector<Eigen::Index>& keep) {
    if (y.rows() != y.cols()) throw NetworkError("kron_reduce: matrix not square");
    const auto elim = detail::complement(y.rows(), keep);
    const ComplexMatrix ykk = y(keep, keep);
    if (elim.empty()) return ykk;
    const auto lu = detail::factor_eliminated(y(elim, elim));
    return ykk - y(keep, elim) * lu.solve(y(elim, keep));
}

/// Derivative of the Kron-reduced matrix given Y(s) and dY/ds at one point.
inline ComplexMatrix kron_reduce_derivative(const ComplexMatrix& y0, const ComplexMatrix& y1,
                                            const std::vector<Eigen::Index>& keep) {
    const auto elim = detail::complement(y0.rows(), keep);
    const ComplexMatrix d_kk = y1(keep, keep);
    if (elim.empty()) return d_kk;
    const auto lu = detail::factor_eliminated(y0(elim, elim));
    const ComplexMatrix x = lu.solve(y0(elim, keep));                                  // Y_ee^-1 Y_ek
    const ComplexMatrix w = lu.transpose().solve(y0(keep, elim).transpose().eval());   // Y_ee^-T Y_ke^T
    return d_kk - y1(keep, elim) * x - w.transpose() * y1(elim, keep) +
           w.transpose() * y1(elim, elim) * x;
}

// ---------------------------------------------------------------------------
// Source-terminal reduction
// ---------------------------------------------------------------------------

struct ReducedNetwork {
    std::vector<std::string> keep_nodes;  // source nodes, fleet order
    ComplexMatrix Y0;
    ComplexMatrix Y1;
    double omega0 = 0.0;
};

/// Network plus the internal nodes that realize virtual impedances, with the
/// terminal (node index in the model) of every source.
struct SourceNetwork {
    NetworkModel model;
    std::vector<std::size_t> terminals;  // fleet order
};

namespace detail {

inline void check_sources(const GridGraph& g, const std::vector<SourceParams>& sources) {
    std::map<std::string, std::size_t> seen;
    for (std::size_t i = 0; i < sources.size(); ++i) {
        g.index_of(sources[i].node);
        if (!seen.emplace(sources[i].node, i).second)
            throw NetworkError("two sources at node '" + sources[i].node + "'");
        const auto& src = sources[i];
        if (src.finite_droop() && !(src.k_f > 0.0 && src.k_v >= 0.0 && src.t_c > 0.0 && std::isfinite(src.k_f) &&
                                    std::isfinite(src.k_v)))
            throw NetworkError("source at '" + src.node + "' needs k_f > 0, k_v >= 0 and t_c > 0");
    }
}

}  // namespace detail

/// Adds one series element Z_v(s) = R_v + (s + j omega0) L_v between each
/// VSG and its bus; the VSG terminal moves to the new internal node.
inline SourceNetwork source_network(const GridGraph& g, const std::vector<SourceParams>& sources,
                                    const std::vector<VirtualImpedance>& vis, double omega0) {
    detail::check_sources(g, sources);
    SourceNetwork out{network_model(g, omega0), {}};
    std::map<std::string, const VirtualImpedance*> by_node;
    for (const auto& vi : vis) {
        if (vi.L_v < 0.0) throw NetworkError("negative L_v at '" + vi.node + "'");
        if (vi.R_v < 0.0) throw NetworkError("negative R_v at '" + vi.node + "'");
        if (!by_node.emplace(vi.node, &vi).second) throw NetworkError("two virtual impedances at '" + vi.node + "'");
    }
    for (const auto& [node, vi] : by_node) {
        auto it = std::find_if(sources.begin(), sources.end(), [&](const SourceParams& s) { return s.node == node; });
        if (it == sources.end() || it->kind != SourceKind::virtual_sg)
            throw NetworkError("virtual impedance at '" + node + "' which hosts no VSG");
    }
    for (const auto& s : sources) {
        const auto bus = g.index_of(s.node);
        auto it = by_node.find(s.node);
        if (it == by_node.end() || it->second->is_zero()) {
            out.terminals.push_back(bus);
            continue;
        }
        const double zb = g.node_impedance_base(bus);
        const auto internal = out.model.add_node(s.node + "#vi");
        out.model.add_series(internal, bus, it->second->R_v / zb, it->second->L_v / zb);
        out.terminals.push_back(internal);
    }
    return out;
}

/// Kron reduction onto arbitrary model nodes using a sparse factorization of
/// the eliminated block. Returns (Y0, Y1) of the reduced network.
inline std::pair<ComplexMatrix, ComplexMatrix> reduce_model(const NetworkModel& model,
                                                            const std::vector<std::size_t>& keep) {
    const auto n = static_cast<Eigen::Index>(model.size());
    std::vector<Eigen::Index> keep_idx(keep.begin(), keep.end());
    const auto elim = detail::complement(n, keep_idx);
    const auto m = static_cast<Eigen::Index>(keep.size());
    const auto ne = static_cast<Eigen::Index>(elim.size());

    const SparseComplexMatrix y0 = model.admittance_sparse();
    const SparseComplexMatrix y1 = model.dynamic_admittance_sparse();

    // Position of every node inside the kept or eliminated block.
    std::vector<Eigen::Index> pos(static_cast<std::size_t>(n));
    std::vector<bool> is_keep(static_cast<std::size_t>(n), false);
    for (Eigen::Index k = 0; k < m; ++k) {
        pos[static_cast<std::size_t>(keep_idx[static_cast<std::size_t>(k)])] = k;
        is_keep[static_cast<std::size_t>(keep_idx[static_cast<std::size_t>(k)])] = true;
    }
    for (Eigen::Index e = 0; e < ne; ++e) pos[static_cast<std::size_t>(elim[static_cast<std::size_t>(e)])] = e;

    struct Blocks {
        ComplexMatrix kk, ke, ek;
        SparseComplexMatrix ee;
    };
    auto split = [&](const SparseComplexMatrix& y) {
        Blocks b{ComplexMatrix::Zero(m, m), ComplexMatrix::Zero(m, ne), ComplexMatrix::Zero(ne, m),
                 SparseComplexMatrix(ne, ne)};
        std::vector<Eigen::Triplet<Complex>> t;
        for (Eigen::Index c = 0; c < y.outerSize(); ++c) {
            for (SparseComplexMatrix::InnerIterator it(y, c); it; ++it) {
                const auto r = static_cast<std::size_t>(it.row());
                const auto cc = static_cast<std::size_t>(it.col());
                const auto pr = pos[r];
                const auto pc = pos[cc];
                if (is_keep[r] && is_keep[cc]) b.kk(pr, pc) += it.value();
                else if (is_keep[r]) b.ke(pr, pc) += it.value();
                else if (is_keep[cc]) b.ek(pr, pc) += it.value();
                else t.emplace_back(pr, pc, it.value());
            }
        }
        b.ee.setFromTriplets(t.begin(), t.end());
        b.ee.makeCompressed();
        return b;
    };
    const auto b0 = split(y0);
    const auto b1 = split(y1);
    if (ne == 0) return {b0.kk, b1.kk};

    Eigen::SparseLU<SparseComplexMatrix> lu;
    lu.compute(b0.ee);
    if (lu.info() != Eigen::Success)
        throw NetworkError("kron_reduce: eliminated block is singular (" + lu.lastErrorMessage() + ")");
    const ComplexMatrix x = lu.solve(b0.ek);
    if (lu.info() != Eigen::Success || !x.allFinite()) throw NetworkError("kron_reduce: solve failed");

    // The network is reciprocal (Y = Y^T), so Y_ke Y_ee^-1 = X^T.
    ComplexMatrix r0 = b0.kk - b0.ke * x;
    ComplexMatrix r1 = b1.kk - b1.ke * x - x.transpose() * b1.ek + x.transpose() * (b1.ee * x);
    return {std::move(r0), std::move(r1)};
}

/// Reduced static and dynamic admittance over the source terminals.
inline ReducedNetwork reduce_network(const GridGraph& g, const std::vector<SourceParams>& sources,
                                     const std::vector<VirtualImpedance>& vis = {}, std::optional<double> omega0 = {}) {
    const double w0 = omega0.value_or(g.omega0());
    if (sources.empty()) throw NetworkError("reduce_network: no sources");
    const auto net = source_network(g, sources, vis, w0);
    auto [y0, y1] = reduce_model(net.model, net.terminals);
    ReducedNetwork out;
    for (const auto& s : sources) out.keep_nodes.push_back(s.node);
    out.Y0 = std::move(y0);
    out.Y1 = std::move(y1);
    out.omega0 = w0;
    return out;
}

/// Sensitivity of the reduced Y0 to a shunt conductance added at a grid
/// node: dY0_red / dy = a a^T. Used for small load-step disturbances.
inline ComplexVector load_step_coupling(const GridGraph& g, const std::vector<SourceParams>& sources,
                                        const std::vector<VirtualImpedance>& vis, const std::string& node,
                                        std::optional<double> omega0 = {}) {
    const double w0 = omega0.value_or(g.omega0());
    const auto net = source_network(g, sources, vis, w0);
    const auto bus = g.index_of(node);
    const auto m = static_cast<Eigen::Index>(net.terminals.size());
    for (Eigen::Index k = 0; k < m; ++k) {
        if (net.terminals[static_cast<std::size_t>(k)] == bus) {
            ComplexVector a = ComplexVector::Zero(m);
            a(k) = 1.0;
            return a;
        }
    }
    // Column of Y_ee^-1 Y_ek for the disturbed node: a = (Y_ee^-1 Y_ek)^T e_node.
    const ComplexMatrix y = net.model.admittance();
    std::vector<Eigen::Index> keep(net.terminals.begin(), net.terminals.end());
    const auto elim = detail::complement(y.rows(), keep);
    const auto lu = detail::factor_eliminated(y(elim, elim));
    const ComplexMatrix x = lu.solve(y(elim, keep));
    const auto row = std::find(elim.begin(), elim.end(), static_cast<Eigen::Index>(bus)) - elim.begin();
    return x.row(row).transpose();
}

// ---------------------------------------------------------------------------
// Thevenin equivalent seen by one VSG
// ---------------------------------------------------------------------------

struct TheveninAdmittance {
    double G = 0.0;
    double B = 0.0;
    double Gp = 0.0;  // pu*s
    double Bp = 0.0;  // pu*s

    bool operator==(const TheveninAdmittance&) const = default;
};

/// Rest-of-grid driving-point impedance at a VSG bus with every other source
/// held as an ideal voltage source. Cheap to combine with any virtual
/// impedance of the VSG itself.
struct GridThevenin {
    Complex z_net{0.0, 0.0};
    Complex z_net_prime{0.0, 0.0};  // dZ/ds at s = 0
    bool isolated = true;
    double z_base = 1.0;  // ohm, at the VSG bus
    double omega0 = 0.0;

    TheveninAdmittance with(const VirtualImpedance& vi) const {
        if (vi.L_v < 0.0 || vi.R_v < 0.0) throw NetworkError("negative virtual impedance at '" + vi.node + "'");
        if (isolated) return {};
        const double l = vi.L_v / z_base;
        const Complex z = vi.R_v / z_base + kJ * omega0 * l + z_net;
        const Complex y = 1.0 / z;
        const Complex yp = -(l + z_net_prime) / (z * z);
        return {y.real(), y.imag(), yp.real(), yp.imag()};
    }
};

/// `committed` holds the virtual impedances of the other VSGs; an entry for
/// `node` itself is ignored (it is applied through GridThevenin::with).
inline GridThevenin grid_thevenin(const GridGraph& g, const std::vector<SourceParams>& sources, const std::string& node,
                                  const std::vector<VirtualImpedance>& committed = {},
                                  std::optional<double> omega0 = {}) {
    const double w0 = omega0.value_or(g.omega0());
    auto target = std::find_if(sources.begin(), sources.end(), [&](const SourceParams& s) { return s.node == node; });
    if (target == sources.end() || target->kind != SourceKind::virtual_sg)
        throw NetworkError("thevenin_at: node '" + node + "' hosts no VSG");
    std::vector<VirtualImpedance> others;
    for (const auto& vi : committed)
        if (vi.node != node) others.push_back(vi);
    const auto net = source_network(g, sources, others, w0);
    const auto bus = g.index_of(node);

    GridThevenin out;
    out.z_base = g.node_impedance_base(bus);
    out.omega0 = w0;

    // Grounded terminals are removed; the remaining nodes form the system.
    const std::size_t n = net.model.size();
    std::vector<bool> grounded(n, false);
    for (std::size_t k = 0; k < sources.size(); ++k)
        if (sources[k].node != node) grounded[net.terminals[k]] = true;

    // Isolation: the bus cannot reach a grounded terminal or a shunt.
    std::vector<std::vector<std::size_t>> adj(n);
    for (const auto& e : net.model.series()) {
        adj[e.a].push_back(e.b);
        adj[e.b].push_back(e.a);
    }
    std::vector<bool> has_shunt(n, false);
    for (const auto& [a, y] : net.model.shunts())
        if (y != Complex{}) has_shunt[a] = true;
    std::vector<bool> seen(n, false);
    std::vector<std::size_t> stack{bus};
    seen[bus] = true;
    bool anchored = false;
    while (!stack.empty() && !anchored) {
        const auto v = stack.back();
        stack.pop_back();
        if (has_shunt[v]) anchored = true;
        for (auto w : adj[v]) {
            if (grounded[w]) {
                anchored = true;
                break;
            }
            if (!seen[w]) {
                seen[w] = true;
                stack.push_back(w);
            }
        }
    }
    if (!anchored) return out;

    // Nodes outside the bus's component are decoupled from it and dropped.
    std::vector<Eigen::Index> pos(n, -1);
    Eigen::Index comp_n = 0;
    for (std::size_t i = 0; i < n; ++i)
        if (seen[i]) pos[i] = comp_n++;
    auto restrict = [&](const SparseComplexMatrix& y) {
        std::vector<Eigen::Triplet<Complex>> t;
        for (Eigen::Index c = 0; c < y.outerSize(); ++c)
            for (SparseComplexMatrix::InnerIterator it(y, c); it; ++it) {
                const auto r = pos[static_cast<std::size_t>(it.row())];
                const auto cc = pos[static_cast<std::size_t>(it.col())];
                if (r >= 0 && cc >= 0) t.emplace_back(r, cc, it.value());
            }
        SparseComplexMatrix out_m(comp_n, comp_n);
        out_m.setFromTriplets(t.begin(), t.end());
        out_m.makeCompressed();
        return out_m;
    };

    const SparseComplexMatrix a0 = restrict(net.model.admittance_sparse());
    const SparseComplexMatrix a1 = restrict(net.model.dynamic_admittance_sparse());
    Eigen::SparseLU<SparseComplexMatrix> lu;
    lu.compute(a0);
    if (lu.info() != Eigen::Success) throw NetworkError("thevenin_at: singular network at '" + node + "'");
    ComplexVector e = ComplexVector::Zero(comp_n);
    e(pos[bus]) = 1.0;
    const ComplexVector z = lu.solve(e);
    out.z_net = z(pos[bus]);
    out.z_net_prime = -(z.transpose() * (a1 * z))(0, 0);
    out.isolated = false;
    return out;
}

/// Thevenin admittance (static G + jB and dynamic G' + jB') seen by the VSG
/// at `node` through its own virtual impedance `vi`.
inline TheveninAdmittance thevenin_at(const GridGraph& g, const std::vector<SourceParams>& sources,
                                      const std::string& node, const VirtualImpedance& vi,
                                      const std::vector<VirtualImpedance>& committed = {},
                                      std::optional<double> omega0 = {}) {
    return grid_thevenin(g, sources, node, committed, omega0).with(vi);
}

/// Row/col/re/im dump used for cross-checks against external tools.
inline std::string matrix_dump(const ComplexMatrix& y) {
    std::ostringstream os;
    os.precision(17);
    for (Eigen::Index r = 0; r < y.rows(); ++r)
        for (Eigen::Index c = 0; c < y.cols(); ++c)
            if (y(r, c) != Complex{}) os << r << ' ' << c << ' ' << y(r, c).real() << ' ' << y(r, c).imag() << '\n';
    return os.str();
}

}  // namespace stabstore
