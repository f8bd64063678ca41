#include "ebus/ybus.hpp"

#include <algorithm>
#include <cmath>
#include <map>

namespace ebus {

std::string to_string(AssemblyMode m) {
    switch (m) {
        case AssemblyMode::PhaseABCN: return "phase";
        case AssemblyMode::Mixed012Eig: return "mixed";
        case AssemblyMode::KronReduced012: return "kron";
    }
    return "?";
}

AssemblyMode assembly_mode_from_string(const std::string& s) {
    if (s == "phase") return AssemblyMode::PhaseABCN;
    if (s == "mixed") return AssemblyMode::Mixed012Eig;
    if (s == "kron") return AssemblyMode::KronReduced012;
    throw Error("unknown assembly mode '" + s + "' (expected phase|mixed|kron)");
}

TransformerBlocks transformer_phase_blocks(const TransformerBranch& t) {
    Complex yt = t.y_t_pu;
    double tap = t.tap_ratio();
    Complex yt2 = yt / (tap * tap);
    Complex ytc = yt / tap;

    TransformerBlocks b;
    b.dd = CMat(3, 3);
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) b.dd(i, j) = (i == j ? 2.0 : -1.0) * yt2 / 3.0;

    double k = 1.0 / std::sqrt(3.0);
    b.dy = CMat(3, 4);
    b.dy(0, 0) = -ytc * k; b.dy(0, 1) = ytc * k;
    b.dy(1, 1) = -ytc * k; b.dy(1, 2) = ytc * k;
    b.dy(2, 0) = ytc * k;  b.dy(2, 2) = -ytc * k;

    b.yd = b.dy.transposed();

    b.yy = CMat(4, 4);
    for (int i = 0; i < 3; ++i) {
        b.yy(i, i) = yt;
        b.yy(i, 3) = -yt;
        b.yy(3, i) = -yt;
    }
    b.yy(3, 3) = 3.0 * yt + t.y_gr_pu;
    return b;
}

CMat kron_reduce(const CMat& m, std::size_t keep) {
    const std::size_t n = m.rows();
    if (keep >= n) return m;
    const std::size_t e = n - keep;
    CMat a(keep, keep), b(keep, e), c(e, keep), d(e, e);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) {
            if (i < keep && j < keep) a(i, j) = m(i, j);
            else if (i < keep) b(i, j - keep) = m(i, j);
            else if (j < keep) c(i - keep, j) = m(i, j);
            else d(i - keep, j - keep) = m(i, j);
        }
    return a - b * d.inverse() * c;
}

namespace {

struct Builder {
    const NetworkModel& model;
    AssembledSystem sys;
    std::vector<int> t_rows, t_cols;
    CVec t_vals;
    // (target row, origin) -> source row -> coefficient
    std::map<std::pair<int, int>, std::map<int, Complex>> stencil_acc;
    TransformCache cache;

    explicit Builder(const NetworkModel& m) : model(m) {}

    void add_entry(int r, int c, Complex v) {
        if (v == Complex(0.0, 0.0)) return;
        t_rows.push_back(r);
        t_cols.push_back(c);
        t_vals.push_back(v);
    }

    void add_stencil(int r, int c, Complex v, StencilOrigin origin) {
        if (v == Complex(0.0, 0.0)) return;
        stencil_acc[{r, static_cast<int>(origin)}][c] += v;
    }

    // full block into the matrix, with round-noise cleanup for transformed blocks
    void stamp_full(int bus_r, int bus_c, const CMat& block, double clean_tol) {
        double drop = clean_tol * block.norm_max();
        for (std::size_t i = 0; i < block.rows(); ++i)
            for (std::size_t j = 0; j < block.cols(); ++j) {
                Complex v = block(i, j);
                if (std::abs(v) <= drop) continue;
                add_entry(sys.row_of(bus_r, static_cast<int>(i)),
                          sys.row_of(bus_c, static_cast<int>(j)), v);
            }
    }

    // diagonal into the matrix, off-diagonal remainder into stencils
    void stamp_split(int bus_r, int bus_c, const CMat& block, StencilOrigin origin,
                     double clean_tol) {
        double drop = clean_tol * block.norm_max();
        for (std::size_t i = 0; i < block.rows(); ++i)
            for (std::size_t j = 0; j < block.cols(); ++j) {
                Complex v = block(i, j);
                if (std::abs(v) <= drop) continue;
                int r = sys.row_of(bus_r, static_cast<int>(i));
                int c = sys.row_of(bus_c, static_cast<int>(j));
                if (i == j) add_entry(r, c, v);
                else add_stencil(r, c, v, origin);
            }
    }

    void finish() {
        sys.y_unconstrained =
            SparseComplexMatrix::from_triplets(sys.n_rows, t_rows, t_cols, t_vals);
        sys.y = sys.y_unconstrained;
        for (int r : sys.slack_rows) sys.y.set_identity_row(r);
        for (const auto& [key, terms] : stencil_acc) {
            InjectionStencil st;
            st.target_row = key.first;
            st.origin = static_cast<StencilOrigin>(key.second);
            for (const auto& [src, coeff] : terms) st.terms.push_back({coeff, src});
            sys.stencils.push_back(std::move(st));
        }
    }
};

// per-bus congruence transforms: row blocks by left_of, column blocks by right_of
CMat left_of(const AssembledSystem& sys, int bus) {
    switch (sys.bus_frame[bus]) {
        case FrameTag::Sym012: return fortescue_transform_matrix().to_sequence;
        case FrameTag::Eig4: return sys.bus_eig[bus]->to_eigen;
        default: return CMat::identity(sys.bus_axes[bus]);
    }
}

CMat right_of(const AssembledSystem& sys, int bus) {
    switch (sys.bus_frame[bus]) {
        case FrameTag::Sym012: return fortescue_transform_matrix().to_phase;
        case FrameTag::Eig4: return sys.bus_eig[bus]->to_phase;
        default: return CMat::identity(sys.bus_axes[bus]);
    }
}

CMat phase_shunt_of_grounding(const GroundingShunt& g) {
    CMat sh(4, 4);
    sh(3, 3) = g.g_pu;
    return sh;
}

// wye-grounded capacitor bank susceptance at the control's current setting
Complex capacitor_b_pu(const NetworkModel& m, const ControlDevice& c) {
    double q3_pu = c.setting * c.step_size * 1e-3 / m.s_base_mva;
    return Complex(0.0, q3_pu);
}

void layout_rows(const NetworkModel& m, AssembledSystem& sys, AssemblyMode mode) {
    sys.mode = mode;
    sys.bus_row_start.resize(m.buses.size());
    sys.bus_axes.resize(m.buses.size());
    sys.bus_frame.resize(m.buses.size());
    sys.bus_eig.resize(m.buses.size());
    int row = 0;
    for (std::size_t i = 0; i < m.buses.size(); ++i) {
        const Bus& b = m.buses[i];
        int axes = b.order();
        FrameTag tag = b.segment == Segment::MV3wire ? FrameTag::PhaseABC : FrameTag::PhaseABCN;
        if (mode == AssemblyMode::Mixed012Eig)
            tag = b.segment == Segment::MV3wire ? FrameTag::Sym012 : FrameTag::Eig4;
        if (mode == AssemblyMode::KronReduced012) {
            axes = 3;
            tag = FrameTag::Sym012;
        }
        sys.bus_row_start[i] = row;
        sys.bus_axes[i] = axes;
        sys.bus_frame[i] = tag;
        row += axes;
    }
    sys.n_rows = row;
}

void attach_lv_transforms(const NetworkModel& m, AssembledSystem& sys, TransformCache& cache) {
    // a bus's eigen frame comes from its first incident LV line, model order
    for (const auto& l : m.lines) {
        int fi = m.bus_index(l.from), ti = m.bus_index(l.to);
        if (m.buses[fi].segment != Segment::LV4wire) continue;
        EigenBasisTransform t = cache.get_or_build(l.y_series_pu);
        if (!sys.bus_eig[fi]) sys.bus_eig[fi] = t;
        if (!sys.bus_eig[ti]) sys.bus_eig[ti] = t;
    }
    // LV buses with no incident line (transformer-only) inherit from the feeder
    for (const auto& t : m.transformers) {
        int ti = m.bus_index(t.to);
        if (!sys.bus_eig[ti]) {
            // no LV line anywhere at this bus: diagonalize the transformer's
            // own wye block so the bus still has a well-defined frame
            TransformerBlocks b = transformer_phase_blocks(t);
            sys.bus_eig[ti] = cache.get_or_build(b.yy);
        }
    }
    for (std::size_t i = 0; i < m.buses.size(); ++i)
        if (sys.bus_frame[i] == FrameTag::Eig4 && !sys.bus_eig[i])
            throw Error("bus '" + m.buses[i].id + "': no eigen frame (isolated LV bus)");
}

void stamp_two_port(Builder& bld, int fi, int ti, const CMat& series, const CMat& sh_end,
                    bool split, StencilOrigin origin, double clean_tol) {
    const AssembledSystem& sys = bld.sys;
    bool transform = sys.bus_frame[fi] != FrameTag::PhaseABC &&
                     sys.bus_frame[fi] != FrameTag::PhaseABCN;
    auto tr = [&](int br, int bc, const CMat& b) {
        if (!transform) return b;
        return left_of(sys, br) * b * right_of(sys, bc);
    };
    auto put = [&](int br, int bc, const CMat& b, bool negate) {
        CMat blk = negate ? b.scaled(-1.0) : b;
        if (split) bld.stamp_split(br, bc, blk, origin, clean_tol);
        else bld.stamp_full(br, bc, blk, clean_tol);
    };
    put(fi, fi, tr(fi, fi, series), false);
    put(ti, ti, tr(ti, ti, series), false);
    put(fi, ti, tr(fi, ti, series), true);
    put(ti, fi, tr(ti, fi, series), true);
    if (sh_end.rows() == series.rows() && sh_end.norm_max() > 0.0) {
        put(fi, fi, tr(fi, fi, sh_end), false);
        put(ti, ti, tr(ti, ti, sh_end), false);
    }
}

void stamp_shunt(Builder& bld, int bi, const CMat& shunt, bool split, double clean_tol) {
    if (shunt.norm_max() == 0.0) return;
    const AssembledSystem& sys = bld.sys;
    bool transform = sys.bus_frame[bi] != FrameTag::PhaseABC &&
                     sys.bus_frame[bi] != FrameTag::PhaseABCN;
    CMat blk = transform ? left_of(sys, bi) * shunt * right_of(sys, bi) : shunt;
    if (split) bld.stamp_split(bi, bi, blk, StencilOrigin::LvShunt, clean_tol);
    else bld.stamp_full(bi, bi, blk, clean_tol);
}

CMat scalar_shunt(int order, int phases, Complex per_phase) {
    CMat sh(order, order);
    for (int i = 0; i < phases; ++i) sh(i, i) = per_phase;
    return sh;
}

void stamp_slack(const NetworkModel& m, AssembledSystem& sys) {
    for (std::size_t i = 0; i < m.buses.size(); ++i) {
        const Bus& b = m.buses[i];
        if (b.kind != BusKind::Slack) continue;
        CVec v_ph(sys.bus_axes[i] == 3 ? 3 : 4, Complex(0.0, 0.0));
        for (int p = 0; p < 3; ++p)
            v_ph[p] = polar_deg(b.slack_voltage_pu, b.slack_angle_deg - 120.0 * p +
                                                        (p == 2 ? 360.0 : 0.0));
        // order: a at angle0, b at -120, c at +120
        CMat left = left_of(sys, static_cast<int>(i));
        CVec v_sys = (sys.bus_frame[i] == FrameTag::PhaseABC ||
                      sys.bus_frame[i] == FrameTag::PhaseABCN)
                         ? v_ph
                         : left * v_ph;
        for (int a = 0; a < sys.bus_axes[i]; ++a) {
            sys.slack_rows.push_back(sys.row_of(static_cast<int>(i), a));
            sys.slack_values.push_back(v_sys[a]);
        }
    }
}

AssembledSystem assemble_impl(const NetworkModel& m, AssemblyMode mode) {
    Builder bld(m);
    layout_rows(m, bld.sys, mode);
    const bool mixed = mode == AssemblyMode::Mixed012Eig;
    const bool kron = mode == AssemblyMode::KronReduced012;
    const double clean = (mixed || kron) ? 1e-13 : 0.0;

    if (mixed) attach_lv_transforms(m, bld.sys, bld.cache);

    for (const auto& l : m.lines) {
        int fi = m.bus_index(l.from), ti = m.bus_index(l.to);
        bool is_lv = m.buses[fi].segment == Segment::LV4wire;
        CMat series = l.y_series_pu;
        CMat sh = l.y_shunt_end_pu;
        if (kron && is_lv) {
            // neutral eliminated assuming zero neutral voltage: reduce the
            // series impedance, take the phase part of the shunt
            series = kron_reduce(series.inverse(), 3).inverse();
            if (sh.norm_max() > 0.0) {
                CMat sh3(3, 3);
                for (int i = 0; i < 3; ++i)
                    for (int j = 0; j < 3; ++j) sh3(i, j) = sh(i, j);
                sh = sh3;
            } else {
                sh = CMat(3, 3);
            }
        }
        if (mode == AssemblyMode::PhaseABCN)
            stamp_two_port(bld, fi, ti, series, sh, false, StencilOrigin::MvMutualCoupling, clean);
        else
            stamp_two_port(bld, fi, ti, series, sh, true, StencilOrigin::MvMutualCoupling, clean);
    }

    for (const auto& t : m.transformers) {
        int fi = m.bus_index(t.from), ti = m.bus_index(t.to);
        TransformerBlocks b = transformer_phase_blocks(t);
        CMat dy = b.dy, yd = b.yd, yy = b.yy;
        if (kron) {
            CMat dy3(3, 3), yd3(3, 3);
            for (int i = 0; i < 3; ++i)
                for (int j = 0; j < 3; ++j) {
                    dy3(i, j) = b.dy(i, j);
                    yd3(i, j) = b.yd(i, j);
                }
            dy = dy3;
            yd = yd3;
            // wye block with the neutral pinned to ground
            CMat yy3(3, 3);
            for (int i = 0; i < 3; ++i) yy3(i, i) = b.yy(i, i);
            yy = yy3;
        }
        const AssembledSystem& sys = bld.sys;
        bool transform = mixed || kron;
        auto tr = [&](int br, int bc, const CMat& blk) {
            if (!transform) return blk;
            return left_of(sys, br) * blk * right_of(sys, bc);
        };
        bld.stamp_full(fi, fi, tr(fi, fi, b.dd), clean);
        bld.stamp_full(fi, ti, tr(fi, ti, dy), clean);
        bld.stamp_full(ti, fi, tr(ti, fi, yd), clean);
        bld.stamp_full(ti, ti, tr(ti, ti, yy), clean);
    }

    for (const auto& g : m.groundings) {
        if (kron) continue;  // grounding vanishes with the neutral
        int bi = m.bus_index(g.bus);
        stamp_shunt(bld, bi, phase_shunt_of_grounding(g), mode != AssemblyMode::PhaseABCN, clean);
    }

    for (const auto& c : m.controls) {
        if (c.kind != ControlKind::SwitchedCapacitor) continue;
        int bi = m.bus_index(c.target);
        Complex b = capacitor_b_pu(m, c);
        if (b == Complex(0.0, 0.0)) continue;
        if (m.buses[bi].segment == Segment::MV3wire) {
            // scalar on the phase axes: identical in phase and sequence frames
            bld.stamp_full(bi, bi, scalar_shunt(bld.sys.bus_axes[bi], 3, b), 0.0);
        } else {
            CMat sh = kron ? scalar_shunt(3, 3, b) : scalar_shunt(m.buses[bi].order(), 3, b);
            stamp_shunt(bld, bi, sh, mode != AssemblyMode::PhaseABCN, clean);
        }
    }

    stamp_slack(m, bld.sys);
    bld.finish();

    bld.sys.transform_nnz = 0;
    if (mixed || kron) bld.sys.transform_nnz += 18;  // order-3 pair, both directions
    if (mixed) bld.sys.transform_nnz += static_cast<std::int64_t>(bld.cache.stored_nnz());
    return std::move(bld.sys);
}

}  // namespace

AssembledSystem assemble_phase(const NetworkModel& m) { return assemble_impl(m, AssemblyMode::PhaseABCN); }
AssembledSystem assemble_mixed(const NetworkModel& m) { return assemble_impl(m, AssemblyMode::Mixed012Eig); }
AssembledSystem assemble_kron_reduced(const NetworkModel& m) {
    return assemble_impl(m, AssemblyMode::KronReduced012);
}

AssembledSystem assemble(const NetworkModel& m, AssemblyMode mode) { return assemble_impl(m, mode); }

CVec AssembledSystem::to_phase_frame(const CVec& v) const {
    CVec out(v.size());
    for (std::size_t b = 0; b < bus_row_start.size(); ++b) {
        int r0 = bus_row_start[b];
        int ax = bus_axes[b];
        if (bus_frame[b] == FrameTag::PhaseABC || bus_frame[b] == FrameTag::PhaseABCN) {
            for (int i = 0; i < ax; ++i) out[r0 + i] = v[r0 + i];
            continue;
        }
        const CMat& t = bus_frame[b] == FrameTag::Sym012 ? fortescue_transform_matrix().to_phase
                                                         : bus_eig[b]->to_phase;
        for (int i = 0; i < ax; ++i) {
            Complex s = 0.0;
            for (int j = 0; j < ax; ++j) s += t(i, j) * v[r0 + j];
            out[r0 + i] = s;
        }
    }
    return out;
}

CVec AssembledSystem::to_system_frame(const CVec& v) const {
    CVec out(v.size());
    for (std::size_t b = 0; b < bus_row_start.size(); ++b) {
        int r0 = bus_row_start[b];
        int ax = bus_axes[b];
        if (bus_frame[b] == FrameTag::PhaseABC || bus_frame[b] == FrameTag::PhaseABCN) {
            for (int i = 0; i < ax; ++i) out[r0 + i] = v[r0 + i];
            continue;
        }
        const CMat& t = bus_frame[b] == FrameTag::Sym012 ? fortescue_transform_matrix().to_sequence
                                                         : bus_eig[b]->to_eigen;
        for (int i = 0; i < ax; ++i) {
            Complex s = 0.0;
            for (int j = 0; j < ax; ++j) s += t(i, j) * v[r0 + j];
            out[r0 + i] = s;
        }
    }
    return out;
}

CVec AssembledSystem::cotransform_gradient(const CVec& w) const {
    CVec out(w.size());
    for (std::size_t b = 0; b < bus_row_start.size(); ++b) {
        int r0 = bus_row_start[b];
        int ax = bus_axes[b];
        if (bus_frame[b] == FrameTag::PhaseABC || bus_frame[b] == FrameTag::PhaseABCN) {
            for (int i = 0; i < ax; ++i) out[r0 + i] = w[r0 + i];
            continue;
        }
        const CMat& t = bus_frame[b] == FrameTag::Sym012 ? fortescue_transform_matrix().to_phase
                                                         : bus_eig[b]->to_phase;
        for (int i = 0; i < ax; ++i) {
            Complex s = 0.0;
            for (int j = 0; j < ax; ++j) s += t(j, i) * w[r0 + j];  // transpose
            out[r0 + i] = s;
        }
    }
    return out;
}

SparseComplexMatrix AssembledSystem::stencil_matrix() const {
    std::vector<int> rows, cols;
    CVec vals;
    for (const auto& st : stencils)
        for (const auto& term : st.terms) {
            rows.push_back(st.target_row);
            cols.push_back(term.source_row);
            vals.push_back(term.coeff);
        }
    return SparseComplexMatrix::from_triplets(n_rows, rows, cols, vals);
}

CVec evaluate_injections(const std::vector<InjectionStencil>& stencils, const CVec& v) {
    CVec out(v.size(), Complex(0.0, 0.0));
    for (const auto& st : stencils) {
        Complex s = 0.0;
        for (const auto& term : st.terms) s += term.coeff * v[term.source_row];
        out[st.target_row] += s;
    }
    return out;
}

namespace {

void block_mods(const AssembledSystem& sys, int bus_r, int bus_c, const CMat& delta,
                std::vector<MatrixMod>& out) {
    double drop = 1e-13 * std::max(delta.norm_max(), 1e-300);
    for (std::size_t i = 0; i < delta.rows(); ++i)
        for (std::size_t j = 0; j < delta.cols(); ++j) {
            Complex v = delta(i, j);
            if (std::abs(v) <= drop) continue;
            out.push_back({sys.row_of(bus_r, static_cast<int>(i)),
                           sys.row_of(bus_c, static_cast<int>(j)), v});
        }
}

}  // namespace

std::vector<MatrixMod> tap_change_mods(const NetworkModel& model, const AssembledSystem& sys,
                                       const std::string& tx_id, int old_tap, int new_tap) {
    const TransformerBranch* tx = nullptr;
    for (const auto& t : model.transformers)
        if (t.id == tx_id) tx = &t;
    if (!tx) throw Error("tap_change_mods: unknown transformer '" + tx_id + "'");
    if (old_tap == new_tap) return {};

    TransformerBranch a = *tx;
    a.tap = old_tap;
    TransformerBranch b = *tx;
    b.tap = new_tap;
    TransformerBlocks ba = transformer_phase_blocks(a);
    TransformerBlocks bb = transformer_phase_blocks(b);

    int fi = model.bus_index(tx->from), ti = model.bus_index(tx->to);
    bool kron = sys.mode == AssemblyMode::KronReduced012;
    bool transform = sys.mode != AssemblyMode::PhaseABCN;

    auto reduce = [&](const CMat& m4, bool is_yy) {
        if (!kron) return m4;
        std::size_t r = std::min<std::size_t>(m4.rows(), 3);
        std::size_t c = std::min<std::size_t>(m4.cols(), 3);
        CMat out(r, c);
        for (std::size_t i = 0; i < r; ++i)
            for (std::size_t j = 0; j < c; ++j)
                out(i, j) = (is_yy && i != j) ? Complex(0.0, 0.0) : m4(i, j);
        return out;
    };
    auto tr = [&](int br, int bc, const CMat& blk) {
        if (!transform) return blk;
        return left_of(sys, br) * blk * right_of(sys, bc);
    };

    std::vector<MatrixMod> mods;
    block_mods(sys, fi, fi, tr(fi, fi, reduce(bb.dd - ba.dd, false)), mods);
    block_mods(sys, fi, ti, tr(fi, ti, reduce(bb.dy - ba.dy, false)), mods);
    block_mods(sys, ti, fi, tr(ti, fi, reduce(bb.yd - ba.yd, false)), mods);
    // yy does not depend on a primary-side tap, but keep the general path
    block_mods(sys, ti, ti, tr(ti, ti, reduce(bb.yy - ba.yy, true)), mods);
    return mods;
}

std::vector<MatrixMod> capacitor_change_mods(const NetworkModel& model, const AssembledSystem& sys,
                                             const std::string& bus_id, double delta_b_pu) {
    int bi = model.bus_index(bus_id);
    if (bi < 0) throw Error("capacitor_change_mods: unknown bus '" + bus_id + "'");
    if (model.buses[bi].segment != Segment::MV3wire)
        throw Error("capacitor_change_mods: switched capacitors attach to MV buses");
    std::vector<MatrixMod> mods;
    if (delta_b_pu == 0.0) return mods;
    for (int p = 0; p < 3; ++p)
        mods.push_back({sys.row_of(bi, p), sys.row_of(bi, p), Complex(0.0, delta_b_pu)});
    return mods;
}

}  // namespace ebus
