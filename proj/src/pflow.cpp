#include "ebus/pflow.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <functional>
#include <future>
#include <thread>
#include <tuple>

namespace ebus {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

CVec flat_start_phase(const NetworkModel& m, const AssembledSystem& sys) {
    CVec v(sys.n_rows, Complex(0.0, 0.0));
    for (std::size_t b = 0; b < m.buses.size(); ++b) {
        int r0 = sys.bus_row_start[b];
        v[r0 + 0] = polar_deg(1.0, 0.0);
        v[r0 + 1] = polar_deg(1.0, -120.0);
        v[r0 + 2] = polar_deg(1.0, -240.0);
        // the neutral axis, when present, starts at zero
    }
    return v;
}

// flattened per-bus transform pair; dense inline storage keeps the
// per-iteration conversions out of the map/dispatch machinery
struct FrameTable {
    struct BusOps {
        int r0 = 0;
        int ax = 0;
        bool identity = true;
        Complex to_ph[16];
        Complex to_sys[16];
    };
    std::vector<BusOps> buses;

    static FrameTable build(const AssembledSystem& sys) {
        FrameTable ft;
        ft.buses.resize(sys.bus_row_start.size());
        for (std::size_t b = 0; b < sys.bus_row_start.size(); ++b) {
            BusOps& ops = ft.buses[b];
            ops.r0 = sys.bus_row_start[b];
            ops.ax = sys.bus_axes[b];
            if (sys.bus_frame[b] == FrameTag::PhaseABC ||
                sys.bus_frame[b] == FrameTag::PhaseABCN)
                continue;
            ops.identity = false;
            const CMat& tp = sys.bus_frame[b] == FrameTag::Sym012
                                 ? fortescue_transform_matrix().to_phase
                                 : sys.bus_eig[b]->to_phase;
            const CMat& ts = sys.bus_frame[b] == FrameTag::Sym012
                                 ? fortescue_transform_matrix().to_sequence
                                 : sys.bus_eig[b]->to_eigen;
            for (int i = 0; i < ops.ax; ++i)
                for (int j = 0; j < ops.ax; ++j) {
                    ops.to_ph[i * ops.ax + j] = tp(i, j);
                    ops.to_sys[i * ops.ax + j] = ts(i, j);
                }
        }
        return ft;
    }

    void bus_to_phase(int b, const CVec& v_sys, CVec& v_ph) const {
        const BusOps& ops = buses[b];
        if (ops.identity) {
            for (int i = 0; i < ops.ax; ++i) v_ph[ops.r0 + i] = v_sys[ops.r0 + i];
            return;
        }
        apply(ops, ops.to_ph, v_sys, v_ph);
    }
    void bus_to_system(int b, const CVec& v_ph, CVec& v_sys) const {
        const BusOps& ops = buses[b];
        if (ops.identity) {
            for (int i = 0; i < ops.ax; ++i) v_sys[ops.r0 + i] = v_ph[ops.r0 + i];
            return;
        }
        apply(ops, ops.to_sys, v_ph, v_sys);
    }
    void to_phase(const CVec& v_sys, CVec& v_ph) const {
        for (std::size_t b = 0; b < buses.size(); ++b) bus_to_phase(static_cast<int>(b), v_sys, v_ph);
    }
    void to_system(const CVec& v_ph, CVec& v_sys) const {
        for (std::size_t b = 0; b < buses.size(); ++b) bus_to_system(static_cast<int>(b), v_ph, v_sys);
    }

  private:
    static void apply(const BusOps& ops, const Complex* t, const CVec& in, CVec& out) {
        const int ax = ops.ax, r0 = ops.r0;
        for (int i = 0; i < ax; ++i) {
            Complex s = t[i * ax] * in[r0];
            for (int j = 1; j < ax; ++j) s += t[i * ax + j] * in[r0 + j];
            out[r0 + i] = s;
        }
    }
};

}  // namespace

InjectionPlan InjectionPlan::build(const NetworkModel& m, const AssembledSystem& sys) {
    std::vector<int> all(m.buses.size());
    for (std::size_t i = 0; i < all.size(); ++i) all[i] = static_cast<int>(i);
    return build_subset(m, sys, all);
}

InjectionPlan InjectionPlan::build_subset(const NetworkModel& m, const AssembledSystem& sys,
                                          const std::vector<int>& bus_indices) {
    std::vector<char> wanted(m.buses.size(), 0);
    for (int b : bus_indices) wanted[b] = 1;

    InjectionPlan plan;
    std::vector<char> active(m.buses.size(), 0);
    auto add_common = [&](int bi) {
        Entry e;
        e.bus = bi;
        e.row0 = sys.bus_row_start[bi];
        e.lv = m.buses[bi].segment == Segment::LV4wire;
        e.has_neutral = sys.bus_axes[bi] == 4;
        return e;
    };
    for (const auto& load : m.loads) {
        int bi = m.bus_index(load.bus);
        if (!wanted[bi]) continue;
        Entry e = add_common(bi);
        for (const auto& [role, zp] : load.phases) {
            int p = static_cast<int>(role);
            e.s[p] = zp.s_pu;
            e.z[p] = zp.z_pu;
            e.ic[p] = zp.i_pu;
        }
        active[bi] = 1;
        plan.entries_.push_back(e);
        plan.bus_ids_.push_back(load.bus);
    }
    for (const auto& dg : m.dgs) {
        int bi = m.bus_index(dg.bus);
        if (!wanted[bi]) continue;
        Entry e = add_common(bi);
        e.is_dg = true;
        e.dg_s_base = Complex(dg.p_kw * 1e-3 / m.s_base_mva, dg.q_kvar * 1e-3 / m.s_base_mva);
        for (std::size_t k = 0; k < m.controls.size(); ++k)
            if (m.controls[k].kind == ControlKind::DgVar && m.controls[k].target == dg.id)
                e.dg_control = static_cast<int>(k);
        active[bi] = 1;
        plan.entries_.push_back(e);
        plan.bus_ids_.push_back(dg.bus);
    }
    for (std::size_t b = 0; b < m.buses.size(); ++b)
        if (active[b]) plan.active_buses_.push_back(static_cast<int>(b));
    return plan;
}

void InjectionPlan::evaluate(const NetworkModel& controls_src, const CVec& v_phase,
                             CVec& out) const {
    for (std::size_t n = 0; n < entries_.size(); ++n) {
        const Entry& e = entries_[n];
        Complex s_dev[3];
        if (e.is_dg) {
            Complex s_total = e.dg_s_base;
            if (e.dg_control >= 0)
                s_total += Complex(0.0, controls_src.controls[e.dg_control].setting);
            for (int p = 0; p < 3; ++p) s_dev[p] = -s_total / 3.0;  // generation
        } else {
            for (int p = 0; p < 3; ++p) s_dev[p] = e.s[p];
        }
        Complex v_n = e.has_neutral ? v_phase[e.row0 + 3] : Complex(0.0, 0.0);
        Complex sum(0.0, 0.0);
        for (int p = 0; p < 3; ++p) {
            Complex v = v_phase[e.row0 + p];
            if (e.lv) v -= v_n;  // phase-to-neutral connection
            Complex inj(0.0, 0.0);
            if (!e.is_dg) {
                if (e.z[p] != Complex(0.0, 0.0)) inj -= v / e.z[p];
                if (e.ic[p] != Complex(0.0, 0.0)) inj -= e.ic[p];
            }
            if (s_dev[p] != Complex(0.0, 0.0)) {
                if (std::abs(v) < 1e-8)
                    throw NumericError("load voltage collapsed at bus '" + bus_ids_[n] + "'");
                inj -= std::conj(s_dev[p]) / std::conj(v);
            }
            out[e.row0 + p] += inj;
            sum += inj;
        }
        if (e.has_neutral) out[e.row0 + 3] -= sum;
    }
}

CVec zip_injections(const NetworkModel& m, const AssembledSystem& sys, const CVec& v_phase) {
    CVec out(sys.n_rows, Complex(0.0, 0.0));
    InjectionPlan::build(m, sys).evaluate(m, v_phase, out);
    return out;
}

// ---------------------------------------------------------------------------
// full-system fixed point
// ---------------------------------------------------------------------------

namespace {

using SolveFn = std::function<CVec(const CVec&)>;

PowerFlowSolution fixed_point(const NetworkModel& m, const SolverConfig& cfg,
                              const AssembledSystem& sys, const InjectionPlan& plan,
                              const FrameTable& frames, const SolveFn& solver,
                              const CVec* warm_start) {
    PowerFlowSolution sol;
    sol.mode = sys.mode;
    sol.decomposed = false;
    sol.bus_row_start = sys.bus_row_start;
    sol.bus_axes = sys.bus_axes;

    CVec v_ph = warm_start && static_cast<int>(warm_start->size()) == sys.n_rows
                    ? *warm_start
                    : flat_start_phase(m, sys);
    auto tt = Clock::now();
    CVec v_sys(sys.n_rows);
    frames.to_system(v_ph, v_sys);
    sol.wall.transform_s += seconds_since(tt);

    CVec rhs(sys.n_rows), inj_ph(sys.n_rows), v_ph_new(sys.n_rows);
    int grow_streak = 0;
    for (int it = 1; it <= cfg.max_iterations; ++it) {
        try {
            tt = Clock::now();
            std::fill(inj_ph.begin(), inj_ph.end(), Complex(0.0, 0.0));
            plan.evaluate(m, v_ph, inj_ph);
            // device buses are the only nonzero injection rows
            std::fill(rhs.begin(), rhs.end(), Complex(0.0, 0.0));
            for (int b : plan.active_buses()) frames.bus_to_system(b, inj_ph, rhs);
            sol.wall.transform_s += seconds_since(tt);
        } catch (const NumericError& e) {
            sol.diagnostic = e.what();
            sol.v_phase = v_ph;
            sol.iterations = it - 1;
            return sol;
        }
        tt = Clock::now();
        for (const auto& st : sys.stencils) {
            Complex s = 0.0;
            for (const auto& term : st.terms) s += term.coeff * v_sys[term.source_row];
            rhs[st.target_row] -= s;
        }
        for (std::size_t k = 0; k < sys.slack_rows.size(); ++k)
            rhs[sys.slack_rows[k]] = sys.slack_values[k];
        CVec v_new = solver(rhs);
        sol.wall.solve_s += seconds_since(tt);

        tt = Clock::now();
        frames.to_phase(v_new, v_ph_new);
        sol.wall.transform_s += seconds_since(tt);

        double err = 0.0;
        for (int i = 0; i < sys.n_rows; ++i) err = std::max(err, std::abs(v_ph_new[i] - v_ph[i]));
        sol.error_trace.push_back(err);
        std::swap(v_ph, v_ph_new);
        v_sys = std::move(v_new);
        sol.iterations = it;

        if (err <= cfg.epsilon) {
            sol.converged = true;
            break;
        }
        if (sol.error_trace.size() >= 2 && err > sol.error_trace[sol.error_trace.size() - 2]) {
            if (++grow_streak >= 5) {
                sol.diagnostic = "voltage error grew for 5 consecutive iterations";
                break;
            }
        } else {
            grow_streak = 0;
        }
    }
    sol.v_phase = std::move(v_ph);
    if (!sol.converged && sol.diagnostic.empty())
        sol.diagnostic = "not converged within the iteration limit";
    return sol;
}

std::vector<MatrixMod> drop_slack_row_mods(const AssembledSystem& sys,
                                           const std::vector<MatrixMod>& mods) {
    std::vector<MatrixMod> out;
    out.reserve(mods.size());
    for (const auto& md : mods) {
        bool slack = false;
        for (int r : sys.slack_rows) slack |= (r == md.row);
        if (!slack) out.push_back(md);
    }
    return out;
}

}  // namespace

FullSolveEngine::FullSolveEngine(const NetworkModel& m, AssemblyMode mode) {
    auto t0 = Clock::now();
    sys_ = assemble(m, mode);
    perm_cache_ = amd_order(sys_.y);
    factors_ = lu_factor(sys_.y, perm_cache_);
    factor_seconds_ = seconds_since(t0);
    plan_ = std::make_shared<InjectionPlan>(InjectionPlan::build(m, sys_));
    frames_ = std::make_shared<FrameTable>(FrameTable::build(sys_));
}

void FullSolveEngine::rebuild(const NetworkModel& current) {
    auto t0 = Clock::now();
    sys_ = assemble(current, sys_.mode);
    if (static_cast<int>(perm_cache_.size()) != sys_.y.n()) perm_cache_ = amd_order(sys_.y);
    factors_ = lu_factor(sys_.y, perm_cache_);
    factor_seconds_ = seconds_since(t0);
    plan_ = std::make_shared<InjectionPlan>(InjectionPlan::build(current, sys_));
    frames_ = std::make_shared<FrameTable>(FrameTable::build(sys_));
}

PowerFlowSolution FullSolveEngine::run(const NetworkModel& current, const SolverConfig& cfg,
                                       const std::vector<MatrixMod>& mods,
                                       const CVec* warm_start_phase) const {
    const FrameTable& frames = *static_cast<const FrameTable*>(frames_.get());
    if (mods.empty()) {
        SolveFn fn = [this](const CVec& b) { return solve(factors_, b); };
        return fixed_point(current, cfg, sys_, *plan_, frames, fn, warm_start_phase);
    }
    auto t0 = Clock::now();
    CompensatedSolver cs(sys_.y, factors_, drop_slack_row_mods(sys_, mods));
    double setup = seconds_since(t0);
    SolveFn fn = [&cs](const CVec& b) { return cs.solve(b); };
    PowerFlowSolution sol = fixed_point(current, cfg, sys_, *plan_, frames, fn, warm_start_phase);
    sol.wall.solve_s += setup;  // compensation setup rides the substitution budget
    return sol;
}

PowerFlowSolution solve_full(const NetworkModel& m, const SolverConfig& cfg) {
    FullSolveEngine engine(m, cfg.mode);
    PowerFlowSolution sol = engine.run(m, cfg, {});
    sol.wall.factor_s = engine.factor_seconds();
    return sol;
}

PowerFlowSolution solve_kron(const NetworkModel& m, const SolverConfig& cfg) {
    FullSolveEngine engine(m, AssemblyMode::KronReduced012);
    PowerFlowSolution sol = engine.run(m, cfg, {});
    sol.wall.factor_s = engine.factor_seconds();
    return sol;
}

// ---------------------------------------------------------------------------
// decomposed method: three decoupled sequence networks for the MV segment,
// one eigen-basis system per LV feeder, fictitious slack values exchanged at
// the transformer secondaries, Jacobi-style synchronized updates
// ---------------------------------------------------------------------------

namespace {

struct Feeder {
    std::vector<int> buses;                  // model bus indices, secondary first
    int tx_index = -1;
    int secondary_bus = -1;
    std::vector<int> rows;                   // global mixed rows of this feeder
    std::vector<int> local_of_global;
    SparseComplexMatrix m;                   // includes the secondary-bus rows
    LuFactors factors;
    std::vector<InjectionStencil> stencils;  // local row ids
    InjectionPlan plan;                      // devices on this feeder only
    // coupling of the secondary rows to the MV-side voltages, recomputed per
    // run so tap probes stay factorization-free: (local row, global col, value)
    std::vector<std::tuple<int, int, Complex>> boundary_offblock;
    mutable double member_seconds = 0.0;
};

struct MvSeq {
    SparseComplexMatrix m;
    LuFactors factors;
    mutable double member_seconds = 0.0;
};

}  // namespace

struct DecomposedSolver::Impl {
    NetworkModel snapshot;            // controls as of the last rebuild
    AssembledSystem mixed;
    FrameTable frames;
    std::vector<int> mv_buses;
    std::vector<int> mv_pos;
    MvSeq seq[3];
    std::vector<Feeder> feeders;
    InjectionPlan mv_plan;            // devices on MV buses
    std::vector<std::tuple<int, int, int, int, Complex>> mv_mutual;
    std::vector<int> seq_perm[3];
    std::vector<std::vector<int>> feeder_perm;
    // charged to the first run after each (re)build, then zeroed, so a long
    // probe sequence counts the factorization once as the paper does
    mutable double factor_stage_seconds = 0.0;

    void build(const NetworkModel& m);
    struct TxBlocks {
        CMat dd012;   // 3x3
        CMat dyg;     // 3x4 mixed frame
        int primary_pos = 0;
    };
    std::vector<TxBlocks> tx_blocks(const NetworkModel& current) const;
    void refresh_offblocks(const NetworkModel& current, std::vector<Feeder>& fds) const;
};

void DecomposedSolver::Impl::build(const NetworkModel& m) {
    snapshot = m;
    mixed = assemble_mixed(m);
    mv_buses.clear();
    mv_pos.assign(m.buses.size(), -1);
    feeders.clear();
    mv_mutual.clear();

    for (std::size_t b = 0; b < m.buses.size(); ++b)
        if (m.buses[b].segment == Segment::MV3wire) {
            mv_pos[b] = static_cast<int>(mv_buses.size());
            mv_buses.push_back(static_cast<int>(b));
        }
    const int n_mv = static_cast<int>(mv_buses.size());
    const auto& f012 = fortescue_transform_matrix();
    mv_plan = InjectionPlan::build_subset(m, mixed, mv_buses);

    std::vector<int> rows[3], cols[3];
    CVec vals[3];
    // placeholder diagonals on slack rows; set_identity_row overwrites them
    for (int s = 0; s < 3; ++s)
        for (int p = 0; p < n_mv; ++p)
            if (m.buses[mv_buses[p]].kind == BusKind::Slack) {
                rows[s].push_back(p);
                cols[s].push_back(p);
                vals[s].push_back(Complex(1.0, 0.0));
            }
    for (const auto& l : m.lines) {
        int fi = m.bus_index(l.from);
        if (m.buses[fi].segment != Segment::MV3wire) continue;
        int ti = m.bus_index(l.to);
        int fp = mv_pos[fi], tp = mv_pos[ti];
        CMat y012 = f012.to_sequence * l.y_series_pu * f012.to_phase;
        CMat ysh = l.y_shunt_end_pu.rows() == 3
                       ? f012.to_sequence * l.y_shunt_end_pu * f012.to_phase
                       : CMat(3, 3);
        double drop = 1e-13 * y012.norm_max();
        for (int s = 0; s < 3; ++s) {
            Complex d = y012(s, s);
            rows[s].insert(rows[s].end(), {fp, tp, fp, tp});
            cols[s].insert(cols[s].end(), {fp, tp, tp, fp});
            vals[s].insert(vals[s].end(), {d + ysh(s, s), d + ysh(s, s), -d, -d});
        }
        for (int sr = 0; sr < 3; ++sr)
            for (int sc = 0; sc < 3; ++sc) {
                if (sr == sc) continue;
                Complex v = y012(sr, sc);
                if (std::abs(v) > drop) {
                    mv_mutual.push_back({sr, fp, sc, fp, v});
                    mv_mutual.push_back({sr, fp, sc, tp, -v});
                    mv_mutual.push_back({sr, tp, sc, tp, v});
                    mv_mutual.push_back({sr, tp, sc, fp, -v});
                }
                Complex sh = ysh(sr, sc);
                if (std::abs(sh) > drop) {
                    mv_mutual.push_back({sr, fp, sc, fp, sh});
                    mv_mutual.push_back({sr, tp, sc, tp, sh});
                }
            }
    }
    for (const auto& c : m.controls) {
        if (c.kind != ControlKind::SwitchedCapacitor) continue;
        int bi = m.bus_index(c.target);
        if (bi < 0 || mv_pos[bi] < 0) continue;
        double q3_pu = c.setting * c.step_size * 1e-3 / m.s_base_mva;
        if (q3_pu == 0.0) continue;
        for (int s = 0; s < 3; ++s) {
            rows[s].push_back(mv_pos[bi]);
            cols[s].push_back(mv_pos[bi]);
            vals[s].push_back(Complex(0.0, q3_pu));
        }
    }
    auto tf = Clock::now();
    double mv_factor_max = 0.0;
    for (int s = 0; s < 3; ++s) {
        seq[s].m = SparseComplexMatrix::from_triplets(n_mv, rows[s], cols[s], vals[s]);
        for (int p = 0; p < n_mv; ++p)
            if (m.buses[mv_buses[p]].kind == BusKind::Slack) seq[s].m.set_identity_row(p);
        tf = Clock::now();
        if (static_cast<int>(seq_perm[s].size()) != seq[s].m.n())
            seq_perm[s] = amd_order(seq[s].m);
        seq[s].factors = lu_factor(seq[s].m, seq_perm[s]);
        mv_factor_max = std::max(mv_factor_max, seconds_since(tf));
        seq[s].member_seconds = 0.0;
    }

    // LV feeders by traversal from each transformer secondary
    std::vector<std::vector<std::pair<int, int>>> lv_adj(m.buses.size());  // bus -> (other, line)
    for (std::size_t li = 0; li < m.lines.size(); ++li) {
        int fi = m.bus_index(m.lines[li].from), ti = m.bus_index(m.lines[li].to);
        if (m.buses[fi].segment != Segment::LV4wire) continue;
        lv_adj[fi].push_back({ti, static_cast<int>(li)});
        lv_adj[ti].push_back({fi, static_cast<int>(li)});
    }
    std::vector<int> feeder_of(m.buses.size(), -1);
    for (std::size_t t = 0; t < m.transformers.size(); ++t) {
        int sec = m.bus_index(m.transformers[t].to);
        if (feeder_of[sec] != -1) throw Error("decomposed: LV feeder fed by two transformers");
        Feeder fd;
        fd.tx_index = static_cast<int>(t);
        fd.secondary_bus = sec;
        std::vector<int> stack = {sec};
        feeder_of[sec] = static_cast<int>(t);
        fd.buses.push_back(sec);
        while (!stack.empty()) {
            int b = stack.back();
            stack.pop_back();
            for (auto [other, li] : lv_adj[b]) {
                if (feeder_of[other] == static_cast<int>(t)) continue;
                if (feeder_of[other] != -1)
                    throw Error("decomposed: LV feeder touches two transformers");
                feeder_of[other] = static_cast<int>(t);
                fd.buses.push_back(other);
                stack.push_back(other);
            }
        }
        feeders.push_back(std::move(fd));
    }
    for (std::size_t b = 0; b < m.buses.size(); ++b)
        if (m.buses[b].segment == Segment::LV4wire && feeder_of[b] == -1)
            throw Error("decomposed: LV bus '" + m.buses[b].id + "' has no feeding transformer");

    double lv_factor_max = 0.0;
    for (auto& fd : feeders) {
        fd.local_of_global.assign(mixed.n_rows, -1);
        for (int b : fd.buses)
            for (int a = 0; a < 4; ++a) {
                fd.local_of_global[mixed.row_of(b, a)] = static_cast<int>(fd.rows.size());
                fd.rows.push_back(mixed.row_of(b, a));
            }
        const int nl = static_cast<int>(fd.rows.size());
        const int r0 = mixed.row_of(fd.secondary_bus, 0);
        std::vector<int> fr, fc;
        CVec fv;
        const auto& y = mixed.y_unconstrained;
        for (int gc = 0; gc < mixed.n_rows; ++gc) {
            for (int p = y.col_ptr()[gc]; p < y.col_ptr()[gc + 1]; ++p) {
                int gr = y.row_idx()[p];
                int lr = fd.local_of_global[gr];
                if (lr < 0) continue;
                int lc = fd.local_of_global[gc];
                if (lc < 0) {
                    if (gr < r0 || gr >= r0 + 4)
                        throw Error("decomposed: interior LV row couples outside its feeder");
                    continue;  // transformer coupling, rebuilt per run
                }
                fr.push_back(lr);
                fc.push_back(lc);
                fv.push_back(y.values()[p]);
            }
        }
        fd.m = SparseComplexMatrix::from_triplets(nl, fr, fc, fv);
        tf = Clock::now();
        std::size_t fidx = feeders.size();
        if (feeder_perm.size() <= fidx) feeder_perm.resize(fidx + 1);
        if (static_cast<int>(feeder_perm[fidx].size()) != fd.m.n())
            feeder_perm[fidx] = amd_order(fd.m);
        fd.factors = lu_factor(fd.m, feeder_perm[fidx]);
        lv_factor_max = std::max(lv_factor_max, seconds_since(tf));

        for (const auto& st : mixed.stencils) {
            int lt = fd.local_of_global[st.target_row];
            if (lt < 0) continue;
            InjectionStencil ls = st;
            ls.target_row = lt;
            fd.stencils.push_back(std::move(ls));
        }
        fd.plan = InjectionPlan::build_subset(m, mixed, fd.buses);
    }
    factor_stage_seconds = mv_factor_max + lv_factor_max;  // parallel-stage metric
    refresh_offblocks(m, feeders);
    frames = FrameTable::build(mixed);
}

std::vector<DecomposedSolver::Impl::TxBlocks> DecomposedSolver::Impl::tx_blocks(
    const NetworkModel& current) const {
    const auto& f = fortescue_transform_matrix();
    std::vector<TxBlocks> out;
    for (std::size_t t = 0; t < current.transformers.size(); ++t) {
        const auto& tx = current.transformers[t];
        TransformerBlocks blocks = transformer_phase_blocks(tx);
        int sec = current.bus_index(tx.to);
        TxBlocks tb;
        tb.dd012 = f.to_sequence * blocks.dd * f.to_phase;
        tb.dyg = f.to_sequence * blocks.dy * mixed.bus_eig[sec]->to_phase;
        tb.primary_pos = mv_pos[current.bus_index(tx.from)];
        out.push_back(std::move(tb));
    }
    return out;
}

void DecomposedSolver::Impl::refresh_offblocks(const NetworkModel& current,
                                               std::vector<Feeder>& fds) const {
    const auto& f = fortescue_transform_matrix();
    for (auto& fd : fds) {
        fd.boundary_offblock.clear();
        const auto& tx = current.transformers[fd.tx_index];
        TransformerBlocks blocks = transformer_phase_blocks(tx);
        int sec = current.bus_index(tx.to);
        int prim = current.bus_index(tx.from);
        CMat ygd = mixed.bus_eig[sec]->to_eigen * blocks.yd * f.to_phase;  // 4x3 mixed frame
        double drop = 1e-13 * ygd.norm_max();
        int lr0 = fd.local_of_global[mixed.row_of(sec, 0)];
        for (int i = 0; i < 4; ++i)
            for (int j = 0; j < 3; ++j) {
                if (std::abs(ygd(i, j)) <= drop) continue;
                fd.boundary_offblock.push_back({lr0 + i, mixed.row_of(prim, j), ygd(i, j)});
            }
    }
}

DecomposedSolver::DecomposedSolver(const NetworkModel& m, const SolverConfig& cfg)
    : impl_(std::make_unique<Impl>()), cfg_(cfg) {
    impl_->build(m);
}

DecomposedSolver::~DecomposedSolver() = default;
DecomposedSolver::DecomposedSolver(DecomposedSolver&&) noexcept = default;

void DecomposedSolver::rebuild(const NetworkModel& current) { impl_->build(current); }

std::vector<std::pair<std::string, std::pair<std::int64_t, std::int64_t>>>
DecomposedSolver::factor_nnz() const {
    std::vector<std::pair<std::string, std::pair<std::int64_t, std::int64_t>>> out;
    const char* names[3] = {"seq0", "seq1", "seq2"};
    for (int s = 0; s < 3; ++s)
        out.push_back({names[s], {impl_->seq[s].factors.nnz_l, impl_->seq[s].factors.nnz_u}});
    for (std::size_t k = 0; k < impl_->feeders.size(); ++k)
        out.push_back({"lv" + std::to_string(k + 1),
                       {impl_->feeders[k].factors.nnz_l, impl_->feeders[k].factors.nnz_u}});
    return out;
}

std::int64_t DecomposedSolver::transform_nnz() const { return impl_->mixed.transform_nnz; }

int DecomposedSolver::mv_position(const std::string& bus_id) const {
    int bi = impl_->snapshot.bus_index(bus_id);
    return bi < 0 ? -1 : impl_->mv_pos[bi];
}

PowerFlowSolution DecomposedSolver::run(const NetworkModel& current,
                                        const std::vector<MatrixMod>* seq_mods,
                                        const CVec* warm_start_phase) const {
    Impl& im = *impl_;
    const AssembledSystem& mixed = im.mixed;
    const NetworkModel& m = current;
    const SolverConfig& cfg = cfg_;

    PowerFlowSolution sol;
    sol.mode = AssemblyMode::Mixed012Eig;
    sol.decomposed = true;
    sol.wall.factor_s = im.factor_stage_seconds;
    im.factor_stage_seconds = 0.0;
    sol.bus_row_start = mixed.bus_row_start;
    sol.bus_axes = mixed.bus_axes;

    const int n_mv = static_cast<int>(im.mv_buses.size());
    const auto& f012 = fortescue_transform_matrix();
    auto txb = im.tx_blocks(current);
    bool taps_moved = false;
    for (std::size_t t = 0; t < current.transformers.size(); ++t)
        taps_moved |= current.transformers[t].tap != im.snapshot.transformers[t].tap;
    std::vector<Feeder> probe_feeders;
    if (taps_moved) {
        probe_feeders = im.feeders;
        im.refresh_offblocks(current, probe_feeders);
    }
    std::vector<Feeder>& active_feeders = taps_moved ? probe_feeders : im.feeders;

    // optional sequence-system compensation (capacitor probes)
    std::unique_ptr<CompensatedSolver> seq_cs[3];
    if (seq_mods) {
        for (int s = 0; s < 3; ++s)
            if (!seq_mods[s].empty())
                seq_cs[s] = std::make_unique<CompensatedSolver>(im.seq[s].m, im.seq[s].factors,
                                                                seq_mods[s]);
    }
    auto seq_solve = [&](int s, const CVec& b) {
        return seq_cs[s] ? seq_cs[s]->solve(b) : solve(im.seq[s].factors, b);
    };

    CVec v_ph = warm_start_phase && static_cast<int>(warm_start_phase->size()) == mixed.n_rows
                    ? *warm_start_phase
                    : flat_start_phase(m, mixed);
    CVec v_sys(mixed.n_rows);
    im.frames.to_system(v_ph, v_sys);

    CVec slack_seq[3];
    std::vector<int> slack_pos;
    for (int s = 0; s < 3; ++s) slack_seq[s].assign(n_mv, Complex(0.0, 0.0));
    for (int p = 0; p < n_mv; ++p) {
        const Bus& b = m.buses[im.mv_buses[p]];
        if (b.kind != BusKind::Slack) continue;
        slack_pos.push_back(p);
        CVec v(3);
        for (int ph = 0; ph < 3; ++ph)
            v[ph] = polar_deg(b.slack_voltage_pu,
                              b.slack_angle_deg - 120.0 * ph + (ph == 2 ? 360.0 : 0.0));
        CVec vs = f012.to_sequence * v;
        for (int s = 0; s < 3; ++s) slack_seq[s][p] = vs[s];
    }

    const double eps_floor = std::min(cfg.epsilon, cfg.boundary_tolerance) * 0.5;
    const int max_outer = std::max(cfg.max_iterations, 200);
    const bool lv_threaded = cfg.threads != 1 && active_feeders.size() > 1;

    auto mv_row = [&](int seq_ax, int pos) { return mixed.row_of(im.mv_buses[pos], seq_ax); };

    // scratch buffers reused across iterations
    CVec v_ph_mv = v_ph;
    CVec inj_scratch(mixed.n_rows, Complex(0.0, 0.0));

    double db_prev = 1.0;
    for (int outer = 1; outer <= max_outer; ++outer) {
        CVec v_ph_prev = v_ph;
        // inexact inner solves: tighten with the boundary residual
        const double eps_inner = std::clamp(0.02 * db_prev, eps_floor, 1e-3);

        // equivalent LV injections at the primaries from the previous state
        std::vector<CVec> i_lv(active_feeders.size());
        for (std::size_t t = 0; t < active_feeders.size(); ++t) {
            const Feeder& fd = active_feeders[t];
            const auto& tb = txb[fd.tx_index];
            CVec v2(3), v3(4);
            for (int s = 0; s < 3; ++s) v2[s] = v_sys[mv_row(s, tb.primary_pos)];
            int r3 = mixed.row_of(fd.secondary_bus, 0);
            for (int a = 0; a < 4; ++a) v3[a] = v_sys[r3 + a];
            CVec i1 = tb.dd012 * v2;
            CVec i2 = tb.dyg * v3;
            i_lv[t] = {i1[0] + i2[0], i1[1] + i2[1], i1[2] + i2[2]};
        }

        // MV stage: the three sequence solves inside each sweep are
        // independent; their parallel cost is the slowest member
        {
            std::vector<CVec> vseq(3, CVec(n_mv));
            for (int s = 0; s < 3; ++s)
                for (int p = 0; p < n_mv; ++p) vseq[s][p] = v_sys[mv_row(s, p)];
            for (int inner = 0; inner < cfg.max_iterations; ++inner) {
                auto tm_stage = Clock::now();
                for (int p = 0; p < n_mv; ++p) {
                    CVec vs = {vseq[0][p], vseq[1][p], vseq[2][p]};
                    CVec vp = f012.to_phase * vs;
                    int b = im.mv_buses[p];
                    for (int ph = 0; ph < 3; ++ph) v_ph_mv[mixed.row_of(b, ph)] = vp[ph];
                }
                for (int b : im.mv_plan.active_buses())
                    for (int a = 0; a < mixed.bus_axes[b]; ++a)
                        inj_scratch[mixed.bus_row_start[b] + a] = 0.0;
                im.mv_plan.evaluate(m, v_ph_mv, inj_scratch);
                CVec rhs[3];
                for (int s = 0; s < 3; ++s) rhs[s].assign(n_mv, Complex(0.0, 0.0));
                for (int b : im.mv_plan.active_buses()) {
                    int p = im.mv_pos[b];
                    CVec ip = {inj_scratch[mixed.row_of(b, 0)], inj_scratch[mixed.row_of(b, 1)],
                               inj_scratch[mixed.row_of(b, 2)]};
                    CVec is = f012.to_sequence * ip;
                    for (int s = 0; s < 3; ++s) rhs[s][p] = is[s];
                }
                for (const auto& [sr, pr, sc, pc, coeff] : im.mv_mutual)
                    rhs[sr][pr] -= coeff * vseq[sc][pc];
                for (std::size_t t = 0; t < active_feeders.size(); ++t)
                    for (int s = 0; s < 3; ++s)
                        rhs[s][txb[active_feeders[t].tx_index].primary_pos] -= i_lv[t][s];
                for (int s = 0; s < 3; ++s)
                    for (int p : slack_pos) rhs[s][p] = slack_seq[s][p];
                double stage_prep = seconds_since(tm_stage);

                double err = 0.0;
                double member_max = 0.0;
                for (int s = 0; s < 3; ++s) {
                    auto tm = Clock::now();
                    CVec out = seq_solve(s, rhs[s]);
                    member_max = std::max(member_max, seconds_since(tm));
                    for (int p = 0; p < n_mv; ++p) {
                        err = std::max(err, std::abs(out[p] - vseq[s][p]));
                        vseq[s][p] = out[p];
                    }
                }
                im.seq[0].member_seconds += stage_prep + member_max;
                if (err <= eps_inner) break;
            }
            for (int s = 0; s < 3; ++s)
                for (int p = 0; p < n_mv; ++p) v_sys[mv_row(s, p)] = vseq[s][p];
        }

        // LV stage: feeders in parallel, each with its own inner fixed point;
        // the fictitious-slack rows solve the transformer coupling equations
        // against the frozen MV snapshot
        auto run_feeder = [&](Feeder& fd) {
            auto tm = Clock::now();
            const int nl = static_cast<int>(fd.rows.size());
            CVec vl(nl);
            for (int i = 0; i < nl; ++i) vl[i] = v_sys[fd.rows[i]];
            CVec couple(nl, Complex(0.0, 0.0));
            for (const auto& [lr, gc, v] : fd.boundary_offblock) couple[lr] += v * v_sys[gc];
            CVec v_sys_local(mixed.n_rows, Complex(0.0, 0.0));
            CVec v_ph_local(mixed.n_rows, Complex(0.0, 0.0));
            CVec inj_ph(mixed.n_rows, Complex(0.0, 0.0));
            CVec inj_sys(mixed.n_rows, Complex(0.0, 0.0));
            CVec rhs(nl);
            for (int inner = 0; inner < cfg.max_iterations; ++inner) {
                for (int i = 0; i < nl; ++i) v_sys_local[fd.rows[i]] = vl[i];
                for (int b : fd.buses) im.frames.bus_to_phase(b, v_sys_local, v_ph_local);
                for (int b : fd.plan.active_buses())
                    for (int a = 0; a < 4; ++a) inj_ph[mixed.bus_row_start[b] + a] = 0.0;
                fd.plan.evaluate(m, v_ph_local, inj_ph);
                for (int b : fd.plan.active_buses()) im.frames.bus_to_system(b, inj_ph, inj_sys);
                for (int i = 0; i < nl; ++i) rhs[i] = inj_sys[fd.rows[i]] - couple[i];
                for (const auto& st : fd.stencils) {
                    Complex s = 0.0;
                    for (const auto& term : st.terms)
                        s += term.coeff * v_sys_local[term.source_row];
                    rhs[st.target_row] -= s;
                }
                CVec out = solve(fd.factors, rhs);
                double err = 0.0;
                for (int i = 0; i < nl; ++i) err = std::max(err, std::abs(out[i] - vl[i]));
                vl = std::move(out);
                if (err <= eps_inner) break;
            }
            for (int i = 0; i < nl; ++i) v_sys[fd.rows[i]] = vl[i];
            fd.member_seconds += seconds_since(tm);
        };
        if (lv_threaded) {
            std::vector<std::future<void>> fs;
            for (auto& fd : active_feeders)  // feeders write disjoint rows
                fs.push_back(std::async(std::launch::async, [&run_feeder, &fd] { run_feeder(fd); }));
            for (auto& fut : fs) fut.get();
        } else {
            for (auto& fd : active_feeders) run_feeder(fd);
        }

        auto tconv = Clock::now();
        im.frames.to_phase(v_sys, v_ph);
        sol.wall.transform_s += seconds_since(tconv);
        double db = 0.0;
        for (int i = 0; i < mixed.n_rows; ++i) db = std::max(db, std::abs(v_ph[i] - v_ph_prev[i]));
        sol.error_trace.push_back(db);
        sol.iterations = outer;
        db_prev = db;
        if (db <= cfg.boundary_tolerance) {
            sol.converged = true;
            break;
        }
    }

    // parallel execution time: the MV stage already accumulated its slowest
    // member per sweep; feeders take the slowest feeder
    double lv_member = 0.0;
    sol.wall.solve_s = im.seq[0].member_seconds;
    im.seq[0].member_seconds = 0.0;
    for (auto& fd : active_feeders) {
        lv_member = std::max(lv_member, fd.member_seconds);
        fd.member_seconds = 0.0;
    }
    sol.wall.solve_s += lv_member;

    sol.v_phase = v_ph;
    if (!sol.converged) sol.diagnostic = "decomposed outer loop not converged";
    return sol;
}

PowerFlowSolution solve_decomposed(const NetworkModel& m, const SolverConfig& cfg) {
    DecomposedSolver solver(m, cfg);
    return solver.run(m, nullptr);
}

PowerFlowSolution power_flow(const NetworkModel& m, const SolverConfig& cfg) {
    if (cfg.decomposed) {
        if (cfg.mode != AssemblyMode::Mixed012Eig)
            throw Error("decomposed solves run in mixed coordinates");
        return solve_decomposed(m, cfg);
    }
    if (cfg.mode == AssemblyMode::KronReduced012) return solve_kron(m, cfg);
    return solve_full(m, cfg);
}

// ---------------------------------------------------------------------------
// diagnostics
// ---------------------------------------------------------------------------

namespace {

// minimal layout stand-in so zip_injections can run against a solution
AssembledSystem layout_of(const NetworkModel& m, const PowerFlowSolution& sol) {
    AssembledSystem layout;
    layout.mode = sol.mode;
    layout.n_rows = static_cast<int>(sol.v_phase.size());
    layout.bus_row_start = sol.bus_row_start;
    layout.bus_axes = sol.bus_axes;
    layout.bus_frame.assign(m.buses.size(), FrameTag::PhaseABC);
    return layout;
}

}  // namespace

std::vector<ElementCurrents> branch_currents(const NetworkModel& m, const PowerFlowSolution& sol) {
    std::vector<ElementCurrents> out;
    bool kron = sol.mode == AssemblyMode::KronReduced012;
    auto v_at = [&](int bus, int order) {
        CVec v(order, Complex(0.0, 0.0));
        for (int a = 0; a < std::min(order, sol.bus_axes[bus]); ++a) v[a] = sol.voltage(bus, a);
        return v;
    };
    for (const auto& l : m.lines) {
        int fi = m.bus_index(l.from), ti = m.bus_index(l.to);
        CMat series = l.y_series_pu;
        CMat sh = l.y_shunt_end_pu;
        if (kron && m.buses[fi].segment == Segment::LV4wire) {
            series = kron_reduce(series.inverse(), 3).inverse();
            if (sh.rows() == 4) {
                CMat sh3(3, 3);
                for (int i = 0; i < 3; ++i)
                    for (int j = 0; j < 3; ++j) sh3(i, j) = sh(i, j);
                sh = sh3;
            }
        }
        int order = static_cast<int>(series.rows());
        CVec vf = v_at(fi, order), vt = v_at(ti, order);
        CVec dv(order);
        for (int i = 0; i < order; ++i) dv[i] = vf[i] - vt[i];
        ElementCurrents ec;
        ec.id = l.id;
        ec.from_bus = fi;
        ec.to_bus = ti;
        ec.into_from = series * dv;
        ec.into_to = ec.into_from;
        for (auto& x : ec.into_to) x = -x;
        if (sh.rows() == static_cast<std::size_t>(order) && sh.norm_max() > 0.0) {
            CVec sf = sh * vf, st = sh * vt;
            for (int i = 0; i < order; ++i) {
                ec.into_from[i] += sf[i];
                ec.into_to[i] += st[i];
            }
        }
        out.push_back(std::move(ec));
    }
    for (const auto& t : m.transformers) {
        int fi = m.bus_index(t.from), ti = m.bus_index(t.to);
        TransformerBlocks b = transformer_phase_blocks(t);
        CVec v2 = v_at(fi, 3);
        CVec v3 = v_at(ti, 4);  // kron: the neutral axis reads back as ground
        ElementCurrents ec;
        ec.id = t.id;
        ec.from_bus = fi;
        ec.to_bus = ti;
        ec.into_from = b.dd * v2;
        CVec tmp = b.dy * v3;
        for (int i = 0; i < 3; ++i) ec.into_from[i] += tmp[i];
        if (kron) {
            ec.into_to = b.yd * v2;
            for (int i = 0; i < 3; ++i) ec.into_to[i] += b.yy(i, i) * v3[i];
            ec.into_to.resize(3);
        } else {
            ec.into_to = b.yd * v2;
            CVec tmp2 = b.yy * v3;
            for (int i = 0; i < 4; ++i) ec.into_to[i] += tmp2[i];
        }
        out.push_back(std::move(ec));
    }
    return out;
}

double power_balance_residual(const NetworkModel& m, const PowerFlowSolution& sol) {
    bool kron = sol.mode == AssemblyMode::KronReduced012;
    auto currents = branch_currents(m, sol);

    Complex s_elements(0.0, 0.0);
    for (const auto& ec : currents) {
        for (int i = 0; i < static_cast<int>(ec.into_from.size()); ++i)
            if (i < sol.bus_axes[ec.from_bus])
                s_elements += sol.voltage(ec.from_bus, i) * std::conj(ec.into_from[i]);
        if (ec.to_bus >= 0)
            for (int i = 0; i < static_cast<int>(ec.into_to.size()); ++i)
                if (i < sol.bus_axes[ec.to_bus])
                    s_elements += sol.voltage(ec.to_bus, i) * std::conj(ec.into_to[i]);
    }
    if (!kron)
        for (const auto& g : m.groundings) {
            int bi = m.bus_index(g.bus);
            Complex vn = sol.voltage(bi, 3);
            s_elements += vn * std::conj(g.g_pu * vn);
        }
    for (const auto& c : m.controls) {
        if (c.kind != ControlKind::SwitchedCapacitor) continue;
        int bi = m.bus_index(c.target);
        double q3 = c.setting * c.step_size * 1e-3 / m.s_base_mva;
        for (int p = 0; p < 3; ++p) {
            Complex v = sol.voltage(bi, p);
            s_elements += v * std::conj(Complex(0.0, q3) * v);
        }
    }

    CVec inj = zip_injections(m, layout_of(m, sol), sol.v_phase);
    Complex s_injected(0.0, 0.0);
    for (std::size_t b = 0; b < m.buses.size(); ++b)
        for (int a = 0; a < sol.bus_axes[b]; ++a)
            s_injected +=
                sol.voltage(static_cast<int>(b), a) * std::conj(inj[sol.bus_row_start[b] + a]);

    // slack currents balance whatever the elements absorb beyond the injections
    Complex s_sources(0.0, 0.0);
    for (std::size_t b = 0; b < m.buses.size(); ++b) {
        if (m.buses[b].kind != BusKind::Slack) continue;
        CVec i_slack(sol.bus_axes[b], Complex(0.0, 0.0));
        for (const auto& ec : currents) {
            if (ec.from_bus == static_cast<int>(b))
                for (int i = 0; i < std::min<int>(sol.bus_axes[b], ec.into_from.size()); ++i)
                    i_slack[i] += ec.into_from[i];
            if (ec.to_bus == static_cast<int>(b))
                for (int i = 0; i < std::min<int>(sol.bus_axes[b], ec.into_to.size()); ++i)
                    i_slack[i] += ec.into_to[i];
        }
        for (const auto& c : m.controls) {
            if (c.kind != ControlKind::SwitchedCapacitor ||
                m.bus_index(c.target) != static_cast<int>(b))
                continue;
            double q3 = c.setting * c.step_size * 1e-3 / m.s_base_mva;
            for (int p = 0; p < 3; ++p)
                i_slack[p] += Complex(0.0, q3) * sol.voltage(static_cast<int>(b), p);
        }
        for (int a = 0; a < sol.bus_axes[b]; ++a) {
            i_slack[a] -= inj[sol.bus_row_start[b] + a];
            s_sources += sol.voltage(static_cast<int>(b), a) * std::conj(i_slack[a]);
        }
    }

    return std::abs(s_sources + s_injected - s_elements);
}

double max_neutral_current_residual(const NetworkModel& m, const PowerFlowSolution& sol) {
    if (sol.mode == AssemblyMode::KronReduced012) return 0.0;
    CVec inj = zip_injections(m, layout_of(m, sol), sol.v_phase);
    auto currents = branch_currents(m, sol);
    double worst = 0.0;
    for (std::size_t b = 0; b < m.buses.size(); ++b) {
        if (m.buses[b].segment != Segment::LV4wire) continue;
        Complex kcl = -inj[sol.bus_row_start[b] + 3];
        for (const auto& ec : currents) {
            if (ec.from_bus == static_cast<int>(b) && ec.into_from.size() == 4)
                kcl += ec.into_from[3];
            if (ec.to_bus == static_cast<int>(b) && ec.into_to.size() == 4) kcl += ec.into_to[3];
        }
        for (const auto& g : m.groundings)
            if (m.bus_index(g.bus) == static_cast<int>(b))
                kcl += g.g_pu * sol.voltage(static_cast<int>(b), 3);
        worst = std::max(worst, std::abs(kcl));
    }
    return worst;
}

}  // namespace ebus
