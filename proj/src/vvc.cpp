#include "ebus/vvc.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include <json.hpp>

namespace ebus {

using nlohmann::json;

VvcLimits parse_limits(const std::string& text, const std::string& origin) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw Error(origin + ": " + e.what());
    }
    VvcLimits lim;
    lim.v_min = j.value("v_min_pu", 0.95);
    lim.v_max = j.value("v_max_pu", 1.05);
    lim.i_max_pu = j.value("i_max_pu", 1e9);
    lim.c_v = j.value("c_v", 1000.0);
    lim.c_i = j.value("c_i", 1000.0);
    if (auto it = j.find("v_min_per_bus"); it != j.end())
        for (const auto& [k, v] : it->items()) lim.v_min_bus[k] = v.get<double>();
    if (auto it = j.find("v_max_per_bus"); it != j.end())
        for (const auto& [k, v] : it->items()) lim.v_max_bus[k] = v.get<double>();
    if (auto it = j.find("i_max_per_branch"); it != j.end())
        for (const auto& [k, v] : it->items()) lim.i_max_branch[k] = v.get<double>();
    if (lim.v_min >= lim.v_max) throw Error(origin + ": v_min_pu must be below v_max_pu");
    return lim;
}

VvcLimits load_limits(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open limits file '" + path + "'");
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_limits(ss.str(), path);
}

VvcEvaluator::VvcEvaluator(const NetworkModel& model, VvcLimits limits)
    : limits_(std::move(limits)) {
    AssembledSystem phase = assemble_phase(model);
    y_phase_ = phase.y_unconstrained;
    bus_row_start_ = phase.bus_row_start;
    bus_axes_ = phase.bus_axes;
    // a hinge against an astronomically large limit can never activate
    monitor_currents_ = limits_.i_max_pu < 1e8 || !limits_.i_max_branch.empty();
}

namespace {

double bus_limit(const std::map<std::string, double>& per_bus, const std::string& id,
                 double fallback) {
    auto it = per_bus.find(id);
    return it == per_bus.end() ? fallback : it->second;
}

}  // namespace

ObjectiveBreakdown VvcEvaluator::objective(const NetworkModel& m,
                                           const PowerFlowSolution& sol) const {
    if (!sol.converged) throw Error("objective: power flow did not converge");
    if (static_cast<int>(sol.v_phase.size()) != y_phase_.n())
        throw Error("objective: solution is not in full phase coordinates");

    ObjectiveBreakdown out;
    // V_re' G V_re + V_im' G V_im against the real part of the phase matrix
    const auto& colp = y_phase_.col_ptr();
    const auto& rows = y_phase_.row_idx();
    const auto& vals = y_phase_.values();
    for (int c = 0; c < y_phase_.n(); ++c) {
        double vc_re = sol.v_phase[c].real();
        double vc_im = sol.v_phase[c].imag();
        for (int p = colp[c]; p < colp[c + 1]; ++p) {
            double g = vals[p].real();
            if (g == 0.0) continue;
            out.loss_term +=
                sol.v_phase[rows[p]].real() * g * vc_re + sol.v_phase[rows[p]].imag() * g * vc_im;
        }
    }

    for (std::size_t b = 0; b < m.buses.size(); ++b) {
        double vmin = bus_limit(limits_.v_min_bus, m.buses[b].id, limits_.v_min);
        double vmax = bus_limit(limits_.v_max_bus, m.buses[b].id, limits_.v_max);
        for (int p = 0; p < 3; ++p) {
            double mag = std::abs(sol.voltage(static_cast<int>(b), p));
            out.voltage_penalty += limits_.c_v * std::max(0.0, mag - vmax);
            out.voltage_penalty += limits_.c_v * std::max(0.0, vmin - mag);
        }
    }

    if (monitor_currents_)
        for (const auto& ec : branch_currents(m, sol)) {
            double imax = limits_.i_max_pu;
            auto it = limits_.i_max_branch.find(ec.id);
            if (it != limits_.i_max_branch.end()) imax = it->second;
            for (const auto& i : ec.into_from)
                out.current_penalty += limits_.c_i * std::max(0.0, std::abs(i) - imax);
        }
    return out;
}

int VvcEvaluator::count_violations(const NetworkModel& m, const PowerFlowSolution& sol) const {
    int n = 0;
    for (std::size_t b = 0; b < m.buses.size(); ++b) {
        double vmin = bus_limit(limits_.v_min_bus, m.buses[b].id, limits_.v_min);
        double vmax = bus_limit(limits_.v_max_bus, m.buses[b].id, limits_.v_max);
        for (int p = 0; p < 3; ++p) {
            double mag = std::abs(sol.voltage(static_cast<int>(b), p));
            if (mag > vmax || mag < vmin) ++n;
        }
    }
    if (monitor_currents_)
        for (const auto& ec : branch_currents(m, sol)) {
            double imax = limits_.i_max_pu;
            auto it = limits_.i_max_branch.find(ec.id);
            if (it != limits_.i_max_branch.end()) imax = it->second;
            for (const auto& i : ec.into_from)
                if (std::abs(i) > imax) ++n;
        }
    return n;
}

CVec VvcEvaluator::gradient_phase(const NetworkModel& m, const PowerFlowSolution& sol) const {
    const int n = y_phase_.n();
    CVec w(n, Complex(0.0, 0.0));

    // quadratic terms: w = 2 G V_re - 2 j G V_im
    {
        std::vector<double> t_re(n, 0.0), t_im(n, 0.0);
        const auto& colp = y_phase_.col_ptr();
        const auto& rows = y_phase_.row_idx();
        const auto& vals = y_phase_.values();
        for (int c = 0; c < n; ++c)
            for (int p = colp[c]; p < colp[c + 1]; ++p) {
                double g = vals[p].real();
                if (g == 0.0) continue;
                t_re[rows[p]] += g * sol.v_phase[c].real();
                t_im[rows[p]] += g * sol.v_phase[c].imag();
            }
        // the loss is V' G V with G as stored: d/dV gives (G + G') V
        std::vector<double> s_re(n, 0.0), s_im(n, 0.0);
        for (int c = 0; c < n; ++c)
            for (int p = colp[c]; p < colp[c + 1]; ++p) {
                double g = vals[p].real();
                if (g == 0.0) continue;
                s_re[c] += g * sol.v_phase[rows[p]].real();
                s_im[c] += g * sol.v_phase[rows[p]].imag();
            }
        for (int i = 0; i < n; ++i)
            w[i] += Complex(t_re[i] + s_re[i], 0.0) - Complex(0.0, 1.0) * (t_im[i] + s_im[i]);
    }

    // voltage hinge subgradients
    for (std::size_t b = 0; b < m.buses.size(); ++b) {
        double vmin = bus_limit(limits_.v_min_bus, m.buses[b].id, limits_.v_min);
        double vmax = bus_limit(limits_.v_max_bus, m.buses[b].id, limits_.v_max);
        for (int p = 0; p < 3; ++p) {
            int r = sol.bus_row_start[b] + p;
            Complex v = sol.v_phase[r];
            double mag = std::abs(v);
            if (mag < 1e-12) continue;
            if (mag > vmax) w[r] += limits_.c_v * std::conj(v) / mag;
            if (mag < vmin) w[r] -= limits_.c_v * std::conj(v) / mag;
        }
    }

    // current hinge subgradients: |I| depends linearly on the terminal voltages
    if (!monitor_currents_) return w;
    for (const auto& l : m.lines) {
        int fi = m.bus_index(l.from), ti = m.bus_index(l.to);
        double imax = limits_.i_max_pu;
        auto it = limits_.i_max_branch.find(l.id);
        if (it != limits_.i_max_branch.end()) imax = it->second;
        const CMat& ys = l.y_series_pu;
        const CMat& sh = l.y_shunt_end_pu;
        int order = static_cast<int>(ys.rows());
        CVec vf(order), vt(order);
        for (int i = 0; i < order; ++i) {
            vf[i] = sol.voltage(fi, i);
            vt[i] = sol.voltage(ti, i);
        }
        for (int k = 0; k < order; ++k) {
            Complex i_k(0.0, 0.0);
            for (int j = 0; j < order; ++j) {
                i_k += ys(k, j) * (vf[j] - vt[j]);
                if (sh.rows() == static_cast<std::size_t>(order)) i_k += sh(k, j) * vf[j];
            }
            double mag = std::abs(i_k);
            if (mag <= imax || mag < 1e-12) continue;
            Complex u = limits_.c_i * std::conj(i_k) / mag;
            for (int j = 0; j < order; ++j) {
                Complex a_f = ys(k, j) + (sh.rows() == static_cast<std::size_t>(order)
                                              ? sh(k, j)
                                              : Complex(0.0, 0.0));
                w[sol.bus_row_start[fi] + j] += u * a_f;
                w[sol.bus_row_start[ti] + j] -= u * ys(k, j);
            }
        }
    }
    return w;
}

// ---------------------------------------------------------------------------
// sensitivities
// ---------------------------------------------------------------------------

namespace {

double cap_delta_b_pu(const NetworkModel& m, const ControlDevice& c, double steps) {
    return steps * c.step_size * 1e-3 / m.s_base_mva;
}

// right-hand-side derivative for source controls at frozen voltages:
// the VAr step enters the device power as +j h, so each phase injection
// moves by -conj(-j h / 3) / conj(v) = -j h / (3 conj(v))
CVec dg_rhs_step(const NetworkModel& m, const AssembledSystem& sys, const ControlDevice& c,
                 const PowerFlowSolution& sol) {
    CVec d(sys.n_rows, Complex(0.0, 0.0));
    const DgSource* dg = nullptr;
    for (const auto& s : m.dgs)
        if (s.id == c.target) dg = &s;
    if (!dg) throw Error("sensitivities: unknown source '" + c.target + "'");
    int bi = m.bus_index(dg->bus);
    int r0 = sol.bus_row_start[bi];
    bool lv = m.buses[bi].segment == Segment::LV4wire;
    bool has_neutral = sol.bus_axes[bi] == 4;
    Complex v_n = has_neutral ? sol.v_phase[r0 + 3] : Complex(0.0, 0.0);
    Complex sum(0.0, 0.0);
    for (int p = 0; p < 3; ++p) {
        Complex vp = sol.v_phase[r0 + p] - (lv ? v_n : Complex(0.0, 0.0));
        Complex di = Complex(0.0, -c.step_size / 3.0) / std::conj(vp);
        d[r0 + p] = di;
        sum += di;
    }
    if (has_neutral) d[r0 + 3] = -sum;
    return d;
}

}  // namespace

std::vector<double> control_sensitivities(const NetworkModel& m, const FullSolveEngine& engine,
                                          const PowerFlowSolution& base,
                                          const VvcEvaluator& eval) {
    const AssembledSystem& sys = engine.system();
    CVec w_ph = eval.gradient_phase(m, base);
    CVec w_sys = sys.cotransform_gradient(w_ph);
    // the slack rows are Dirichlet: their voltages do not respond
    for (int r : sys.slack_rows) w_sys[r] = 0.0;
    CVec lambda = solve_transpose(engine.factors(), w_sys);
    CVec v_sys = sys.to_system_frame(base.v_phase);

    std::vector<double> out(m.controls.size(), 0.0);
    for (std::size_t k = 0; k < m.controls.size(); ++k) {
        const ControlDevice& c = m.controls[k];
        switch (c.kind) {
            case ControlKind::SwitchedCapacitor: {
                double db = cap_delta_b_pu(m, c, 1.0);
                auto mods = capacitor_change_mods(m, sys, c.target, db);
                double df = 0.0;
                for (const auto& md : mods)
                    df -= (lambda[md.row] * md.delta * v_sys[md.col]).real();
                out[k] = df;
                break;
            }
            case ControlKind::TransformerTap: {
                const TransformerBranch* tx = nullptr;
                for (const auto& t : m.transformers)
                    if (t.id == c.target) tx = &t;
                if (!tx) throw Error("sensitivities: unknown transformer '" + c.target + "'");
                if (tx->tap >= tx->tap_range.max) {
                    // one-sided secant from below at the upper bound
                    auto mods = tap_change_mods(m, sys, c.target, tx->tap - 1, tx->tap);
                    double df = 0.0;
                    for (const auto& md : mods)
                        df -= (lambda[md.row] * md.delta * v_sys[md.col]).real();
                    out[k] = df;
                } else {
                    auto mods = tap_change_mods(m, sys, c.target, tx->tap, tx->tap + 1);
                    double df = 0.0;
                    for (const auto& md : mods)
                        df -= (lambda[md.row] * md.delta * v_sys[md.col]).real();
                    out[k] = df;
                }
                break;
            }
            case ControlKind::DgVar: {
                CVec d_ph = dg_rhs_step(m, sys, c, base);
                CVec d_sys = sys.to_system_frame(d_ph);
                double df = 0.0;
                for (std::size_t i = 0; i < d_sys.size(); ++i)
                    df += (lambda[i] * d_sys[i]).real();
                out[k] = df / c.step_size;  // per unit of the setting
                break;
            }
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// discrete coordinate descent
// ---------------------------------------------------------------------------

namespace {

struct ControlAccess {
    static double get(const NetworkModel& m, std::size_t k) {
        const ControlDevice& c = m.controls[k];
        if (c.kind == ControlKind::TransformerTap) {
            for (const auto& t : m.transformers)
                if (t.id == c.target) return t.tap;
        }
        return c.setting;
    }
    static void set(NetworkModel& m, std::size_t k, double value) {
        ControlDevice& c = m.controls[k];
        c.setting = value;
        if (c.kind == ControlKind::TransformerTap) {
            for (auto& t : m.transformers)
                if (t.id == c.target) t.tap = static_cast<int>(std::lround(value));
        }
    }
    static double step(const NetworkModel& m, std::size_t k) {
        // taps and capacitors move in whole positions; DG VAr moves by its
        // pu resolution
        const ControlDevice& c = m.controls[k];
        return c.kind == ControlKind::DgVar ? c.step_size : 1.0;
    }
    static std::pair<double, double> bounds(const NetworkModel& m, std::size_t k) {
        const ControlDevice& c = m.controls[k];
        if (c.kind == ControlKind::TransformerTap) {
            for (const auto& t : m.transformers)
                if (t.id == c.target)
                    return {static_cast<double>(t.tap_range.min),
                            static_cast<double>(t.tap_range.max)};
        }
        return {c.min, c.max};
    }
};

// finite-difference fallback for the descent direction
std::vector<double> fd_sensitivities(const NetworkModel& m, const SolverConfig& cfg,
                                     const VvcEvaluator& eval, int* pf_runs, double* pf_time) {
    std::vector<double> out(m.controls.size(), 0.0);
    for (std::size_t k = 0; k < m.controls.size(); ++k) {
        double x0 = ControlAccess::get(m, k);
        double h = ControlAccess::step(m, k);
        auto [lo, hi] = ControlAccess::bounds(m, k);
        double xp = std::min(x0 + h, hi), xm = std::max(x0 - h, lo);
        if (xp == xm) continue;
        NetworkModel work = m;
        ControlAccess::set(work, k, xp);
        work.finalize();
        PowerFlowSolution sp = power_flow(work, cfg);
        ControlAccess::set(work, k, xm);
        work.finalize();
        PowerFlowSolution sm = power_flow(work, cfg);
        *pf_runs += 2;
        *pf_time += sp.wall.total() + sm.wall.total();
        if (!sp.converged || !sm.converged) continue;
        out[k] = (eval.objective(work, sp).total() - eval.objective(work, sm).total()) / (xp - xm);
    }
    return out;
}

}  // namespace

VvcResult dcd_optimize(const NetworkModel& model, const SolverConfig& pf_cfg,
                       const VvcLimits& limits, const DcdOptions& opts) {
    if (model.controls.empty()) throw Error("dcd_optimize: the model has no control devices");
    NetworkModel work = model;
    VvcEvaluator eval(model, limits);
    VvcResult res;

    const bool decomposed = pf_cfg.decomposed;
    // adjoint sensitivities ride the full factors of the run's coordinate
    // system; decomposed runs use the mixed factors for that single solve
    AssemblyMode engine_mode = decomposed ? AssemblyMode::Mixed012Eig : pf_cfg.mode;

    std::unique_ptr<FullSolveEngine> engine;
    std::unique_ptr<DecomposedSolver> dec;
    if (decomposed) dec = std::make_unique<DecomposedSolver>(work, pf_cfg);
    engine = std::make_unique<FullSolveEngine>(work, engine_mode);

    auto base_solve = [&](const CVec* warm) {
        PowerFlowSolution s = decomposed ? dec->run(work, nullptr, warm)
                                         : engine->run(work, pf_cfg, {}, warm);
        res.pf_runs += 1;
        res.pf_time_s += s.wall.total();
        return s;
    };

    PowerFlowSolution base = base_solve(nullptr);
    res.pf_time_s += decomposed ? 0.0 : engine->factor_seconds();
    if (!base.converged) throw Error("dcd_optimize: base power flow did not converge");
    res.before = eval.objective(work, base);
    res.violations_before = eval.count_violations(work, base);
    double bof = res.before.total();
    res.bof_trace.push_back(bof);

    for (int iter = 1; iter <= opts.max_iterations; ++iter) {
        res.iterations = iter;
        std::vector<double> sens;
        if (opts.finite_difference_sensitivities) {
            sens = fd_sensitivities(work, pf_cfg, eval, &res.pf_runs, &res.pf_time_s);
        } else {
            sens = control_sensitivities(work, *engine, base, eval);
        }

        int bdd = -1;
        double best = bof;
        double best_dir = 0.0;

        for (std::size_t k = 0; k < work.controls.size(); ++k) {
            double dir;
            if (sens[k] > opts.sensitivity_tol) dir = -1.0;
            else if (sens[k] < -opts.sensitivity_tol) dir = +1.0;
            else continue;

            double x0 = ControlAccess::get(work, k);
            double h = ControlAccess::step(work, k);
            auto [lo, hi] = ControlAccess::bounds(work, k);
            double x1 = x0 + dir * h;
            if (x1 < lo - 1e-12 || x1 > hi + 1e-12) continue;

            const ControlDevice& c = work.controls[k];
            PowerFlowSolution probe_sol;
            ControlAccess::set(work, k, x1);
            try {
                if (decomposed) {
                    std::vector<MatrixMod> seq_mods[3];
                    const std::vector<MatrixMod>* mods_ptr = nullptr;
                    if (c.kind == ControlKind::SwitchedCapacitor) {
                        int pos = dec->mv_position(c.target);
                        if (pos < 0) throw Error("capacitor probe outside the MV segment");
                        Complex delta(0.0, cap_delta_b_pu(work, c, dir));
                        for (int s = 0; s < 3; ++s) seq_mods[s].push_back({pos, pos, delta});
                        mods_ptr = seq_mods;
                    }
                    probe_sol = dec->run(work, mods_ptr, &base.v_phase);
                } else {
                    std::vector<MatrixMod> mods;
                    if (c.kind == ControlKind::SwitchedCapacitor)
                        mods = capacitor_change_mods(work, engine->system(), c.target,
                                                     cap_delta_b_pu(work, c, dir));
                    else if (c.kind == ControlKind::TransformerTap)
                        mods = tap_change_mods(work, engine->system(), c.target,
                                               static_cast<int>(std::lround(x0)),
                                               static_cast<int>(std::lround(x1)));
                    probe_sol = engine->run(work, pf_cfg, mods, &base.v_phase);
                }
            } catch (const std::exception&) {
                ControlAccess::set(work, k, x0);
                continue;  // probe scored as +infinity
            }
            ControlAccess::set(work, k, x0);
            res.pf_runs += 1;
            res.pf_time_s += probe_sol.wall.total();
            if (!probe_sol.converged) continue;
            double iof = eval.objective(work, probe_sol).total();
            if (iof < best) {
                best = iof;
                bdd = static_cast<int>(k);
                best_dir = dir;
            }
        }

        if (bdd < 0) break;  // optimization complete

        double x0 = ControlAccess::get(work, bdd);
        ControlAccess::set(work, static_cast<std::size_t>(bdd),
                           x0 + best_dir * ControlAccess::step(work, bdd));
        work.finalize();
        if (decomposed) dec->rebuild(work);
        engine->rebuild(work);
        res.pf_time_s += decomposed ? 0.0 : engine->factor_seconds();
        base = base_solve(&base.v_phase);
        if (!base.converged) throw Error("dcd_optimize: power flow diverged after a commit");
        bof = eval.objective(work, base).total();
        res.bof_trace.push_back(bof);
    }

    res.bof = bof;
    res.after = eval.objective(work, base);
    res.violations_after = eval.count_violations(work, base);
    res.final_settings.resize(work.controls.size());
    for (std::size_t k = 0; k < work.controls.size(); ++k)
        res.final_settings[k] = ControlAccess::get(work, k);
    return res;
}

std::vector<VvcBenchRow> benchmark_vvc(const NetworkModel& model,
                                       const std::vector<std::string>& methods,
                                       const VvcLimits& limits, const SolverConfig& base_cfg,
                                       const DcdOptions& opts) {
    if (methods.size() < 2) throw Error("benchmark_vvc: need at least two methods");
    std::vector<VvcBenchRow> rows;
    double phase_time = 0.0;
    for (const auto& method : methods) {
        SolverConfig cfg = base_cfg;
        cfg.decomposed = false;
        if (method == "phase") cfg.mode = AssemblyMode::PhaseABCN;
        else if (method == "mixed") cfg.mode = AssemblyMode::Mixed012Eig;
        else if (method == "decomposed") {
            cfg.mode = AssemblyMode::Mixed012Eig;
            cfg.decomposed = true;
        } else {
            throw Error("benchmark_vvc: unknown method '" + method + "'");
        }
        VvcResult r = dcd_optimize(model, cfg, limits, opts);
        VvcBenchRow row;
        row.method = method;
        row.dcd_iterations = r.iterations;
        row.pf_runs = r.pf_runs;
        row.pf_time_s = r.pf_time_s;
        if (method == "phase") phase_time = r.pf_time_s;
        rows.push_back(row);
    }
    for (auto& row : rows)
        row.suf_vs_phase = row.pf_time_s > 0.0 && phase_time > 0.0 ? phase_time / row.pf_time_s : 0.0;
    return rows;
}

std::string vvc_bench_csv(const std::vector<VvcBenchRow>& rows) {
    std::ostringstream os;
    os << "method,dcd_iterations,pf_runs,pf_time_s,suf_vs_phase\n";
    for (const auto& r : rows) {
        char buf[64];
        std::snprintf(buf, sizeof buf, "%.6f", r.pf_time_s);
        os << r.method << "," << r.dcd_iterations << "," << r.pf_runs << "," << buf << ",";
        std::snprintf(buf, sizeof buf, "%.3f", r.suf_vs_phase);
        os << buf << "\n";
    }
    return os.str();
}

}  // namespace ebus
