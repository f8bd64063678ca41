#pragma once

#include <memory>
#include <string>
#include <utility>

#include "ebus/netmodel.hpp"
#include "ebus/ybus.hpp"

namespace ebus {

struct SolverConfig {
    double epsilon = 1e-6;          // max phase-frame voltage change per iteration
    int max_iterations = 100;
    AssemblyMode mode = AssemblyMode::Mixed012Eig;
    bool decomposed = false;
    double boundary_tolerance = 1e-8;
    int threads = 0;                // 0 = std::thread::hardware_concurrency()
};

struct TimingBreakdown {
    double factor_s = 0.0;
    double solve_s = 0.0;       // substitutions (plus per-member iteration work
                                // when decomposed; parallel stages count their
                                // slowest member)
    double transform_s = 0.0;   // frame conversions
    double total() const { return factor_s + solve_s + transform_s; }
};

struct PowerFlowSolution {
    AssemblyMode mode = AssemblyMode::PhaseABCN;
    bool decomposed = false;
    CVec v_phase;                       // stacked per-bus phase-frame voltages
    std::vector<int> bus_row_start;
    std::vector<int> bus_axes;
    int iterations = 0;                 // linear solves (outer exchanges when decomposed)
    std::vector<double> error_trace;
    bool converged = false;
    std::string diagnostic;
    TimingBreakdown wall;

    Complex voltage(int bus_index, int axis) const {
        return v_phase[bus_row_start[bus_index] + axis];
    }
};

/// ZIP load + source current injections in phase coordinates. LV load
/// voltages are taken phase-to-neutral; each LV load and source balances its
/// phase currents with a neutral return. Kron-reduced systems take the phase
/// voltage directly and carry no neutral rows.
CVec zip_injections(const NetworkModel& model, const AssembledSystem& sys, const CVec& v_phase);

/// Precomputed injection evaluation: device rows resolved once, so the
/// per-iteration cost is linear in the number of devices. DG VAr settings are
/// read from the model passed to evaluate, which lets probe runs change them
/// without rebuilding the plan.
class InjectionPlan {
  public:
    static InjectionPlan build(const NetworkModel& model, const AssembledSystem& sys);
    /// Restrict to devices on the given buses (decomposed subsystems).
    static InjectionPlan build_subset(const NetworkModel& model, const AssembledSystem& sys,
                                      const std::vector<int>& bus_indices);

    /// Adds device currents into `out` (zeroed by the caller).
    void evaluate(const NetworkModel& controls_src, const CVec& v_phase, CVec& out) const;
    const std::vector<int>& active_buses() const { return active_buses_; }

  private:
    struct Entry {
        int bus = 0;
        int row0 = 0;
        bool lv = false;
        bool has_neutral = false;
        Complex s[3], z[3], ic[3];
        bool is_dg = false;
        int dg_control = -1;   // index into model.controls, -1 when fixed
        Complex dg_s_base;     // 3-phase total, generation positive
    };
    std::vector<Entry> entries_;
    std::vector<int> active_buses_;
    std::vector<std::string> bus_ids_;  // for error messages, parallel to entries_
};

PowerFlowSolution solve_full(const NetworkModel& model, const SolverConfig& config);
PowerFlowSolution solve_kron(const NetworkModel& model, const SolverConfig& config);
PowerFlowSolution solve_decomposed(const NetworkModel& model, const SolverConfig& config);

/// Dispatch on config.mode / config.decomposed.
PowerFlowSolution power_flow(const NetworkModel& model, const SolverConfig& config);

/// Reusable driver over one factorization: repeated solves against varying
/// control settings, with optional low-rank matrix modifications (probe moves
/// of taps/capacitors) handled by compensation instead of refactorization.
class FullSolveEngine {
  public:
    FullSolveEngine(const NetworkModel& model, AssemblyMode mode);

    /// `current` supplies control settings (and transformer taps already
    /// reflected in `mods`); mods are entry deltas vs the committed matrix.
    /// warm_start_phase seeds the iteration (probe solves restart from the
    /// base operating point); null uses the flat start.
    PowerFlowSolution run(const NetworkModel& current, const SolverConfig& cfg,
                          const std::vector<MatrixMod>& mods,
                          const CVec* warm_start_phase = nullptr) const;
    void rebuild(const NetworkModel& current);

    const AssembledSystem& system() const { return sys_; }
    const LuFactors& factors() const { return factors_; }
    double factor_seconds() const { return factor_seconds_; }

  private:
    AssembledSystem sys_;
    LuFactors factors_;
    double factor_seconds_ = 0.0;
    std::shared_ptr<InjectionPlan> plan_;
    std::shared_ptr<void> frames_;      // flattened per-bus transform table
    std::vector<int> perm_cache_;       // control moves keep the pattern, so
                                        // the fill ordering survives rebuilds
};

/// Decomposed counterpart: the three sequence factors and per-feeder factors
/// are built once; tap probes only swap coupling coefficients, capacitor
/// probes compensate the sequence factors, source probes change only the
/// right-hand side.
class DecomposedSolver {
  public:
    DecomposedSolver(const NetworkModel& model, const SolverConfig& cfg);
    ~DecomposedSolver();
    DecomposedSolver(DecomposedSolver&&) noexcept;

    /// seq_mods: per-sequence entry deltas (rows/cols are MV bus positions).
    PowerFlowSolution run(const NetworkModel& current, const std::vector<MatrixMod>* seq_mods,
                          const CVec* warm_start_phase = nullptr) const;
    void rebuild(const NetworkModel& current);

    /// nnz of each factored subsystem, for the memory accounting
    std::vector<std::pair<std::string, std::pair<std::int64_t, std::int64_t>>> factor_nnz() const;
    std::int64_t transform_nnz() const;
    int mv_position(const std::string& bus_id) const;

  private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
    SolverConfig cfg_;
};

/// Phase-frame conductor currents flowing into an element from each terminal.
struct ElementCurrents {
    std::string id;
    int from_bus = 0;
    int to_bus = -1;                    // -1 for shunt-style elements
    CVec into_from;
    CVec into_to;
};

std::vector<ElementCurrents> branch_currents(const NetworkModel& model,
                                             const PowerFlowSolution& sol);

/// | S_slack + S_dg - S_load - S_series_loss - S_shunt_loss | in pu.
double power_balance_residual(const NetworkModel& model, const PowerFlowSolution& sol);

/// Largest neutral-node current residual over LV buses (pu).
double max_neutral_current_residual(const NetworkModel& model, const PowerFlowSolution& sol);

}  // namespace ebus
