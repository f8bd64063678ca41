#pragma once

#include <map>
#include <string>
#include <vector>

#include "ebus/pflow.hpp"

namespace ebus {

struct VvcLimits {
    double v_min = 0.95;
    double v_max = 1.05;
    double i_max_pu = 1e9;                       // applies to every branch conductor
    std::map<std::string, double> v_min_bus;     // optional per-bus overrides
    std::map<std::string, double> v_max_bus;
    std::map<std::string, double> i_max_branch;  // optional per-branch overrides
    double c_v = 1000.0;
    double c_i = 1000.0;
};

VvcLimits parse_limits(const std::string& json_text, const std::string& origin = "<limits>");
VvcLimits load_limits(const std::string& path);

struct ObjectiveBreakdown {
    double loss_term = 0.0;
    double voltage_penalty = 0.0;
    double current_penalty = 0.0;
    double total() const { return loss_term + voltage_penalty + current_penalty; }
};

/// Objective and its voltage gradient for one network. Holds the real part of
/// the phase-coordinate bus matrix, which the quadratic loss terms contract.
class VvcEvaluator {
  public:
    VvcEvaluator(const NetworkModel& model, VvcLimits limits);

    /// Requires a converged phase-complete solution (phase/mixed/decomposed).
    ObjectiveBreakdown objective(const NetworkModel& current, const PowerFlowSolution& sol) const;

    /// Weight vector w with df = Re(w^T dV) in phase coordinates (quadratic
    /// terms plus active-hinge subgradients).
    CVec gradient_phase(const NetworkModel& current, const PowerFlowSolution& sol) const;

    /// Number of (bus, phase) voltage violations plus branch-current violations.
    int count_violations(const NetworkModel& current, const PowerFlowSolution& sol) const;

    const VvcLimits& limits() const { return limits_; }

  private:
    VvcLimits limits_;
    SparseComplexMatrix y_phase_;   // unconstrained phase matrix
    std::vector<int> bus_row_start_;
    std::vector<int> bus_axes_;
    bool monitor_currents_ = true;
};

/// df/dx per control, one adjoint solve against the given engine's factors.
/// Positive means increasing the control increases the objective.
std::vector<double> control_sensitivities(const NetworkModel& current,
                                          const FullSolveEngine& engine,
                                          const PowerFlowSolution& base,
                                          const VvcEvaluator& eval);

struct DcdOptions {
    int max_iterations = 300;
    double sensitivity_tol = 1e-12;
    bool finite_difference_sensitivities = false;  // fallback path, for checks
};

struct VvcResult {
    std::vector<double> final_settings;   // parallel to model.controls
    double bof = 0.0;
    int iterations = 0;
    int pf_runs = 0;
    double pf_time_s = 0.0;               // factorization + substitution + transforms
    ObjectiveBreakdown before, after;
    int violations_before = 0;
    int violations_after = 0;
    std::vector<double> bof_trace;        // BOF after each accepted move
};

VvcResult dcd_optimize(const NetworkModel& model, const SolverConfig& pf_cfg,
                       const VvcLimits& limits, const DcdOptions& opts = {});

struct VvcBenchRow {
    std::string method;
    int dcd_iterations = 0;
    int pf_runs = 0;
    double pf_time_s = 0.0;
    double suf_vs_phase = 0.0;
};

/// Runs the DCD once per requested method ("phase", "mixed", "decomposed")
/// and reports the speed-up factors against the phase baseline.
std::vector<VvcBenchRow> benchmark_vvc(const NetworkModel& model,
                                       const std::vector<std::string>& methods,
                                       const VvcLimits& limits, const SolverConfig& base_cfg,
                                       const DcdOptions& opts = {});

std::string vvc_bench_csv(const std::vector<VvcBenchRow>& rows);

}  // namespace ebus
