#pragma once

#include <optional>

#include "ebus/coords.hpp"
#include "ebus/netmodel.hpp"
#include "ebus/sparse.hpp"

namespace ebus {

enum class AssemblyMode { PhaseABCN, Mixed012Eig, KronReduced012 };

std::string to_string(AssemblyMode m);
AssemblyMode assembly_mode_from_string(const std::string& s);

enum class StencilOrigin { MvMutualCoupling, LvShunt, LoadZip };

/// One right-hand-side correction: current into target_row equal to
/// sum(coeff * V[source_row]), moved out of the factored matrix.
struct InjectionStencil {
    int target_row = 0;
    struct Term {
        Complex coeff;
        int source_row = 0;
    };
    std::vector<Term> terms;
    StencilOrigin origin = StencilOrigin::MvMutualCoupling;
};

/// Delta / wye-grounded two-port blocks in phase coordinates with the tap
/// applied on the primary side: dd 3x3, dy 3x4, yd 4x3, yy 4x4.
struct TransformerBlocks {
    CMat dd, dy, yd, yy;
};
TransformerBlocks transformer_phase_blocks(const TransformerBranch& t);

/// Kron reduction helper: Schur complement that eliminates the trailing
/// block (rows/cols >= keep) of a square matrix.
CMat kron_reduce(const CMat& m, std::size_t keep);

struct AssembledSystem {
    AssemblyMode mode = AssemblyMode::PhaseABCN;
    SparseComplexMatrix y;                     // slack rows already Dirichlet-replaced
    SparseComplexMatrix y_unconstrained;       // same matrix before row replacement
    std::vector<InjectionStencil> stencils;

    int n_rows = 0;
    std::vector<int> bus_row_start;            // parallel to model buses
    std::vector<int> bus_axes;                 // rows per bus in this mode
    std::vector<FrameTag> bus_frame;
    std::vector<std::optional<EigenBasisTransform>> bus_eig;   // set for Eig4 buses

    std::vector<int> slack_rows;
    CVec slack_values;                         // in system frame

    std::int64_t transform_nnz = 0;            // stored transform entries (mixed mode)

    int row_of(int bus_index, int axis) const { return bus_row_start[bus_index] + axis; }

    /// Per-bus frame conversion of a stacked system vector.
    CVec to_phase_frame(const CVec& v_system) const;
    CVec to_system_frame(const CVec& v_phase) const;

    /// Pull a phase-frame gradient back to the system frame: applies the
    /// plain transpose of the per-bus system->phase map, so that
    /// Re(w_ph^T dV_ph) == Re(result^T dV_sys).
    CVec cotransform_gradient(const CVec& w_phase) const;

    /// Stencil coefficients as a matrix (for diagnostics and oracles).
    SparseComplexMatrix stencil_matrix() const;
};

AssembledSystem assemble_phase(const NetworkModel& model);
AssembledSystem assemble_mixed(const NetworkModel& model);
AssembledSystem assemble_kron_reduced(const NetworkModel& model);
AssembledSystem assemble(const NetworkModel& model, AssemblyMode mode);

/// Current corrections for the given voltage state, one entry per system row.
CVec evaluate_injections(const std::vector<InjectionStencil>& stencils, const CVec& v);

/// Entry deltas (system frame) produced by moving a transformer tap or a
/// switched capacitor; feeds the compensation solver.
std::vector<MatrixMod> tap_change_mods(const NetworkModel& model, const AssembledSystem& sys,
                                       const std::string& tx_id, int old_tap, int new_tap);
std::vector<MatrixMod> capacitor_change_mods(const NetworkModel& model, const AssembledSystem& sys,
                                             const std::string& bus_id, double delta_b_pu);

}  // namespace ebus
