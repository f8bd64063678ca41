#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "ebus/dense.hpp"
#include "ebus/types.hpp"

namespace ebus {

/// Compressed-column complex matrix. Row indices are sorted within each
/// column and explicit zeros are not stored.
class SparseComplexMatrix {
  public:
    SparseComplexMatrix() = default;
    explicit SparseComplexMatrix(int n) : n_(n), col_ptr_(n + 1, 0) {}

    /// Build from triplets; duplicates are summed, entries below drop_tol
    /// (relative to the largest magnitude) are dropped.
    static SparseComplexMatrix from_triplets(int n, const std::vector<int>& rows,
                                             const std::vector<int>& cols, const CVec& values,
                                             double drop_tol = 0.0);

    int n() const { return n_; }
    int nnz() const { return static_cast<int>(row_idx_.size()); }
    const std::vector<int>& col_ptr() const { return col_ptr_; }
    const std::vector<int>& row_idx() const { return row_idx_; }
    const CVec& values() const { return values_; }
    CVec& values_mut() { return values_; }

    Complex at(int r, int c) const;       // zero when not stored
    CVec multiply(const CVec& x) const;   // A x

    /// Replace row r with the identity row (used for slack / fictitious
    /// slack rows). Requires the diagonal entry to be present structurally.
    void set_identity_row(int r);

    std::string to_matrix_market() const;

  private:
    int n_ = 0;
    std::vector<int> col_ptr_;
    std::vector<int> row_idx_;
    CVec values_;
};

/// Fill-reducing minimum-degree ordering (approximate external degrees,
/// quotient-graph elimination) on the symmetrized pattern of A.
/// perm[k] = original index eliminated at step k. Deterministic.
std::vector<int> amd_order(const SparseComplexMatrix& a);

struct LuFactors {
    int n = 0;
    // L unit-lower (diagonal stored), U upper, both CSC, in permuted order.
    std::vector<int> l_colptr, l_rowidx;
    CVec l_values;
    std::vector<int> u_colptr, u_rowidx;
    CVec u_values;
    std::vector<int> u_diag_pos;  // position of the diagonal within each U column
    std::vector<int> perm;      // fill ordering: perm[k] = original column at step k
    std::vector<int> perm_inv;
    std::vector<int> row_perm;  // equals perm unless pivot fallback engaged
    bool pivot_fallback = false;
    std::int64_t nnz_l = 0;
    std::int64_t nnz_u = 0;
    double factor_seconds = 0.0;

    // recount nnz by walking the stored structures
    std::int64_t count_l() const { return static_cast<std::int64_t>(l_rowidx.size()); }
    std::int64_t count_u() const { return static_cast<std::int64_t>(u_rowidx.size()); }
};

/// Left-looking sparse LU with static (diagonal) pivoting under the given
/// permutation; falls back to partial pivoting within a column only when the
/// diagonal pivot collapses. Throws NumericError on structural singularity.
LuFactors lu_factor(const SparseComplexMatrix& a, const std::vector<int>& perm);

CVec solve(const LuFactors& f, const CVec& b);
/// Solve A^T x = b through the same factors.
CVec solve_transpose(const LuFactors& f, const CVec& b);

struct MatrixMod {
    int row = 0;
    int col = 0;
    Complex delta;
};

struct CompensationResult {
    CVec x;
    bool used_fallback = false;  // capacitance matrix singular, refactored instead
};

/// Solve (A + sum of mods) x = b through existing factors of A via a
/// low-rank update; `a` is needed only for the refactor fallback.
CompensationResult compensate(const SparseComplexMatrix& a, const LuFactors& f,
                              const std::vector<MatrixMod>& mods, const CVec& b);

/// Precomputed low-rank update for one modification set, reused across many
/// right-hand sides (each probe power flow solves repeatedly with the same
/// modified matrix). Falls back to a private refactorization when the
/// capacitance matrix is singular.
class CompensatedSolver {
  public:
    CompensatedSolver(const SparseComplexMatrix& a, const LuFactors& f,
                      std::vector<MatrixMod> mods);

    CVec solve(const CVec& b) const;
    bool used_fallback() const { return fallback_ != nullptr; }

  private:
    const LuFactors* f_;
    std::vector<MatrixMod> mods_;
    std::vector<CVec> z_;            // A^-1 u_k per rank-one factor
    std::vector<std::vector<std::pair<int, Complex>>> v_factors_;
    CMat s_lu_;                      // dense capacitance matrix (solved per rhs)
    std::unique_ptr<LuFactors> fallback_;
};

struct SubsystemMemory {
    std::string name;
    std::int64_t nnz_l = 0;
    std::int64_t nnz_u = 0;
};

struct MemoryReport {
    std::vector<SubsystemMemory> subsystems;
    std::int64_t transform_nnz = 0;
    std::int64_t total_nnz = 0;        // L + U + transforms
    std::int64_t bytes = 0;            // 16 per stored complex entry
    std::int64_t baseline_nnz = 0;
    double reduction_percent = 0.0;    // vs baseline, 0 when no baseline given
};

MemoryReport memory_report(const std::vector<SubsystemMemory>& subsystems,
                           std::int64_t transform_nnz, std::int64_t baseline_nnz);

std::string memory_report_csv(const MemoryReport& rep);

}  // namespace ebus
