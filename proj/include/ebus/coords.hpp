#pragma once

#include <map>
#include <memory>
#include <mutex>
#include <string>

#include "ebus/dense.hpp"
#include "ebus/types.hpp"

namespace ebus {

enum class FrameTag { PhaseABC, PhaseABCN, Sym012, Eig4 };

std::string to_string(FrameTag t);

/// Order-three Fortescue pair. to_sequence is (1/3)[[1,1,1],[1,a,a2],[1,a2,a]]
/// with a = exp(j 2 pi / 3); to_phase is its inverse.
struct FortescueTransform {
    CMat to_sequence;  // abc -> 012
    CMat to_phase;     // 012 -> abc
    Complex rotation;  // a
};

const FortescueTransform& fortescue_transform_matrix();

/// Eigen-basis pair for one 4x4 LV series admittance matrix. to_phase holds
/// the eigenvectors as columns; to_eigen is its inverse.
struct EigenBasisTransform {
    CMat to_phase;   // eigen -> abcn, columns v1..v4
    CMat to_eigen;   // abcn -> eigen
    CVec eigenvalues;
    std::string source_matrix_hash;

    /// 3x4: neutral row of to_phase removed (secondary-voltage coupling).
    CMat to_phase_no_neutral_row() const;
    /// 4x3: neutral column of to_eigen removed (secondary-current coupling).
    CMat to_eigen_no_neutral_col() const;
};

/// Decompose a diagonalizable 4x4 (or nxn) admittance matrix. Throws
/// NumericError for defective or ill-conditioned (cond >= tol_cond) inputs.
EigenBasisTransform eigendecompose_line(const CMat& y_line, double tol_cond = 1e8);

/// Hash of matrix entries at 1e-12 granularity; keys the transform cache.
std::string matrix_hash(const CMat& m);

/// left * y * right with dimension checks.
CMat transform_self_block(const CMat& y, const CMat& left, const CMat& right);

enum class CouplingDirection { DeltaToWye, WyeToDelta };

/// Mixed-frame transformer coupling blocks:
///   DeltaToWye: T012 * Y(3x3) * Teig_abc  -> 3x4
///   WyeToDelta: Teig_abc' * Y(3x3) * T012 -> 4x3
CMat transform_coupling_block(const CMat& y_dyg, CouplingDirection direction,
                              const FortescueTransform& f, const EigenBasisTransform& e);

/// Tagged frame conversion for per-bus vectors; rejects tag mismatches.
struct TaggedVector {
    CVec values;
    FrameTag tag = FrameTag::PhaseABC;
};

TaggedVector to_frame(const TaggedVector& v, FrameTag to, const FortescueTransform& f);
TaggedVector to_frame(const TaggedVector& v, FrameTag to, const EigenBasisTransform& e);

/// Shared cache of eigen transforms. Keys are scale-normalized matrix hashes,
/// so lines that differ only in length share one eigenvector matrix (their
/// eigenvalues scale with length). Concurrent reads, exclusive insert.
class TransformCache {
  public:
    EigenBasisTransform get_or_build(const CMat& y_line);
    std::size_t size() const;
    /// Non-zero entries across all cached transform pairs (to_phase + to_eigen).
    std::size_t stored_nnz() const;

  private:
    mutable std::mutex mu_;
    std::map<std::string, std::shared_ptr<const EigenBasisTransform>> by_hash_;
};

}  // namespace ebus
