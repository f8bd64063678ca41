#pragma once

#include <cstddef>

#include "ebus/types.hpp"

namespace ebus {

/// Dense complex matrix, row-major. Sized for the small per-element blocks
/// (3x3, 4x4, 7x7) and the dense oracles in the test suite; not a general
/// linear-algebra library.
class CMat {
  public:
    CMat() = default;
    CMat(std::size_t rows, std::size_t cols) : rows_(rows), cols_(cols), d_(rows * cols) {}

    static CMat identity(std::size_t n);
    static CMat diag(const CVec& values);

    std::size_t rows() const { return rows_; }
    std::size_t cols() const { return cols_; }

    Complex& operator()(std::size_t r, std::size_t c) { return d_[r * cols_ + c]; }
    const Complex& operator()(std::size_t r, std::size_t c) const { return d_[r * cols_ + c]; }

    CMat operator*(const CMat& rhs) const;
    CVec operator*(const CVec& v) const;
    CMat operator+(const CMat& rhs) const;
    CMat operator-(const CMat& rhs) const;
    CMat scaled(Complex s) const;
    CMat transposed() const;

    /// Inverse via partial-pivot LU. Throws NumericError when singular.
    CMat inverse() const;
    /// Solve A x = b via partial-pivot LU (A = *this).
    CVec solve(const CVec& b) const;

    double norm_fro() const;
    double norm_max() const;

    bool operator==(const CMat& rhs) const = default;

  private:
    std::size_t rows_ = 0, cols_ = 0;
    CVec d_;
};

double norm_inf(const CVec& v);
double norm2(const CVec& v);

/// Eigen decomposition of a small general complex matrix.
///
/// Eigenvalues via Hessenberg reduction + shifted QR, eigenvectors via
/// inverse iteration. Column order and gauge are deterministic:
///   - sort by descending |lambda|, ties by ascending arg(lambda) in (-pi, pi]
///   - each eigenvector has unit 2-norm with its largest-magnitude component
///     rotated onto the positive real axis
struct EigDecomposition {
    CVec values;        // ordered as above
    CMat vectors;       // columns are the corresponding eigenvectors
};

EigDecomposition eig_ordered(const CMat& a);

/// Eigenvalues only (same ordering), for callers that skip the vectors.
CVec eigenvalues_ordered(const CMat& a);

}  // namespace ebus
