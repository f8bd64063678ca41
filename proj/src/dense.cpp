#include "ebus/dense.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numeric>

namespace ebus {

CMat CMat::identity(std::size_t n) {
    CMat m(n, n);
    for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
    return m;
}

CMat CMat::diag(const CVec& values) {
    CMat m(values.size(), values.size());
    for (std::size_t i = 0; i < values.size(); ++i) m(i, i) = values[i];
    return m;
}

CMat CMat::operator*(const CMat& rhs) const {
    if (cols_ != rhs.rows_) throw NumericError("CMat: dimension mismatch in product");
    CMat out(rows_, rhs.cols_);
    for (std::size_t i = 0; i < rows_; ++i)
        for (std::size_t k = 0; k < cols_; ++k) {
            Complex a = (*this)(i, k);
            if (a == 0.0) continue;
            for (std::size_t j = 0; j < rhs.cols_; ++j) out(i, j) += a * rhs(k, j);
        }
    return out;
}

CVec CMat::operator*(const CVec& v) const {
    if (cols_ != v.size()) throw NumericError("CMat: dimension mismatch in mat-vec");
    CVec out(rows_);
    for (std::size_t i = 0; i < rows_; ++i) {
        Complex s = 0.0;
        for (std::size_t j = 0; j < cols_; ++j) s += (*this)(i, j) * v[j];
        out[i] = s;
    }
    return out;
}

CMat CMat::operator+(const CMat& rhs) const {
    CMat out = *this;
    for (std::size_t i = 0; i < d_.size(); ++i) out.d_[i] += rhs.d_[i];
    return out;
}

CMat CMat::operator-(const CMat& rhs) const {
    CMat out = *this;
    for (std::size_t i = 0; i < d_.size(); ++i) out.d_[i] -= rhs.d_[i];
    return out;
}

CMat CMat::scaled(Complex s) const {
    CMat out = *this;
    for (auto& x : out.d_) x *= s;
    return out;
}

CMat CMat::transposed() const {
    CMat out(cols_, rows_);
    for (std::size_t i = 0; i < rows_; ++i)
        for (std::size_t j = 0; j < cols_; ++j) out(j, i) = (*this)(i, j);
    return out;
}

namespace {

// In-place partial-pivot LU; returns row permutation, throws on singularity.
std::vector<std::size_t> lu_inplace(CMat& a) {
    const std::size_t n = a.rows();
    std::vector<std::size_t> perm(n);
    std::iota(perm.begin(), perm.end(), 0);
    for (std::size_t k = 0; k < n; ++k) {
        std::size_t p = k;
        double best = std::abs(a(k, k));
        for (std::size_t r = k + 1; r < n; ++r) {
            double m = std::abs(a(r, k));
            if (m > best) { best = m; p = r; }
        }
        if (best == 0.0) throw NumericError("dense LU: singular matrix");
        if (p != k) {
            for (std::size_t c = 0; c < n; ++c) std::swap(a(k, c), a(p, c));
            std::swap(perm[k], perm[p]);
        }
        const Complex piv = a(k, k);
        for (std::size_t r = k + 1; r < n; ++r) {
            Complex f = a(r, k) / piv;
            a(r, k) = f;
            if (f == 0.0) continue;
            for (std::size_t c = k + 1; c < n; ++c) a(r, c) -= f * a(k, c);
        }
    }
    return perm;
}

CVec lu_solve(const CMat& lu, const std::vector<std::size_t>& perm, const CVec& b) {
    const std::size_t n = lu.rows();
    CVec x(n);
    for (std::size_t i = 0; i < n; ++i) x[i] = b[perm[i]];
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < i; ++j) x[i] -= lu(i, j) * x[j];
    for (std::size_t ii = n; ii-- > 0;) {
        for (std::size_t j = ii + 1; j < n; ++j) x[ii] -= lu(ii, j) * x[j];
        x[ii] /= lu(ii, ii);
    }
    return x;
}

}  // namespace

CMat CMat::inverse() const {
    if (rows_ != cols_) throw NumericError("CMat: inverse of non-square matrix");
    CMat lu = *this;
    auto perm = lu_inplace(lu);
    CMat out(rows_, cols_);
    CVec e(rows_, 0.0);
    for (std::size_t c = 0; c < cols_; ++c) {
        e.assign(rows_, 0.0);
        e[c] = 1.0;
        CVec x = lu_solve(lu, perm, e);
        for (std::size_t r = 0; r < rows_; ++r) out(r, c) = x[r];
    }
    return out;
}

CVec CMat::solve(const CVec& b) const {
    if (rows_ != cols_ || b.size() != rows_) throw NumericError("CMat: solve dimension mismatch");
    CMat lu = *this;
    auto perm = lu_inplace(lu);
    return lu_solve(lu, perm, b);
}

double CMat::norm_fro() const {
    double s = 0.0;
    for (const auto& x : d_) s += std::norm(x);
    return std::sqrt(s);
}

double CMat::norm_max() const {
    double s = 0.0;
    for (const auto& x : d_) s = std::max(s, std::abs(x));
    return s;
}

double norm_inf(const CVec& v) {
    double s = 0.0;
    for (const auto& x : v) s = std::max(s, std::abs(x));
    return s;
}

double norm2(const CVec& v) {
    double s = 0.0;
    for (const auto& x : v) s += std::norm(x);
    return std::sqrt(s);
}

namespace {

// Householder reduction to upper Hessenberg form, in place.
void hessenberg(CMat& a) {
    const std::size_t n = a.rows();
    if (n < 3) return;
    for (std::size_t k = 0; k + 2 < n; ++k) {
        double scale = 0.0;
        for (std::size_t i = k + 1; i < n; ++i) scale += std::abs(a(i, k));
        if (scale == 0.0) continue;
        CVec v(n, 0.0);
        double norm2v = 0.0;
        for (std::size_t i = k + 1; i < n; ++i) {
            v[i] = a(i, k) / scale;
            norm2v += std::norm(v[i]);
        }
        double alpha = std::sqrt(norm2v);
        if (alpha == 0.0) continue;
        Complex x1 = v[k + 1];
        Complex phase = (x1 == 0.0) ? Complex(1.0, 0.0) : x1 / std::abs(x1);
        v[k + 1] += phase * alpha;
        double vnorm2 = 0.0;
        for (std::size_t i = k + 1; i < n; ++i) vnorm2 += std::norm(v[i]);
        if (vnorm2 == 0.0) continue;
        // A <- (I - 2 v v^H / v^H v) A
        for (std::size_t j = 0; j < n; ++j) {
            Complex s = 0.0;
            for (std::size_t i = k + 1; i < n; ++i) s += std::conj(v[i]) * a(i, j);
            s *= 2.0 / vnorm2;
            for (std::size_t i = k + 1; i < n; ++i) a(i, j) -= s * v[i];
        }
        // A <- A (I - 2 v v^H / v^H v)
        for (std::size_t i = 0; i < n; ++i) {
            Complex s = 0.0;
            for (std::size_t j = k + 1; j < n; ++j) s += a(i, j) * v[j];
            s *= 2.0 / vnorm2;
            for (std::size_t j = k + 1; j < n; ++j) a(i, j) -= s * std::conj(v[j]);
        }
        for (std::size_t i = k + 2; i < n; ++i) a(i, k) = 0.0;
    }
}

// Shifted QR iteration on a Hessenberg matrix; returns the eigenvalues in
// deflation order. Givens-rotation based, Wilkinson shifts.
CVec qr_eigenvalues(CMat h) {
    const std::size_t n = h.rows();
    CVec lam(n);
    if (n == 0) return lam;
    std::size_t hi = n - 1;
    const double eps = 1e-15;
    int iter_total = 0;
    const int iter_cap = 60 * static_cast<int>(n) + 100;
    while (true) {
        // deflate trailing 1x1 blocks
        while (hi > 0) {
            double off = std::abs(h(hi, hi - 1));
            double denom = std::abs(h(hi - 1, hi - 1)) + std::abs(h(hi, hi));
            if (off <= eps * (denom + off)) {
                h(hi, hi - 1) = 0.0;
                lam[hi] = h(hi, hi);
                --hi;
            } else {
                break;
            }
        }
        if (hi == 0) {
            lam[0] = h(0, 0);
            break;
        }
        if (++iter_total > iter_cap) throw NumericError("QR eigensolver: no convergence");

        // find the active block [lo, hi]
        std::size_t lo = hi;
        while (lo > 0) {
            double off = std::abs(h(lo, lo - 1));
            double denom = std::abs(h(lo - 1, lo - 1)) + std::abs(h(lo, lo));
            if (off <= eps * (denom + off)) {
                h(lo, lo - 1) = 0.0;
                break;
            }
            --lo;
        }

        // Wilkinson shift from the trailing 2x2 of the active block
        Complex a11 = h(hi - 1, hi - 1), a12 = h(hi - 1, hi);
        Complex a21 = h(hi, hi - 1), a22 = h(hi, hi);
        Complex tr = a11 + a22;
        Complex det = a11 * a22 - a12 * a21;
        Complex disc = std::sqrt(tr * tr - 4.0 * det);
        Complex mu1 = (tr + disc) / 2.0, mu2 = (tr - disc) / 2.0;
        Complex shift = (std::abs(mu1 - a22) < std::abs(mu2 - a22)) ? mu1 : mu2;
        // occasional exceptional shift to break symmetry stalls
        if (iter_total % 37 == 36) shift = Complex(std::abs(h(hi, hi - 1)), 0.0) + a22;

        for (std::size_t i = lo; i <= hi; ++i) h(i, i) -= shift;
        // QR sweep via Givens rotations on the Hessenberg band
        std::vector<std::array<Complex, 2>> rot(hi - lo + 1);
        for (std::size_t k = lo; k < hi; ++k) {
            Complex x = h(k, k), y = h(k + 1, k);
            double r = std::hypot(std::abs(x), std::abs(y));
            Complex c(1.0, 0.0), s(0.0, 0.0);
            if (r > 0.0) {
                c = std::conj(x) / r;
                s = std::conj(y) / r;
            }
            rot[k - lo] = {c, s};
            for (std::size_t j = k; j <= hi; ++j) {
                Complex t1 = h(k, j), t2 = h(k + 1, j);
                h(k, j) = c * t1 + s * t2;
                h(k + 1, j) = -std::conj(s) * t1 + std::conj(c) * t2;
            }
        }
        for (std::size_t k = lo; k < hi; ++k) {
            Complex c = rot[k - lo][0], s = rot[k - lo][1];
            std::size_t top = lo;
            for (std::size_t i = top; i <= std::min(k + 2, hi); ++i) {
                Complex t1 = h(i, k), t2 = h(i, k + 1);
                h(i, k) = t1 * std::conj(c) + t2 * std::conj(s);
                h(i, k + 1) = -t1 * s + t2 * c;
            }
        }
        for (std::size_t i = lo; i <= hi; ++i) h(i, i) += shift;
    }
    return lam;
}

// Inverse iteration for the eigenvector of `a` at eigenvalue lam. The start
// vector depends on the column index so that repeated eigenvalues can still
// pick up independent directions inside their eigenspace.
CVec inverse_iteration(const CMat& a, Complex lam, std::size_t col) {
    const std::size_t n = a.rows();
    const double anorm = a.norm_fro();
    double jitter = 1e-12 * std::max(anorm, 1.0);
    CVec v(n);
    for (std::size_t i = 0; i < n; ++i)
        v[i] = Complex(1.0 + 0.25 * static_cast<double>((i + col) % 3),
                       0.125 * static_cast<double>((i + 2 * col) % 5));
    for (int attempt = 0; attempt < 5; ++attempt) {
        CMat shifted = a;
        for (std::size_t i = 0; i < n; ++i) shifted(i, i) -= lam + Complex(jitter, jitter);
        try {
            for (int it = 0; it < 3; ++it) {
                CVec w = shifted.solve(v);
                double nw = norm2(w);
                if (!(nw > 0.0) || !std::isfinite(nw)) throw NumericError("inverse iteration: breakdown");
                for (auto& x : w) x /= nw;
                v = w;
            }
            return v;
        } catch (const NumericError&) {
            jitter *= 64.0;  // exactly singular shift, nudge further off the spectrum
        }
    }
    throw NumericError("inverse iteration: no convergence");
}

}  // namespace

EigDecomposition eig_ordered(const CMat& a) {
    if (a.rows() != a.cols()) throw NumericError("eig: non-square matrix");
    const std::size_t n = a.rows();
    EigDecomposition out;
    out.values = eigenvalues_ordered(a);
    out.vectors = CMat(n, n);
    for (std::size_t j = 0; j < n; ++j) {
        CVec v = inverse_iteration(a, out.values[j], j);
        // gauge: rotate the largest-magnitude component onto the positive real axis
        std::size_t k = 0;
        double best = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            double m = std::abs(v[i]);
            if (m > best + 1e-14) { best = m; k = i; }
        }
        Complex phase = v[k] / std::abs(v[k]);
        for (std::size_t i = 0; i < n; ++i) v[i] /= phase;
        for (std::size_t i = 0; i < n; ++i) out.vectors(i, j) = v[i];
    }
    return out;
}

CVec eigenvalues_ordered(const CMat& a) {
    CMat h = a;
    hessenberg(h);
    CVec lam = qr_eigenvalues(h);
    std::sort(lam.begin(), lam.end(), [](Complex x, Complex y) {
        double ax = std::abs(x), ay = std::abs(y);
        if (std::abs(ax - ay) > 1e-14 * std::max({ax, ay, 1e-300})) return ax > ay;
        return std::arg(x) < std::arg(y);
    });
    return lam;
}

}  // namespace ebus
