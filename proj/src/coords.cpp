#include "ebus/coords.hpp"

#include <cmath>
#include <cstdint>
#include <cstdio>

namespace ebus {

std::string to_string(FrameTag t) {
    switch (t) {
        case FrameTag::PhaseABC: return "abc";
        case FrameTag::PhaseABCN: return "abcn";
        case FrameTag::Sym012: return "012";
        case FrameTag::Eig4: return "eig4";
    }
    return "?";
}

const FortescueTransform& fortescue_transform_matrix() {
    static const FortescueTransform f = [] {
        FortescueTransform t;
        Complex a = std::polar(1.0, 2.0 * kPi / 3.0);
        Complex a2 = a * a;
        t.rotation = a;
        t.to_sequence = CMat(3, 3);
        t.to_phase = CMat(3, 3);
        const Complex th = 1.0 / 3.0;
        Complex seq[3][3] = {{1, 1, 1}, {1, a, a2}, {1, a2, a}};
        Complex ph[3][3] = {{1, 1, 1}, {1, a2, a}, {1, a, a2}};
        for (int i = 0; i < 3; ++i)
            for (int j = 0; j < 3; ++j) {
                t.to_sequence(i, j) = th * seq[i][j];
                t.to_phase(i, j) = ph[i][j];
            }
        return t;
    }();
    return f;
}

CMat EigenBasisTransform::to_phase_no_neutral_row() const {
    CMat out(3, 4);
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 4; ++j) out(i, j) = to_phase(i, j);
    return out;
}

CMat EigenBasisTransform::to_eigen_no_neutral_col() const {
    CMat out(4, 3);
    for (int i = 0; i < 4; ++i)
        for (int j = 0; j < 3; ++j) out(i, j) = to_eigen(i, j);
    return out;
}

std::string matrix_hash(const CMat& m) {
    // FNV-1a over entries rounded at 1e-12 granularity
    std::uint64_t h = 1469598103934665603ULL;
    auto mix = [&h](std::int64_t v) {
        for (int b = 0; b < 8; ++b) {
            h ^= static_cast<std::uint64_t>(v >> (8 * b)) & 0xffULL;
            h *= 1099511628211ULL;
        }
    };
    mix(static_cast<std::int64_t>(m.rows()));
    for (std::size_t i = 0; i < m.rows(); ++i)
        for (std::size_t j = 0; j < m.cols(); ++j) {
            mix(static_cast<std::int64_t>(std::llround(m(i, j).real() * 1e12)));
            mix(static_cast<std::int64_t>(std::llround(m(i, j).imag() * 1e12)));
        }
    char buf[20];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

EigenBasisTransform eigendecompose_line(const CMat& y_line, double tol_cond) {
    if (y_line.rows() != y_line.cols()) throw NumericError("eigendecompose_line: square matrix required");
    EigDecomposition e = eig_ordered(y_line);
    EigenBasisTransform t;
    t.to_phase = e.vectors;
    try {
        t.to_eigen = e.vectors.inverse();
    } catch (const NumericError&) {
        throw NumericError("eigendecompose_line: defective matrix, eigenvectors not independent");
    }
    double cond = t.to_phase.norm_fro() * t.to_eigen.norm_fro();
    if (!(cond < tol_cond))
        throw NumericError("eigendecompose_line: eigenvector matrix ill-conditioned");
    t.eigenvalues = e.values;
    t.source_matrix_hash = matrix_hash(y_line);

    CMat recon = t.to_phase * CMat::diag(t.eigenvalues) * t.to_eigen;
    double resid = (recon - y_line).norm_fro() / std::max(y_line.norm_fro(), 1e-300);
    if (!(resid < 1e-10))
        throw NumericError("eigendecompose_line: reconstruction residual too large");
    return t;
}

CMat transform_self_block(const CMat& y, const CMat& left, const CMat& right) {
    if (left.cols() != y.rows() || y.cols() != right.rows())
        throw NumericError("transform_self_block: dimension mismatch");
    return left * y * right;
}

CMat transform_coupling_block(const CMat& y, CouplingDirection direction,
                              const FortescueTransform& f, const EigenBasisTransform& e) {
    if (y.rows() != 3 || y.cols() != 3)
        throw NumericError("transform_coupling_block: 3x3 phase block required");
    if (direction == CouplingDirection::DeltaToWye)
        return f.to_sequence * y * e.to_phase_no_neutral_row();
    return e.to_eigen_no_neutral_col() * y * f.to_phase;
}

namespace {

const CMat& pick(FrameTag from, FrameTag to, const CMat& fwd, const CMat& rev, FrameTag a, FrameTag b) {
    if (from == a && to == b) return fwd;
    if (from == b && to == a) return rev;
    throw Error("to_frame: transform does not connect " + to_string(from) + " and " + to_string(to));
}

}  // namespace

TaggedVector to_frame(const TaggedVector& v, FrameTag to, const FortescueTransform& f) {
    if (v.tag == to) return v;
    const CMat& m = pick(v.tag, to, f.to_sequence, f.to_phase, FrameTag::PhaseABC, FrameTag::Sym012);
    if (v.values.size() != 3) throw Error("to_frame: Fortescue transform needs order-3 vectors");
    return {m * v.values, to};
}

TaggedVector to_frame(const TaggedVector& v, FrameTag to, const EigenBasisTransform& e) {
    if (v.tag == to) return v;
    const CMat& m = pick(v.tag, to, e.to_eigen, e.to_phase, FrameTag::PhaseABCN, FrameTag::Eig4);
    if (v.values.size() != 4) throw Error("to_frame: eigen transform needs order-4 vectors");
    return {m * v.values, to};
}

EigenBasisTransform TransformCache::get_or_build(const CMat& y_line) {
    double scale = y_line.norm_max();
    if (scale == 0.0) throw NumericError("TransformCache: zero matrix");
    CMat normalized = y_line.scaled(1.0 / scale);
    std::string key = matrix_hash(normalized);

    std::shared_ptr<const EigenBasisTransform> base;
    {
        std::lock_guard<std::mutex> lk(mu_);
        auto it = by_hash_.find(key);
        if (it != by_hash_.end()) base = it->second;
    }
    if (!base) {
        auto built = std::make_shared<EigenBasisTransform>(eigendecompose_line(normalized));
        std::lock_guard<std::mutex> lk(mu_);
        auto [it, inserted] = by_hash_.emplace(key, std::move(built));
        base = it->second;
    }
    EigenBasisTransform out = *base;
    for (auto& l : out.eigenvalues) l *= scale;
    out.source_matrix_hash = matrix_hash(y_line);
    return out;
}

std::size_t TransformCache::size() const {
    std::lock_guard<std::mutex> lk(mu_);
    return by_hash_.size();
}

std::size_t TransformCache::stored_nnz() const {
    std::lock_guard<std::mutex> lk(mu_);
    std::size_t nnz = 0;
    auto count = [&nnz](const CMat& m) {
        for (std::size_t i = 0; i < m.rows(); ++i)
            for (std::size_t j = 0; j < m.cols(); ++j)
                if (m(i, j) != Complex(0.0, 0.0)) ++nnz;
    };
    for (const auto& [key, t] : by_hash_) {
        count(t->to_phase);
        count(t->to_eigen);
    }
    return nnz;
}

}  // namespace ebus
