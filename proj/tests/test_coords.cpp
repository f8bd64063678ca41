#include <doctest.h>

#include <random>

#include "ebus/coords.hpp"
#include "ebus/lineconst.hpp"
#include "test_geometries.hpp"

using namespace ebus;

namespace {

CMat lv_line_admittance_pu() {
    // 2500 ft of the horizontal 4-wire line on a 2.884 ohm base
    CMat z = build_impedance_matrix(test_geom::horizontal4());
    double len_mi = 2500.0 / 5280.0;
    double z_base = 2.884;
    return z.scaled(len_mi / z_base).inverse();
}

}  // namespace

TEST_CASE("fortescue pair multiplies to identity") {
    const auto& f = fortescue_transform_matrix();
    CMat id = f.to_sequence * f.to_phase;
    CHECK((id - CMat::identity(3)).norm_max() < 1e-14);
}

TEST_CASE("balanced set maps to pure positive sequence") {
    const auto& f = fortescue_transform_matrix();
    Complex a = f.rotation;
    CVec v = {1.0, a * a, a};  // 1 /_ 0, 1 /_ -120, 1 /_ +120
    CVec s = f.to_sequence * v;
    CHECK(std::abs(s[0]) < 1e-15);
    CHECK(std::abs(s[1] - 1.0) < 1e-15);
    CHECK(std::abs(s[2]) < 1e-15);
}

TEST_CASE("equal phasors map to pure zero sequence") {
    const auto& f = fortescue_transform_matrix();
    CVec v = {1.0, 1.0, 1.0};
    CVec s = f.to_sequence * v;
    CHECK(std::abs(s[0] - 1.0) < 1e-15);
    CHECK(std::abs(s[1]) < 1e-15);
    CHECK(std::abs(s[2]) < 1e-15);
}

TEST_CASE("eigendecompose_line on a distinct diagonal matrix") {
    CMat y(4, 4);
    y(0, 0) = Complex(4, 1); y(1, 1) = Complex(3, 0); y(2, 2) = Complex(2, -1); y(3, 3) = Complex(1, 0);
    EigenBasisTransform t = eigendecompose_line(y);
    CHECK((t.to_phase - CMat::identity(4)).norm_max() < 1e-10);
    for (int k = 0; k < 4; ++k) CHECK(std::abs(t.eigenvalues[k] - y(k, k)) < 1e-12);
}

TEST_CASE("eigendecompose_line reconstructs the LV line admittance") {
    CMat y = lv_line_admittance_pu();
    EigenBasisTransform t = eigendecompose_line(y);
    CMat recon = t.to_phase * CMat::diag(t.eigenvalues) * t.to_eigen;
    CHECK((recon - y).norm_fro() / y.norm_fro() < 1e-12);
    CMat id = t.to_phase * t.to_eigen;
    CHECK((id - CMat::identity(4)).norm_max() < 1e-12);
}

TEST_CASE("scaling the matrix scales eigenvalues, not eigenvectors") {
    CMat y = lv_line_admittance_pu();
    EigenBasisTransform t1 = eigendecompose_line(y);
    EigenBasisTransform t2 = eigendecompose_line(y.scaled(2.0));
    CHECK((t1.to_phase - t2.to_phase).norm_max() < 1e-9);
    for (int k = 0; k < 4; ++k)
        CHECK(std::abs(t2.eigenvalues[k] - 2.0 * t1.eigenvalues[k]) < 1e-9 * std::abs(t1.eigenvalues[k]));
}

TEST_CASE("defective matrix is rejected") {
    CMat j(4, 4);
    for (int i = 0; i < 4; ++i) j(i, i) = 1.0;
    j(0, 1) = 1.0;
    CHECK_THROWS_AS(eigendecompose_line(j), NumericError);
}

TEST_CASE("transform_self_block diagonalizes a transposed line") {
    const auto& f = fortescue_transform_matrix();
    Complex alpha(4.0, -8.0), beta(-1.0, 2.5);
    CMat y(3, 3);
    for (int i = 0; i < 3; ++i)
        for (int jj = 0; jj < 3; ++jj) y(i, jj) = (i == jj) ? alpha : beta;
    CMat s = transform_self_block(y, f.to_sequence, f.to_phase);
    CHECK(std::abs(s(0, 0) - (alpha + 2.0 * beta)) < 1e-12);
    CHECK(std::abs(s(1, 1) - (alpha - beta)) < 1e-12);
    CHECK(std::abs(s(2, 2) - (alpha - beta)) < 1e-12);
    for (int i = 0; i < 3; ++i)
        for (int jj = 0; jj < 3; ++jj)
            if (i != jj) CHECK(std::abs(s(i, jj)) < 1e-13);
}

TEST_CASE("identity transforms leave the block unchanged") {
    CMat y = lv_line_admittance_pu();
    CMat s = transform_self_block(y, CMat::identity(4), CMat::identity(4));
    CHECK((s - y).norm_max() == 0.0);
}

TEST_CASE("untransposed line has weak but nonzero sequence coupling") {
    const auto& f = fortescue_transform_matrix();
    CMat z = build_impedance_matrix(test_geom::horizontal3());
    CMat y = z.scaled((2000.0 / 5280.0) / 25.92).inverse();
    CMat s = transform_self_block(y, f.to_sequence, f.to_phase);
    double worst_row_ratio = 0.0, off_max = 0.0;
    for (int i = 0; i < 3; ++i) {
        double row_off = 0.0;
        for (int j = 0; j < 3; ++j)
            if (i != j) row_off = std::max(row_off, std::abs(s(i, j)));
        off_max = std::max(off_max, row_off);
        worst_row_ratio = std::max(worst_row_ratio, row_off / std::abs(s(i, i)));
    }
    CHECK(off_max > 0.0);
    CHECK(worst_row_ratio < 0.15);
}

TEST_CASE("coupling block transforms: shapes, zero case, round trip") {
    const auto& f = fortescue_transform_matrix();
    EigenBasisTransform t = eigendecompose_line(lv_line_admittance_pu());

    CMat zero(3, 3);
    CMat z1 = transform_coupling_block(zero, CouplingDirection::DeltaToWye, f, t);
    CHECK(z1.rows() == 3);
    CHECK(z1.cols() == 4);
    CHECK(z1.norm_max() == 0.0);

    Complex yt = Complex(1.0, 0.0) / Complex(0.01, 0.06);
    CMat ydy(3, 3);
    double k = 1.0 / std::sqrt(3.0);
    ydy(0, 0) = -yt * k; ydy(0, 1) = yt * k;
    ydy(1, 1) = -yt * k; ydy(1, 2) = yt * k;
    ydy(2, 0) = yt * k;  ydy(2, 2) = -yt * k;

    // transpose pair in phase frame before transforming
    CMat yyd = ydy.transposed();
    CHECK((yyd.transposed() - ydy).norm_max() == 0.0);

    CMat dyg = transform_coupling_block(ydy, CouplingDirection::DeltaToWye, f, t);
    // round trip: undo both sides
    CMat back = f.to_phase * dyg * [&] {
        // right inverse of to_phase_no_neutral_row on the range used: lift back via to_eigen cols
        CMat lift(4, 3);
        for (int i = 0; i < 4; ++i)
            for (int j = 0; j < 3; ++j) lift(i, j) = t.to_eigen(i, j);
        return lift;
    }();
    CHECK((back - ydy).norm_max() < 1e-12 * ydy.norm_max() + 1e-12);

    CMat ygd = transform_coupling_block(yyd, CouplingDirection::WyeToDelta, f, t);
    CHECK(ygd.rows() == 4);
    CHECK(ygd.cols() == 3);
}

TEST_CASE("to_frame: fortescue") {
    const auto& f = fortescue_transform_matrix();
    Complex a = f.rotation;
    TaggedVector v{{1.0, a * a, a}, FrameTag::PhaseABC};
    TaggedVector s = to_frame(v, FrameTag::Sym012, f);
    CHECK(std::abs(s.values[1] - 1.0) < 1e-14);
    TaggedVector back = to_frame(s, FrameTag::PhaseABC, f);
    for (int i = 0; i < 3; ++i) CHECK(std::abs(back.values[i] - v.values[i]) < 1e-13);
    CHECK_THROWS_AS(to_frame(TaggedVector{{1.0, 2.0, 3.0, 4.0}, FrameTag::PhaseABCN}, FrameTag::Sym012, f), Error);
}

TEST_CASE("to_frame: eigen basis round trip") {
    EigenBasisTransform t = eigendecompose_line(lv_line_admittance_pu());
    TaggedVector v{{1.0, 1.0, 1.0, -3.0}, FrameTag::PhaseABCN};
    TaggedVector e = to_frame(v, FrameTag::Eig4, t);
    TaggedVector back = to_frame(e, FrameTag::PhaseABCN, t);
    for (int i = 0; i < 4; ++i) CHECK(std::abs(back.values[i] - v.values[i]) < 1e-13);

    TaggedVector zero{{0.0, 0.0, 0.0, 0.0}, FrameTag::PhaseABCN};
    TaggedVector ze = to_frame(zero, FrameTag::Eig4, t);
    for (const auto& x : ze.values) CHECK(std::abs(x) == 0.0);
}

TEST_CASE("frame change preserves physics on random instances") {
    std::mt19937_64 rng(5150);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    EigenBasisTransform t = eigendecompose_line(lv_line_admittance_pu());
    for (int rep = 0; rep < 20; ++rep) {
        CMat y(4, 4);
        CVec v(4);
        for (int i = 0; i < 4; ++i) {
            v[i] = Complex(u(rng), u(rng));
            for (int j = 0; j < 4; ++j) y(i, j) = Complex(u(rng), u(rng));
        }
        CVec i_ph = y * v;
        CMat y_eig = transform_self_block(y, t.to_eigen, t.to_phase);
        CVec v_eig = t.to_eigen * v;
        CVec i_eig = y_eig * v_eig;
        CVec i_back = t.to_phase * i_eig;
        for (int i = 0; i < 4; ++i) CHECK(std::abs(i_back[i] - i_ph[i]) < 1e-10);
    }
}

TEST_CASE("transform cache: scaled matrices share eigenvectors") {
    TransformCache cache;
    CMat y = lv_line_admittance_pu();
    EigenBasisTransform t1 = cache.get_or_build(y);
    EigenBasisTransform t2 = cache.get_or_build(y.scaled(2.0));
    CHECK(cache.size() == 1);  // one geometry, one cached eigenvector matrix
    CHECK((t1.to_phase - t2.to_phase).norm_max() == 0.0);
    for (int k = 0; k < 4; ++k)
        CHECK(std::abs(t2.eigenvalues[k] - 2.0 * t1.eigenvalues[k]) < 1e-14 * std::abs(t1.eigenvalues[k]));
    // reconstruction through the cached transform stays tight
    CMat recon = t1.to_phase * CMat::diag(t1.eigenvalues) * t1.to_eigen;
    CHECK((recon - y).norm_fro() / y.norm_fro() < 1e-12);
    CHECK(cache.stored_nnz() == 32);

    CMat other = y;
    other(0, 0) += Complex(0.5, 0.5);  // genuinely different matrix
    cache.get_or_build(other);
    CHECK(cache.size() == 2);
}

TEST_CASE("eigen decomposition determinism across runs") {
    CMat y = lv_line_admittance_pu();
    EigenBasisTransform t1 = eigendecompose_line(y);
    EigenBasisTransform t2 = eigendecompose_line(y);
    for (int i = 0; i < 4; ++i) {
        CHECK(t1.eigenvalues[i] == t2.eigenvalues[i]);
        for (int j = 0; j < 4; ++j) CHECK(t1.to_phase(i, j) == t2.to_phase(i, j));
    }
}
