#include <doctest.h>

#include <random>

#include "ebus/sparse.hpp"
#include "oracles.hpp"

using namespace ebus;

namespace {

SparseComplexMatrix sparse_from_dense(const CMat& d) {
    std::vector<int> rows, cols;
    CVec vals;
    for (std::size_t c = 0; c < d.cols(); ++c)
        for (std::size_t r = 0; r < d.rows(); ++r)
            if (d(r, c) != Complex(0.0, 0.0)) {
                rows.push_back(static_cast<int>(r));
                cols.push_back(static_cast<int>(c));
                vals.push_back(d(r, c));
            }
    return SparseComplexMatrix::from_triplets(static_cast<int>(d.rows()), rows, cols, vals);
}

std::vector<int> natural_order(int n) {
    std::vector<int> p(n);
    for (int i = 0; i < n; ++i) p[i] = i;
    return p;
}

// random diagonally dominant sparse complex system
CMat random_system(int n, std::uint64_t seed, double density = 0.15) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    std::uniform_real_distribution<double> coin(0.0, 1.0);
    CMat d(n, n);
    for (int i = 0; i < n; ++i) {
        double rowsum = 0.0;
        for (int j = 0; j < n; ++j) {
            if (i == j) continue;
            if (coin(rng) < density) {
                d(i, j) = Complex(u(rng), u(rng));
                rowsum += std::abs(d(i, j));
            }
        }
        d(i, i) = Complex(rowsum + 1.0 + coin(rng), u(rng));
    }
    return d;
}

}  // namespace

TEST_CASE("from_triplets sums duplicates and sorts rows") {
    std::vector<int> rows = {1, 0, 1};
    std::vector<int> cols = {0, 0, 0};
    CVec vals = {Complex(1, 0), Complex(2, 0), Complex(3, 0)};
    auto m = SparseComplexMatrix::from_triplets(2, rows, cols, vals);
    CHECK(m.nnz() == 2);
    CHECK(m.at(0, 0) == Complex(2, 0));
    CHECK(m.at(1, 0) == Complex(4, 0));
}

TEST_CASE("amd: diagonal matrix gives the identity order") {
    CMat d(5, 5);
    for (int i = 0; i < 5; ++i) d(i, i) = 1.0;
    auto p = amd_order(sparse_from_dense(d));
    for (int i = 0; i < 5; ++i) CHECK(p[i] == i);
}

TEST_CASE("amd: arrow matrix puts the dense node last, factors with zero fill") {
    const int n = 8;
    CMat d(n, n);
    for (int i = 0; i < n; ++i) {
        d(i, i) = Complex(10.0 + i, 1.0);
        if (i > 0) {
            d(0, i) = Complex(1.0, 0.2);
            d(i, 0) = Complex(1.0, -0.2);
        }
    }
    auto a = sparse_from_dense(d);
    auto p = amd_order(a);
    // dense node ends up in the final clique (last two positions)
    CHECK((p[n - 1] == 0 || p[n - 2] == 0));
    LuFactors f = lu_factor(a, p);
    // zero fill: L and U together hold exactly the permuted pattern
    CHECK(f.nnz_l + f.nnz_u == a.nnz() + n);  // diagonal stored in both factors
}

TEST_CASE("amd is deterministic") {
    CMat d = random_system(40, 99, 0.1);
    auto a = sparse_from_dense(d);
    CHECK(amd_order(a) == amd_order(a));
}

TEST_CASE("lu of identity") {
    CMat d = CMat::identity(6);
    auto a = sparse_from_dense(d);
    LuFactors f = lu_factor(a, natural_order(6));
    CHECK(f.nnz_l == 6);
    CHECK(f.nnz_u == 6);
    CHECK_FALSE(f.pivot_fallback);
}

TEST_CASE("lu of the 2x2 example by hand") {
    CMat d(2, 2);
    d(0, 0) = 2.0; d(0, 1) = 1.0;
    d(1, 0) = 1.0; d(1, 1) = 2.0;
    auto a = sparse_from_dense(d);
    LuFactors f = lu_factor(a, natural_order(2));
    // L = [[1,0],[.5,1]], U = [[2,1],[0,1.5]]
    CHECK(std::abs(f.l_values[f.l_colptr[0] + 1] - Complex(0.5, 0)) < 1e-15);
    CVec x = solve(f, {Complex(4, 0), Complex(5, 0)});
    CHECK(std::abs(x[0] - Complex(1, 0)) < 1e-14);
    CHECK(std::abs(x[1] - Complex(2, 0)) < 1e-14);
}

TEST_CASE("lu matches the dense oracle on random systems") {
    for (int n : {10, 50, 120, 200}) {
        CMat d = random_system(n, 1000 + n);
        auto a = sparse_from_dense(d);
        auto p = amd_order(a);
        LuFactors f = lu_factor(a, p);
        std::mt19937_64 rng(7 + n);
        std::uniform_real_distribution<double> u(-1.0, 1.0);
        CVec b(n);
        for (auto& v : b) v = Complex(u(rng), u(rng));
        CVec x = solve(f, b);
        CVec x_ref = oracle::dense_solve(d, b);
        double err = 0.0, scale = 0.0;
        for (int i = 0; i < n; ++i) {
            err = std::max(err, std::abs(x[i] - x_ref[i]));
            scale = std::max(scale, std::abs(x_ref[i]));
        }
        CHECK(err / std::max(scale, 1e-30) < 1e-9);
    }
}

TEST_CASE("solve: zero rhs and the all-ones identity") {
    CMat d = random_system(30, 5);
    auto a = sparse_from_dense(d);
    LuFactors f = lu_factor(a, amd_order(a));
    CVec zero(30, Complex(0, 0));
    for (const auto& v : solve(f, zero)) CHECK(std::abs(v) == 0.0);
    CVec ones(30, Complex(1, 0));
    CVec b = a.multiply(ones);
    CVec x = solve(f, b);
    for (const auto& v : x) CHECK(std::abs(v - Complex(1, 0)) < 1e-10);
}

TEST_CASE("transpose solve matches the dense oracle") {
    CMat d = random_system(40, 3);
    auto a = sparse_from_dense(d);
    LuFactors f = lu_factor(a, amd_order(a));
    CVec b(40);
    std::mt19937_64 rng(11);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    for (auto& v : b) v = Complex(u(rng), u(rng));
    CVec x = solve_transpose(f, b);
    CVec x_ref = oracle::dense_solve(d.transposed(), b);
    for (int i = 0; i < 40; ++i) CHECK(std::abs(x[i] - x_ref[i]) < 1e-9);
}

TEST_CASE("permuted factorization reproduces P A P^T = L U") {
    CMat d = random_system(25, 21);
    auto a = sparse_from_dense(d);
    auto p = amd_order(a);
    LuFactors f = lu_factor(a, p);
    CHECK_FALSE(f.pivot_fallback);
    CHECK(f.row_perm == f.perm);
    // multiply L*U and compare against the permuted dense matrix
    int n = 25;
    CMat lu(n, n);
    for (int j = 0; j < n; ++j) {
        CVec col(n, Complex(0, 0));
        for (int q = f.u_colptr[j]; q < f.u_colptr[j + 1]; ++q) col[f.u_rowidx[q]] = f.u_values[q];
        for (int k = n - 1; k >= 0; --k) {
            Complex ck = col[k];
            if (ck == Complex(0, 0)) continue;
            for (int q = f.l_colptr[k]; q < f.l_colptr[k + 1]; ++q) {
                int r = f.l_rowidx[q];
                if (r == k) continue;
                col[r] += f.l_values[q] * ck;
            }
        }
        for (int i = 0; i < n; ++i) lu(i, j) = col[i];
    }
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j)
            CHECK(std::abs(lu(i, j) - d(p[i], p[j])) < 1e-10 * std::max(1.0, d.norm_max()));
}

TEST_CASE("zero pivot falls back to partial pivoting") {
    CMat d(3, 3);
    d(0, 0) = 0.0; d(0, 1) = 1.0; d(0, 2) = 2.0;
    d(1, 0) = 1.0; d(1, 1) = 0.0; d(1, 2) = 1.0;
    d(2, 0) = 2.0; d(2, 1) = 1.0; d(2, 2) = 0.0;
    auto a = sparse_from_dense(d);
    LuFactors f = lu_factor(a, natural_order(3));
    CHECK(f.pivot_fallback);
    CVec b = {Complex(1, 0), Complex(2, 0), Complex(3, 0)};
    CVec x = solve(f, b);
    CVec ref = oracle::dense_solve(d, b);
    for (int i = 0; i < 3; ++i) CHECK(std::abs(x[i] - ref[i]) < 1e-12);
}

TEST_CASE("structurally singular matrix throws") {
    CMat d(3, 3);
    d(0, 0) = 1.0;
    d(1, 1) = 1.0;  // column 2 empty
    auto a = sparse_from_dense(d);
    CHECK_THROWS_AS(lu_factor(a, natural_order(3)), NumericError);
}

TEST_CASE("amd beats natural order on a shuffled tree system") {
    // random tree with shuffled labels; natural order then has fill, amd none
    std::mt19937_64 rng(2024);
    const int n = 60;
    std::vector<int> label(n);
    for (int i = 0; i < n; ++i) label[i] = i;
    std::shuffle(label.begin(), label.end(), rng);
    CMat d(n, n);
    for (int i = 0; i < n; ++i) d(i, i) = Complex(8, 1);
    for (int i = 1; i < n; ++i) {
        int parent = std::uniform_int_distribution<int>(std::max(0, i - 7), i - 1)(rng);
        int a_ = label[i], b_ = label[parent];
        d(a_, b_) = Complex(-1, 0.3);
        d(b_, a_) = Complex(-1, 0.3);
    }
    auto a = sparse_from_dense(d);
    LuFactors f_nat = lu_factor(a, natural_order(n));
    LuFactors f_amd = lu_factor(a, amd_order(a));
    CHECK(f_amd.nnz_l + f_amd.nnz_u < f_nat.nnz_l + f_nat.nnz_u);
    CHECK(f_amd.nnz_l + f_amd.nnz_u == a.nnz() + n);  // tree: no fill at all
}

TEST_CASE("compensate: empty modification equals plain solve") {
    CMat d = random_system(12, 55);
    auto a = sparse_from_dense(d);
    LuFactors f = lu_factor(a, amd_order(a));
    CVec b(12, Complex(1, -1));
    auto r = compensate(a, f, {}, b);
    CHECK_FALSE(r.used_fallback);
    CVec x = solve(f, b);
    for (int i = 0; i < 12; ++i) CHECK(x[i] == r.x[i]);
}

TEST_CASE("compensate: diagonal bump matches the dense oracle") {
    CMat d = random_system(10, 42);
    auto a = sparse_from_dense(d);
    LuFactors f = lu_factor(a, amd_order(a));
    CVec b(10, Complex(0.5, 0.25));
    std::vector<MatrixMod> mods = {{3, 3, Complex(0.7, -0.4)}};
    auto r = compensate(a, f, mods, b);
    CHECK_FALSE(r.used_fallback);
    CMat dm = d;
    dm(3, 3) += Complex(0.7, -0.4);
    CVec ref = oracle::dense_solve(dm, b);
    for (int i = 0; i < 10; ++i) CHECK(std::abs(r.x[i] - ref[i]) < 1e-10);
}

TEST_CASE("compensate equals refactor-and-solve on random low-rank changes") {
    std::mt19937_64 rng(77);
    std::uniform_real_distribution<double> u(-0.5, 0.5);
    for (int rep = 0; rep < 8; ++rep) {
        int n = 30;
        CMat d = random_system(n, 300 + rep);
        auto a = sparse_from_dense(d);
        LuFactors f = lu_factor(a, amd_order(a));
        std::vector<MatrixMod> mods;
        int m = 1 + rep % 4;
        for (int k = 0; k < m; ++k) {
            int i = std::uniform_int_distribution<int>(0, n - 1)(rng);
            int j = std::uniform_int_distribution<int>(0, n - 1)(rng);
            mods.push_back({i, j, Complex(u(rng), u(rng))});
        }
        CVec b(n);
        for (auto& v : b) v = Complex(u(rng), u(rng));
        auto r = compensate(a, f, mods, b);
        CMat dm = d;
        for (const auto& md : mods) dm(md.row, md.col) += md.delta;
        CVec ref = oracle::dense_solve(dm, b);
        double scale = 0.0;
        for (const auto& v : ref) scale = std::max(scale, std::abs(v));
        for (int i = 0; i < n; ++i) CHECK(std::abs(r.x[i] - ref[i]) < 1e-8 * std::max(1.0, scale));
    }
}

TEST_CASE("compensated solver matches stateless compensation") {
    CMat d = random_system(20, 2);
    auto a = sparse_from_dense(d);
    LuFactors f = lu_factor(a, amd_order(a));
    std::vector<MatrixMod> mods = {{2, 5, Complex(0.3, 0.1)}, {7, 7, Complex(-0.2, 0.4)}};
    CompensatedSolver cs(a, f, mods);
    CHECK_FALSE(cs.used_fallback());
    CVec b(20, Complex(1, 0));
    CVec x1 = cs.solve(b);
    CVec x2 = compensate(a, f, mods, b).x;
    for (int i = 0; i < 20; ++i) CHECK(std::abs(x1[i] - x2[i]) < 1e-13);
}

TEST_CASE("rank-canceling modification is detected as singular") {
    // det(A + UV') = det(A) det(S): a singular capacitance matrix means the
    // modified system itself lost rank, so after the refactor fallback the
    // error still surfaces
    CMat d = CMat::identity(4);
    auto a = sparse_from_dense(d);
    LuFactors f = lu_factor(a, natural_order(4));
    std::vector<MatrixMod> mods = {{0, 1, Complex(2, 0)}, {1, 0, Complex(0.5, 0)}};
    CVec b = {Complex(1, 0), Complex(2, 0), Complex(3, 0), Complex(4, 0)};
    CHECK_THROWS_AS((void)compensate(a, f, mods, b), NumericError);
}

TEST_CASE("nnz accounting matches a recount of the structures") {
    CMat d = random_system(35, 8);
    auto a = sparse_from_dense(d);
    LuFactors f = lu_factor(a, amd_order(a));
    CHECK(f.nnz_l == f.count_l());
    CHECK(f.nnz_u == f.count_u());
}

TEST_CASE("factors are deterministic run to run") {
    CMat d = random_system(45, 4242, 0.12);
    auto a = sparse_from_dense(d);
    auto p1 = amd_order(a);
    auto p2 = amd_order(a);
    CHECK(p1 == p2);
    LuFactors f1 = lu_factor(a, p1);
    LuFactors f2 = lu_factor(a, p2);
    CHECK(f1.l_rowidx == f2.l_rowidx);
    CHECK(f1.u_rowidx == f2.u_rowidx);
    for (std::size_t i = 0; i < f1.l_values.size(); ++i) CHECK(f1.l_values[i] == f2.l_values[i]);
    CHECK(f1.nnz_l == f2.nnz_l);
    CHECK(f1.nnz_u == f2.nnz_u);
}

TEST_CASE("memory report arithmetic") {
    std::vector<SubsystemMemory> subs = {{"s0", 100, 120}, {"lv1", 30, 40}};
    MemoryReport rep = memory_report(subs, 50, 1000);
    CHECK(rep.total_nnz == 340);
    CHECK(rep.bytes == 16 * 340);
    CHECK(rep.reduction_percent == doctest::Approx(66.0));
    MemoryReport same = memory_report(subs, 50, 340);
    CHECK(same.reduction_percent == doctest::Approx(0.0));
    std::string csv = memory_report_csv(rep);
    CHECK(csv.find("subsystem,nnz_L,nnz_U,total,reduction_percent") == 0);
}

TEST_CASE("matrix market output shape") {
    CMat d(2, 2);
    d(0, 0) = Complex(1, 2);
    d(1, 1) = Complex(3, -4);
    auto a = sparse_from_dense(d);
    std::string mm = a.to_matrix_market();
    CHECK(mm.find("%%MatrixMarket matrix coordinate complex general") == 0);
    CHECK(mm.find("2 2 2") != std::string::npos);
}
