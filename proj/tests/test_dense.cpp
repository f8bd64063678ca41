#include <doctest.h>

#include <random>

#include "ebus/dense.hpp"

using namespace ebus;

namespace {

CMat random_cmat(std::size_t n, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    CMat m(n, n);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) m(i, j) = Complex(u(rng), u(rng));
    return m;
}

}  // namespace

TEST_CASE("dense inverse round trip") {
    CMat a = random_cmat(6, 42);
    CMat id = a * a.inverse();
    CHECK((id - CMat::identity(6)).norm_max() < 1e-12);
}

TEST_CASE("dense solve matches inverse") {
    CMat a = random_cmat(5, 7);
    CVec b(5);
    for (int i = 0; i < 5; ++i) b[i] = Complex(i + 1, -i);
    CVec x = a.solve(b);
    CVec r = a * x;
    for (int i = 0; i < 5; ++i) CHECK(std::abs(r[i] - b[i]) < 1e-12);
}

TEST_CASE("singular matrix throws") {
    CMat a(2, 2);
    a(0, 0) = 1.0; a(0, 1) = 2.0;
    a(1, 0) = 2.0; a(1, 1) = 4.0;
    CHECK_THROWS_AS(a.inverse(), NumericError);
}

TEST_CASE("eigenvalues of a diagonal matrix are exact and ordered") {
    CMat a(4, 4);
    a(0, 0) = 1.0; a(1, 1) = Complex(0, 2); a(2, 2) = 3.0; a(3, 3) = 4.0;
    CVec lam = eigenvalues_ordered(a);
    // descending |lambda|: 4, 3, 2j, 1
    CHECK(std::abs(lam[0] - Complex(4, 0)) < 1e-12);
    CHECK(std::abs(lam[1] - Complex(3, 0)) < 1e-12);
    CHECK(std::abs(lam[2] - Complex(0, 2)) < 1e-12);
    CHECK(std::abs(lam[3] - Complex(1, 0)) < 1e-12);
}

TEST_CASE("eig reconstruction on random matrices") {
    for (std::uint64_t seed : {1ULL, 2ULL, 3ULL, 9ULL}) {
        CMat a = random_cmat(4, seed);
        EigDecomposition e = eig_ordered(a);
        CMat recon = e.vectors * CMat::diag(e.values) * e.vectors.inverse();
        CHECK((recon - a).norm_fro() / a.norm_fro() < 1e-11);
    }
}

TEST_CASE("eig determinism: identical runs give identical bits") {
    CMat a = random_cmat(4, 1234);
    EigDecomposition e1 = eig_ordered(a);
    EigDecomposition e2 = eig_ordered(a);
    for (int i = 0; i < 4; ++i) {
        CHECK(e1.values[i] == e2.values[i]);
        for (int j = 0; j < 4; ++j) CHECK(e1.vectors(i, j) == e2.vectors(i, j));
    }
}

TEST_CASE("eigenvector gauge: unit norm, largest component real positive") {
    CMat a = random_cmat(4, 77);
    EigDecomposition e = eig_ordered(a);
    for (int j = 0; j < 4; ++j) {
        double n2 = 0.0;
        double best = 0.0;
        std::size_t k = 0;
        for (int i = 0; i < 4; ++i) {
            n2 += std::norm(e.vectors(i, j));
            if (std::abs(e.vectors(i, j)) > best + 1e-14) {
                best = std::abs(e.vectors(i, j));
                k = i;
            }
        }
        CHECK(std::abs(n2 - 1.0) < 1e-10);
        CHECK(e.vectors(k, j).imag() == doctest::Approx(0.0).epsilon(1e-10));
        CHECK(e.vectors(k, j).real() > 0.0);
    }
}
