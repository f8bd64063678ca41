#include <doctest.h>

#include <cmath>

#include "ebus/lineconst.hpp"
#include "test_geometries.hpp"

using namespace ebus;

TEST_CASE("carson self, 336.4 ACSR defaults") {
    Complex z = carson_self(0.306, 0.0244);
    // independent evaluation: 0.306 + pi^2*60*0.1609e-3 = 0.40128116...
    CHECK(z.real() == doctest::Approx(0.40128116088811666).epsilon(1e-12));
    CHECK(z.imag() == doctest::Approx(1.4129868844233444).epsilon(1e-12));
}

TEST_CASE("carson self with zero earth return reduces to conductor resistance") {
    Complex z = carson_self(0.306, 0.0244, 60.0, 0.0, 100.0);
    CHECK(z == Complex(0.306, 0.0));
}

TEST_CASE("carson determinism") {
    CHECK(carson_self(0.5, 0.01) == carson_self(0.5, 0.01));
    CHECK(carson_mutual(3.3) == carson_mutual(3.3));
}

TEST_CASE("carson mutual real part is distance independent") {
    Complex z1 = carson_mutual(2.5);
    Complex z2 = carson_mutual(7.0);
    CHECK(z1.real() == z2.real());
    CHECK(z1.real() == doctest::Approx(0.09528116088811667).epsilon(1e-13));
    CHECK(z1.imag() == doctest::Approx(0.8513601606616431).epsilon(1e-12));
}

TEST_CASE("carson mutual reactance decreases with distance") {
    double prev = carson_mutual(1.0).imag();
    for (double d = 1.5; d <= 15.0; d += 0.5) {
        double x = carson_mutual(d).imag();
        CHECK(x < prev);
        prev = x;
    }
}

TEST_CASE("carson rejects nonpositive arguments") {
    CHECK_THROWS_AS(carson_self(0.3, 0.0), Error);
    CHECK_THROWS_AS(carson_mutual(-1.0), Error);
}

TEST_CASE("mutual at D equal to GMR matches the self earth-reactance term") {
    double gmr = 0.0244;
    CHECK(carson_mutual(gmr).imag() == doctest::Approx(carson_self(0.3, gmr).imag()).epsilon(1e-14));
}

TEST_CASE("impedance matrix is exactly symmetric") {
    CMat z = build_impedance_matrix(test_geom::horizontal4());
    CHECK(z.rows() == 4);
    for (int i = 0; i < 4; ++i)
        for (int j = 0; j < 4; ++j) CHECK(z(i, j) == z(j, i));
}

TEST_CASE("single conductor geometry gives 1x1 self impedance") {
    ConductorGeometry g;
    g.conductors = {{ConductorRole::A, 0.306, 0.0244, 0.0, 29.0}};
    CMat z = build_impedance_matrix(g);
    CHECK(z.rows() == 1);
    CHECK(z(0, 0) == carson_self(0.306, 0.0244));
}

TEST_CASE("conductor permutation permutes matrix rows and columns") {
    ConductorGeometry g = test_geom::horizontal4();
    ConductorGeometry p = g;
    std::swap(p.conductors[0], p.conductors[2]);
    CMat z = build_impedance_matrix(g);
    CMat zp = build_impedance_matrix(p);
    int map[4] = {2, 1, 0, 3};
    for (int i = 0; i < 4; ++i)
        for (int j = 0; j < 4; ++j) CHECK(zp(i, j) == z(map[i], map[j]));
}

TEST_CASE("eigen analysis of the horizontal 4-wire configuration") {
    CMat z = build_impedance_matrix(test_geom::horizontal4());
    EigenAnalysis an = analyze_diagonalizability(z);
    REQUIRE(an.eigenvalues.size() == 4);
    CHECK(an.diagonalizable);
    CHECK(an.reconstruction_residual < 1e-12);
    // frozen from an independent evaluation of the same geometry
    const Complex expect[4] = {{0.762324205069, 3.774818987167},
                               {0.514140397528, 0.758050161675},
                               {0.308528245463, 0.698058546136},
                               {0.306131795492, 0.554199409186}};
    for (int k = 0; k < 4; ++k)
        CHECK(std::abs(an.eigenvalues[k] - expect[k]) < 1e-9);
    CHECK(an.min_pairwise_eigen_distance > 0.1);
}

TEST_CASE("eigen analysis of a plain diagonal matrix") {
    CMat a(4, 4);
    a(0, 0) = 1.0; a(1, 1) = Complex(0, 2); a(2, 2) = 3.0; a(3, 3) = 4.0;
    EigenAnalysis an = analyze_diagonalizability(a);
    CHECK(an.diagonalizable);
    CHECK(an.condition_number == doctest::Approx(4.0).epsilon(1e-9));  // Frobenius-based, sqrt(4)*sqrt(4)
    CHECK(std::abs(an.eigenvalues[0] - Complex(4, 0)) < 1e-13);
}

TEST_CASE("jordan block is reported non-diagonalizable") {
    CMat a(2, 2);
    a(0, 0) = 1.0; a(0, 1) = 1.0; a(1, 1) = 1.0;
    EigenAnalysis an = analyze_diagonalizability(a);
    CHECK_FALSE(an.diagonalizable);
}

TEST_CASE("relative eigen distances") {
    CMat zh = build_impedance_matrix(test_geom::horizontal4());
    CMat zv = build_impedance_matrix(test_geom::vertical4());
    auto lh = analyze_diagonalizability(zh).eigenvalues;
    auto lv = analyze_diagonalizability(zv).eigenvalues;
    auto rd = relative_eigen_distance(lh, lv);
    // frozen from the fixture geometries
    CHECK(rd[0] == doctest::Approx(3.259609).epsilon(1e-4));
    CHECK(rd[1] == doctest::Approx(1.791529).epsilon(1e-4));
    CHECK(rd[2] == doctest::Approx(11.616032).epsilon(1e-4));
    CHECK(rd[3] == doctest::Approx(7.892271).epsilon(1e-4));
    for (double d : rd) CHECK(d < 12.0);

    auto zero = relative_eigen_distance(lh, lh);
    for (double d : zero) CHECK(d == 0.0);

    CVec scaled = lh;
    for (auto& l : scaled) l *= 1.1;
    auto ten = relative_eigen_distance(lh, scaled);
    for (double d : ten) CHECK(d == doctest::Approx(10.0).epsilon(1e-12));
}

TEST_CASE("relative eigen distance error paths") {
    CVec a = {1.0, 2.0};
    CVec b = {1.0};
    CHECK_THROWS_AS(relative_eigen_distance(a, b), Error);
    CVec z = {0.0, 1.0};
    CHECK_THROWS_AS(relative_eigen_distance(z, a), Error);
}

TEST_CASE("conductor size sweep: real parts non-increasing with diameter") {
    std::vector<double> grid;
    for (const auto& e : default_acsr_table()) grid.push_back(e.diameter_in);
    auto pts = sensitivity_sweep(test_geom::horizontal4(), SweepParameter::ConductorSize, grid);
    REQUIRE(pts.size() == grid.size());
    for (std::size_t i = 1; i < pts.size(); ++i)
        for (int k = 0; k < 4; ++k)
            CHECK(pts[i].eigenvalues[k].real() <= pts[i - 1].eigenvalues[k].real() + 1e-12);
}

TEST_CASE("spacing sweep keeps the matrix diagonalizable") {
    std::vector<double> grid = {0.6, 0.8, 1.0, 1.25, 1.5, 2.0};
    auto pts = sensitivity_sweep(test_geom::horizontal4(), SweepParameter::Spacing, grid);
    for (const auto& p : pts) CHECK(p.condition_number < 1e8);
}

TEST_CASE("single point sweep gives single row") {
    auto pts = sensitivity_sweep(test_geom::horizontal4(), SweepParameter::Spacing, {1.0});
    CHECK(pts.size() == 1);
    std::string csv = sweep_to_csv(pts);
    CHECK(csv.find("param,lambda1_re,lambda1_im") == 0);
}

TEST_CASE("sweep rejects an empty grid") {
    CHECK_THROWS_AS(sensitivity_sweep(test_geom::horizontal4(), SweepParameter::Spacing, {}), Error);
}
