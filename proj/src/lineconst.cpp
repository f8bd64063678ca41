#include "ebus/lineconst.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

namespace ebus {

void ConductorGeometry::check() const {
    if (conductors.empty()) throw Error("geometry: no conductors");
    for (std::size_t i = 0; i < conductors.size(); ++i) {
        const auto& c = conductors[i];
        if (c.resistance_ohm_per_mile <= 0.0) throw Error("geometry: conductor resistance must be > 0");
        if (c.gmr_ft <= 0.0) throw Error("geometry: conductor GMR must be > 0");
        for (std::size_t j = i + 1; j < conductors.size(); ++j) {
            const auto& d = conductors[j];
            if (c.x_ft == d.x_ft && c.y_ft == d.y_ft)
                throw Error("geometry: two conductors share one position");
        }
    }
    if (earth_resistivity_ohm_m <= 0.0 || frequency_hz <= 0.0)
        throw Error("geometry: resistivity and frequency must be > 0");
}

Complex carson_self(double r, double gmr, double f, double g, double rho) {
    if (gmr <= 0.0) throw Error("carson_self: GMR must be > 0");
    double re = r + kPi * kPi * f * g;
    double im = 4.0 * kPi * f * g * (std::log(1.0 / gmr) + 7.6786 + 0.5 * std::log(rho / f));
    return {re, im};
}

Complex carson_mutual(double d, double f, double g, double rho) {
    if (d <= 0.0) throw Error("carson_mutual: distance must be > 0");
    double re = kPi * kPi * f * g;
    double im = 4.0 * kPi * f * g * (std::log(1.0 / d) + 7.6786 + 0.5 * std::log(rho / f));
    return {re, im};
}

CMat build_impedance_matrix(const ConductorGeometry& geom) {
    geom.check();
    const auto& cs = geom.conductors;
    const std::size_t n = cs.size();
    CMat z(n, n);
    for (std::size_t i = 0; i < n; ++i) {
        z(i, i) = carson_self(cs[i].resistance_ohm_per_mile, cs[i].gmr_ft, geom.frequency_hz,
                              geom.earth_return_ohm_per_mile, geom.earth_resistivity_ohm_m);
        for (std::size_t j = i + 1; j < n; ++j) {
            double d = std::hypot(cs[i].x_ft - cs[j].x_ft, cs[i].y_ft - cs[j].y_ft);
            Complex m = carson_mutual(d, geom.frequency_hz, geom.earth_return_ohm_per_mile,
                                      geom.earth_resistivity_ohm_m);
            z(i, j) = m;
            z(j, i) = m;  // stored on both sides, symmetry is exact
        }
    }
    return z;
}

EigenAnalysis analyze_diagonalizability(const CMat& z, double tol_cond) {
    if (z.rows() != z.cols()) throw Error("analyze_diagonalizability: square matrix required");
    EigenAnalysis out;
    EigDecomposition e = eig_ordered(z);
    out.eigenvalues = e.values;
    out.eigenvector_matrix = e.vectors;

    double mind = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < e.values.size(); ++i)
        for (std::size_t j = i + 1; j < e.values.size(); ++j)
            mind = std::min(mind, std::abs(e.values[i] - e.values[j]));
    out.min_pairwise_eigen_distance = (e.values.size() > 1) ? mind : 0.0;

    try {
        CMat tinv = e.vectors.inverse();
        out.condition_number = e.vectors.norm_fro() * tinv.norm_fro();
        CMat recon = e.vectors * CMat::diag(e.values) * tinv;
        out.reconstruction_residual = (recon - z).norm_fro() / std::max(z.norm_fro(), 1e-300);
    } catch (const NumericError&) {
        out.condition_number = std::numeric_limits<double>::infinity();
        out.reconstruction_residual = std::numeric_limits<double>::infinity();
    }
    out.diagonalizable = std::isfinite(out.condition_number) && out.condition_number < tol_cond &&
                         out.reconstruction_residual < 1e-8;
    return out;
}

std::vector<double> relative_eigen_distance(const CVec& lam_h, const CVec& lam_v) {
    if (lam_h.size() != lam_v.size()) throw Error("relative_eigen_distance: length mismatch");
    std::vector<double> out(lam_h.size());
    for (std::size_t k = 0; k < lam_h.size(); ++k) {
        double ref = std::abs(lam_h[k]);
        if (ref == 0.0) throw Error("relative_eigen_distance: zero reference eigenvalue");
        out[k] = 100.0 * std::abs(lam_h[k] - lam_v[k]) / ref;
    }
    return out;
}

const std::vector<AcsrEntry>& default_acsr_table() {
    static const std::vector<AcsrEntry> table = {
        {"266.8 kcmil 26/7", 0.642, 0.0217, 0.3850},
        {"336.4 kcmil 26/7", 0.721, 0.0244, 0.3060},
        {"477 kcmil 26/7", 0.858, 0.0290, 0.2160},
        {"556.5 kcmil 26/7", 0.927, 0.0313, 0.1859},
        {"795 kcmil 26/7", 1.108, 0.0375, 0.1288},
        {"1033.5 kcmil 45/7", 1.213, 0.0402, 0.1030},
    };
    return table;
}

std::vector<SweepPoint> sensitivity_sweep(const ConductorGeometry& base, SweepParameter parameter,
                                          const std::vector<double>& grid) {
    if (grid.empty()) throw Error("sensitivity_sweep: empty grid");
    std::vector<SweepPoint> out;
    out.reserve(grid.size());
    for (double g : grid) {
        if (g <= 0.0) throw Error("sensitivity_sweep: grid values must be > 0");
        ConductorGeometry geom = base;
        if (parameter == SweepParameter::ConductorSize) {
            // pick the table entry whose diameter is nearest the grid value
            const auto& tbl = default_acsr_table();
            std::size_t best = 0;
            for (std::size_t i = 1; i < tbl.size(); ++i)
                if (std::abs(tbl[i].diameter_in - g) < std::abs(tbl[best].diameter_in - g)) best = i;
            for (auto& c : geom.conductors) {
                if (c.role == ConductorRole::N) continue;
                c.gmr_ft = tbl[best].gmr_ft;
                c.resistance_ohm_per_mile = tbl[best].r_ohm_per_mile;
            }
        } else {
            for (auto& c : geom.conductors) c.x_ft *= g;
        }
        CMat z = build_impedance_matrix(geom);
        EigenAnalysis an = analyze_diagonalizability(z);
        out.push_back({g, an.eigenvalues, an.condition_number});
    }
    return out;
}

std::string sweep_to_csv(const std::vector<SweepPoint>& pts) {
    std::ostringstream os;
    os.precision(10);
    std::size_t n = pts.empty() ? 0 : pts.front().eigenvalues.size();
    os << "param";
    for (std::size_t k = 1; k <= n; ++k) os << ",lambda" << k << "_re,lambda" << k << "_im";
    os << ",cond\n";
    for (const auto& p : pts) {
        os << p.param;
        for (const auto& l : p.eigenvalues) os << "," << l.real() << "," << l.imag();
        os << "," << p.condition_number << "\n";
    }
    return os.str();
}

}  // namespace ebus
