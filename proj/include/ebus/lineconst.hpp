#pragma once

#include <optional>
#include <string>
#include <vector>

#include "ebus/dense.hpp"
#include "ebus/types.hpp"

namespace ebus {

enum class ConductorRole { A, B, C, N };

struct Conductor {
    ConductorRole role = ConductorRole::A;
    double resistance_ohm_per_mile = 0.0;
    double gmr_ft = 0.0;
    double x_ft = 0.0;   // horizontal position
    double y_ft = 0.0;   // height above ground
};

/// Overhead line geometry for Carson's modified equations. Units follow the
/// Kersting convention: ohm/mile with GMR and spacings in feet.
struct ConductorGeometry {
    std::vector<Conductor> conductors;
    double earth_resistivity_ohm_m = 100.0;
    double frequency_hz = 60.0;
    double earth_return_ohm_per_mile = 0.1609e-3;

    void check() const;  // throws Error on invalid data
};

Complex carson_self(double r_ohm_per_mile, double gmr_ft, double f_hz = 60.0,
                    double g_ohm_per_mile = 0.1609e-3, double rho_ohm_m = 100.0);
Complex carson_mutual(double distance_ft, double f_hz = 60.0,
                      double g_ohm_per_mile = 0.1609e-3, double rho_ohm_m = 100.0);

/// Series impedance matrix (ohm/mile) of the geometry; exactly symmetric by
/// construction.
CMat build_impedance_matrix(const ConductorGeometry& geom);

struct EigenAnalysis {
    CVec eigenvalues;            // ordered per the shared convention
    CMat eigenvector_matrix;     // columns, unit norm, gauge-fixed
    double condition_number = 0.0;
    double min_pairwise_eigen_distance = 0.0;
    double reconstruction_residual = 0.0;  // ||T diag(l) T^-1 - Z||_F / ||Z||_F
    bool diagonalizable = false;
};

/// tol_cond: condition-number threshold for the diagonalizability verdict.
EigenAnalysis analyze_diagonalizability(const CMat& z, double tol_cond = 1e8);

/// 100 * |lH - lV| / |lH| per pair; throws on length mismatch or zero reference.
std::vector<double> relative_eigen_distance(const CVec& lam_h, const CVec& lam_v);

enum class SweepParameter { ConductorSize, Spacing };

struct SweepPoint {
    double param = 0.0;
    CVec eigenvalues;
    double condition_number = 0.0;
};

/// Conductor-size sweep entries: (diameter_in, gmr_ft, r_ohm_per_mile).
struct AcsrEntry {
    std::string name;
    double diameter_in;
    double gmr_ft;
    double r_ohm_per_mile;
};

/// Standard ACSR ladder used by the size sweep when the caller passes none.
const std::vector<AcsrEntry>& default_acsr_table();

/// For ConductorSize the grid indexes default_acsr_table diameters (phase
/// conductors replaced, neutral kept); for Spacing the grid scales all
/// horizontal positions.
std::vector<SweepPoint> sensitivity_sweep(const ConductorGeometry& base, SweepParameter parameter,
                                          const std::vector<double>& grid);

std::string sweep_to_csv(const std::vector<SweepPoint>& pts);

}  // namespace ebus
