#pragma once

#include <complex>
#include <numbers>
#include <stdexcept>
#include <string>
#include <vector>

namespace ebus {

using Complex = std::complex<double>;
using CVec = std::vector<Complex>;

inline constexpr double kPi = std::numbers::pi;

/// Input / model errors surfaced to the CLI with exit code 1.
class Error : public std::runtime_error {
  public:
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

/// Numerical failures (singular pivot, non-convergence of an eigensolve, ...).
class NumericError : public std::runtime_error {
  public:
    explicit NumericError(const std::string& msg) : std::runtime_error(msg) {}
};

struct Diagnostic {
    std::string element;   // id of the offending element
    std::string message;   // violated invariant, human readable
};

inline Complex polar_deg(double mag, double deg) {
    return std::polar(mag, deg * kPi / 180.0);
}

inline double angle_deg(Complex v) { return std::arg(v) * 180.0 / kPi; }

/// Smallest signed difference between two angles in degrees, in (-180, 180].
inline double angle_diff_deg(double a, double b) {
    double d = std::fmod(a - b, 360.0);
    if (d > 180.0) d -= 360.0;
    if (d <= -180.0) d += 360.0;
    return d;
}

}  // namespace ebus
