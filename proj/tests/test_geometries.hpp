#pragma once

#include "ebus/lineconst.hpp"

// Shared pole geometries for tests: the standard 4-wire crossarm layout
// (336.4 kcmil 26/7 phases, 4/0 6/1 neutral) and the vertical variant.
namespace test_geom {

inline ebus::ConductorGeometry horizontal4() {
    using ebus::ConductorRole;
    ebus::ConductorGeometry g;
    g.conductors = {
        {ConductorRole::A, 0.306, 0.0244, 0.0, 29.0},
        {ConductorRole::B, 0.306, 0.0244, 2.5, 29.0},
        {ConductorRole::C, 0.306, 0.0244, 7.0, 29.0},
        {ConductorRole::N, 0.592, 0.00814, 4.0, 25.0},
    };
    return g;
}

inline ebus::ConductorGeometry vertical4() {
    using ebus::ConductorRole;
    ebus::ConductorGeometry g;
    g.conductors = {
        {ConductorRole::A, 0.306, 0.0244, 0.0, 35.0},
        {ConductorRole::B, 0.306, 0.0244, 0.0, 32.85},
        {ConductorRole::C, 0.306, 0.0244, 0.0, 30.95},
        {ConductorRole::N, 0.592, 0.00814, 0.0, 28.45},
    };
    return g;
}

inline ebus::ConductorGeometry horizontal3() {
    ebus::ConductorGeometry g = horizontal4();
    g.conductors.pop_back();
    return g;
}

}  // namespace test_geom
