#pragma once

#include <cstdint>
#include <string>

#include "ebus/lineconst.hpp"
#include "ebus/netmodel.hpp"

namespace ebus {

/// Bundled study networks. The 4-bus feeder reproduces the published
/// integrated MV/LV benchmark; the 123/8500 analogs are seeded synthetic
/// networks with the same construction style (transposed 3-wire trunk,
/// 4-wire multigrounded LV feeders behind delta/wye-grounded transformers).

ConductorGeometry ieee4_geometry_mv3();       // 336.4 ACSR phases, crossarm layout
ConductorGeometry ieee4_geometry_lv4();       // same + 4/0 neutral
ConductorGeometry vertical_geometry_lv4();    // vertical pole variant

NetworkModel ieee4_model();

struct AnalogSpec {
    int mv_buses = 0;
    std::vector<int> lv_feeder_buses;  // one entry per LV feeder
    double cap_step_kvar = 20.0;
    int cap_steps = 9;
    int dgs_per_feeder = 3;
    int parent_window = 6;             // how far back a new bus may attach
    double mv_line_mi_lo = 0.08;
    double mv_line_mi_hi = 0.3;
    double mv_load_kw_lo = 25.0;
    double mv_load_kw_hi = 70.0;
};

NetworkModel make_analog(const AnalogSpec& spec, std::uint64_t seed);
NetworkModel ieee123_analog(std::uint64_t seed = 17);
NetworkModel ieee8500_analog(std::uint64_t seed = 17);

/// Two-bus toy: slack + loaded bus with one switched capacitor. Small enough
/// for exhaustive search over every capacitor step.
NetworkModel vvc_toy_capacitor();

/// Integrated MV/LV toy with one tap, one capacitor, and one DG; control
/// ranges kept small so brute force stays cheap.
NetworkModel vvc_toy_mixed();

std::string default_limits_json();

/// Writes every bundled fixture into dir (created by the caller).
/// Returns the list of file names written.
std::vector<std::string> write_all_fixtures(const std::string& dir, std::uint64_t seed = 17);

}  // namespace ebus
