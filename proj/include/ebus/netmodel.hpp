#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "ebus/dense.hpp"
#include "ebus/lineconst.hpp"
#include "ebus/types.hpp"

namespace ebus {

enum class Segment { MV3wire, LV4wire };
enum class BusKind { Slack, PQ };

/// Conductor axes of a bus, in storage order. LV neutral is always the last
/// axis (index 3).
std::vector<ConductorRole> conductors_of(Segment s);

struct Bus {
    std::string id;
    Segment segment = Segment::MV3wire;
    double base_kV = 0.0;   // line-to-line for MV, line-to-neutral for LV
    BusKind kind = BusKind::PQ;
    double slack_voltage_pu = 1.0;
    double slack_angle_deg = 0.0;

    int order() const { return segment == Segment::MV3wire ? 3 : 4; }
    double v_base_volts() const;   // line-to-neutral volts
    bool operator==(const Bus&) const = default;
};

enum class LineSource { ExplicitMatrix, Geometry };

struct LineBranch {
    std::string id;
    std::string from, to;
    double length_miles = 0.0;
    LineSource source = LineSource::ExplicitMatrix;
    std::string geometry_ref;        // when source == Geometry
    CMat series_ohm_per_mile;        // when source == ExplicitMatrix
    CMat shunt_uS_per_mile;          // optional, zero matrix when absent

    // derived at load time (per unit on the endpoint bus base)
    CMat y_series_pu;                // inverse of the total series impedance
    CMat y_shunt_end_pu;             // half of the total shunt admittance
    bool operator==(const LineBranch&) const = default;
};

struct TapRange {
    int min = 0;
    int max = 0;
    double step_pu = 0.0;
    bool operator==(const TapRange&) const = default;
};

struct TransformerBranch {
    std::string id;
    std::string from;                // delta / MV side
    std::string to;                  // wye-grounded / LV side
    double kva = 0.0;
    Complex leakage_pu;              // on the transformer's own rating
    double grounding_ohm = 0.0;      // wye-point grounding
    int tap = 0;
    TapRange tap_range;

    // derived at load time
    Complex y_t_pu;                  // leakage admittance on system base, tap-independent
    Complex y_gr_pu;
    double tap_ratio() const { return 1.0 + tap * tap_range.step_pu; }
    bool operator==(const TransformerBranch&) const = default;
};

struct ZipPhase {
    std::optional<Complex> z_ohm;    // constant-impedance component
    std::optional<Complex> i_amp;    // constant-current component
    std::optional<Complex> s_kva;    // constant-power component

    // derived
    Complex z_pu, i_pu, s_pu;        // zero when the component is absent
    bool has_z() const { return z_ohm.has_value(); }
    bool operator==(const ZipPhase&) const = default;
};

struct ZipLoad {
    std::string id;
    std::string bus;
    std::map<ConductorRole, ZipPhase> phases;   // A/B/C only
    bool operator==(const ZipLoad&) const = default;
};

struct GroundingShunt {
    std::string id;
    std::string bus;
    double resistance_ohm = 0.0;

    Complex g_pu;                    // derived
    bool operator==(const GroundingShunt&) const = default;
};

/// Balanced three-phase source; the VAr output is the handle VVC drives.
struct DgSource {
    std::string id;
    std::string bus;
    double p_kw = 0.0;               // three-phase total
    double q_kvar = 0.0;             // three-phase total, base point
    bool operator==(const DgSource&) const = default;
};

enum class ControlKind { TransformerTap, SwitchedCapacitor, DgVar };

struct ControlDevice {
    std::string id;
    ControlKind kind = ControlKind::TransformerTap;
    std::string target;              // transformer, bus, or dg id
    double setting = 0.0;            // tap position / cap step count / Q pu
    double min = 0.0;
    double max = 0.0;
    double step_size = 1.0;          // 1 position / kvar per step / Q pu
    bool operator==(const ControlDevice&) const = default;
};

struct NetworkModel {
    double s_base_mva = 0.0;
    std::vector<Bus> buses;
    std::map<std::string, ConductorGeometry> geometries;
    std::vector<LineBranch> lines;
    std::vector<TransformerBranch> transformers;
    std::vector<ZipLoad> loads;
    std::vector<GroundingShunt> groundings;
    std::vector<DgSource> dgs;
    std::vector<ControlDevice> controls;

    // derived at load time
    std::vector<int> island_of;      // island index per bus, parallel to buses
    int island_count = 0;

    double s_base_va() const { return s_base_mva * 1e6; }
    double s_phase_base_va() const { return s_base_va() / 3.0; }

    int bus_index(const std::string& id) const;      // -1 when unknown
    const Bus& bus(const std::string& id) const;     // throws on unknown id
    double z_base_ohm(const Bus& b) const;
    double i_base_amp(const Bus& b) const;

    /// Fills the derived per-unit fields and island labels; throws Error on
    /// structural problems (dangling reference, missing slack, ...).
    void finalize();
};

NetworkModel load_network(const std::string& path);
NetworkModel parse_network(const std::string& json_text, const std::string& origin = "<string>");
std::string serialize(const NetworkModel& model);
void save_network(const NetworkModel& model, const std::string& path);

/// Invariant checks that do not throw; an empty list means a clean model.
std::vector<Diagnostic> validate(const NetworkModel& model);

bool models_equal(const NetworkModel& a, const NetworkModel& b);

}  // namespace ebus
