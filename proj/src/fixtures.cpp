#include "ebus/fixtures.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>

namespace ebus {

namespace {

Conductor phase_336(ConductorRole role, double x, double y) {
    return {role, 0.306, 0.0244, x, y};
}

Conductor neutral_4_0(double x, double y) {
    return {ConductorRole::N, 0.592, 0.00814, x, y};
}

Complex s_kva_from_kw(double p_kw, double pf) {
    return {p_kw, p_kw * std::tan(std::acos(pf))};
}

/// Ideally transposed variant of a 3x3 series impedance matrix: diagonal and
/// off-diagonal entries replaced by their means, which makes the matrix
/// circulant and sequence-decoupled.
CMat transpose_average(const CMat& z) {
    Complex d = 0.0, o = 0.0;
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j)
            (i == j ? d : o) += z(i, j);
    d /= 3.0;
    o /= 6.0;
    CMat out(3, 3);
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) out(i, j) = (i == j) ? d : o;
    return out;
}

ZipLoad pq_load(const std::string& id, const std::string& bus, double pa, double fa, double pb,
                double fb, double pc, double fc) {
    ZipLoad l;
    l.id = id;
    l.bus = bus;
    l.phases[ConductorRole::A].s_kva = s_kva_from_kw(pa, fa);
    l.phases[ConductorRole::B].s_kva = s_kva_from_kw(pb, fb);
    l.phases[ConductorRole::C].s_kva = s_kva_from_kw(pc, fc);
    return l;
}

}  // namespace

ConductorGeometry ieee4_geometry_mv3() {
    ConductorGeometry g;
    g.conductors = {phase_336(ConductorRole::A, 0.0, 29.0), phase_336(ConductorRole::B, 2.5, 29.0),
                    phase_336(ConductorRole::C, 7.0, 29.0)};
    return g;
}

ConductorGeometry ieee4_geometry_lv4() {
    ConductorGeometry g = ieee4_geometry_mv3();
    g.conductors.push_back(neutral_4_0(4.0, 25.0));
    return g;
}

ConductorGeometry vertical_geometry_lv4() {
    ConductorGeometry g;
    g.conductors = {phase_336(ConductorRole::A, 0.0, 35.0), phase_336(ConductorRole::B, 0.0, 32.85),
                    phase_336(ConductorRole::C, 0.0, 30.95), neutral_4_0(0.0, 28.45)};
    return g;
}

NetworkModel ieee4_model() {
    NetworkModel m;
    m.s_base_mva = 6.0;
    double lv_kv = 4.16 / std::sqrt(3.0);
    m.buses = {
        {"b1", Segment::MV3wire, 12.47, BusKind::Slack, 1.0, 0.0},
        {"b2", Segment::MV3wire, 12.47, BusKind::PQ, 1.0, 0.0},
        {"b3", Segment::LV4wire, lv_kv, BusKind::PQ, 1.0, 0.0},
        {"b4", Segment::LV4wire, lv_kv, BusKind::PQ, 1.0, 0.0},
    };
    m.geometries.emplace("mv3-crossarm", ieee4_geometry_mv3());
    m.geometries.emplace("lv4-crossarm", ieee4_geometry_lv4());

    LineBranch l12;
    l12.id = "line12";
    l12.from = "b1";
    l12.to = "b2";
    l12.source = LineSource::Geometry;
    l12.geometry_ref = "mv3-crossarm";
    l12.length_miles = 2000.0 / 5280.0;
    m.lines.push_back(l12);

    LineBranch l34;
    l34.id = "line34";
    l34.from = "b3";
    l34.to = "b4";
    l34.source = LineSource::Geometry;
    l34.geometry_ref = "lv4-crossarm";
    l34.length_miles = 2500.0 / 5280.0;
    m.lines.push_back(l34);

    TransformerBranch t;
    t.id = "tx1";
    t.from = "b2";
    t.to = "b3";
    t.kva = 6000.0;
    t.leakage_pu = {0.01, 0.06};
    t.grounding_ohm = 0.3;
    t.tap = 0;
    t.tap_range = {-16, 16, 0.00625};
    m.transformers.push_back(t);

    // heavy unbalanced load: 1275/1800/2375 kW at 0.85/0.9/0.95 lagging
    m.loads.push_back(pq_load("load4", "b4", 1275.0, 0.85, 1800.0, 0.9, 2375.0, 0.95));

    m.groundings.push_back({"gr4", "b4", 0.3, {}});

    m.controls.push_back({"tap-tx1", ControlKind::TransformerTap, "tx1", 0, -16, 16, 1});

    m.finalize();
    return m;
}

NetworkModel make_analog(const AnalogSpec& spec, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    auto uniform = [&rng](double lo, double hi) {
        return std::uniform_real_distribution<double>(lo, hi)(rng);
    };
    auto pick = [&rng](int lo, int hi) {
        return std::uniform_int_distribution<int>(lo, hi)(rng);
    };

    NetworkModel m;
    m.s_base_mva = 10.0;
    double lv_kv = 4.16 / std::sqrt(3.0);

    // transposed trunk line constants, emitted as an explicit matrix
    CMat z_mv = transpose_average(build_impedance_matrix(ieee4_geometry_mv3()));
    m.geometries.emplace("lv4-crossarm", ieee4_geometry_lv4());

    // trunk tree; bus numbering shuffled afterwards so natural matrix order
    // is not already elimination-friendly
    int n_mv = spec.mv_buses;
    std::vector<int> label(n_mv);
    for (int i = 0; i < n_mv; ++i) label[i] = i;
    std::shuffle(label.begin() + 1, label.end(), rng);
    auto mv_name = [&label](int i) { return "m" + std::to_string(label[i] + 1); };

    std::vector<Bus> mv_buses(n_mv);
    for (int i = 0; i < n_mv; ++i)
        mv_buses[i] = {mv_name(i), Segment::MV3wire, 12.47,
                       i == 0 ? BusKind::Slack : BusKind::PQ, 1.0, 0.0};
    m.buses = mv_buses;

    for (int i = 1; i < n_mv; ++i) {
        int parent = (i == 1) ? 0 : pick(std::max(0, i - spec.parent_window), i - 1);
        LineBranch l;
        l.id = "ml" + std::to_string(i);
        l.from = mv_name(parent);
        l.to = mv_name(i);
        l.source = LineSource::ExplicitMatrix;
        l.series_ohm_per_mile = z_mv;
        l.length_miles = uniform(spec.mv_line_mi_lo, spec.mv_line_mi_hi);
        m.lines.push_back(l);
    }

    // spot loads on roughly a third of the trunk buses
    for (int i = 1; i < n_mv; ++i) {
        if (pick(0, 2) != 0) continue;
        double p = uniform(spec.mv_load_kw_lo, spec.mv_load_kw_hi);
        double unb = uniform(0.85, 1.15);
        m.loads.push_back(pq_load("mload" + std::to_string(i), mv_name(i), p, 0.9, p * unb, 0.9,
                                  p * (2.0 - unb), 0.9));
    }

    // LV feeders behind delta/wye-grounded transformers
    int dg_counter = 0;
    for (std::size_t f = 0; f < spec.lv_feeder_buses.size(); ++f) {
        int nf = spec.lv_feeder_buses[f];
        std::string fp = "f" + std::to_string(f + 1);
        int attach = pick(n_mv / 4, n_mv - 1);

        for (int k = 0; k < nf; ++k)
            m.buses.push_back({fp + "b" + std::to_string(k + 1), Segment::LV4wire, lv_kv,
                               BusKind::PQ, 1.0, 0.0});

        TransformerBranch t;
        t.id = fp + "tx";
        t.from = mv_name(attach);
        t.to = fp + "b1";
        t.kva = 1000.0;
        t.leakage_pu = {0.011, 0.07};
        t.grounding_ohm = 100.0;
        t.tap = 0;
        t.tap_range = {-16, 16, 0.00625};
        m.transformers.push_back(t);
        m.controls.push_back({fp + "tap", ControlKind::TransformerTap, t.id, 0, -16, 16, 1});

        for (int k = 1; k < nf; ++k) {
            int parent = (k <= 2) ? k - 1 : pick(std::max(0, k - 3), k - 1);
            LineBranch l;
            l.id = fp + "l" + std::to_string(k);
            l.from = fp + "b" + std::to_string(parent + 1);
            l.to = fp + "b" + std::to_string(k + 1);
            l.source = LineSource::Geometry;
            l.geometry_ref = "lv4-crossarm";
            l.length_miles = uniform(180.0, 420.0) / 5280.0;
            m.lines.push_back(l);
        }

        for (int k = 0; k < nf; ++k) {
            m.groundings.push_back({fp + "g" + std::to_string(k + 1),
                                    fp + "b" + std::to_string(k + 1), 100.0, {}});
            if (k == 0) continue;  // secondary bus carries no spot load
            double p = uniform(8.0, 22.0);
            double unb = uniform(0.7, 1.3);
            m.loads.push_back(pq_load(fp + "load" + std::to_string(k + 1),
                                      fp + "b" + std::to_string(k + 1), p * unb, 0.92, p, 0.92,
                                      p * (2.0 - unb), 0.92));
        }

        for (int d = 0; d < spec.dgs_per_feeder; ++d) {
            std::string bus = fp + "b" + std::to_string(pick(2, nf));
            std::string id = "dg" + std::to_string(++dg_counter);
            m.dgs.push_back({id, bus, uniform(20.0, 50.0), 0.0});
            double qmax_pu = 0.006;
            m.controls.push_back({id + "-q", ControlKind::DgVar, id, 0.0, -qmax_pu, qmax_pu, 0.001});
        }
    }

    // switched capacitors on trunk buses
    for (int c = 0; c < 2 + static_cast<int>(spec.lv_feeder_buses.size()); ++c) {
        std::string bus = mv_name(pick(n_mv / 3, n_mv - 1));
        m.controls.push_back({"cap" + std::to_string(c + 1), ControlKind::SwitchedCapacitor, bus,
                              0, 0, static_cast<double>(spec.cap_steps), spec.cap_step_kvar});
    }

    m.finalize();
    return m;
}

NetworkModel ieee123_analog(std::uint64_t seed) {
    AnalogSpec spec;
    spec.mv_buses = 40;
    spec.lv_feeder_buses = {11, 16};
    spec.cap_step_kvar = 20.0;
    spec.cap_steps = 9;
    spec.dgs_per_feeder = 3;
    return make_analog(spec, seed);
}

NetworkModel ieee8500_analog(std::uint64_t seed) {
    AnalogSpec spec;
    spec.mv_buses = 800;
    spec.lv_feeder_buses = {22, 26, 24};
    spec.cap_step_kvar = 50.0;
    spec.cap_steps = 4;
    spec.dgs_per_feeder = 3;
    spec.parent_window = 40;
    spec.mv_line_mi_lo = 0.03;
    spec.mv_line_mi_hi = 0.1;
    spec.mv_load_kw_lo = 4.0;
    spec.mv_load_kw_hi = 11.0;
    return make_analog(spec, seed + 1);
}

NetworkModel vvc_toy_capacitor() {
    NetworkModel m;
    m.s_base_mva = 2.0;
    m.buses = {
        {"s", Segment::MV3wire, 12.47, BusKind::Slack, 1.0, 0.0},
        {"t", Segment::MV3wire, 12.47, BusKind::PQ, 1.0, 0.0},
    };
    CMat z_mv = transpose_average(build_impedance_matrix(ieee4_geometry_mv3()));
    LineBranch l;
    l.id = "line";
    l.from = "s";
    l.to = "t";
    l.source = LineSource::ExplicitMatrix;
    l.series_ohm_per_mile = z_mv;
    l.length_miles = 10.0;
    m.lines.push_back(l);
    m.loads.push_back(pq_load("ld", "t", 480.0, 0.85, 480.0, 0.85, 480.0, 0.85));
    m.controls.push_back({"cap", ControlKind::SwitchedCapacitor, "t", 0, 0, 10, 50.0});
    m.finalize();
    return m;
}

NetworkModel vvc_toy_mixed() {
    NetworkModel m;
    m.s_base_mva = 2.0;
    double lv_kv = 4.16 / std::sqrt(3.0);
    m.buses = {
        {"s", Segment::MV3wire, 12.47, BusKind::Slack, 1.0, 0.0},
        {"m2", Segment::MV3wire, 12.47, BusKind::PQ, 1.0, 0.0},
        {"m3", Segment::MV3wire, 12.47, BusKind::PQ, 1.0, 0.0},
        {"v1", Segment::LV4wire, lv_kv, BusKind::PQ, 1.0, 0.0},
        {"v2", Segment::LV4wire, lv_kv, BusKind::PQ, 1.0, 0.0},
    };
    m.geometries.emplace("lv4-crossarm", ieee4_geometry_lv4());
    CMat z_mv = transpose_average(build_impedance_matrix(ieee4_geometry_mv3()));
    auto add_mv_line = [&](const std::string& id, const std::string& a, const std::string& b, double len) {
        LineBranch l;
        l.id = id;
        l.from = a;
        l.to = b;
        l.source = LineSource::ExplicitMatrix;
        l.series_ohm_per_mile = z_mv;
        l.length_miles = len;
        m.lines.push_back(l);
    };
    add_mv_line("l12", "s", "m2", 1.5);
    add_mv_line("l23", "m2", "m3", 1.2);

    TransformerBranch t;
    t.id = "tx";
    t.from = "m3";
    t.to = "v1";
    t.kva = 500.0;
    t.leakage_pu = {0.011, 0.07};
    t.grounding_ohm = 100.0;
    t.tap = 0;
    t.tap_range = {-4, 4, 0.00625};
    m.transformers.push_back(t);

    LineBranch lv;
    lv.id = "lv12";
    lv.from = "v1";
    lv.to = "v2";
    lv.source = LineSource::Geometry;
    lv.geometry_ref = "lv4-crossarm";
    lv.length_miles = 900.0 / 5280.0;
    m.lines.push_back(lv);
    m.groundings.push_back({"g1", "v1", 100.0, {}});
    m.groundings.push_back({"g2", "v2", 100.0, {}});

    m.loads.push_back(pq_load("mvload", "m2", 55.0, 0.9, 65.0, 0.9, 60.0, 0.9));
    m.loads.push_back(pq_load("lvload", "v2", 42.0, 0.9, 55.0, 0.9, 48.0, 0.9));
    m.dgs.push_back({"dg1", "v2", 20.0, 0.0});

    m.controls.push_back({"tap", ControlKind::TransformerTap, "tx", 0, -4, 4, 1});
    m.controls.push_back({"cap", ControlKind::SwitchedCapacitor, "m3", 0, 0, 9, 25.0});
    m.controls.push_back({"dgq", ControlKind::DgVar, "dg1", 0.0, -0.005, 0.005, 0.001});
    m.finalize();
    return m;
}

std::string default_limits_json() {
    return R"({
  "v_min_pu": 0.95,
  "v_max_pu": 1.05,
  "i_max_pu": 1.0e9,
  "c_v": 1000.0,
  "c_i": 1000.0
}
)";
}

std::vector<std::string> write_all_fixtures(const std::string& dir, std::uint64_t seed) {
    namespace fs = std::filesystem;
    fs::create_directories(dir);
    std::vector<std::string> written;
    auto emit = [&](const std::string& name, const NetworkModel& model) {
        std::string path = (fs::path(dir) / name).string();
        save_network(model, path);
        written.push_back(name);
    };
    emit("ieee4.json", ieee4_model());
    emit("ieee123_analog.json", ieee123_analog(seed));
    emit("ieee8500_analog.json", ieee8500_analog(seed));
    emit("vvc_toy_capacitor.json", vvc_toy_capacitor());
    emit("vvc_toy_mixed.json", vvc_toy_mixed());
    {
        std::ofstream lf(fs::path(dir) / "limits.json");
        lf << default_limits_json();
        written.push_back("limits.json");
    }
    return written;
}

}  // namespace ebus
