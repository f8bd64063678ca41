#include "ebus/netmodel.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <functional>
#include <sstream>

#include <json.hpp>

namespace ebus {

using nlohmann::json;

std::vector<ConductorRole> conductors_of(Segment s) {
    if (s == Segment::MV3wire) return {ConductorRole::A, ConductorRole::B, ConductorRole::C};
    return {ConductorRole::A, ConductorRole::B, ConductorRole::C, ConductorRole::N};
}

double Bus::v_base_volts() const {
    double kv = base_kV * 1000.0;
    return segment == Segment::MV3wire ? kv / std::sqrt(3.0) : kv;
}

int NetworkModel::bus_index(const std::string& id) const {
    for (std::size_t i = 0; i < buses.size(); ++i)
        if (buses[i].id == id) return static_cast<int>(i);
    return -1;
}

const Bus& NetworkModel::bus(const std::string& id) const {
    int i = bus_index(id);
    if (i < 0) throw Error("unknown bus id '" + id + "'");
    return buses[i];
}

double NetworkModel::z_base_ohm(const Bus& b) const {
    double v = b.v_base_volts();
    return v * v / s_phase_base_va();
}

double NetworkModel::i_base_amp(const Bus& b) const {
    return s_phase_base_va() / b.v_base_volts();
}

namespace {

Complex parse_complex(const json& j, const std::string& where) {
    if (!j.is_object() || !j.contains("re") || !j.contains("im"))
        throw Error(where + ": complex values must be {\"re\": .., \"im\": ..}");
    return {j.at("re").get<double>(), j.at("im").get<double>()};
}

json complex_json(Complex c) { return json{{"re", c.real()}, {"im", c.imag()}}; }

CMat parse_matrix(const json& j, std::size_t order, const std::string& where) {
    if (!j.is_array() || j.size() != order)
        throw Error(where + ": expected a " + std::to_string(order) + "x" + std::to_string(order) + " matrix");
    CMat m(order, order);
    for (std::size_t r = 0; r < order; ++r) {
        const auto& row = j.at(r);
        if (!row.is_array() || row.size() != order)
            throw Error(where + ": row " + std::to_string(r) + " has wrong length");
        for (std::size_t c = 0; c < order; ++c) m(r, c) = parse_complex(row.at(c), where);
    }
    return m;
}

json matrix_json(const CMat& m) {
    json rows = json::array();
    for (std::size_t r = 0; r < m.rows(); ++r) {
        json row = json::array();
        for (std::size_t c = 0; c < m.cols(); ++c) row.push_back(complex_json(m(r, c)));
        rows.push_back(row);
    }
    return rows;
}

const json& req(const json& j, const char* key, const std::string& where) {
    auto it = j.find(key);
    if (it == j.end()) throw Error(where + ": missing required field '" + key + "'");
    return *it;
}

ConductorRole parse_role(const std::string& s, const std::string& where) {
    if (s == "a") return ConductorRole::A;
    if (s == "b") return ConductorRole::B;
    if (s == "c") return ConductorRole::C;
    if (s == "n") return ConductorRole::N;
    throw Error(where + ": unknown phase '" + s + "'");
}

std::string role_name(ConductorRole r) {
    switch (r) {
        case ConductorRole::A: return "a";
        case ConductorRole::B: return "b";
        case ConductorRole::C: return "c";
        case ConductorRole::N: return "n";
    }
    return "?";
}

}  // namespace

NetworkModel parse_network(const std::string& text, const std::string& origin) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw Error(origin + ": JSON parse error: " + e.what());
    }
    NetworkModel m;
    try {
        m.s_base_mva = req(j, "s_base_MVA", origin).get<double>();
        if (m.s_base_mva <= 0.0) throw Error(origin + ": s_base_MVA must be > 0");

        const json& jb = req(j, "buses", origin);
        if (!jb.is_array() || jb.empty()) throw Error(origin + ": 'buses' must be a non-empty array");
        for (const auto& b : jb) {
            Bus bus;
            bus.id = req(b, "id", origin + ".buses").get<std::string>();
            std::string where = origin + ".buses[" + bus.id + "]";
            std::string seg = req(b, "segment", where).get<std::string>();
            if (seg == "mv3") bus.segment = Segment::MV3wire;
            else if (seg == "lv4") bus.segment = Segment::LV4wire;
            else throw Error(where + ": segment must be 'mv3' or 'lv4'");
            bus.base_kV = req(b, "base_kV", where).get<double>();
            std::string kind = req(b, "kind", where).get<std::string>();
            if (kind == "slack") bus.kind = BusKind::Slack;
            else if (kind == "pq") bus.kind = BusKind::PQ;
            else throw Error(where + ": kind must be 'slack' or 'pq'");
            bus.slack_voltage_pu = b.value("slack_voltage_pu", 1.0);
            bus.slack_angle_deg = b.value("slack_angle_deg", 0.0);
            m.buses.push_back(bus);
        }

        for (const auto& g : j.value("geometries", json::array())) {
            std::string id = req(g, "id", origin + ".geometries").get<std::string>();
            std::string where = origin + ".geometries[" + id + "]";
            ConductorGeometry geom;
            geom.earth_resistivity_ohm_m = g.value("earth_resistivity_ohm_m", 100.0);
            geom.frequency_hz = g.value("frequency_hz", 60.0);
            geom.earth_return_ohm_per_mile = g.value("earth_return_ohm_per_mile", 0.1609e-3);
            for (const auto& c : req(g, "conductors", where)) {
                Conductor cond;
                cond.role = parse_role(req(c, "phase", where).get<std::string>(), where);
                cond.resistance_ohm_per_mile = req(c, "resistance_ohm_per_mile", where).get<double>();
                cond.gmr_ft = req(c, "gmr_ft", where).get<double>();
                cond.x_ft = req(c, "x_ft", where).get<double>();
                cond.y_ft = req(c, "y_ft", where).get<double>();
                geom.conductors.push_back(cond);
            }
            m.geometries.emplace(id, std::move(geom));
        }

        for (const auto& l : j.value("lines", json::array())) {
            LineBranch ln;
            ln.id = req(l, "id", origin + ".lines").get<std::string>();
            std::string where = origin + ".lines[" + ln.id + "]";
            ln.from = req(l, "from", where).get<std::string>();
            ln.to = req(l, "to", where).get<std::string>();
            ln.length_miles = req(l, "length_miles", where).get<double>();
            if (l.contains("geometry_ref")) {
                ln.source = LineSource::Geometry;
                ln.geometry_ref = l.at("geometry_ref").get<std::string>();
            } else {
                ln.source = LineSource::ExplicitMatrix;
                std::size_t order = req(l, "order", where).get<std::size_t>();
                if (order != 3 && order != 4) throw Error(where + ": order must be 3 or 4");
                ln.series_ohm_per_mile = parse_matrix(req(l, "series_ohm_per_mile", where), order, where);
                if (l.contains("shunt_uS_per_mile"))
                    ln.shunt_uS_per_mile = parse_matrix(l.at("shunt_uS_per_mile"), order, where);
            }
            m.lines.push_back(std::move(ln));
        }

        for (const auto& t : j.value("transformers", json::array())) {
            TransformerBranch tr;
            tr.id = req(t, "id", origin + ".transformers").get<std::string>();
            std::string where = origin + ".transformers[" + tr.id + "]";
            tr.from = req(t, "from", where).get<std::string>();
            tr.to = req(t, "to", where).get<std::string>();
            tr.kva = req(t, "kVA", where).get<double>();
            tr.leakage_pu = parse_complex(req(t, "leakage_pu", where), where);
            tr.grounding_ohm = req(t, "grounding_ohm", where).get<double>();
            const json& taps = req(t, "taps", where);
            tr.tap = req(taps, "position", where).get<int>();
            tr.tap_range.min = req(taps, "min", where).get<int>();
            tr.tap_range.max = req(taps, "max", where).get<int>();
            tr.tap_range.step_pu = req(taps, "step_pu", where).get<double>();
            m.transformers.push_back(tr);
        }

        for (const auto& l : j.value("loads", json::array())) {
            ZipLoad load;
            load.id = req(l, "id", origin + ".loads").get<std::string>();
            std::string where = origin + ".loads[" + load.id + "]";
            load.bus = req(l, "bus", where).get<std::string>();
            std::string conn = l.value("connection", "wye");
            if (conn != "wye") throw Error(where + ": only wye-connected loads are supported");
            for (const auto& [ph, body] : req(l, "phases", where).items()) {
                ConductorRole role = parse_role(ph, where);
                if (role == ConductorRole::N) throw Error(where + ": loads attach to phases a/b/c only");
                ZipPhase zp;
                if (body.contains("z_ohm")) zp.z_ohm = parse_complex(body.at("z_ohm"), where);
                if (body.contains("i_amp")) zp.i_amp = parse_complex(body.at("i_amp"), where);
                if (body.contains("s_kva")) zp.s_kva = parse_complex(body.at("s_kva"), where);
                load.phases[role] = zp;
            }
            m.loads.push_back(std::move(load));
        }

        for (const auto& g : j.value("groundings", json::array())) {
            GroundingShunt gs;
            gs.id = req(g, "id", origin + ".groundings").get<std::string>();
            std::string where = origin + ".groundings[" + gs.id + "]";
            gs.bus = req(g, "bus", where).get<std::string>();
            gs.resistance_ohm = req(g, "resistance_ohm", where).get<double>();
            m.groundings.push_back(gs);
        }

        for (const auto& d : j.value("dgs", json::array())) {
            DgSource dg;
            dg.id = req(d, "id", origin + ".dgs").get<std::string>();
            std::string where = origin + ".dgs[" + dg.id + "]";
            dg.bus = req(d, "bus", where).get<std::string>();
            dg.p_kw = d.value("p_kw", 0.0);
            dg.q_kvar = d.value("q_kvar", 0.0);
            m.dgs.push_back(dg);
        }

        for (const auto& c : j.value("controls", json::array())) {
            ControlDevice cd;
            cd.id = req(c, "id", origin + ".controls").get<std::string>();
            std::string where = origin + ".controls[" + cd.id + "]";
            std::string kind = req(c, "kind", where).get<std::string>();
            if (kind == "tap") cd.kind = ControlKind::TransformerTap;
            else if (kind == "capacitor") cd.kind = ControlKind::SwitchedCapacitor;
            else if (kind == "dg_var") cd.kind = ControlKind::DgVar;
            else throw Error(where + ": kind must be tap/capacitor/dg_var");
            cd.target = req(c, "target", where).get<std::string>();
            cd.setting = c.value("setting", 0.0);
            cd.min = c.value("min", 0.0);
            cd.max = c.value("max", 0.0);
            cd.step_size = c.value("step", 1.0);
            m.controls.push_back(cd);
        }
    } catch (const json::exception& e) {
        throw Error(origin + ": schema error: " + e.what());
    }

    m.finalize();
    auto diags = validate(m);
    if (!diags.empty()) {
        std::ostringstream os;
        os << origin << ": model validation failed:";
        for (const auto& d : diags) os << "\n  [" << d.element << "] " << d.message;
        throw Error(os.str());
    }
    return m;
}

NetworkModel load_network(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open network file '" + path + "'");
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_network(ss.str(), path);
}

void NetworkModel::finalize() {
    // reference resolution
    for (const auto& l : lines) {
        if (bus_index(l.from) < 0 || bus_index(l.to) < 0)
            throw Error("line '" + l.id + "' references an unknown bus");
        if (l.source == LineSource::Geometry && !geometries.count(l.geometry_ref))
            throw Error("line '" + l.id + "' references unknown geometry '" + l.geometry_ref + "'");
    }
    for (const auto& t : transformers)
        if (bus_index(t.from) < 0 || bus_index(t.to) < 0)
            throw Error("transformer '" + t.id + "' references an unknown bus");
    for (const auto& l : loads)
        if (bus_index(l.bus) < 0) throw Error("load '" + l.id + "' references an unknown bus");
    for (const auto& g : groundings)
        if (bus_index(g.bus) < 0) throw Error("grounding '" + g.id + "' references an unknown bus");
    for (const auto& d : dgs)
        if (bus_index(d.bus) < 0) throw Error("dg '" + d.id + "' references an unknown bus");

    // per-unit conversion
    for (auto& l : lines) {
        const Bus& fb = bus(l.from);
        double zb = z_base_ohm(fb);
        CMat z_total;
        CMat y_shunt_total;
        if (l.source == LineSource::Geometry) {
            const auto& geom = geometries.at(l.geometry_ref);
            CMat z = build_impedance_matrix(geom);
            if (static_cast<int>(z.rows()) != fb.order())
                throw Error("line '" + l.id + "': geometry order " + std::to_string(z.rows()) +
                            " does not match bus order " + std::to_string(fb.order()));
            z_total = z.scaled(l.length_miles);
            y_shunt_total = CMat(z.rows(), z.rows());
        } else {
            z_total = l.series_ohm_per_mile.scaled(l.length_miles);
            if (l.shunt_uS_per_mile.rows() == l.series_ohm_per_mile.rows())
                y_shunt_total = l.shunt_uS_per_mile.scaled(l.length_miles * 1e-6);
            else
                y_shunt_total = CMat(z_total.rows(), z_total.rows());
        }
        l.y_series_pu = z_total.scaled(1.0 / zb).inverse();
        l.y_shunt_end_pu = y_shunt_total.scaled(zb * 0.5);
    }
    for (auto& t : transformers) {
        if (t.leakage_pu == Complex(0.0, 0.0)) throw Error("transformer '" + t.id + "': zero leakage");
        t.y_t_pu = (t.kva / 1000.0) / (s_base_mva * t.leakage_pu);
        const Bus& lb = bus(t.to);
        if (t.grounding_ohm <= 0.0) throw Error("transformer '" + t.id + "': grounding_ohm must be > 0");
        t.y_gr_pu = z_base_ohm(lb) / t.grounding_ohm;
    }
    for (auto& l : loads) {
        const Bus& b = bus(l.bus);
        double zb = z_base_ohm(b), ib = i_base_amp(b), sb = s_phase_base_va();
        for (auto& [role, zp] : l.phases) {
            zp.z_pu = zp.z_ohm ? *zp.z_ohm / zb : Complex(0.0, 0.0);
            zp.i_pu = zp.i_amp ? *zp.i_amp / ib : Complex(0.0, 0.0);
            zp.s_pu = zp.s_kva ? *zp.s_kva * 1000.0 / sb : Complex(0.0, 0.0);
        }
    }
    for (auto& g : groundings) {
        const Bus& b = bus(g.bus);
        g.g_pu = (g.resistance_ohm > 0.0) ? Complex(z_base_ohm(b) / g.resistance_ohm, 0.0)
                                          : Complex(0.0, 0.0);
    }

    // islands via union-find over branches
    std::vector<int> parent(buses.size());
    for (std::size_t i = 0; i < parent.size(); ++i) parent[i] = static_cast<int>(i);
    std::function<int(int)> find = [&](int x) {
        while (parent[x] != x) {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        return x;
    };
    auto unite = [&](int a, int b) { parent[find(a)] = find(b); };
    for (const auto& l : lines) unite(bus_index(l.from), bus_index(l.to));
    for (const auto& t : transformers) unite(bus_index(t.from), bus_index(t.to));

    island_of.assign(buses.size(), -1);
    std::map<int, int> root_to_island;
    for (std::size_t i = 0; i < buses.size(); ++i) {
        int r = find(static_cast<int>(i));
        auto [it, fresh] = root_to_island.emplace(r, static_cast<int>(root_to_island.size()));
        island_of[i] = it->second;
    }
    island_count = static_cast<int>(root_to_island.size());

    std::vector<int> slack_count(island_count, 0);
    for (std::size_t i = 0; i < buses.size(); ++i)
        if (buses[i].kind == BusKind::Slack) slack_count[island_of[i]]++;
    for (int isl = 0; isl < island_count; ++isl) {
        if (slack_count[isl] == 0) throw Error("island " + std::to_string(isl) + " has no slack bus");
        if (slack_count[isl] > 1) throw Error("island " + std::to_string(isl) + " has multiple slack buses");
    }
}

std::vector<Diagnostic> validate(const NetworkModel& m) {
    std::vector<Diagnostic> out;
    auto bad = [&out](const std::string& id, const std::string& msg) { out.push_back({id, msg}); };

    for (const auto& b : m.buses)
        if (b.base_kV <= 0.0) bad(b.id, "base_kV must be > 0");

    std::map<std::string, int> seen;
    for (const auto& b : m.buses)
        if (++seen[b.id] == 2) bad(b.id, "duplicate bus id");

    for (const auto& l : m.lines) {
        int fi = m.bus_index(l.from), ti = m.bus_index(l.to);
        if (fi < 0 || ti < 0) {
            bad(l.id, "dangling bus reference");
            continue;
        }
        const Bus& fb = m.buses[fi];
        const Bus& tb = m.buses[ti];
        if (fb.segment != tb.segment) bad(l.id, "line endpoints must share a segment type");
        if (l.length_miles <= 0.0) bad(l.id, "length must be > 0");
        if (l.source == LineSource::ExplicitMatrix) {
            if (static_cast<int>(l.series_ohm_per_mile.rows()) != fb.order())
                bad(l.id, "series matrix order does not match endpoint conductor count");
            else {
                const CMat& z = l.series_ohm_per_mile;
                double scale = std::max(z.norm_max(), 1e-300);
                for (std::size_t r = 0; r < z.rows(); ++r)
                    for (std::size_t c = r + 1; c < z.cols(); ++c)
                        if (std::abs(z(r, c) - z(c, r)) > 1e-12 * scale) {
                            bad(l.id, "series matrix is not symmetric");
                            r = z.rows();
                            break;
                        }
            }
        }
    }

    for (const auto& t : m.transformers) {
        int fi = m.bus_index(t.from), ti = m.bus_index(t.to);
        if (fi < 0 || ti < 0) {
            bad(t.id, "dangling bus reference");
            continue;
        }
        if (m.buses[fi].segment != Segment::MV3wire) bad(t.id, "primary bus must be MV 3-wire");
        if (m.buses[ti].segment != Segment::LV4wire) bad(t.id, "secondary bus must be LV 4-wire");
        if (t.tap < t.tap_range.min || t.tap > t.tap_range.max) bad(t.id, "tap outside range");
        if (t.leakage_pu == Complex(0.0, 0.0)) bad(t.id, "leakage admittance must be nonzero");
        if (t.kva <= 0.0) bad(t.id, "kVA rating must be > 0");
    }

    for (const auto& l : m.loads) {
        int bi = m.bus_index(l.bus);
        if (bi < 0) {
            bad(l.id, "dangling bus reference");
            continue;
        }
        for (const auto& [role, zp] : l.phases)
            if (zp.z_ohm && *zp.z_ohm == Complex(0.0, 0.0))
                bad(l.id, "constant-impedance component must be nonzero on phase " + role_name(role));
    }

    for (const auto& g : m.groundings) {
        int bi = m.bus_index(g.bus);
        if (bi < 0) {
            bad(g.id, "dangling bus reference");
            continue;
        }
        if (m.buses[bi].segment != Segment::LV4wire) bad(g.id, "groundings attach to LV buses only");
        if (g.resistance_ohm <= 0.0) bad(g.id, "grounding resistance must be > 0");
    }

    for (const auto& c : m.controls) {
        if (c.step_size <= 0.0) bad(c.id, "step size must be > 0");
        bool found = false;
        switch (c.kind) {
            case ControlKind::TransformerTap:
                for (const auto& t : m.transformers) found |= (t.id == c.target);
                break;
            case ControlKind::SwitchedCapacitor:
                found = m.bus_index(c.target) >= 0;
                break;
            case ControlKind::DgVar:
                for (const auto& d : m.dgs) found |= (d.id == c.target);
                break;
        }
        if (!found) bad(c.id, "control target '" + c.target + "' not found");
        if (c.kind != ControlKind::TransformerTap && (c.setting < c.min || c.setting > c.max))
            bad(c.id, "setting outside bounds");
    }
    return out;
}

std::string serialize(const NetworkModel& m) {
    json j;
    j["s_base_MVA"] = m.s_base_mva;
    j["buses"] = json::array();
    for (const auto& b : m.buses) {
        json bj{{"id", b.id},
                {"segment", b.segment == Segment::MV3wire ? "mv3" : "lv4"},
                {"base_kV", b.base_kV},
                {"kind", b.kind == BusKind::Slack ? "slack" : "pq"}};
        if (b.kind == BusKind::Slack) {
            bj["slack_voltage_pu"] = b.slack_voltage_pu;
            bj["slack_angle_deg"] = b.slack_angle_deg;
        }
        j["buses"].push_back(bj);
    }
    if (!m.geometries.empty()) {
        j["geometries"] = json::array();
        for (const auto& [id, g] : m.geometries) {
            json gj{{"id", id},
                    {"earth_resistivity_ohm_m", g.earth_resistivity_ohm_m},
                    {"frequency_hz", g.frequency_hz},
                    {"earth_return_ohm_per_mile", g.earth_return_ohm_per_mile}};
            gj["conductors"] = json::array();
            for (const auto& c : g.conductors)
                gj["conductors"].push_back(json{{"phase", role_name(c.role)},
                                                {"resistance_ohm_per_mile", c.resistance_ohm_per_mile},
                                                {"gmr_ft", c.gmr_ft},
                                                {"x_ft", c.x_ft},
                                                {"y_ft", c.y_ft}});
            j["geometries"].push_back(gj);
        }
    }
    j["lines"] = json::array();
    for (const auto& l : m.lines) {
        json lj{{"id", l.id}, {"from", l.from}, {"to", l.to}, {"length_miles", l.length_miles}};
        if (l.source == LineSource::Geometry) {
            lj["geometry_ref"] = l.geometry_ref;
        } else {
            lj["order"] = l.series_ohm_per_mile.rows();
            lj["series_ohm_per_mile"] = matrix_json(l.series_ohm_per_mile);
            if (l.shunt_uS_per_mile.rows() == l.series_ohm_per_mile.rows())
                lj["shunt_uS_per_mile"] = matrix_json(l.shunt_uS_per_mile);
        }
        j["lines"].push_back(lj);
    }
    j["transformers"] = json::array();
    for (const auto& t : m.transformers)
        j["transformers"].push_back(json{{"id", t.id},
                                         {"from", t.from},
                                         {"to", t.to},
                                         {"kVA", t.kva},
                                         {"leakage_pu", complex_json(t.leakage_pu)},
                                         {"grounding_ohm", t.grounding_ohm},
                                         {"taps", json{{"position", t.tap},
                                                       {"min", t.tap_range.min},
                                                       {"max", t.tap_range.max},
                                                       {"step_pu", t.tap_range.step_pu}}}});
    j["loads"] = json::array();
    for (const auto& l : m.loads) {
        json ph = json::object();
        for (const auto& [role, zp] : l.phases) {
            json pj = json::object();
            if (zp.z_ohm) pj["z_ohm"] = complex_json(*zp.z_ohm);
            if (zp.i_amp) pj["i_amp"] = complex_json(*zp.i_amp);
            if (zp.s_kva) pj["s_kva"] = complex_json(*zp.s_kva);
            ph[role_name(role)] = pj;
        }
        j["loads"].push_back(json{{"id", l.id}, {"bus", l.bus}, {"connection", "wye"}, {"phases", ph}});
    }
    j["groundings"] = json::array();
    for (const auto& g : m.groundings)
        j["groundings"].push_back(json{{"id", g.id}, {"bus", g.bus}, {"resistance_ohm", g.resistance_ohm}});
    if (!m.dgs.empty()) {
        j["dgs"] = json::array();
        for (const auto& d : m.dgs)
            j["dgs"].push_back(json{{"id", d.id}, {"bus", d.bus}, {"p_kw", d.p_kw}, {"q_kvar", d.q_kvar}});
    }
    if (!m.controls.empty()) {
        j["controls"] = json::array();
        for (const auto& c : m.controls) {
            const char* kind = c.kind == ControlKind::TransformerTap  ? "tap"
                               : c.kind == ControlKind::SwitchedCapacitor ? "capacitor"
                                                                          : "dg_var";
            j["controls"].push_back(json{{"id", c.id},
                                         {"kind", kind},
                                         {"target", c.target},
                                         {"setting", c.setting},
                                         {"min", c.min},
                                         {"max", c.max},
                                         {"step", c.step_size}});
        }
    }
    return j.dump(2) + "\n";
}

void save_network(const NetworkModel& m, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw Error("cannot write '" + path + "'");
    out << serialize(m);
}

bool models_equal(const NetworkModel& a, const NetworkModel& b) {
    if (!(a.s_base_mva == b.s_base_mva && a.buses == b.buses && a.lines == b.lines &&
          a.transformers == b.transformers && a.loads == b.loads && a.groundings == b.groundings &&
          a.dgs == b.dgs && a.controls == b.controls))
        return false;
    if (a.geometries.size() != b.geometries.size()) return false;
    for (const auto& [id, g] : a.geometries) {
        auto it = b.geometries.find(id);
        if (it == b.geometries.end()) return false;
        const auto& h = it->second;
        if (g.conductors.size() != h.conductors.size()) return false;
        for (std::size_t i = 0; i < g.conductors.size(); ++i) {
            const auto& x = g.conductors[i];
            const auto& y = h.conductors[i];
            if (x.role != y.role || x.resistance_ohm_per_mile != y.resistance_ohm_per_mile ||
                x.gmr_ft != y.gmr_ft || x.x_ft != y.x_ft || x.y_ft != y.y_ft)
                return false;
        }
        if (g.earth_resistivity_ohm_m != h.earth_resistivity_ohm_m ||
            g.frequency_hz != h.frequency_hz ||
            g.earth_return_ohm_per_mile != h.earth_return_ohm_per_mile)
            return false;
    }
    return true;
}

}  // namespace ebus
