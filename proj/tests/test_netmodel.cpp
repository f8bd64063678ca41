#include <doctest.h>

#include <cmath>

#include "ebus/fixtures.hpp"
#include "ebus/netmodel.hpp"

using namespace ebus;

TEST_CASE("ieee4 fixture loads with expected element counts") {
    NetworkModel m = ieee4_model();
    CHECK(m.buses.size() == 4);
    CHECK(m.lines.size() == 2);
    CHECK(m.transformers.size() == 1);
    CHECK(m.island_count == 1);
    CHECK(validate(m).empty());

    // round trip through the file format
    std::string text = serialize(m);
    NetworkModel back = parse_network(text);
    CHECK(models_equal(m, back));
    CHECK(serialize(back) == text);
}

TEST_CASE("empty bus list is a schema error") {
    CHECK_THROWS_AS(parse_network(R"({"s_base_MVA": 1.0, "buses": []})"), Error);
}

TEST_CASE("missing required field names the field") {
    try {
        parse_network(R"({"s_base_MVA": 1.0, "buses": [{"id": "b1", "segment": "mv3", "kind": "slack"}]})");
        FAIL("expected throw");
    } catch (const Error& e) {
        CHECK(std::string(e.what()).find("base_kV") != std::string::npos);
    }
}

TEST_CASE("LV line with a 3x3 matrix is an order mismatch") {
    std::string text = R"({
      "s_base_MVA": 1.0,
      "buses": [
        {"id": "a", "segment": "lv4", "base_kV": 2.4, "kind": "slack"},
        {"id": "b", "segment": "lv4", "base_kV": 2.4, "kind": "pq"}
      ],
      "lines": [{"id": "l", "from": "a", "to": "b", "length_miles": 0.5, "order": 3,
        "series_ohm_per_mile": [
          [{"re":0.3,"im":0.9},{"re":0.1,"im":0.3},{"re":0.1,"im":0.3}],
          [{"re":0.1,"im":0.3},{"re":0.3,"im":0.9},{"re":0.1,"im":0.3}],
          [{"re":0.1,"im":0.3},{"re":0.1,"im":0.3},{"re":0.3,"im":0.9}]]}]
    })";
    try {
        parse_network(text);
        FAIL("expected throw");
    } catch (const Error& e) {
        CHECK(std::string(e.what()).find("matrix order does not match") != std::string::npos);
    }
}

TEST_CASE("dangling bus reference is rejected") {
    std::string text = R"({
      "s_base_MVA": 1.0,
      "buses": [{"id": "a", "segment": "mv3", "base_kV": 12.47, "kind": "slack"}],
      "loads": [{"id": "ld", "bus": "nowhere", "phases": {"a": {"s_kva": {"re": 1, "im": 0}}}}]
    })";
    try {
        parse_network(text);
        FAIL("expected throw");
    } catch (const Error& e) {
        CHECK(std::string(e.what()).find("unknown bus") != std::string::npos);
    }
}

TEST_CASE("island without a slack is rejected") {
    std::string text = R"({
      "s_base_MVA": 1.0,
      "buses": [
        {"id": "a", "segment": "mv3", "base_kV": 12.47, "kind": "slack"},
        {"id": "b", "segment": "mv3", "base_kV": 12.47, "kind": "pq"}
      ]
    })";
    try {
        parse_network(text);
        FAIL("expected throw");
    } catch (const Error& e) {
        CHECK(std::string(e.what()).find("no slack") != std::string::npos);
    }
}

TEST_CASE("validate flags an asymmetric series matrix") {
    NetworkModel m = ieee4_model();
    LineBranch l;
    l.id = "bad";
    l.from = "b1";
    l.to = "b2";
    l.source = LineSource::ExplicitMatrix;
    l.length_miles = 1.0;
    CMat z(3, 3);
    for (int i = 0; i < 3; ++i) z(i, i) = Complex(0.3, 0.9);
    z(0, 1) = Complex(0.1, 0.3);
    z(1, 0) = Complex(0.101, 0.3);  // 1e-3 asymmetry
    z(0, 2) = z(2, 0) = z(1, 2) = z(2, 1) = Complex(0.1, 0.3);
    l.series_ohm_per_mile = z;
    m.lines.push_back(l);
    auto diags = validate(m);
    REQUIRE(diags.size() == 1);
    CHECK(diags[0].element == "bad");
    CHECK(diags[0].message.find("symmetric") != std::string::npos);
}

TEST_CASE("validate flags nonpositive grounding resistance") {
    NetworkModel m = ieee4_model();
    m.groundings.push_back({"gz", "b3", 0.0, {}});
    auto diags = validate(m);
    REQUIRE(diags.size() == 1);
    CHECK(diags[0].element == "gz");
    CHECK(diags[0].message.find("> 0") != std::string::npos);
}

TEST_CASE("validate flags tap outside range and grounding on MV bus") {
    NetworkModel m = ieee4_model();
    m.transformers[0].tap = 99;
    m.groundings.push_back({"gmv", "b1", 5.0, {}});
    auto diags = validate(m);
    CHECK(diags.size() == 2);
}

TEST_CASE("per-unit bases") {
    NetworkModel m = ieee4_model();
    const Bus& mv = m.bus("b1");
    const Bus& lv = m.bus("b3");
    CHECK(mv.v_base_volts() == doctest::Approx(12470.0 / std::sqrt(3.0)));
    CHECK(lv.v_base_volts() == doctest::Approx(4160.0 / std::sqrt(3.0)));
    CHECK(m.z_base_ohm(lv) == doctest::Approx(4160.0 * 4160.0 / 6e6));
    // transformer rated at the system base here, so leakage carries through
    Complex z = 1.0 / m.transformers[0].y_t_pu;
    CHECK(z.real() == doctest::Approx(0.01));
    CHECK(z.imag() == doctest::Approx(0.06));
}

TEST_CASE("line admittance matrices come out per unit and symmetric") {
    NetworkModel m = ieee4_model();
    for (const auto& l : m.lines) {
        const CMat& y = l.y_series_pu;
        REQUIRE(y.rows() == static_cast<std::size_t>(m.bus(l.from).order()));
        for (std::size_t i = 0; i < y.rows(); ++i)
            for (std::size_t j = i + 1; j < y.cols(); ++j)
                CHECK(std::abs(y(i, j) - y(j, i)) < 1e-9 * y.norm_max());
    }
}

TEST_CASE("analog fixtures are deterministic in their seed") {
    NetworkModel a = ieee123_analog(17);
    NetworkModel b = ieee123_analog(17);
    CHECK(models_equal(a, b));
    CHECK(serialize(a) == serialize(b));
    NetworkModel c = ieee123_analog(18);
    CHECK_FALSE(models_equal(a, c));
}

TEST_CASE("analog fixtures validate clean") {
    NetworkModel a = ieee123_analog(17);
    CHECK(validate(a).empty());
    CHECK(a.island_count == 1);
    CHECK(validate(vvc_toy_capacitor()).empty());
    CHECK(validate(vvc_toy_mixed()).empty());
}
