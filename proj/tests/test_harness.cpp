#include "doctest.h"

#include "harness.hpp"

#include <json.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

using namespace eywa;
using json = nlohmann::json;

namespace {

json minimal()
{
    return json::parse(R"({
      "name": "mini",
      "duration_s": 4,
      "topology": {
        "hosts": [{"name": "h0"}, {"name": "h1"}],
        "externals": [{"name": "ext", "ip": "198.51.100.10"}],
        "tenants": [{
          "name": "t",
          "vms": [{"name": "vm0", "ip": "10.0.1.1", "host": "h0"},
                  {"name": "vm1", "ip": "10.0.1.2", "host": "h1"}],
          "vrs": [{"name": "vr0", "host": "h0", "public_ips": ["203.0.113.1"]}]
        }]
      },
      "timeline": [{"at_s": 0, "action": "start_flow", "id": "f", "src": "vm1", "dst": "ext"}],
      "assertions": []
    })");
}

std::string parse_error(const json& j)
{
    try {
        parse_scenario(j.dump());
    } catch (const ValidationError& e) {
        return e.what();
    }
    return {};
}

std::string first_line(const std::string& s)
{
    return s.substr(0, s.find('\n'));
}

struct EnvSeed {
    explicit EnvSeed(const char* v)
    {
        if (v)
            setenv("EYWA_SIM_SEED", v, 1);
        else
            unsetenv("EYWA_SIM_SEED");
    }
    ~EnvSeed() { unsetenv("EYWA_SIM_SEED"); }
};

}  // namespace

TEST_CASE("a minimal scenario parses with defaults")
{
    ScenarioDoc d = parse_scenario(minimal().dump());
    CHECK(d.name == "mini");
    CHECK(d.mode == NetMode::Eywa);
    CHECK(d.duration == 4 * kSecond);
    CHECK(d.config.sampling_interval == 100 * kMillisecond);
    CHECK_FALSE(d.seed);
    REQUIRE(d.timeline.size() == 1);
    CHECK(d.timeline[0].kind == ActionKind::StartFlow);
    CHECK(d.topology.hosts[0].link_bps == 1e9);
    CHECK_NOTHROW(validate_scenario(d));
}

TEST_CASE("parse errors point at the offending field")
{
    CHECK(parse_error(json::parse("[1]")) != "");
    CHECK_THROWS_AS(parse_scenario("{not json"), ValidationError);

    auto j = minimal();
    j["bogus"] = 1;
    CHECK(parse_error(j).find("bogus") != std::string::npos);

    j = minimal();
    j["topology"]["tenants"][0]["vms"][1]["ip"] = "10.0.1";
    CHECK(parse_error(j).find("topology.tenants[0].vms[1].ip") != std::string::npos);

    j = minimal();
    j["timeline"][0]["action"] = "explode";
    CHECK(parse_error(j).find("timeline[0].action") != std::string::npos);

    j = minimal();
    j["mode"] = "ospf";
    CHECK(parse_error(j).find("mode") != std::string::npos);

    j = minimal();
    j["assertions"] = json::array({{{"name", "x"}, {"type", "flow_rate"}, {"flows", {"f"}}, {"from_s", 0},
                                    {"to_s", 1}, {"expected", 1}, {"tolerance", -1}}});
    CHECK(parse_error(j).find("tolerance") != std::string::npos);
}

TEST_CASE("validation catches references the parser cannot")
{
    auto j = minimal();
    j["timeline"][0]["src"] = "ghost";
    ScenarioDoc d = parse_scenario(j.dump());
    CHECK_THROWS_AS(validate_scenario(d), ValidationError);

    j = minimal();
    j["timeline"].push_back({{"at_s", 0.5}, {"action", "kill_vr"}, {"vr", "vr0"}});
    j["timeline"].push_back({{"at_s", 0.2}, {"action", "start_vr"}, {"vr", "vr0"}});
    CHECK_THROWS_AS(validate_scenario(parse_scenario(j.dump())), ValidationError);
}

TEST_CASE("seed precedence: option, then document, then environment, then 1")
{
    ScenarioDoc d = parse_scenario(minimal().dump());
    {
        EnvSeed env(nullptr);
        CHECK(resolve_seed(d, {}) == 1u);
    }
    {
        EnvSeed env("42");
        CHECK(resolve_seed(d, {}) == 42u);
        d.seed = 9;
        CHECK(resolve_seed(d, {}) == 9u);
        RunOptions o;
        o.seed = 3;
        CHECK(resolve_seed(d, o) == 3u);
    }
    {
        EnvSeed env("banana");
        d.seed.reset();
        CHECK_THROWS_AS(resolve_seed(d, {}), ValidationError);
    }
}

TEST_CASE("run outputs follow the fixed schemas")
{
    RunOptions o;
    o.seed = 11;
    RunResult r = run_scenario(parse_scenario(minimal().dump()), o);
    CHECK(r.seed == 11u);
    CHECK(first_line(r.throughput_csv) == kThroughputHeader);
    CHECK(first_line(r.arp_events_csv) == kArpEventsHeader);
    CHECK(r.throughput_csv.find("\nhost,") == std::string::npos);
    CHECK(r.throughput_csv.find(",vm,vm1,") != std::string::npos);

    const json rep = json::parse(r.report_json);
    CHECK(rep.size() == 4);
    CHECK(rep["scenario"] == "mini");
    CHECK(rep["seed"] == 11);
    REQUIRE(rep["assertions"].is_array());
    for (const auto& a : rep["assertions"]) {
        CHECK(a.size() == 5);
        for (const char* k : {"name", "expected", "measured", "tolerance", "pass"})
            CHECK(a.contains(k));
    }
    CHECK(rep["counters"].is_object());
    CHECK(r.passed());

    const auto dir = std::filesystem::temp_directory_path() / "eywa_harness_test";
    std::filesystem::remove_all(dir);
    write_outputs(r, dir);
    for (const char* f : {"throughput.csv", "arp_events.csv", "report.json"}) {
        std::ifstream in(dir / f);
        std::stringstream ss;
        ss << in.rdbuf();
        CHECK(ss.str() == (std::string(f) == "report.json"      ? r.report_json
                           : std::string(f) == "throughput.csv" ? r.throughput_csv
                                                                : r.arp_events_csv));
    }
    std::filesystem::remove_all(dir);
    std::ofstream(dir.string()) << "file in the way";
    CHECK_THROWS_AS(write_outputs(r, dir / "sub"), IoError);
    std::filesystem::remove(dir);
}

TEST_CASE("an empty run still produces headers and a report")
{
    auto j = minimal();
    j["duration_s"] = 0;
    j["timeline"] = json::array();
    RunResult r = run_scenario(parse_scenario(j.dump()));
    CHECK(first_line(r.arp_events_csv) == kArpEventsHeader);
    CHECK(json::parse(r.report_json)["assertions"].is_array());
}

TEST_CASE("flow_rate looks at per-interval means, not instants")
{
    // The orphan VM resolves its gateway within the first interval, so the
    // instantaneous rate at t=0 is zero while the interval mean is not.
    auto j = minimal();
    j["assertions"] = json::parse(R"([
      {"name": "min_from_zero", "type": "flow_rate", "flows": ["f"], "stat": "min",
       "from_s": 0, "to_s": 4, "expected": 0.9e9, "compare": "ge"},
      {"name": "max", "type": "flow_rate", "flows": ["f"], "stat": "max",
       "from_s": 1, "to_s": 4, "expected": 1e9, "tolerance": 0.001}
    ])");
    RunResult r = run_scenario(parse_scenario(j.dump()));
    REQUIRE(r.assertions.size() >= 2);
    CHECK(r.assertions[0].pass);
    CHECK(*r.assertions[0].measured < 1e9);
    CHECK(r.assertions[1].pass);
}

TEST_CASE("failed assertions are reported, not thrown")
{
    auto j = minimal();
    j["assertions"] = json::parse(R"([{"name": "too_fast", "type": "flow_rate", "flows": ["f"],
        "from_s": 1, "to_s": 4, "expected": 5e9, "compare": "ge"}])");
    RunResult r = run_scenario(parse_scenario(j.dump()));
    CHECK_FALSE(r.passed());
    CHECK_FALSE(json::parse(r.report_json)["assertions"][0]["pass"].get<bool>());
}

TEST_CASE("builtins exist in every mode")
{
    const auto all = builtin_scenarios();
    CHECK(all.size() == 24);
    CHECK(is_builtin("fig11_outbound"));
    CHECK(is_builtin("flux_orphan_mvrrp"));
    CHECK_FALSE(is_builtin("fig99"));
    CHECK(builtin_scenario("failover_vr_kill").mode == NetMode::Eywa);
    CHECK(builtin_scenario("failover_vr_kill_mvrrp").mode == NetMode::Mvrrp);
    CHECK(builtin_scenario("failover_vr_kill", NetMode::SingleVr).mode == NetMode::SingleVr);
    CHECK_THROWS_AS(builtin_scenario("fig99"), ValidationError);
    for (const auto& b : all)
        CHECK_NOTHROW(validate_scenario(builtin_scenario(b.name)));
}
