#include "doctest.h"

#include <eywa/eywa.h>

#include <cmath>
#include <cstring>
#include <filesystem>
#include <string>

namespace {

const char* kNoRecovery = R"({
  "name": "no_recovery",
  "duration_s": 6,
  "topology": {
    "hosts": [{"name": "h0"}],
    "externals": [{"name": "ext", "ip": "198.51.100.10"}],
    "tenants": [{
      "name": "t",
      "vms": [{"name": "vm0", "ip": "10.0.1.1", "host": "h0"}],
      "vrs": [{"name": "vr0", "host": "h0", "public_ips": ["203.0.113.1"]}]
    }]
  },
  "timeline": [
    {"at_s": 0, "action": "start_flow", "id": "f", "src": "vm0", "dst": "ext"},
    {"at_s": 1, "action": "kill_vr", "vr": "vr0"}
  ],
  "assertions": [
    {"name": "recovers", "type": "failover", "flow": "f", "at_s": 1, "bound_s": 3}
  ]
})";

std::string example(const char* file)
{
    return std::string(EYWA_SOURCE_DIR) + "/scenarios/" + file;
}

}  // namespace

TEST_CASE("version, status strings and modes")
{
    CHECK(std::strlen(eywa_version()) > 0);
    CHECK(std::string(eywa_status_string(EYWA_OK)) != std::string(eywa_status_string(EYWA_ERR_IO)));
    eywa_mode m = EYWA_MODE_EYWA;
    CHECK(eywa_mode_parse("mvrrp", &m) == EYWA_OK);
    CHECK(m == EYWA_MODE_MVRRP);
    CHECK(eywa_mode_parse("single_vr", &m) == EYWA_OK);
    CHECK(m == EYWA_MODE_SINGLE_VR);
    CHECK(eywa_mode_parse("ospf", &m) == EYWA_ERR_INVALID_ARGUMENT);
    CHECK(std::string(eywa_last_error()).find("ospf") != std::string::npos);
    CHECK(eywa_mode_parse(nullptr, &m) == EYWA_ERR_INVALID_ARGUMENT);
}

TEST_CASE("builtin catalogue")
{
    REQUIRE(eywa_builtin_count() == 24);
    CHECK(std::string(eywa_builtin_name(0)) == "fig11_outbound");
    CHECK(std::strlen(eywa_builtin_description(0)) > 0);
    CHECK(eywa_builtin_name(24) == nullptr);
    CHECK(eywa_is_builtin("migration_rebind"));
    CHECK_FALSE(eywa_is_builtin("nope"));
    CHECK_FALSE(eywa_is_builtin(nullptr));
}

TEST_CASE("load, run and inspect a builtin")
{
    eywa_scenario* s = nullptr;
    REQUIRE(eywa_scenario_load_builtin("flux_orphan", nullptr, &s) == EYWA_OK);
    CHECK(std::string(eywa_scenario_name(s)) == "flux_orphan");
    CHECK(eywa_scenario_validate(s) == EYWA_OK);

    eywa_result* r = nullptr;
    REQUIRE(eywa_run(s, 1, 5, &r) == EYWA_OK);
    CHECK(eywa_result_passed(r));
    CHECK(eywa_result_seed(r) == 5u);
    REQUIRE(eywa_result_assertion_count(r) > 0);

    const char* name = nullptr;
    double expected = 0, measured = 0, tolerance = 0;
    int pass = 0;
    CHECK(eywa_result_assertion(r, 0, &name, &expected, &measured, &tolerance, &pass) == EYWA_OK);
    CHECK(name != nullptr);
    CHECK(pass == 1);
    CHECK(eywa_result_assertion(r, 999, &name, &expected, &measured, &tolerance, &pass) ==
          EYWA_ERR_INVALID_ARGUMENT);

    std::uint64_t v = 0;
    CHECK(eywa_result_counter(r, "arp.tunneled_garp", &v) == 0);
    CHECK(v == 0u);
    CHECK(eywa_result_counter(r, "no.such.counter", &v) != 0);

    CHECK(std::string(eywa_result_throughput_csv(r)).rfind("time_s,entity_type,entity_id,tx_bps,rx_bps\n", 0) == 0);
    CHECK(std::string(eywa_result_arp_events_csv(r))
              .rfind("time_s,host,direction,kind,rule_id,action,sender_ip,target_ip\n", 0) == 0);
    CHECK(std::string(eywa_result_report_json(r)).find("\"counters\"") != std::string::npos);

    const auto dir = std::filesystem::temp_directory_path() / "eywa_capi_test";
    std::filesystem::remove_all(dir);
    CHECK(eywa_result_write(r, dir.string().c_str()) == EYWA_OK);
    CHECK(std::filesystem::exists(dir / "report.json"));
    CHECK(std::filesystem::exists(dir / "throughput.csv"));
    CHECK(std::filesystem::exists(dir / "arp_events.csv"));
    std::filesystem::remove_all(dir);

    eywa_result_free(r);
    eywa_scenario_free(s);
}

TEST_CASE("switching a builtin's mode regenerates it")
{
    const eywa_mode mode = EYWA_MODE_MVRRP;
    eywa_scenario* s = nullptr;
    REQUIRE(eywa_scenario_load_builtin("failover_vr_kill", &mode, &s) == EYWA_OK);
    eywa_result* r = nullptr;
    REQUIRE(eywa_run(s, 0, 0, &r) == EYWA_OK);
    CHECK(eywa_result_passed(r));
    eywa_result_free(r);
    CHECK(eywa_scenario_set_mode(s, EYWA_MODE_SINGLE_VR) == EYWA_OK);
    REQUIRE(eywa_run(s, 0, 0, &r) == EYWA_OK);
    CHECK(eywa_result_passed(r));
    eywa_result_free(r);
    eywa_scenario_free(s);
}

TEST_CASE("files and documents")
{
    eywa_scenario* s = nullptr;
    REQUIRE(eywa_scenario_load_file(example("two_host_flux.json").c_str(), &s) == EYWA_OK);
    eywa_result* r = nullptr;
    REQUIRE(eywa_run(s, 0, 0, &r) == EYWA_OK);
    CHECK(eywa_result_passed(r));
    eywa_result_free(r);
    eywa_scenario_free(s);

    CHECK(eywa_scenario_load_file("/nonexistent/x.json", &s) == EYWA_ERR_IO);
    CHECK(eywa_scenario_load_file(example("invalid_reference.json").c_str(), &s) == EYWA_OK);
    CHECK(eywa_scenario_validate(s) == EYWA_ERR_VALIDATION);
    CHECK(std::string(eywa_last_error()).find("h7") != std::string::npos);
    CHECK(eywa_run(s, 0, 0, &r) == EYWA_ERR_VALIDATION);
    eywa_scenario_free(s);

    CHECK(eywa_scenario_parse("{", &s) == EYWA_ERR_VALIDATION);
    CHECK(eywa_scenario_load_builtin("nope", nullptr, &s) == EYWA_ERR_INVALID_ARGUMENT);
}

TEST_CASE("missing measurements come back as NaN")
{
    eywa_scenario* s = nullptr;
    REQUIRE(eywa_scenario_parse(kNoRecovery, &s) == EYWA_OK);
    eywa_result* r = nullptr;
    REQUIRE(eywa_run(s, 0, 0, &r) == EYWA_OK);
    CHECK_FALSE(eywa_result_passed(r));
    const char* name = nullptr;
    double expected = 0, measured = 0, tolerance = 0;
    int pass = 1;
    REQUIRE(eywa_result_assertion(r, 0, &name, &expected, &measured, &tolerance, &pass) == EYWA_OK);
    CHECK(std::string(name) == "recovers");
    CHECK(expected == doctest::Approx(3.0));
    CHECK(std::isnan(measured));
    CHECK(pass == 0);
    eywa_result_free(r);
    eywa_scenario_free(s);
}

TEST_CASE("null handles are rejected")
{
    eywa_result* r = nullptr;
    CHECK(eywa_run(nullptr, 0, 0, &r) == EYWA_ERR_INVALID_ARGUMENT);
    CHECK(eywa_scenario_validate(nullptr) == EYWA_ERR_INVALID_ARGUMENT);
    CHECK(eywa_result_write(nullptr, "/tmp") == EYWA_ERR_INVALID_ARGUMENT);
    CHECK(eywa_result_passed(nullptr) == 0);
    eywa_result_free(nullptr);
    eywa_scenario_free(nullptr);
    eywa_string_free(nullptr);
}

TEST_CASE("rules check through the C interface")
{
    char* table = nullptr;
    size_t mismatches = 99;
    CHECK(eywa_rules_check(&table, &mismatches) == EYWA_OK);
    CHECK(mismatches == 0u);
    REQUIRE(table != nullptr);
    CHECK(std::string(table).find("VMtoVR_Request") != std::string::npos);
    eywa_string_free(table);
}
