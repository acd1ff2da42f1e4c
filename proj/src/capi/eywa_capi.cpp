#include "eywa/eywa.h"

#include "harness.hpp"

#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <limits>
#include <memory>
#include <new>
#include <optional>
#include <string>
#include <vector>

struct eywa_scenario {
    eywa::ScenarioDoc doc;
    std::string builtin;  // empty for documents loaded from JSON
};

struct eywa_result {
    eywa::RunResult result;
};

namespace {

thread_local std::string g_last_error;

eywa_status fail(eywa_status status, std::string message)
{
    g_last_error = std::move(message);
    return status;
}

// Runs `body` and converts anything it throws into a status code.
template <typename F>
eywa_status guarded(F&& body)
{
    try {
        g_last_error.clear();
        return body();
    } catch (const eywa::ValidationError& e) {
        return fail(EYWA_ERR_VALIDATION, e.what());
    } catch (const eywa::CapacityError& e) {
        return fail(EYWA_ERR_CAPACITY, e.what());
    } catch (const eywa::ProtocolError& e) {
        return fail(EYWA_ERR_PROTOCOL, e.what());
    } catch (const eywa::IoError& e) {
        return fail(EYWA_ERR_IO, e.what());
    } catch (const eywa::Error& e) {
        return fail(EYWA_ERR_INTERNAL, e.what());
    } catch (const std::filesystem::filesystem_error& e) {
        return fail(EYWA_ERR_IO, e.what());
    } catch (const std::bad_alloc&) {
        return fail(EYWA_ERR_INTERNAL, "out of memory");
    } catch (const std::exception& e) {
        return fail(EYWA_ERR_INTERNAL, e.what());
    } catch (...) {
        return fail(EYWA_ERR_INTERNAL, "unknown exception");
    }
}

bool to_mode(eywa_mode m, eywa::NetMode& out)
{
    switch (m) {
    case EYWA_MODE_EYWA: out = eywa::NetMode::Eywa; return true;
    case EYWA_MODE_MVRRP: out = eywa::NetMode::Mvrrp; return true;
    case EYWA_MODE_SINGLE_VR: out = eywa::NetMode::SingleVr; return true;
    }
    return false;
}

char* dup_string(const std::string& s)
{
    char* out = static_cast<char*>(std::malloc(s.size() + 1));
    if (out)
        std::memcpy(out, s.c_str(), s.size() + 1);
    return out;
}

const std::vector<eywa::BuiltinInfo>& catalogue()
{
    static const std::vector<eywa::BuiltinInfo> kList = eywa::builtin_scenarios();
    return kList;
}

}  // namespace

extern "C" {

const char* eywa_version(void)
{
    return "0.1.0";
}

const char* eywa_status_string(eywa_status status)
{
    switch (status) {
    case EYWA_OK: return "ok";
    case EYWA_ERR_INVALID_ARGUMENT: return "invalid argument";
    case EYWA_ERR_VALIDATION: return "validation error";
    case EYWA_ERR_CAPACITY: return "capacity exhausted";
    case EYWA_ERR_PROTOCOL: return "protocol error";
    case EYWA_ERR_IO: return "i/o error";
    case EYWA_ERR_INTERNAL: return "internal error";
    }
    return "unknown status";
}

const char* eywa_last_error(void)
{
    return g_last_error.c_str();
}

void eywa_string_free(char* s)
{
    std::free(s);
}

eywa_status eywa_mode_parse(const char* text, eywa_mode* out)
{
    if (!text || !out)
        return fail(EYWA_ERR_INVALID_ARGUMENT, "null argument");
    eywa::NetMode mode;
    try {
        mode = eywa::parse_net_mode(text);
    } catch (const eywa::ValidationError& e) {
        return fail(EYWA_ERR_INVALID_ARGUMENT, e.what());
    }
    switch (mode) {
    case eywa::NetMode::Eywa: *out = EYWA_MODE_EYWA; break;
    case eywa::NetMode::Mvrrp: *out = EYWA_MODE_MVRRP; break;
    case eywa::NetMode::SingleVr: *out = EYWA_MODE_SINGLE_VR; break;
    }
    return EYWA_OK;
}

size_t eywa_builtin_count(void)
{
    return catalogue().size();
}

const char* eywa_builtin_name(size_t index)
{
    return index < catalogue().size() ? catalogue()[index].name.c_str() : nullptr;
}

const char* eywa_builtin_description(size_t index)
{
    return index < catalogue().size() ? catalogue()[index].description.c_str() : nullptr;
}

int eywa_is_builtin(const char* name)
{
    return name && eywa::is_builtin(name) ? 1 : 0;
}

eywa_status eywa_scenario_load_file(const char* path, eywa_scenario** out)
{
    if (!path || !out)
        return fail(EYWA_ERR_INVALID_ARGUMENT, "null argument");
    *out = nullptr;
    return guarded([&] {
        std::error_code ec;
        if (!std::filesystem::is_regular_file(path, ec))
            return fail(EYWA_ERR_IO, std::string("cannot read scenario file '") + path + "'");
        auto handle = std::make_unique<eywa_scenario>();
        handle->doc = eywa::load_scenario_file(path);
        *out = handle.release();
        return EYWA_OK;
    });
}

eywa_status eywa_scenario_parse(const char* json_text, eywa_scenario** out)
{
    if (!json_text || !out)
        return fail(EYWA_ERR_INVALID_ARGUMENT, "null argument");
    *out = nullptr;
    return guarded([&] {
        auto handle = std::make_unique<eywa_scenario>();
        handle->doc = eywa::parse_scenario(json_text);
        *out = handle.release();
        return EYWA_OK;
    });
}

eywa_status eywa_scenario_load_builtin(const char* name, const eywa_mode* mode, eywa_scenario** out)
{
    if (!name || !out)
        return fail(EYWA_ERR_INVALID_ARGUMENT, "null argument");
    *out = nullptr;
    if (!eywa::is_builtin(name))
        return fail(EYWA_ERR_INVALID_ARGUMENT, std::string("unknown builtin scenario '") + name + "'");
    std::optional<eywa::NetMode> m;
    if (mode) {
        eywa::NetMode nm;
        if (!to_mode(*mode, nm))
            return fail(EYWA_ERR_INVALID_ARGUMENT, "unknown mode value");
        m = nm;
    }
    return guarded([&] {
        auto handle = std::make_unique<eywa_scenario>();
        handle->doc = eywa::builtin_scenario(name, m);
        handle->builtin = name;
        *out = handle.release();
        return EYWA_OK;
    });
}

eywa_status eywa_scenario_validate(const eywa_scenario* scenario)
{
    if (!scenario)
        return fail(EYWA_ERR_INVALID_ARGUMENT, "null scenario");
    return guarded([&] {
        eywa::validate_scenario(scenario->doc);
        return EYWA_OK;
    });
}

eywa_status eywa_scenario_set_mode(eywa_scenario* scenario, eywa_mode mode)
{
    if (!scenario)
        return fail(EYWA_ERR_INVALID_ARGUMENT, "null scenario");
    eywa::NetMode nm;
    if (!to_mode(mode, nm))
        return fail(EYWA_ERR_INVALID_ARGUMENT, "unknown mode value");
    return guarded([&] {
        // Builtins carry mode-specific assertions, so they are rebuilt.
        if (!scenario->builtin.empty())
            scenario->doc = eywa::builtin_scenario(scenario->builtin, nm);
        else
            scenario->doc.mode = nm;
        return EYWA_OK;
    });
}

const char* eywa_scenario_name(const eywa_scenario* scenario)
{
    return scenario ? scenario->doc.name.c_str() : nullptr;
}

void eywa_scenario_free(eywa_scenario* scenario)
{
    delete scenario;
}

eywa_status eywa_run(const eywa_scenario* scenario, int has_seed, uint64_t seed, eywa_result** out)
{
    if (!scenario || !out)
        return fail(EYWA_ERR_INVALID_ARGUMENT, "null argument");
    *out = nullptr;
    return guarded([&] {
        eywa::RunOptions options;
        if (has_seed)
            options.seed = seed;
        auto handle = std::make_unique<eywa_result>();
        handle->result = eywa::run_scenario(scenario->doc, options);
        *out = handle.release();
        return EYWA_OK;
    });
}

int eywa_result_passed(const eywa_result* result)
{
    return result && result->result.passed() ? 1 : 0;
}

uint64_t eywa_result_seed(const eywa_result* result)
{
    return result ? result->result.seed : 0;
}

size_t eywa_result_assertion_count(const eywa_result* result)
{
    return result ? result->result.assertions.size() : 0;
}

eywa_status eywa_result_assertion(const eywa_result* result, size_t index, const char** name, double* expected,
                                  double* measured, double* tolerance, int* pass)
{
    if (!result)
        return fail(EYWA_ERR_INVALID_ARGUMENT, "null result");
    if (index >= result->result.assertions.size())
        return fail(EYWA_ERR_INVALID_ARGUMENT, "assertion index out of range");
    const auto& a = result->result.assertions[index];
    const double nan = std::numeric_limits<double>::quiet_NaN();
    if (name)
        *name = a.name.c_str();
    if (expected)
        *expected = a.expected.value_or(nan);
    if (measured)
        *measured = a.measured.value_or(nan);
    if (tolerance)
        *tolerance = a.tolerance;
    if (pass)
        *pass = a.pass ? 1 : 0;
    return EYWA_OK;
}

int eywa_result_counter(const eywa_result* result, const char* key, uint64_t* value)
{
    if (!result || !key)
        return -1;
    auto it = result->result.counters.find(key);
    if (it == result->result.counters.end())
        return -1;
    if (value)
        *value = it->second;
    return 0;
}

const char* eywa_result_report_json(const eywa_result* result)
{
    return result ? result->result.report_json.c_str() : nullptr;
}

const char* eywa_result_throughput_csv(const eywa_result* result)
{
    return result ? result->result.throughput_csv.c_str() : nullptr;
}

const char* eywa_result_arp_events_csv(const eywa_result* result)
{
    return result ? result->result.arp_events_csv.c_str() : nullptr;
}

eywa_status eywa_result_write(const eywa_result* result, const char* dir)
{
    if (!result || !dir)
        return fail(EYWA_ERR_INVALID_ARGUMENT, "null argument");
    return guarded([&] {
        eywa::write_outputs(result->result, dir);
        return EYWA_OK;
    });
}

void eywa_result_free(eywa_result* result)
{
    delete result;
}

eywa_status eywa_rules_check(char** table, size_t* mismatches)
{
    return guarded([&] {
        const eywa::ConformanceReport report = eywa::rules_conformance();
        if (mismatches)
            *mismatches = report.mismatches.size() + report.missing_ids.size() +
                          static_cast<size_t>(report.census_na);
        if (table) {
            *table = dup_string(report.table);
            if (!*table)
                return fail(EYWA_ERR_INTERNAL, "out of memory");
        }
        return EYWA_OK;
    });
}

}  // extern "C"
