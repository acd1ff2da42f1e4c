// Command-line front end. Talks to the simulator only through the C API.
#include "eywa/eywa.h"

#include "CLI11.hpp"

#include <cmath>
#include <cstdio>
#include <optional>
#include <string>

namespace {

constexpr int kExitOk = 0;
constexpr int kExitAssertion = 1;
constexpr int kExitUsage = 2;

int report_error(eywa_status status, const char* what)
{
    std::fprintf(stderr, "eywa_sim: %s: %s: %s\n", what, eywa_status_string(status), eywa_last_error());
    return kExitUsage;
}

// Accepts a builtin name or a path to a JSON scenario document.
eywa_status open_scenario(const std::string& ref, const std::optional<std::string>& mode, eywa_scenario** out)
{
    std::optional<eywa_mode> m;
    if (mode) {
        eywa_mode parsed;
        if (eywa_status s = eywa_mode_parse(mode->c_str(), &parsed); s != EYWA_OK)
            return s;
        m = parsed;
    }
    if (eywa_is_builtin(ref.c_str()))
        return eywa_scenario_load_builtin(ref.c_str(), m ? &*m : nullptr, out);
    if (eywa_status s = eywa_scenario_load_file(ref.c_str(), out); s != EYWA_OK)
        return s;
    if (m)
        return eywa_scenario_set_mode(*out, *m);
    return EYWA_OK;
}

void print_number(double v)
{
    if (std::isnan(v))
        std::printf("null");
    else
        std::printf("%.6g", v);
}

int cmd_run(const std::string& ref, const std::string& out_dir, std::optional<unsigned long long> seed,
            const std::optional<std::string>& mode)
{
    eywa_scenario* scenario = nullptr;
    if (eywa_status s = open_scenario(ref, mode, &scenario); s != EYWA_OK) {
        eywa_scenario_free(scenario);
        return report_error(s, "loading scenario");
    }
    eywa_result* result = nullptr;
    eywa_status s = eywa_run(scenario, seed ? 1 : 0, seed.value_or(0), &result);
    eywa_scenario_free(scenario);
    if (s != EYWA_OK)
        return report_error(s, "running scenario");
    if (s = eywa_result_write(result, out_dir.c_str()); s != EYWA_OK) {
        eywa_result_free(result);
        return report_error(s, "writing outputs");
    }

    const size_t n = eywa_result_assertion_count(result);
    for (size_t i = 0; i < n; ++i) {
        const char* name = nullptr;
        double expected = 0, measured = 0, tolerance = 0;
        int pass = 0;
        eywa_result_assertion(result, i, &name, &expected, &measured, &tolerance, &pass);
        std::printf("%s  %s  expected=", pass ? "PASS" : "FAIL", name);
        print_number(expected);
        std::printf(" measured=");
        print_number(measured);
        std::printf(" tolerance=%g\n", tolerance);
    }
    const bool passed = eywa_result_passed(result) != 0;
    std::printf("%s: %zu assertions, seed %llu, outputs in %s\n", passed ? "passed" : "FAILED", n,
                static_cast<unsigned long long>(eywa_result_seed(result)), out_dir.c_str());
    eywa_result_free(result);
    return passed ? kExitOk : kExitAssertion;
}

int cmd_list()
{
    const size_t n = eywa_builtin_count();
    for (size_t i = 0; i < n; ++i)
        std::printf("%-28s %s\n", eywa_builtin_name(i), eywa_builtin_description(i));
    return kExitOk;
}

int cmd_rules_check()
{
    char* table = nullptr;
    size_t mismatches = 0;
    if (eywa_status s = eywa_rules_check(&table, &mismatches); s != EYWA_OK)
        return report_error(s, "rules check");
    std::fputs(table, stdout);
    eywa_string_free(table);
    std::printf("%s\n", mismatches == 0 ? "conformant" : "NOT conformant");
    return mismatches == 0 ? kExitOk : kExitAssertion;
}

int cmd_validate(const std::string& ref)
{
    eywa_scenario* scenario = nullptr;
    eywa_status s = open_scenario(ref, std::nullopt, &scenario);
    if (s == EYWA_OK)
        s = eywa_scenario_validate(scenario);
    if (s != EYWA_OK) {
        eywa_scenario_free(scenario);
        return report_error(s, "validation");
    }
    std::printf("%s: valid\n", eywa_scenario_name(scenario));
    eywa_scenario_free(scenario);
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv)
{
    CLI::App app{"EYWA overlay network simulator"};
    app.require_subcommand(1);

    std::string run_scenario, out_dir, validate_scenario;
    std::optional<unsigned long long> seed;
    std::optional<std::string> mode;

    auto* run = app.add_subcommand("run", "run a builtin or JSON scenario");
    run->add_option("--scenario", run_scenario, "builtin name or path to a scenario document")->required();
    run->add_option("--out", out_dir, "output directory")->required();
    run->add_option("--seed", seed, "RNG seed (default: document, then EYWA_SIM_SEED, then 1)");
    run->add_option("--mode", mode, "network mode")->check(CLI::IsMember({"eywa", "mvrrp", "single_vr"}));

    auto* list = app.add_subcommand("list", "list builtin scenarios");
    auto* rules = app.add_subcommand("rules-check", "check the ARP control-rule matrix");
    auto* validate = app.add_subcommand("validate", "validate a scenario without running it");
    validate->add_option("--scenario", validate_scenario, "builtin name or path")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? kExitOk : kExitUsage;
    }

    if (run->parsed())
        return cmd_run(run_scenario, out_dir, seed, mode);
    if (list->parsed())
        return cmd_list();
    if (rules->parsed())
        return cmd_rules_check();
    if (validate->parsed())
        return cmd_validate(validate_scenario);
    return kExitUsage;
}
