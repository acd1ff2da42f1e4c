#include "harness.hpp"

#include <algorithm>
#include <cstdio>
#include <set>
#include <sstream>

namespace eywa {

namespace {

// Expected control-rule matrix, written out independently of decide_rule.
// Columns: mode, direction, kind, target-local, cache-hit, overloaded, then
// the expected action and rule ID. '*' matches either value; the first
// matching row wins.
constexpr const char* kExpected[] = {
    "N out VRVM-REQ 1 * * pass-check filter 1-2",
    "N out VRVM-REQ 0 1 * pass-check proxy 1-3",
    "N out VRVM-REQ 0 0 * pass-check pass 1-1",
    "N in  VRVM-REQ * * * pass-check filter 2",
    "O out VRVM-REQ * * * pass-check n/a 3",
    "O in  VRVM-REQ 1 * * pass-check proxy 4-2",
    "O in  VRVM-REQ 0 * * pass-check filter 4-1",
    "N out VMVR-REQ * * * pass-check filter 5",
    "N in  VMVR-REQ * * 1 pass-check filter 6-1",
    "N in  VMVR-REQ * * 0 pass-check proxy 6-2",
    "O out VMVR-REQ * * * pass-check pass 7",
    "O in  VMVR-REQ * * * pass-check filter 8",
    "N out VRVM-REP * * * pass-check n/a 9",
    "N in  VRVM-REP * * * pass-check n/a 10",
    "O out VRVM-REP * * * pass-check n/a 11",
    "O in  VRVM-REP * * * pass-check pass-first 12",
    "N out VMVR-REP * * * pass-check n/a 13",
    "N in  VMVR-REP * * * pass-check pass 14",
    "O out VMVR-REP * * * pass-check n/a 15",
    "O in  VMVR-REP * * * pass-check n/a 16",
    "N out GARP     * * * pass-check filter 17",
    "N in  GARP     * * * pass-check n/a 18",
    "O out GARP     * * * pass-check n/a 19",
    "O in  GARP     * * * pass-check n/a 20",
    "N out VMVM-REQ 1 * * pass-check filter 21-2",
    "N out VMVM-REQ 0 1 * pass-check proxy 21-3",
    "N out VMVM-REQ 0 0 * pass-check pass 21-1",
    "N in  VMVM-REQ 1 * * pass-check proxy 22-2",
    "N in  VMVM-REQ 0 * * pass-check filter 22-1",
    "O out VMVM-REQ 1 * * pass-check filter 23-2",
    "O out VMVM-REQ 0 1 * pass-check proxy 23-3",
    "O out VMVM-REQ 0 0 * pass-check pass 23-1",
    "O in  VMVM-REQ 1 * * pass-check proxy 24-2",
    "O in  VMVM-REQ 0 * * pass-check filter 24-1",
    "* out VMVM-REP * * * pass-check n/a vm-reply-out",
    "* in  VMVM-REP 1 * * pass-check pass vm-reply-pass",
    "* in  VMVM-REP 0 * * pass-check filter vm-reply-filter",
};

struct Row {
    std::string mode, dir, kind, local, cache, over, action, id;
};

const std::vector<Row>& rows()
{
    static const std::vector<Row> kRows = [] {
        std::vector<Row> out;
        for (const char* line : kExpected) {
            std::istringstream in(line);
            Row r;
            std::string marker;
            in >> r.mode >> r.dir >> r.kind >> r.local >> r.cache >> r.over >> marker >> r.action >> r.id;
            out.push_back(r);
        }
        return out;
    }();
    return kRows;
}

std::string short_kind(ArpKind k)
{
    switch (k) {
    case ArpKind::VRtoVM_Request: return "VRVM-REQ";
    case ArpKind::VMtoVR_Request: return "VMVR-REQ";
    case ArpKind::VMtoVM_Request: return "VMVM-REQ";
    case ArpKind::VRtoVM_Reply: return "VRVM-REP";
    case ArpKind::VMtoVR_Reply: return "VMVR-REP";
    case ArpKind::VMtoVM_Reply: return "VMVM-REP";
    case ArpKind::GARP_VRtoVR: return "GARP";
    }
    return "?";
}

bool matches(const std::string& pattern, const std::string& value)
{
    return pattern == "*" || pattern == value;
}

const Row* expected_for(AgentMode mode, Direction dir, ArpKind kind, bool local, bool cache, bool over)
{
    const std::string m = mode == AgentMode::Normal ? "N" : "O";
    const std::string d(to_string(dir));
    const std::string k = short_kind(kind);
    for (const auto& r : rows()) {
        if (matches(r.mode, m) && matches(r.dir, d) && r.kind == k && matches(r.local, local ? "1" : "0") &&
            matches(r.cache, cache ? "1" : "0") && matches(r.over, over ? "1" : "0"))
            return &r;
    }
    return nullptr;
}

// Scenarios whose ARP traffic drives every reachable frame production:
// orphan and normal hosts, VM-to-VM resolution, VR failure and migration.
const char* const kCensusScenarios[] = {"flux_orphan", "failover_vr_kill", "migration_rebind"};

}  // namespace

const std::vector<std::string>& enumerated_rule_ids()
{
    static const std::vector<std::string> kIds = {
        "1-1", "1-2", "1-3", "2",  "3",  "4-1", "4-2", "5",    "6-1",  "6-2",  "7",    "8",    "9",
        "10",  "11",  "12",  "13", "14", "15",  "16",  "17",   "18",   "19",   "20",   "21-1", "21-2",
        "21-3", "22-1", "22-2", "23-1", "23-2", "23-3", "24-1", "24-2",
    };
    return kIds;
}

ConformanceReport rules_conformance(const DecideFn& decide, bool census)
{
    ConformanceReport report;
    std::set<std::string> produced;
    std::ostringstream table;
    table << "mode    dir  kind            rules                          combos  status\n";

    for (AgentMode mode : {AgentMode::Normal, AgentMode::Orphan}) {
        for (Direction dir : {Direction::Outbound, Direction::Inbound}) {
            for (ArpKind kind : kAllArpKinds) {
                std::set<std::string> ids;
                std::size_t bad = 0, combos = 0;
                std::string detail;
                for (int bits = 0; bits < 8; ++bits) {
                    const bool local = bits & 1, cache = bits & 2, over = bits & 4;
                    LocalView view;
                    view.is_target_local = local;
                    view.cache_hit = cache;
                    const Row* want = expected_for(mode, dir, kind, local, cache, over);
                    std::string got_action = "<throws>", got_id;
                    try {
                        const RuleDecision d = decide(mode, dir, kind, view, over);
                        got_action = std::string(to_string(d.action));
                        got_id = d.rule_id;
                    } catch (const Error&) {
                    }
                    ++combos;
                    ++report.checked;
                    ids.insert(got_id);
                    produced.insert(got_id);
                    if (!want || want->action != got_action || want->id != got_id) {
                        ++bad;
                        if (detail.empty()) {
                            char buf[160];
                            std::snprintf(buf, sizeof buf, "local=%d cache=%d overloaded=%d: expected %s %s, got %s %s",
                                          local, cache, over, want ? want->action.c_str() : "?",
                                          want ? want->id.c_str() : "?", got_action.c_str(), got_id.c_str());
                            detail = buf;
                        }
                    }
                }
                if (bad)
                    report.mismatches.push_back(RuleMismatch{mode, dir, kind, bad, detail});

                std::string id_list;
                for (const auto& id : ids)
                    id_list += (id_list.empty() ? "" : ",") + id;
                char line[200];
                std::snprintf(line, sizeof line, "%-7s %-4s %-15s %-30s %6zu  %s\n",
                              std::string(to_string(mode)).c_str(), std::string(to_string(dir)).c_str(),
                              std::string(to_string(kind)).c_str(), id_list.c_str(), combos,
                              bad ? "MISMATCH" : "ok");
                table << line;
            }
        }
    }
    for (const auto& id : enumerated_rule_ids())
        if (!produced.count(id))
            report.missing_ids.push_back(id);

    if (census) {
        report.census_ran = true;
        std::set<std::string> seen;
        for (const char* name : kCensusScenarios) {
            RunResult r = run_scenario(builtin_scenario(name, NetMode::Eywa), RunOptions{1, NetMode::Eywa});
            for (const auto& [key, n] : r.counters) {
                if (key.rfind("rule:", 0) != 0)
                    continue;
                report.census_decisions += n;
                seen.insert(key.substr(5));
            }
            report.census_na += r.counters["arp.na_decisions"];
        }
        report.census_rules.assign(seen.begin(), seen.end());
    }

    table << "\nchecked " << report.checked << " combinations, " << report.mismatches.size()
          << " mismatching cells, " << report.missing_ids.size() << " enumerated IDs never produced\n";
    for (const auto& m : report.mismatches)
        table << "  mismatch (" << to_string(m.mode) << ", " << to_string(m.dir) << ", " << to_string(m.kind)
              << "): " << m.combos << " combos, first " << m.detail << "\n";
    for (const auto& id : report.missing_ids)
        table << "  missing rule " << id << "\n";
    if (report.census_ran) {
        table << "runtime census: " << report.census_decisions << " agent decisions, " << report.census_na
              << " not-applicable; rules seen:";
        for (const auto& r : report.census_rules)
            table << " " << r;
        table << "\n";
    }
    report.table = table.str();
    return report;
}

}  // namespace eywa
