#pragma once

#include "world.hpp"

#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace eywa {

enum class ActionKind : std::uint8_t { StartFlow, StopFlow, KillVr, StartVr, KillHost, MigrateVm, AddVm, RemoveVm };

std::string_view to_string(ActionKind k);

struct TimelineAction {
    SimTime at = 0;
    ActionKind kind = ActionKind::StartFlow;
    FlowSpec flow;       // start_flow; stop_flow uses flow.id
    std::string target;  // VR, host or VM name
    std::string host;    // migrate_vm destination
    std::string tenant;  // add_vm
    VmSpec vm;           // add_vm
};

enum class AssertionType : std::uint8_t {
    MeanRate,            // sampled entity throughput over a window
    FlowRate,            // min or max of a flow's allocated rate over a window
    Failover,            // delay until a flow carries traffic again after `at`
    GatewayReplies,      // replies delivered per gateway request
    FluxFiltered,        // replies filtered per request by the orphan-side agent
    Rebind,              // delay until a VM learns a given VR as its gateway
    HopsDecrease,        // a flow's hop count after `at` is below the one before
    GatewayIpStable,     // a VM's configured gateway IP never changed
    VrrpConvergence,     // groups mastered by a killed VR get a single new master
    AssignmentImmutable, // baseline VM->gateway assignments unchanged
    Counter,             // a report counter against a bound
};

std::string_view to_string(AssertionType t);

enum class Compare : std::uint8_t { Eq, Le, Ge, Lt };
enum class Aggregate : std::uint8_t { Sum, Mean, Each };

struct EntitySel {
    EntityType type = EntityType::Host;
    std::string id;
};

struct AssertionSpec {
    std::string name;
    AssertionType type = AssertionType::Counter;
    std::vector<EntitySel> entities;
    bool tx = true;
    Aggregate aggregate = Aggregate::Sum;
    std::vector<std::string> flows;
    bool use_max = false;  // flow_rate statistic
    std::string vm;
    std::string vr;
    std::string host;
    std::string key;
    SimTime from = 0;
    SimTime to = 0;
    double expected = 0.0;
    double tolerance = 0.0;  // relative
    Compare compare = Compare::Eq;
};

struct ScenarioDoc {
    std::string name;
    std::string description;
    std::optional<std::uint64_t> seed;
    NetMode mode = NetMode::Eywa;
    SimTime duration = 30 * kSecond;
    WorldConfig config;
    TopologySpec topology;
    std::vector<TimelineAction> timeline;
    std::vector<AssertionSpec> assertions;
};

// Throws ValidationError with the JSON path of the first problem.
ScenarioDoc parse_scenario(const std::string& json_text);
ScenarioDoc load_scenario_file(const std::filesystem::path& path);

// Topology, timeline order and every entity reference.
void validate_scenario(const ScenarioDoc& doc);

struct BuiltinInfo {
    std::string name;
    std::string description;
};

std::vector<BuiltinInfo> builtin_scenarios();
bool is_builtin(const std::string& name);

// Builds a builtin. A `_single_vr` or `_mvrrp` suffix selects the baseline;
// `mode` overrides it. Assertions follow the effective mode.
ScenarioDoc builtin_scenario(const std::string& name, std::optional<NetMode> mode = std::nullopt);

struct RunOptions {
    std::optional<std::uint64_t> seed;  // beats the document seed and EYWA_SIM_SEED
    std::optional<NetMode> mode;
};

struct AssertionResult {
    std::string name;
    std::optional<double> expected;
    std::optional<double> measured;
    double tolerance = 0.0;
    bool pass = false;
};

struct RunResult {
    std::string scenario;
    std::uint64_t seed = 0;
    NetMode mode = NetMode::Eywa;
    std::vector<AssertionResult> assertions;
    std::map<std::string, std::uint64_t> counters;
    std::vector<std::string> anomalies;
    std::string throughput_csv;
    std::string arp_events_csv;
    std::string report_json;

    bool passed() const;
};

// Seed precedence: options, then the document, then EYWA_SIM_SEED, then 1.
std::uint64_t resolve_seed(const ScenarioDoc& doc, const RunOptions& options);

RunResult run_scenario(ScenarioDoc doc, const RunOptions& options = {});
void write_outputs(const RunResult& result, const std::filesystem::path& dir);

inline constexpr std::string_view kThroughputHeader = "time_s,entity_type,entity_id,tx_bps,rx_bps";
inline constexpr std::string_view kArpEventsHeader =
    "time_s,host,direction,kind,rule_id,action,sender_ip,target_ip";

// Rule-matrix conformance.
using DecideFn = std::function<RuleDecision(AgentMode, Direction, ArpKind, const LocalView&, bool)>;

struct RuleMismatch {
    AgentMode mode = AgentMode::Normal;
    Direction dir = Direction::Outbound;
    ArpKind kind = ArpKind::VRtoVM_Request;
    std::size_t combos = 0;  // failing (locality, cache, overload) combinations in the cell
    std::string detail;
};

struct ConformanceReport {
    std::size_t checked = 0;
    std::vector<RuleMismatch> mismatches;
    std::vector<std::string> missing_ids;   // enumerated IDs never produced by the sweep
    bool census_ran = false;
    std::uint64_t census_decisions = 0;
    std::uint64_t census_na = 0;
    std::vector<std::string> census_rules;
    std::string table;

    bool ok() const { return mismatches.empty() && missing_ids.empty() && census_na == 0; }
};

// Every rule ID of the enumerated cases, sub-cases included.
const std::vector<std::string>& enumerated_rule_ids();

ConformanceReport rules_conformance(const DecideFn& decide = decide_rule, bool census = true);

}  // namespace eywa
