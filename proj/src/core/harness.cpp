#include "harness.hpp"

#include <json.hpp>

#include <algorithm>
#include <cerrno>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <set>
#include <sstream>

namespace eywa {

using nlohmann::json;

std::string_view to_string(ActionKind k)
{
    switch (k) {
    case ActionKind::StartFlow: return "start_flow";
    case ActionKind::StopFlow: return "stop_flow";
    case ActionKind::KillVr: return "kill_vr";
    case ActionKind::StartVr: return "start_vr";
    case ActionKind::KillHost: return "kill_host";
    case ActionKind::MigrateVm: return "migrate_vm";
    case ActionKind::AddVm: return "add_vm";
    case ActionKind::RemoveVm: return "remove_vm";
    }
    return "?";
}

std::string_view to_string(AssertionType t)
{
    switch (t) {
    case AssertionType::MeanRate: return "mean_rate";
    case AssertionType::FlowRate: return "flow_rate";
    case AssertionType::Failover: return "failover";
    case AssertionType::GatewayReplies: return "gateway_replies";
    case AssertionType::FluxFiltered: return "flux_filtered";
    case AssertionType::Rebind: return "rebind";
    case AssertionType::HopsDecrease: return "hops_decrease";
    case AssertionType::GatewayIpStable: return "gateway_ip_stable";
    case AssertionType::VrrpConvergence: return "vrrp_convergence";
    case AssertionType::AssignmentImmutable: return "assignment_immutable";
    case AssertionType::Counter: return "counter";
    }
    return "?";
}

namespace {

// ---------------------------------------------------------------- parsing

[[noreturn]] void fail(const std::string& path, const std::string& what)
{
    throw ValidationError(path + ": " + what);
}

void require_object(const json& j, const std::string& path, std::initializer_list<std::string_view> keys)
{
    if (!j.is_object())
        fail(path, "expected an object");
    for (const auto& [k, v] : j.items()) {
        if (std::find(keys.begin(), keys.end(), k) == keys.end())
            fail(path, "unknown key '" + k + "'");
    }
}

const json* field(const json& j, const char* key)
{
    auto it = j.find(key);
    return it == j.end() ? nullptr : &*it;
}

std::string get_string(const json& j, const char* key, const std::string& path, std::optional<std::string> def = {})
{
    const json* v = field(j, key);
    if (!v) {
        if (def)
            return *def;
        fail(path, std::string("missing '") + key + "'");
    }
    if (!v->is_string())
        fail(path + "." + key, "expected a string");
    return v->get<std::string>();
}

double get_number(const json& j, const char* key, const std::string& path, std::optional<double> def = {})
{
    const json* v = field(j, key);
    if (!v) {
        if (def)
            return *def;
        fail(path, std::string("missing '") + key + "'");
    }
    if (!v->is_number())
        fail(path + "." + key, "expected a number");
    const double d = v->get<double>();
    if (!std::isfinite(d))
        fail(path + "." + key, "not finite");
    return d;
}

std::uint64_t get_uint(const json& j, const char* key, const std::string& path, std::optional<std::uint64_t> def = {})
{
    const json* v = field(j, key);
    if (!v) {
        if (def)
            return *def;
        fail(path, std::string("missing '") + key + "'");
    }
    if (!v->is_number_unsigned())
        fail(path + "." + key, "expected a non-negative integer");
    return v->get<std::uint64_t>();
}

bool get_bool(const json& j, const char* key, const std::string& path, bool def)
{
    const json* v = field(j, key);
    if (!v)
        return def;
    if (!v->is_boolean())
        fail(path + "." + key, "expected true or false");
    return v->get<bool>();
}

SimTime get_time(const json& j, const char* key, const std::string& path, std::optional<double> def = {})
{
    const double s = get_number(j, key, path, def);
    if (s < 0)
        fail(path + "." + key, "must not be negative");
    return seconds(s);
}

Ip4Addr get_ip(const json& j, const char* key, const std::string& path, std::optional<Ip4Addr> def = {})
{
    const json* v = field(j, key);
    if (!v) {
        if (def)
            return *def;
        fail(path, std::string("missing '") + key + "'");
    }
    if (!v->is_string())
        fail(path + "." + key, "expected a dotted-quad string");
    try {
        return Ip4Addr::parse(v->get<std::string>());
    } catch (const ValidationError& e) {
        fail(path + "." + key, e.what());
    }
}

const json& get_array(const json& j, const char* key, const std::string& path)
{
    static const json kEmpty = json::array();
    const json* v = field(j, key);
    if (!v)
        return kEmpty;
    if (!v->is_array())
        fail(path + "." + key, "expected an array");
    return *v;
}

template <typename T, typename F>
T parse_enum(const std::string& text, const std::string& path, F&& parse)
{
    try {
        return parse(text);
    } catch (const ValidationError& e) {
        fail(path, e.what());
    }
}

EntityType parse_entity_type(const std::string& text)
{
    if (text == "host")
        return EntityType::Host;
    if (text == "external")
        return EntityType::External;
    if (text == "vm")
        return EntityType::Vm;
    if (text == "vr")
        return EntityType::Vr;
    throw ValidationError("unknown entity type '" + text + "' (expected host, external, vm or vr)");
}

ActionKind parse_action(const std::string& text)
{
    for (auto k : {ActionKind::StartFlow, ActionKind::StopFlow, ActionKind::KillVr, ActionKind::StartVr,
                   ActionKind::KillHost, ActionKind::MigrateVm, ActionKind::AddVm, ActionKind::RemoveVm})
        if (to_string(k) == text)
            return k;
    throw ValidationError("unknown action '" + text + "'");
}

AssertionType parse_assertion_type(const std::string& text)
{
    for (int i = 0; i <= static_cast<int>(AssertionType::Counter); ++i) {
        auto t = static_cast<AssertionType>(i);
        if (to_string(t) == text)
            return t;
    }
    throw ValidationError("unknown assertion type '" + text + "'");
}

Compare parse_compare(const std::string& text)
{
    if (text == "eq")
        return Compare::Eq;
    if (text == "le")
        return Compare::Le;
    if (text == "ge")
        return Compare::Ge;
    if (text == "lt")
        return Compare::Lt;
    throw ValidationError("unknown comparison '" + text + "' (expected eq, le, ge or lt)");
}

Aggregate parse_aggregate(const std::string& text)
{
    if (text == "sum")
        return Aggregate::Sum;
    if (text == "mean")
        return Aggregate::Mean;
    if (text == "each")
        return Aggregate::Each;
    throw ValidationError("unknown aggregate '" + text + "' (expected sum, mean or each)");
}

void parse_topology(const json& j, TopologySpec& spec)
{
    const std::string path = "topology";
    require_object(j, path, {"hosts", "externals", "tenants"});
    const json& hosts = get_array(j, "hosts", path);
    for (std::size_t i = 0; i < hosts.size(); ++i) {
        const std::string p = path + ".hosts[" + std::to_string(i) + "]";
        require_object(hosts[i], p, {"name", "link_bps", "latency_s"});
        HostSpec h;
        h.name = get_string(hosts[i], "name", p);
        h.link_bps = get_number(hosts[i], "link_bps", p, 1e9);
        h.latency = get_time(hosts[i], "latency_s", p, 50e-6);
        spec.hosts.push_back(h);
    }
    const json& exts = get_array(j, "externals", path);
    for (std::size_t i = 0; i < exts.size(); ++i) {
        const std::string p = path + ".externals[" + std::to_string(i) + "]";
        require_object(exts[i], p, {"name", "link_bps", "ip"});
        ExternalSpec e;
        e.name = get_string(exts[i], "name", p);
        e.link_bps = get_number(exts[i], "link_bps", p, 10e9);
        e.ip = get_ip(exts[i], "ip", p, Ip4Addr::any());
        spec.externals.push_back(e);
    }
    const json& tenants = get_array(j, "tenants", path);
    for (std::size_t i = 0; i < tenants.size(); ++i) {
        const std::string p = path + ".tenants[" + std::to_string(i) + "]";
        require_object(tenants[i], p, {"name", "gateway_ip", "vms", "vrs"});
        TenantSpec t;
        t.name = get_string(tenants[i], "name", p);
        t.gateway_ip = get_ip(tenants[i], "gateway_ip", p, Ip4Addr::parse("10.0.0.1"));
        const json& vms = get_array(tenants[i], "vms", p);
        for (std::size_t k = 0; k < vms.size(); ++k) {
            const std::string q = p + ".vms[" + std::to_string(k) + "]";
            require_object(vms[k], q, {"name", "ip", "host", "role", "nic_bps", "active"});
            VmSpec vm;
            vm.name = get_string(vms[k], "name", q);
            vm.private_ip = get_ip(vms[k], "ip", q);
            vm.host = get_string(vms[k], "host", q);
            vm.role = parse_enum<VmRole>(get_string(vms[k], "role", q, "generic"), q + ".role", parse_vm_role);
            vm.nic_bps = get_number(vms[k], "nic_bps", q, 0.0);
            vm.active = get_bool(vms[k], "active", q, true);
            t.vms.push_back(vm);
        }
        const json& vrs = get_array(tenants[i], "vrs", p);
        for (std::size_t k = 0; k < vrs.size(); ++k) {
            const std::string q = p + ".vrs[" + std::to_string(k) + "]";
            require_object(vrs[k], q, {"name", "host", "public_ips", "lb", "active"});
            VrSpec vr;
            vr.name = get_string(vrs[k], "name", q);
            vr.host = get_string(vrs[k], "host", q);
            vr.active = get_bool(vrs[k], "active", q, true);
            const json& ips = get_array(vrs[k], "public_ips", q);
            for (std::size_t n = 0; n < ips.size(); ++n) {
                if (!ips[n].is_string())
                    fail(q + ".public_ips[" + std::to_string(n) + "]", "expected a dotted-quad string");
                try {
                    vr.public_ips.push_back(Ip4Addr::parse(ips[n].get<std::string>()));
                } catch (const ValidationError& e) {
                    fail(q + ".public_ips[" + std::to_string(n) + "]", e.what());
                }
            }
            const json& lb = get_array(vrs[k], "lb", q);
            for (std::size_t n = 0; n < lb.size(); ++n) {
                const std::string r = q + ".lb[" + std::to_string(n) + "]";
                require_object(lb[n], r, {"public_ip", "port", "members"});
                LbRule rule;
                rule.public_ip = get_ip(lb[n], "public_ip", r, Ip4Addr::any());
                const std::uint64_t port = get_uint(lb[n], "port", r);
                if (port == 0 || port > 0xffff)
                    fail(r + ".port", "must be in 1..65535");
                rule.port = static_cast<std::uint16_t>(port);
                const json& members = get_array(lb[n], "members", r);
                for (const auto& m : members) {
                    if (!m.is_string())
                        fail(r + ".members", "expected VM names");
                    rule.members.push_back(m.get<std::string>());
                }
                vr.lb.push_back(rule);
            }
            t.vrs.push_back(vr);
        }
        spec.tenants.push_back(t);
    }
}

void parse_configs(const json& doc, WorldConfig& cfg)
{
    if (const json* a = field(doc, "agent")) {
        require_object(*a, "agent",
                       {"health_interval_s", "miss_threshold", "cache_ttl_s", "refresh_margin_s", "overload_threshold",
                        "ewma_window_s", "flux_ttl_s"});
        AgentConfig& c = cfg.agent;
        c.health_interval = get_time(*a, "health_interval_s", "agent", to_seconds(c.health_interval));
        c.miss_threshold = static_cast<int>(get_uint(*a, "miss_threshold", "agent", c.miss_threshold));
        c.cache_ttl = get_time(*a, "cache_ttl_s", "agent", to_seconds(c.cache_ttl));
        c.refresh_margin = get_time(*a, "refresh_margin_s", "agent", to_seconds(c.refresh_margin));
        c.overload_threshold = get_number(*a, "overload_threshold", "agent", c.overload_threshold);
        c.ewma_window = get_time(*a, "ewma_window_s", "agent", to_seconds(c.ewma_window));
        c.flux_ttl = get_time(*a, "flux_ttl_s", "agent", to_seconds(c.flux_ttl));
        if (c.health_interval <= 0 || c.miss_threshold < 1 || c.ewma_window <= 0)
            fail("agent", "health interval, miss threshold and EWMA window must be positive");
    }
    for (const char* key : {"vm_arp", "vr_arp"}) {
        if (const json* r = field(doc, key)) {
            require_object(*r, key, {"ttl_s", "retry_s"});
            ResolverConfig& c = std::string_view(key) == "vm_arp" ? cfg.vm_arp : cfg.vr_arp;
            c.ttl = get_time(*r, "ttl_s", key, to_seconds(c.ttl));
            c.retry = get_time(*r, "retry_s", key, to_seconds(c.retry));
            if (c.ttl <= 0 || c.retry <= 0)
                fail(key, "ttl and retry must be positive");
        }
    }
    if (const json* v = field(doc, "vrrp")) {
        require_object(*v, "vrrp", {"advert_interval_s", "policy", "advert_bytes"});
        VrrpConfig& c = cfg.vrrp;
        c.advert_interval = get_time(*v, "advert_interval_s", "vrrp", to_seconds(c.advert_interval));
        c.policy = parse_enum<GatewayPolicy>(get_string(*v, "policy", "vrrp", std::string(to_string(c.policy))),
                                             "vrrp.policy", parse_gateway_policy);
        c.advert_bytes = static_cast<std::uint32_t>(get_uint(*v, "advert_bytes", "vrrp", c.advert_bytes));
        if (c.advert_interval <= 0)
            fail("vrrp", "advert interval must be positive");
    }
}

TimelineAction parse_action_entry(const json& j, const std::string& path)
{
    if (!j.is_object())
        fail(path, "expected an object");
    TimelineAction a;
    a.kind = parse_enum<ActionKind>(get_string(j, "action", path), path + ".action", parse_action);
    switch (a.kind) {
    case ActionKind::StartFlow:
        require_object(j, path, {"at_s", "action", "id", "src", "dst", "demand_bps", "port"});
        a.flow.id = get_string(j, "id", path);
        a.flow.src = get_string(j, "src", path);
        a.flow.dst = get_string(j, "dst", path);
        if (field(j, "demand_bps")) {
            a.flow.demand_bps = get_number(j, "demand_bps", path);
            if (!(a.flow.demand_bps > 0))
                fail(path + ".demand_bps", "must be positive");
        }
        {
            const std::uint64_t port = get_uint(j, "port", path, 80);
            if (port == 0 || port > 0xffff)
                fail(path + ".port", "must be in 1..65535");
            a.flow.dst_port = static_cast<std::uint16_t>(port);
        }
        break;
    case ActionKind::StopFlow:
        require_object(j, path, {"at_s", "action", "id"});
        a.flow.id = get_string(j, "id", path);
        break;
    case ActionKind::KillVr:
    case ActionKind::StartVr:
        require_object(j, path, {"at_s", "action", "vr"});
        a.target = get_string(j, "vr", path);
        break;
    case ActionKind::KillHost:
        require_object(j, path, {"at_s", "action", "host"});
        a.target = get_string(j, "host", path);
        break;
    case ActionKind::MigrateVm:
        require_object(j, path, {"at_s", "action", "vm", "host"});
        a.target = get_string(j, "vm", path);
        a.host = get_string(j, "host", path);
        break;
    case ActionKind::AddVm:
        require_object(j, path, {"at_s", "action", "tenant", "vm", "ip", "host", "role", "nic_bps"});
        a.tenant = get_string(j, "tenant", path);
        a.target = get_string(j, "vm", path);
        a.vm.name = a.target;
        a.vm.private_ip = get_ip(j, "ip", path, Ip4Addr::any());
        a.vm.host = get_string(j, "host", path, "");
        a.vm.role = parse_enum<VmRole>(get_string(j, "role", path, "generic"), path + ".role", parse_vm_role);
        a.vm.nic_bps = get_number(j, "nic_bps", path, 0.0);
        break;
    case ActionKind::RemoveVm:
        require_object(j, path, {"at_s", "action", "vm"});
        a.target = get_string(j, "vm", path);
        break;
    }
    a.at = get_time(j, "at_s", path);
    return a;
}

AssertionSpec parse_assertion(const json& j, const std::string& path)
{
    require_object(j, path,
                   {"name", "type", "entities", "dir", "aggregate", "flows", "flow", "stat", "vm", "vr", "host", "key",
                    "from_s", "to_s", "at_s", "expected", "bound_s", "tolerance", "compare"});
    AssertionSpec a;
    a.name = get_string(j, "name", path);
    a.type = parse_enum<AssertionType>(get_string(j, "type", path), path + ".type", parse_assertion_type);
    a.tolerance = get_number(j, "tolerance", path, 0.0);
    if (a.tolerance < 0)
        fail(path + ".tolerance", "must not be negative");

    auto window = [&] {
        a.from = get_time(j, "from_s", path);
        a.to = get_time(j, "to_s", path);
        if (a.to <= a.from)
            fail(path, "to_s must be after from_s");
    };
    auto bound = [&] {
        a.from = get_time(j, "at_s", path);
        a.expected = get_number(j, "bound_s", path);
        a.compare = Compare::Le;
    };
    auto cmp = [&](const char* def) {
        a.compare = parse_enum<Compare>(get_string(j, "compare", path, def), path + ".compare", parse_compare);
    };

    switch (a.type) {
    case AssertionType::MeanRate: {
        const json& ents = get_array(j, "entities", path);
        if (ents.empty())
            fail(path + ".entities", "at least one entity required");
        for (std::size_t i = 0; i < ents.size(); ++i) {
            const std::string p = path + ".entities[" + std::to_string(i) + "]";
            require_object(ents[i], p, {"type", "id"});
            a.entities.push_back(EntitySel{
                parse_enum<EntityType>(get_string(ents[i], "type", p), p + ".type", parse_entity_type),
                get_string(ents[i], "id", p)});
        }
        const std::string dir = get_string(j, "dir", path, "tx");
        if (dir != "tx" && dir != "rx")
            fail(path + ".dir", "expected tx or rx");
        a.tx = dir == "tx";
        a.aggregate = parse_enum<Aggregate>(get_string(j, "aggregate", path, "sum"), path + ".aggregate",
                                            parse_aggregate);
        window();
        a.expected = get_number(j, "expected", path);
        cmp("eq");
        break;
    }
    case AssertionType::FlowRate: {
        const json& flows = get_array(j, "flows", path);
        if (flows.empty())
            fail(path + ".flows", "at least one flow required");
        for (const auto& f : flows) {
            if (!f.is_string())
                fail(path + ".flows", "expected flow ids");
            a.flows.push_back(f.get<std::string>());
        }
        const std::string stat = get_string(j, "stat", path, "min");
        if (stat != "min" && stat != "max")
            fail(path + ".stat", "expected min or max");
        a.use_max = stat == "max";
        window();
        a.expected = get_number(j, "expected", path);
        cmp(a.use_max ? "le" : "ge");
        break;
    }
    case AssertionType::Failover:
        a.flows.push_back(get_string(j, "flow", path));
        bound();
        break;
    case AssertionType::GatewayReplies:
        a.vm = get_string(j, "vm", path);
        a.from = get_time(j, "from_s", path, 0.0);
        a.expected = get_number(j, "expected", path, 1.0);
        cmp("eq");
        break;
    case AssertionType::FluxFiltered:
        a.vm = get_string(j, "vm", path);
        a.host = get_string(j, "host", path);
        a.from = get_time(j, "from_s", path, 0.0);
        a.expected = get_number(j, "expected", path);
        cmp("eq");
        break;
    case AssertionType::Rebind:
        a.vm = get_string(j, "vm", path);
        a.vr = get_string(j, "vr", path);
        bound();
        break;
    case AssertionType::HopsDecrease:
        a.flows.push_back(get_string(j, "flow", path));
        a.from = get_time(j, "at_s", path);
        a.compare = Compare::Lt;
        break;
    case AssertionType::GatewayIpStable:
        a.vm = get_string(j, "vm", path);
        break;
    case AssertionType::VrrpConvergence:
        a.vr = get_string(j, "vr", path);
        bound();
        break;
    case AssertionType::AssignmentImmutable:
        break;
    case AssertionType::Counter:
        a.key = get_string(j, "key", path);
        a.expected = get_number(j, "expected", path);
        cmp("eq");
        break;
    }
    return a;
}

}  // namespace

ScenarioDoc parse_scenario(const std::string& text)
{
    json j;
    try {
        j = json::parse(text);
    } catch (const json::parse_error& e) {
        throw ValidationError(std::string("scenario is not valid JSON: ") + e.what());
    }
    require_object(j, "scenario",
                   {"name", "description", "seed", "mode", "duration_s", "sampling_interval_s", "agent", "vm_arp",
                    "vr_arp", "vrrp", "topology", "timeline", "assertions"});
    ScenarioDoc doc;
    doc.name = get_string(j, "name", "scenario");
    doc.description = get_string(j, "description", "scenario", "");
    if (field(j, "seed"))
        doc.seed = get_uint(j, "seed", "scenario");
    doc.mode = parse_enum<NetMode>(get_string(j, "mode", "scenario", "eywa"), "scenario.mode", parse_net_mode);
    doc.duration = get_time(j, "duration_s", "scenario", 30.0);
    doc.config.sampling_interval = get_time(j, "sampling_interval_s", "scenario", 0.1);
    if (doc.config.sampling_interval <= 0)
        fail("scenario.sampling_interval_s", "must be positive");
    parse_configs(j, doc.config);
    const json* topo = field(j, "topology");
    if (!topo)
        fail("scenario", "missing 'topology'");
    parse_topology(*topo, doc.topology);
    const json& timeline = get_array(j, "timeline", "scenario");
    for (std::size_t i = 0; i < timeline.size(); ++i)
        doc.timeline.push_back(parse_action_entry(timeline[i], "timeline[" + std::to_string(i) + "]"));
    const json& asserts = get_array(j, "assertions", "scenario");
    for (std::size_t i = 0; i < asserts.size(); ++i)
        doc.assertions.push_back(parse_assertion(asserts[i], "assertions[" + std::to_string(i) + "]"));
    return doc;
}

ScenarioDoc load_scenario_file(const std::filesystem::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw ValidationError("cannot open scenario file '" + path.string() + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_scenario(ss.str());
}

// ------------------------------------------------------------- validation

void validate_scenario(const ScenarioDoc& doc)
{
    if (doc.name.empty())
        throw ValidationError("scenario: empty name");
    if (doc.config.sampling_interval <= 0)
        throw ValidationError("scenario: sampling interval must be positive");
    if (doc.duration < 0)
        throw ValidationError("scenario: negative duration");
    TopologySpec spec = doc.topology;
    spec.mode = doc.mode;
    validate(spec);

    std::set<std::string> hosts, externals, vrs, vms;
    std::map<std::string, std::string> vm_tenant;
    std::set<std::string> tenants;
    for (const auto& h : spec.hosts)
        hosts.insert(h.name);
    for (const auto& e : spec.externals)
        externals.insert(e.name);
    for (const auto& t : spec.tenants) {
        tenants.insert(t.name);
        for (const auto& vm : t.vms) {
            vms.insert(vm.name);
            vm_tenant[vm.name] = t.name;
        }
        for (const auto& vr : t.vrs)
            vrs.insert(vr.name);
    }

    std::set<std::string> flows;
    SimTime last = 0;
    for (std::size_t i = 0; i < doc.timeline.size(); ++i) {
        const TimelineAction& a = doc.timeline[i];
        const std::string p = "timeline[" + std::to_string(i) + "] (" + std::string(to_string(a.kind)) + ")";
        if (a.at < last)
            throw ValidationError(p + ": actions must be sorted by time");
        last = a.at;
        auto need = [&](const std::set<std::string>& set, const std::string& name, const char* what) {
            if (!set.count(name))
                throw ValidationError(p + ": unknown " + what + " '" + name + "'");
        };
        switch (a.kind) {
        case ActionKind::StartFlow:
            if (a.flow.id.empty() || !flows.insert(a.flow.id).second)
                throw ValidationError(p + ": flow id '" + a.flow.id + "' is empty or reused");
            if (!vms.count(a.flow.src) && !externals.count(a.flow.src))
                throw ValidationError(p + ": unknown flow source '" + a.flow.src + "'");
            if (!vms.count(a.flow.dst) && !externals.count(a.flow.dst)) {
                Ip4Addr ip;
                try {
                    ip = Ip4Addr::parse(a.flow.dst);
                } catch (const ValidationError&) {
                    throw ValidationError(p + ": flow destination '" + a.flow.dst +
                                          "' is neither an entity nor a public IP");
                }
                bool known = false;
                for (const auto& t : spec.tenants)
                    for (const auto& vr : t.vrs)
                        known = known || std::find(vr.public_ips.begin(), vr.public_ips.end(), ip) !=
                                             vr.public_ips.end();
                if (!known)
                    throw ValidationError(p + ": no VR owns public IP " + a.flow.dst);
            }
            if (externals.count(a.flow.src) && !vms.count(a.flow.dst) && externals.count(a.flow.dst))
                throw ValidationError(p + ": external-to-external flows are not modelled");
            break;
        case ActionKind::StopFlow:
            need(flows, a.flow.id, "flow");
            break;
        case ActionKind::KillVr:
        case ActionKind::StartVr:
            need(vrs, a.target, "VR");
            break;
        case ActionKind::KillHost:
            need(hosts, a.target, "host");
            break;
        case ActionKind::MigrateVm:
            need(vms, a.target, "VM");
            need(hosts, a.host, "host");
            break;
        case ActionKind::AddVm:
            need(tenants, a.tenant, "tenant");
            if (vms.count(a.target)) {
                if (vm_tenant[a.target] != a.tenant)
                    throw ValidationError(p + ": VM '" + a.target + "' belongs to another tenant");
            } else {
                need(hosts, a.vm.host, "host");
                if (a.vm.private_ip.is_any())
                    throw ValidationError(p + ": new VM '" + a.target + "' needs an ip");
                if (vrs.count(a.target) || externals.count(a.target))
                    throw ValidationError(p + ": name '" + a.target + "' already taken");
                vms.insert(a.target);
                vm_tenant[a.target] = a.tenant;
            }
            break;
        case ActionKind::RemoveVm:
            need(vms, a.target, "VM");
            break;
        }
    }

    std::set<std::string> names;
    for (std::size_t i = 0; i < doc.assertions.size(); ++i) {
        const AssertionSpec& a = doc.assertions[i];
        const std::string p = "assertions[" + std::to_string(i) + "]";
        if (a.name.empty() || !names.insert(a.name).second)
            throw ValidationError(p + ": assertion name '" + a.name + "' is empty or reused");
        for (const auto& e : a.entities) {
            const std::set<std::string>* set = nullptr;
            switch (e.type) {
            case EntityType::Host: set = &hosts; break;
            case EntityType::External: set = &externals; break;
            case EntityType::Vm: set = &vms; break;
            case EntityType::Vr: set = &vrs; break;
            }
            if (!set->count(e.id))
                throw ValidationError(p + ": unknown " + std::string(to_string(e.type)) + " '" + e.id + "'");
        }
        for (const auto& f : a.flows)
            if (!flows.count(f))
                throw ValidationError(p + ": unknown flow '" + f + "'");
        if (!a.vm.empty() && !vms.count(a.vm))
            throw ValidationError(p + ": unknown VM '" + a.vm + "'");
        if (!a.vr.empty() && !vrs.count(a.vr))
            throw ValidationError(p + ": unknown VR '" + a.vr + "'");
        if (!a.host.empty() && !hosts.count(a.host))
            throw ValidationError(p + ": unknown host '" + a.host + "'");
        if (a.to > doc.duration)
            throw ValidationError(p + ": window ends after the scenario duration");
    }
}

// --------------------------------------------------------------- running

bool RunResult::passed() const
{
    return std::all_of(assertions.begin(), assertions.end(), [](const AssertionResult& a) { return a.pass; });
}

std::uint64_t resolve_seed(const ScenarioDoc& doc, const RunOptions& options)
{
    if (options.seed)
        return *options.seed;
    if (doc.seed)
        return *doc.seed;
    if (const char* env = std::getenv("EYWA_SIM_SEED"); env && *env) {
        char* end = nullptr;
        errno = 0;
        const unsigned long long v = std::strtoull(env, &end, 10);
        if (errno != 0 || *end != '\0' || *env == '-')
            throw ValidationError(std::string("EYWA_SIM_SEED is not an unsigned integer: '") + env + "'");
        return v;
    }
    return 1;
}

namespace {

bool compare(double measured, double expected, double tol, Compare c)
{
    const double eps = 1e-9 * std::max(1.0, std::fabs(expected));
    switch (c) {
    case Compare::Eq: return std::fabs(measured - expected) <= tol * std::fabs(expected) + eps;
    case Compare::Le: return measured <= expected * (1.0 + tol) + eps;
    case Compare::Ge: return measured >= expected * (1.0 - tol) - eps;
    case Compare::Lt: return measured < expected;
    }
    return false;
}

AssertionResult judge(const AssertionSpec& a, std::optional<double> measured, std::string name = {})
{
    AssertionResult r;
    r.name = name.empty() ? a.name : std::move(name);
    r.expected = a.expected;
    r.measured = measured;
    r.tolerance = a.tolerance;
    r.pass = measured && compare(*measured, a.expected, a.tolerance, a.compare);
    return r;
}

// Time-weighted mean of a piecewise-constant rate over each sampling interval
// of [from, to). A trailing partial interval counts on its own.
std::vector<double> interval_means(const std::vector<RatePoint>& hist, SimTime from, SimTime to, SimTime iv)
{
    std::vector<double> out;
    if (to <= from || iv <= 0)
        return out;
    std::size_t i = 0;
    double rate = 0.0;
    while (i < hist.size() && hist[i].time <= from)
        rate = hist[i++].rate_bps;
    for (SimTime t0 = from; t0 < to; t0 += iv) {
        const SimTime t1 = std::min(to, t0 + iv);
        double area = 0.0;
        SimTime t = t0;
        while (i < hist.size() && hist[i].time < t1) {
            area += rate * static_cast<double>(hist[i].time - t);
            t = hist[i].time;
            rate = hist[i++].rate_bps;
        }
        area += rate * static_cast<double>(t1 - t);
        out.push_back(area / static_cast<double>(t1 - t0));
    }
    return out;
}

void evaluate(const World& w, const AssertionSpec& a, std::vector<AssertionResult>& out)
{
    const Topology& topo = w.topology();
    switch (a.type) {
    case AssertionType::MeanRate: {
        std::vector<std::pair<std::string, std::optional<double>>> values;
        for (const auto& e : a.entities) {
            auto idx = w.find_entity(e.type, e.id);
            values.emplace_back(e.id, idx ? std::optional<double>(w.mean_rate(*idx, a.tx, a.from, a.to))
                                          : std::nullopt);
        }
        if (a.aggregate == Aggregate::Each) {
            for (const auto& [id, v] : values)
                out.push_back(judge(a, v, a.name + "[" + id + "]"));
            return;
        }
        std::optional<double> total = 0.0;
        for (const auto& [id, v] : values)
            total = v && total ? std::optional<double>(*total + *v) : std::nullopt;
        if (total && a.aggregate == Aggregate::Mean)
            *total /= static_cast<double>(values.size());
        out.push_back(judge(a, total));
        return;
    }
    case AssertionType::FlowRate: {
        std::optional<double> stat;
        for (const auto& f : a.flows) {
            const auto means = interval_means(w.flow_rates(f), a.from, a.to, w.config().sampling_interval);
            if (means.empty())
                continue;
            const double v = a.use_max ? *std::max_element(means.begin(), means.end())
                                       : *std::min_element(means.begin(), means.end());
            stat = !stat ? v : (a.use_max ? std::max(*stat, v) : std::min(*stat, v));
        }
        out.push_back(judge(a, stat));
        return;
    }
    case AssertionType::Failover: {
        const auto& hist = w.flow_rates(a.flows.front());
        bool down = false;
        std::optional<double> delay;
        for (const auto& p : hist) {
            if (p.time < a.from)
                continue;
            if (p.rate_bps <= 0.0) {
                down = true;
            } else if (down) {
                delay = to_seconds(p.time - a.from);
                break;
            }
        }
        if (!down)
            delay = 0.0;
        out.push_back(judge(a, delay));
        return;
    }
    case AssertionType::GatewayReplies: {
        const std::size_t v = w.vm_index(a.vm);
        std::optional<double> worst;
        for (const auto& [key, stat] : w.gateway_replies()) {
            if (key.first != v || stat.first < a.from)
                continue;
            worst = std::max(worst.value_or(0.0), static_cast<double>(stat.count));
        }
        out.push_back(judge(a, worst));
        return;
    }
    case AssertionType::FluxFiltered: {
        const HostId h{static_cast<std::uint32_t>(w.host_index(a.host))};
        const MacAddr mac = topo.vms[w.vm_index(a.vm)].mac;
        std::optional<double> worst;
        for (const auto& t : w.flux_tallies()) {
            if (t.host != h || t.requester != mac || t.first_seen < a.from)
                continue;
            worst = std::max(worst.value_or(0.0), static_cast<double>(t.filtered));
        }
        out.push_back(judge(a, worst));
        return;
    }
    case AssertionType::Rebind: {
        const std::size_t v = w.vm_index(a.vm);
        const MacAddr target = topo.vrs[w.vr_index(a.vr)].mac;
        std::optional<double> delay;
        for (const auto& l : w.gateway_learns(v)) {
            if (l.time >= a.from && l.mac == target) {
                delay = to_seconds(l.time - a.from);
                break;
            }
        }
        // The binding must also hold at the end of the run.
        if (delay && w.vm_stack(v).arp().usable(w.vm_stack(v).gateway_ip()) != target)
            delay.reset();
        out.push_back(judge(a, delay));
        return;
    }
    case AssertionType::HopsDecrease: {
        const auto& hist = w.flow_routes(a.flows.front());
        std::optional<int> before, after;
        for (const auto& p : hist) {
            if (p.hops <= 0)
                continue;
            if (p.time < a.from)
                before = p.hops;
            else
                after = p.hops;
        }
        AssertionResult r;
        r.name = a.name;
        r.tolerance = 0.0;
        if (before)
            r.expected = *before;
        if (after)
            r.measured = *after;
        r.pass = before && after && *after < *before;
        out.push_back(r);
        return;
    }
    case AssertionType::GatewayIpStable: {
        const std::size_t v = w.vm_index(a.vm);
        const Ip4Addr configured = topo.vms[v].gateway_ip;
        double changes = w.vm_stack(v).gateway_ip() != configured ? 1.0 : 0.0;
        for (const auto& l : w.gateway_learns(v))
            changes += l.ip != configured ? 1.0 : 0.0;
        AssertionSpec zero = a;
        zero.expected = 0.0;
        zero.compare = Compare::Eq;
        out.push_back(judge(zero, changes));
        return;
    }
    case AssertionType::VrrpConvergence: {
        const std::size_t r = w.vr_index(a.vr);
        std::optional<double> worst;
        bool any = false;
        for (std::size_t g = 0; g < w.vrrp_groups().size(); ++g) {
            const auto& hist = w.master_history(g);
            std::optional<std::size_t> master_before;
            for (const auto& p : hist)
                if (p.time < a.from)
                    master_before = p.master_vr;
            if (master_before != r)
                continue;
            any = true;
            std::optional<double> delay;
            for (const auto& p : hist) {
                if (p.time >= a.from && p.masters == 1 && p.master_vr && *p.master_vr != r) {
                    delay = to_seconds(p.time - a.from);
                    break;
                }
            }
            if (!delay) {
                worst.reset();
                break;
            }
            worst = std::max(worst.value_or(0.0), *delay);
        }
        out.push_back(judge(a, any ? worst : std::nullopt));
        return;
    }
    case AssertionType::AssignmentImmutable: {
        double changed = 0.0;
        for (const auto& [v, ip] : w.initial_assignment())
            changed += (w.vm_stack(v).gateway_ip() != ip || topo.vms[v].gateway_ip != ip) ? 1.0 : 0.0;
        AssertionSpec zero = a;
        zero.expected = 0.0;
        zero.compare = Compare::Eq;
        out.push_back(judge(zero, changed));
        return;
    }
    case AssertionType::Counter: {
        const auto counters = w.counters();
        auto it = counters.find(a.key);
        out.push_back(judge(a, it == counters.end() ? 0.0 : static_cast<double>(it->second)));
        return;
    }
    }
}

void containment_checks(const World& w, std::vector<AssertionResult>& out)
{
    const auto c = w.counters();
    auto check = [&](const char* name, const char* key, double expected, Compare cmp) {
        AssertionSpec a;
        a.name = name;
        a.expected = expected;
        a.compare = cmp;
        auto it = c.find(key);
        out.push_back(judge(a, it == c.end() ? 0.0 : static_cast<double>(it->second)));
    };
    check("containment.tunneled_garp", "arp.tunneled_garp", 0, Compare::Eq);
    check("containment.broadcast_rule_ids", "arp.bad_broadcast_rule", 0, Compare::Eq);
    check("containment.runtime_na_decisions", "arp.na_decisions", 0, Compare::Eq);
    check("containment.max_gateway_replies_per_request", "arp.max_gateway_replies_per_request", 1, Compare::Le);
    check("containment.locality_violations", "arp.locality_violations", 0, Compare::Eq);
}

std::string fmt(const char* pattern, auto... args)
{
    char buf[256];
    const int n = std::snprintf(buf, sizeof buf, pattern, args...);
    return std::string(buf, static_cast<std::size_t>(std::max(0, std::min<int>(n, sizeof buf - 1))));
}

std::string throughput_csv(const World& w)
{
    std::string out(kThroughputHeader);
    out += '\n';
    const auto& samples = w.samples();
    const auto& ents = w.entities();
    for (std::size_t k = 1; k < samples.size(); ++k) {
        const Sample& prev = samples[k - 1];
        const Sample& cur = samples[k];
        const double dt = to_seconds(cur.time - prev.time);
        if (dt <= 0)
            continue;
        for (std::size_t i = 0; i < cur.bytes.size() && i < ents.size(); ++i) {
            const double ptx = i < prev.bytes.size() ? prev.bytes[i][0] : 0.0;
            const double prx = i < prev.bytes.size() ? prev.bytes[i][1] : 0.0;
            const double tx = (cur.bytes[i][0] - ptx) * 8.0 / dt;
            const double rx = (cur.bytes[i][1] - prx) * 8.0 / dt;
            out += fmt("%.3f,", to_seconds(cur.time));
            out += to_string(ents[i].type);
            out += ',';
            out += w.entity_name(ents[i]);
            out += fmt(",%.1f,%.1f\n", tx, rx);
        }
    }
    return out;
}

std::string arp_events_csv(const World& w)
{
    std::string out(kArpEventsHeader);
    out += '\n';
    for (const auto& e : w.arp_events()) {
        out += fmt("%.9f,", to_seconds(e.time));
        out += e.host + ',' + std::string(to_string(e.direction)) + ',' + e.kind + ',' + e.rule_id + ',' +
               e.action + ',' + e.sender_ip.str() + ',' + e.target_ip.str() + '\n';
    }
    return out;
}

std::string report_json(const RunResult& r)
{
    nlohmann::ordered_json j;
    j["scenario"] = r.scenario;
    j["seed"] = r.seed;
    j["assertions"] = nlohmann::ordered_json::array();
    for (const auto& a : r.assertions) {
        nlohmann::ordered_json x;
        x["name"] = a.name;
        x["expected"] = a.expected ? nlohmann::ordered_json(*a.expected) : nlohmann::ordered_json(nullptr);
        x["measured"] = a.measured ? nlohmann::ordered_json(*a.measured) : nlohmann::ordered_json(nullptr);
        x["tolerance"] = a.tolerance;
        x["pass"] = a.pass;
        j["assertions"].push_back(std::move(x));
    }
    nlohmann::ordered_json counters = nlohmann::ordered_json::object();
    for (const auto& [k, v] : r.counters)
        counters[k] = v;
    j["counters"] = std::move(counters);
    return j.dump(2) + "\n";
}

void apply(World& w, const TimelineAction& a)
{
    switch (a.kind) {
    case ActionKind::StartFlow: w.start_flow(a.flow); break;
    case ActionKind::StopFlow: w.stop_flow(a.flow.id); break;
    case ActionKind::KillVr: w.kill_vr(a.target); break;
    case ActionKind::StartVr: w.start_vr(a.target); break;
    case ActionKind::KillHost: w.kill_host(a.target); break;
    case ActionKind::MigrateVm: w.migrate_vm(a.target, a.host); break;
    case ActionKind::AddVm: w.add_vm(a.tenant, a.vm); break;
    case ActionKind::RemoveVm: w.remove_vm(a.target); break;
    }
}

}  // namespace

RunResult run_scenario(ScenarioDoc doc, const RunOptions& options)
{
    if (options.mode)
        doc.mode = *options.mode;
    validate_scenario(doc);

    RunResult result;
    result.scenario = doc.name;
    result.seed = resolve_seed(doc, options);
    result.mode = doc.mode;

    TopologySpec spec = doc.topology;
    spec.mode = doc.mode;
    std::map<std::string, std::string> aliases;
    if (doc.mode == NetMode::SingleVr) {
        SingleVrTransform t = single_vr_mode(spec);
        spec = std::move(t.spec);
        aliases = std::move(t.vr_aliases);
    }
    WorldConfig cfg = doc.config;
    cfg.seed = result.seed;
    World world(spec, cfg, aliases);

    std::vector<std::string> timeline_errors;
    for (const auto& action : doc.timeline) {
        world.at(action.at, [&world, &timeline_errors, action] {
            try {
                apply(world, action);
            } catch (const Error& e) {
                timeline_errors.push_back(fmt("t=%.6f ", to_seconds(world.sim().now())) +
                                          std::string(to_string(action.kind)) + ": " + e.what());
            }
        });
    }
    world.run(doc.duration);

    for (const auto& a : doc.assertions)
        evaluate(world, a, result.assertions);
    if (doc.mode == NetMode::Eywa)
        containment_checks(world, result.assertions);

    result.counters = world.counters();
    result.counters["timeline.errors"] = timeline_errors.size();
    result.anomalies = world.anomalies();
    result.anomalies.insert(result.anomalies.end(), timeline_errors.begin(), timeline_errors.end());
    result.throughput_csv = throughput_csv(world);
    result.arp_events_csv = arp_events_csv(world);
    result.report_json = report_json(result);
    return result;
}

void write_outputs(const RunResult& result, const std::filesystem::path& dir)
{
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec)
        throw IoError("cannot create output directory '" + dir.string() + "': " + ec.message());
    auto write = [&](const char* name, const std::string& body) {
        std::ofstream out(dir / name, std::ios::binary | std::ios::trunc);
        out << body;
        if (!out)
            throw IoError("cannot write '" + (dir / name).string() + "'");
    };
    write("throughput.csv", result.throughput_csv);
    write("arp_events.csv", result.arp_events_csv);
    write("report.json", result.report_json);
}

}  // namespace eywa
