#include "harness.hpp"

#include <algorithm>

namespace eywa {

namespace {

constexpr double kGbps = 1e9;
constexpr double kTol = 0.005;

struct Family {
    const char* name;
    const char* description;
    ScenarioDoc (*build)(NetMode);
};

std::string host_name(int i)
{
    return "host" + std::to_string(i);
}

std::string ext_name(int i)
{
    return "ext" + std::to_string(i);
}

Ip4Addr ip(const std::string& text)
{
    return Ip4Addr::parse(text);
}

Ip4Addr private_ip(int net, int i)
{
    return ip("10.0." + std::to_string(net) + "." + std::to_string(i + 1));
}

Ip4Addr public_ip(int base, int i)
{
    return ip("203.0.113." + std::to_string(base + i + 1));
}

std::string mode_suffix(NetMode m)
{
    switch (m) {
    case NetMode::Eywa: return "";
    case NetMode::Mvrrp: return "_mvrrp";
    case NetMode::SingleVr: return "_single_vr";
    }
    return "";
}

void add_hosts(ScenarioDoc& doc, int n, double link_bps = kGbps)
{
    for (int i = 0; i < n; ++i)
        doc.topology.hosts.push_back(HostSpec{host_name(i), link_bps, 50 * kMicrosecond});
}

void add_externals(ScenarioDoc& doc, int n = 2)
{
    for (int i = 0; i < n; ++i)
        doc.topology.externals.push_back(ExternalSpec{ext_name(i), 10 * kGbps, Ip4Addr::any()});
}

VmSpec vm(const std::string& name, Ip4Addr addr, int host, bool active = true, double nic = 0.0,
          VmRole role = VmRole::Generic)
{
    VmSpec v;
    v.name = name;
    v.private_ip = addr;
    v.host = host_name(host);
    v.role = role;
    v.nic_bps = nic;
    v.active = active;
    return v;
}

VrSpec vr(const std::string& name, int host, Ip4Addr pub, std::vector<std::string> lb_members = {},
          bool active = true)
{
    VrSpec r;
    r.name = name;
    r.host = host_name(host);
    r.public_ips = {pub};
    r.active = active;
    if (!lb_members.empty())
        r.lb.push_back(LbRule{pub, 80, std::move(lb_members)});
    return r;
}

TimelineAction flow_start(double at, const std::string& id, const std::string& src, const std::string& dst,
                          double demand = kUnbounded)
{
    TimelineAction a;
    a.at = seconds(at);
    a.kind = ActionKind::StartFlow;
    a.flow = FlowSpec{id, src, dst, demand, 80};
    return a;
}

TimelineAction simple(double at, ActionKind kind, const std::string& target, const std::string& host = {})
{
    TimelineAction a;
    a.at = seconds(at);
    a.kind = kind;
    a.target = target;
    a.flow.id = target;
    a.host = host;
    return a;
}

TimelineAction activate_vm(double at, const std::string& tenant, const std::string& name)
{
    TimelineAction a = simple(at, ActionKind::AddVm, name);
    a.tenant = tenant;
    a.vm.name = name;
    return a;
}

AssertionSpec mean_rate(const std::string& name, std::vector<EntitySel> entities, bool tx, double from, double to,
                        double expected, Aggregate agg = Aggregate::Sum)
{
    AssertionSpec a;
    a.name = name;
    a.type = AssertionType::MeanRate;
    a.entities = std::move(entities);
    a.tx = tx;
    a.aggregate = agg;
    a.from = seconds(from);
    a.to = seconds(to);
    a.expected = expected;
    a.tolerance = kTol;
    a.compare = Compare::Eq;
    return a;
}

AssertionSpec flow_rate(const std::string& name, std::vector<std::string> flows, double from, double to,
                        double expected, bool use_max = false)
{
    AssertionSpec a;
    a.name = name;
    a.type = AssertionType::FlowRate;
    a.flows = std::move(flows);
    a.use_max = use_max;
    a.from = seconds(from);
    a.to = seconds(to);
    a.expected = expected;
    a.tolerance = use_max ? 0.0 : kTol;
    a.compare = use_max ? Compare::Le : Compare::Ge;
    return a;
}

AssertionSpec bounded(const std::string& name, AssertionType type, double at, double bound)
{
    AssertionSpec a;
    a.name = name;
    a.type = type;
    a.from = seconds(at);
    a.expected = bound;
    a.compare = Compare::Le;
    return a;
}

AssertionSpec rule_seen(const std::string& rule, const std::string& action, double at_least = 1)
{
    AssertionSpec a;
    a.name = "rule_" + rule + "_" + action;
    a.type = AssertionType::Counter;
    a.key = "rule:" + rule + ":" + action;
    a.expected = at_least;
    a.compare = Compare::Ge;
    return a;
}

AssertionSpec simple_assert(const std::string& name, AssertionType type, const std::string& vm = {})
{
    AssertionSpec a;
    a.name = name;
    a.type = type;
    a.vm = vm;
    return a;
}

std::vector<EntitySel> externals(int n = 2)
{
    std::vector<EntitySel> out;
    for (int i = 0; i < n; ++i)
        out.push_back(EntitySel{EntityType::External, ext_name(i)});
    return out;
}

std::vector<EntitySel> hosts(std::initializer_list<int> ids)
{
    std::vector<EntitySel> out;
    for (int i : ids)
        out.push_back(EntitySel{EntityType::Host, host_name(i)});
    return out;
}

std::vector<EntitySel> host_range(int first, int last)
{
    std::vector<EntitySel> out;
    for (int i = first; i <= last; ++i)
        out.push_back(EntitySel{EntityType::Host, host_name(i)});
    return out;
}

ScenarioDoc base(NetMode mode, const char* name, const char* description, double duration, double sampling)
{
    ScenarioDoc doc;
    doc.name = std::string(name) + mode_suffix(mode);
    doc.description = description;
    doc.mode = mode;
    doc.duration = seconds(duration);
    doc.config.sampling_interval = seconds(sampling);
    return doc;
}

// One tenant with a VR and a VM on each of `n` hosts.
TenantSpec pairs_per_host(int n, bool active = true)
{
    TenantSpec t;
    t.name = "t0";
    for (int i = 0; i < n; ++i) {
        const std::string id = std::to_string(i);
        t.vms.push_back(vm("vm" + id, private_ip(1, i), i, active));
        t.vrs.push_back(vr("vr" + id, i, public_ip(0, i), {"vm" + id}, active));
    }
    return t;
}

ScenarioDoc fig11(NetMode mode)
{
    ScenarioDoc doc = base(mode, "fig11_outbound",
                           "10 hosts with one VR and one VM each; all VMs send to external servers, then "
                           "externals send to every VR's public IP",
                           60, 0.1);
    add_hosts(doc, 10);
    add_externals(doc);
    doc.topology.tenants.push_back(pairs_per_host(10));
    for (int i = 0; i < 10; ++i)
        doc.timeline.push_back(flow_start(0, "out" + std::to_string(i), "vm" + std::to_string(i), ext_name(i % 2)));
    for (int i = 0; i < 10; ++i)
        doc.timeline.push_back(simple(30, ActionKind::StopFlow, "out" + std::to_string(i)));
    for (int i = 0; i < 10; ++i)
        doc.timeline.push_back(
            flow_start(30, "in" + std::to_string(i), ext_name(i % 2), public_ip(0, i).str()));
    const double expected = mode == NetMode::SingleVr ? 1 * kGbps : 10 * kGbps;
    doc.assertions.push_back(mean_rate("outbound_aggregate", externals(), false, 15, 30, expected));
    doc.assertions.push_back(mean_rate("inbound_aggregate", externals(), true, 45, 60, expected));
    return doc;
}

ScenarioDoc fig12(NetMode mode)
{
    constexpr double kStage = 30;
    ScenarioDoc doc = base(mode, "fig12_autoscale",
                           "VR+VM pairs launched one per 30 s stage up to 10, then terminated one per stage",
                           19 * kStage, 0.5);
    add_hosts(doc, 10);
    add_externals(doc);
    doc.topology.tenants.push_back(pairs_per_host(10, false));
    const bool vr_actions = mode != NetMode::SingleVr;
    for (int s = 0; s < 19; ++s) {
        const double t = s * kStage;
        const bool grow = s < 10;
        const int k = grow ? s : 19 - s;
        const int active = grow ? s + 1 : 19 - s;
        const std::string id = std::to_string(k);
        if (grow) {
            if (vr_actions)
                doc.timeline.push_back(simple(t, ActionKind::StartVr, "vr" + id));
            doc.timeline.push_back(activate_vm(t, "t0", "vm" + id));
            doc.timeline.push_back(flow_start(t, "f" + id, "vm" + id, ext_name(k % 2)));
        } else {
            doc.timeline.push_back(simple(t, ActionKind::StopFlow, "f" + id));
            doc.timeline.push_back(simple(t, ActionKind::RemoveVm, "vm" + id));
            if (vr_actions)
                doc.timeline.push_back(simple(t, ActionKind::KillVr, "vr" + id));
        }
        char name[48];
        std::snprintf(name, sizeof name, "stage%02d_%s_%d_pairs", s + 1, grow ? "grow" : "shrink", active);
        const double expected = mode == NetMode::SingleVr ? 1 * kGbps : active * kGbps;
        doc.assertions.push_back(mean_rate(name, externals(), false, t + kStage / 2, t + kStage, expected));
    }
    return doc;
}

// Tenant A on hosts 0-4, tenant B on hosts 5-9, one VR per host. Each VR
// load-balances port 80 of its public IP onto the VMs named by `lb_vm`.
void two_tenants(ScenarioDoc& doc, bool mixed)
{
    for (int t = 0; t < 2; ++t) {
        TenantSpec ten;
        ten.name = t == 0 ? "A" : "B";
        const std::string p = t == 0 ? "a-" : "b-";
        for (int i = 0; i < 5; ++i) {
            const int h = t * 5 + i;
            const std::string id = std::to_string(i);
            if (mixed) {
                ten.vms.push_back(vm(p + "ew" + id, private_ip(1, i), h, true, kGbps, VmRole::EastWest));
                ten.vms.push_back(vm(p + "ns" + id, private_ip(2, i), h, true, kGbps, VmRole::NorthSouth));
                ten.vrs.push_back(vr(p + "vr" + id, h, public_ip(t * 100, i), {p + "ew" + id}));
            } else {
                ten.vms.push_back(vm(p + "vm" + id, private_ip(1, i), h));
                ten.vrs.push_back(vr(p + "vr" + id, h, public_ip(t * 100, i), {p + "vm" + id}));
            }
        }
        doc.topology.tenants.push_back(ten);
    }
}

ScenarioDoc fig13(NetMode mode)
{
    ScenarioDoc doc = base(mode, "fig13_1to1",
                           "tenant A on hosts 0-4 and tenant B on hosts 5-9; each A VM sends to the public IP of "
                           "one B VR",
                           30, 0.1);
    add_hosts(doc, 10);
    two_tenants(doc, false);
    for (int i = 0; i < 5; ++i)
        doc.timeline.push_back(
            flow_start(0, "a" + std::to_string(i) + "-b" + std::to_string(i), "a-vm" + std::to_string(i),
                       public_ip(100, i).str()));
    std::vector<EntitySel> a_vms;
    for (int i = 0; i < 5; ++i)
        a_vms.push_back(EntitySel{EntityType::Vm, "a-vm" + std::to_string(i)});
    if (mode == NetMode::SingleVr)
        doc.assertions.push_back(mean_rate("tenant_a_aggregate", a_vms, true, 15, 30, 1 * kGbps));
    else
        doc.assertions.push_back(mean_rate("per_vm", a_vms, true, 15, 30, 1 * kGbps, Aggregate::Each));
    return doc;
}

ScenarioDoc fig14(NetMode mode)
{
    ScenarioDoc doc = base(mode, "fig14_1toN",
                           "every tenant A VM sends to every tenant B public IP and vice versa", 30, 0.1);
    add_hosts(doc, 10);
    two_tenants(doc, false);
    for (int i = 0; i < 5; ++i)
        for (int j = 0; j < 5; ++j)
            doc.timeline.push_back(flow_start(0, "a" + std::to_string(i) + "-b" + std::to_string(j),
                                              "a-vm" + std::to_string(i), public_ip(100, j).str()));
    for (int j = 0; j < 5; ++j)
        for (int i = 0; i < 5; ++i)
            doc.timeline.push_back(flow_start(0, "b" + std::to_string(j) + "-a" + std::to_string(i),
                                              "b-vm" + std::to_string(j), public_ip(0, i).str()));
    if (mode == NetMode::SingleVr) {
        doc.assertions.push_back(mean_rate("all_hosts_aggregate", host_range(0, 9), true, 15, 30, 1 * kGbps));
    } else {
        for (int k = 0; k < 5; ++k)
            doc.assertions.push_back(mean_rate("pair_host" + std::to_string(k) + "_host" + std::to_string(k + 5),
                                               hosts({k, k + 5}), true, 15, 30, 2 * kGbps));
    }
    return doc;
}

ScenarioDoc fig15(NetMode mode)
{
    ScenarioDoc doc = base(mode, "fig15_mixed",
                           "2 Gbps hosts with one east-west VM, one north-south VM and one VR each; east-west "
                           "traffic crosses tenants A and B",
                           30, 0.1);
    add_hosts(doc, 10, 2 * kGbps);
    add_externals(doc);
    two_tenants(doc, true);
    for (int t = 0; t < 2; ++t) {
        const std::string p = t == 0 ? "a-" : "b-";
        for (int i = 0; i < 5; ++i) {
            const std::string id = std::to_string(i);
            doc.timeline.push_back(flow_start(0, p + "ns" + id, p + "ns" + id, ext_name(i % 2)));
            doc.timeline.push_back(
                flow_start(0, p + "ew" + id, p + "ew" + id, public_ip(t == 0 ? 100 : 0, i).str()));
        }
    }
    if (mode == NetMode::SingleVr) {
        doc.assertions.push_back(mean_rate("all_hosts_aggregate", host_range(0, 9), true, 15, 30, 2 * kGbps));
    } else {
        for (int k = 0; k < 5; ++k)
            doc.assertions.push_back(mean_rate("pair_host" + std::to_string(k) + "_host" + std::to_string(k + 5),
                                               hosts({k, k + 5}), true, 15, 30, 4 * kGbps));
    }
    return doc;
}

ScenarioDoc failover(NetMode mode)
{
    constexpr double kKill = 31;
    ScenarioDoc doc = base(mode, "failover_vr_kill",
                           "10 VR+VM pairs with 0.4 Gbps external flows; vm0's local VR is killed at t=31 s", 80,
                           0.1);
    add_hosts(doc, 10);
    add_externals(doc);
    doc.topology.tenants.push_back(pairs_per_host(10));
    std::vector<std::string> all, others;
    for (int i = 0; i < 10; ++i) {
        const std::string id = "f" + std::to_string(i);
        doc.timeline.push_back(flow_start(0, id, "vm" + std::to_string(i), ext_name(i % 2), 0.4 * kGbps));
        all.push_back(id);
        if (i > 0)
            others.push_back(id);
    }
    doc.timeline.push_back(simple(kKill, ActionKind::KillVr, "vr0"));

    switch (mode) {
    case NetMode::Eywa: {
        AssertionSpec f = bounded("vm0_failover_s", AssertionType::Failover, kKill, 34);
        f.flows = {"f0"};
        doc.assertions.push_back(f);
        AssertionSpec r = simple_assert("vm0_gateway_replies_per_request", AssertionType::GatewayReplies, "vm0");
        r.from = seconds(kKill);
        r.expected = 1;
        doc.assertions.push_back(r);
        doc.assertions.push_back(rule_seen("12", "pass"));
        doc.assertions.push_back(flow_rate("others_uninterrupted", others, 5, 80, 0.4 * kGbps));
        doc.assertions.push_back(flow_rate("vm0_restored", {"f0"}, kKill + 34, 80, 0.4 * kGbps));
        break;
    }
    case NetMode::Mvrrp: {
        AssertionSpec c = bounded("vrrp_convergence_s", AssertionType::VrrpConvergence, kKill, 3);
        c.vr = "vr0";
        doc.assertions.push_back(c);
        AssertionSpec f = bounded("vm0_failover_s", AssertionType::Failover, kKill, 4);
        f.flows = {"f0"};
        doc.assertions.push_back(f);
        doc.assertions.push_back(simple_assert("assignment_immutable", AssertionType::AssignmentImmutable));
        doc.assertions.push_back(flow_rate("others_uninterrupted", others, 5, 80, 0.4 * kGbps));
        break;
    }
    case NetMode::SingleVr:
        doc.assertions.push_back(flow_rate("flows_up_before_kill", all, 5, kKill, 0.1 * kGbps));
        doc.assertions.push_back(flow_rate("all_flows_down_after_kill", all, kKill, 80, 0.0, true));
        break;
    }
    return doc;
}

// host0 carries only vm0; hosts 1-9 each run a VR and an idle VM.
void orphan_topology(ScenarioDoc& doc)
{
    add_hosts(doc, 10);
    add_externals(doc);
    TenantSpec t;
    t.name = "t0";
    t.vms.push_back(vm("vm0", private_ip(1, 0), 0));
    for (int i = 1; i < 10; ++i) {
        const std::string id = std::to_string(i);
        t.vms.push_back(vm("vm" + id, private_ip(1, i), i));
        t.vrs.push_back(vr("vr" + id, i, public_ip(0, i), {"vm" + id}));
    }
    doc.topology.tenants.push_back(t);
}

ScenarioDoc flux(NetMode mode)
{
    ScenarioDoc doc = base(mode, "flux_orphan",
                           "vm0 on a host without a VR resolves the gateway and a remote VM; nine remote agents "
                           "answer and only the fastest gateway reply survives",
                           60, 0.1);
    orphan_topology(doc);
    doc.timeline.push_back(flow_start(0, "ns", "vm0", ext_name(0)));
    doc.timeline.push_back(flow_start(0, "p2p", "vm0", "vm1"));
    doc.assertions.push_back(flow_rate("ns_rate", {"ns"}, 1, 60, 0.5 * kGbps));
    doc.assertions.push_back(flow_rate("p2p_rate", {"p2p"}, 1, 60, 0.5 * kGbps));
    if (mode == NetMode::Eywa) {
        for (auto [rule, action] : std::initializer_list<std::pair<const char*, const char*>>{
                 {"7", "pass"},
                 {"6-2", "proxy"},
                 {"12", "pass"},
                 {"23-1", "pass"},
                 {"22-2", "proxy"},
                 {"vm-reply-pass", "pass"},
                 {"23-3", "proxy"},
                 {"1-3", "proxy"}})
            doc.assertions.push_back(rule_seen(rule, action));
        doc.assertions.push_back(rule_seen("12", "filter", 8));
        AssertionSpec f = simple_assert("flux_filtered_per_request", AssertionType::FluxFiltered, "vm0");
        f.host = host_name(0);
        f.expected = 8;
        doc.assertions.push_back(f);
        AssertionSpec r = simple_assert("vm0_gateway_replies_per_request", AssertionType::GatewayReplies, "vm0");
        r.expected = 1;
        doc.assertions.push_back(r);
    }
    return doc;
}

ScenarioDoc migration(NetMode mode)
{
    constexpr double kMove = 40;
    ScenarioDoc doc = base(mode, "migration_rebind",
                           "vm0 starts on a host without a VR and migrates to host5, which has one, at t=40 s", 80,
                           0.1);
    orphan_topology(doc);
    doc.timeline.push_back(flow_start(0, "ns", "vm0", ext_name(0)));
    doc.timeline.push_back(simple(kMove, ActionKind::MigrateVm, "vm0", host_name(5)));
    doc.assertions.push_back(simple_assert("vm0_gateway_ip_stable", AssertionType::GatewayIpStable, "vm0"));
    doc.assertions.push_back(flow_rate("ns_uninterrupted", {"ns"}, 1, 80, 1 * kGbps));
    if (mode == NetMode::Eywa) {
        AssertionSpec r = bounded("vm0_rebind_s", AssertionType::Rebind, kMove, 30);
        r.vm = "vm0";
        r.vr = "vr5";
        doc.assertions.push_back(r);
        AssertionSpec h = simple_assert("vm0_hops_decrease", AssertionType::HopsDecrease);
        h.flows = {"ns"};
        h.from = seconds(kMove);
        h.compare = Compare::Lt;
        doc.assertions.push_back(h);
    } else if (mode == NetMode::Mvrrp) {
        doc.assertions.push_back(simple_assert("assignment_immutable", AssertionType::AssignmentImmutable));
    }
    return doc;
}

const std::vector<Family>& families()
{
    static const std::vector<Family> kFamilies = {
        {"fig11_outbound", "aggregate outbound then inbound throughput across 10 VR+VM pairs", fig11},
        {"fig12_autoscale", "aggregate throughput while VR+VM pairs are launched and terminated", fig12},
        {"fig13_1to1", "inter-tenant 1-to-1 flows through public IPs", fig13},
        {"fig14_1toN", "inter-tenant all-to-all flows through public IPs", fig14},
        {"fig15_mixed", "mixed north-south and east-west traffic on 2 Gbps hosts", fig15},
        {"failover_vr_kill", "local VR failure and orphan-mode gateway re-resolution", failover},
        {"flux_orphan", "orphan-host ARP resolution with many answering agents", flux},
        {"migration_rebind", "VM migration to a host with a local VR", migration},
    };
    return kFamilies;
}

std::pair<const Family*, std::optional<NetMode>> lookup(const std::string& name)
{
    for (const auto& f : families()) {
        for (NetMode m : {NetMode::Eywa, NetMode::SingleVr, NetMode::Mvrrp}) {
            if (name == std::string(f.name) + mode_suffix(m))
                return {&f, m == NetMode::Eywa ? std::nullopt : std::optional<NetMode>(m)};
        }
    }
    return {nullptr, std::nullopt};
}

}  // namespace

std::vector<BuiltinInfo> builtin_scenarios()
{
    std::vector<BuiltinInfo> out;
    for (NetMode m : {NetMode::Eywa, NetMode::SingleVr, NetMode::Mvrrp}) {
        for (const auto& f : families()) {
            std::string desc = f.description;
            if (m != NetMode::Eywa)
                desc += " (" + std::string(to_string(m)) + " baseline)";
            out.push_back(BuiltinInfo{std::string(f.name) + mode_suffix(m), desc});
        }
    }
    return out;
}

bool is_builtin(const std::string& name)
{
    return lookup(name).first != nullptr;
}

ScenarioDoc builtin_scenario(const std::string& name, std::optional<NetMode> mode)
{
    auto [family, suffix_mode] = lookup(name);
    if (!family)
        throw ValidationError("unknown builtin scenario '" + name + "'");
    const NetMode effective = mode ? *mode : suffix_mode.value_or(NetMode::Eywa);
    return family->build(effective);
}

}  // namespace eywa
