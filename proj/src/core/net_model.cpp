#include "net_model.hpp"

#include <bit>
#include <unordered_set>

namespace eywa {

Vni VniRegistry::allocate(TenantId tenant)
{
    if (tenant.value < by_tenant_.size() && by_tenant_[tenant.value] != kNone)
        return Vni{by_tenant_[tenant.value]};
    if (count_ >= Vni::kSpace)
        throw CapacityError("VNI space exhausted: all 16777216 virtual networks are allocated");

    std::uint32_t word = lowest_free_ / 64;
    while (bitmap_[word] == ~0ULL)
        ++word;
    auto bit = static_cast<std::uint32_t>(std::countr_one(bitmap_[word]));
    std::uint32_t vni = word * 64 + bit;
    bitmap_[word] |= 1ULL << bit;
    ++count_;
    lowest_free_ = vni + 1;

    if (tenant.value >= by_tenant_.size())
        by_tenant_.resize(static_cast<std::size_t>(tenant.value) + 1, kNone);
    by_tenant_[tenant.value] = vni;
    return Vni{vni};
}

void VniRegistry::release(TenantId tenant)
{
    if (tenant.value >= by_tenant_.size() || by_tenant_[tenant.value] == kNone)
        return;
    std::uint32_t vni = by_tenant_[tenant.value];
    bitmap_[vni / 64] &= ~(1ULL << (vni % 64));
    by_tenant_[tenant.value] = kNone;
    --count_;
    if (vni < lowest_free_)
        lowest_free_ = vni;
}

std::optional<Vni> VniRegistry::lookup(TenantId tenant) const
{
    if (tenant.value >= by_tenant_.size() || by_tenant_[tenant.value] == kNone)
        return std::nullopt;
    return Vni{by_tenant_[tenant.value]};
}

bool VniRegistry::is_allocated(Vni vni) const
{
    if (vni.value >= Vni::kSpace)
        return false;
    return (bitmap_[vni.value / 64] >> (vni.value % 64)) & 1ULL;
}

std::string_view to_string(NetMode m)
{
    switch (m) {
    case NetMode::Eywa: return "eywa";
    case NetMode::Mvrrp: return "mvrrp";
    case NetMode::SingleVr: return "single_vr";
    }
    return "?";
}

NetMode parse_net_mode(std::string_view text)
{
    if (text == "eywa")
        return NetMode::Eywa;
    if (text == "mvrrp")
        return NetMode::Mvrrp;
    if (text == "single_vr")
        return NetMode::SingleVr;
    throw ValidationError("unknown mode '" + std::string(text) + "' (expected eywa, mvrrp or single_vr)");
}

std::string_view to_string(VmRole r)
{
    switch (r) {
    case VmRole::Generic: return "generic";
    case VmRole::EastWest: return "east-west";
    case VmRole::NorthSouth: return "north-south";
    }
    return "?";
}

VmRole parse_vm_role(std::string_view text)
{
    if (text == "generic")
        return VmRole::Generic;
    if (text == "east-west")
        return VmRole::EastWest;
    if (text == "north-south")
        return VmRole::NorthSouth;
    throw ValidationError("unknown VM role '" + std::string(text) + "'");
}

void validate(const TopologySpec& spec)
{
    std::unordered_set<std::string> hosts;
    std::unordered_set<std::string> names;
    auto claim_name = [&](const std::string& name, std::string_view what) {
        if (name.empty())
            throw ValidationError(std::string(what) + " with empty name");
        if (!names.insert(name).second)
            throw ValidationError("duplicate entity name '" + name + "'");
    };

    for (const auto& h : spec.hosts) {
        if (h.name.empty())
            throw ValidationError("host with empty name");
        if (!hosts.insert(h.name).second)
            throw ValidationError("duplicate host '" + h.name + "'");
        if (!(h.link_bps > 0.0))
            throw ValidationError("host '" + h.name + "' has non-positive link capacity");
        if (h.latency < 0)
            throw ValidationError("host '" + h.name + "' has negative latency");
    }
    std::set<Ip4Addr> public_ips;
    for (const auto& e : spec.externals) {
        claim_name(e.name, "external server");
        if (!(e.link_bps > 0.0))
            throw ValidationError("external server '" + e.name + "' has non-positive link capacity");
        if (!e.ip.is_any() && !public_ips.insert(e.ip).second)
            throw ValidationError("external server '" + e.name + "' reuses address " + e.ip.str());
    }

    std::unordered_set<std::string> tenants;
    for (const auto& t : spec.tenants) {
        if (t.name.empty())
            throw ValidationError("tenant with empty name");
        if (!tenants.insert(t.name).second)
            throw ValidationError("duplicate tenant '" + t.name + "'");
        if (t.vms.size() > 0x7fff)
            throw ValidationError("tenant '" + t.name + "' has too many VMs");
        if (spec.mode == NetMode::Mvrrp && t.vrs.size() > 254)
            throw CapacityError("tenant '" + t.name + "' declares " + std::to_string(t.vrs.size()) +
                                " VRs; MVRRP supports at most 254 per tenant");

        std::set<Ip4Addr> private_ips;
        std::unordered_set<std::string> vm_names;
        for (const auto& vm : t.vms) {
            claim_name(vm.name, "VM");
            vm_names.insert(vm.name);
            if (!hosts.count(vm.host))
                throw ValidationError("VM '" + vm.name + "' references unknown host '" + vm.host + "'");
            if (vm.private_ip.is_any())
                throw ValidationError("VM '" + vm.name + "' has no private IP");
            if (vm.private_ip == t.gateway_ip)
                throw ValidationError("VM '" + vm.name + "' uses the tenant gateway IP " + t.gateway_ip.str());
            if (!private_ips.insert(vm.private_ip).second)
                throw ValidationError("VM '" + vm.name + "' duplicates private IP " + vm.private_ip.str() +
                                      " in tenant '" + t.name + "'");
            if (vm.nic_bps < 0.0)
                throw ValidationError("VM '" + vm.name + "' has negative NIC capacity");
        }
        std::set<std::string> vr_hosts;
        for (const auto& vr : t.vrs) {
            claim_name(vr.name, "VR");
            if (!hosts.count(vr.host))
                throw ValidationError("VR '" + vr.name + "' references unknown host '" + vr.host + "'");
            if (!vr_hosts.insert(vr.host).second)
                throw ValidationError("VR '" + vr.name + "' is a second VR of tenant '" + t.name + "' on host '" +
                                      vr.host + "'");
            if (vr.public_ips.empty())
                throw ValidationError("VR '" + vr.name + "' has no public IP");
            for (auto ip : vr.public_ips) {
                if (!public_ips.insert(ip).second)
                    throw ValidationError("VR '" + vr.name + "' reuses public IP " + ip.str());
            }
            for (const auto& rule : vr.lb) {
                if (!rule.public_ip.is_any() &&
                    std::find(vr.public_ips.begin(), vr.public_ips.end(), rule.public_ip) == vr.public_ips.end())
                    throw ValidationError("VR '" + vr.name + "' balances foreign address " + rule.public_ip.str());
                for (const auto& m : rule.members) {
                    if (!vm_names.count(m))
                        throw ValidationError("VR '" + vr.name + "' load-balances to unknown VM '" + m + "'");
                }
            }
        }
    }
}

std::optional<HostId> Topology::find_host(std::string_view name) const
{
    for (const auto& h : hosts)
        if (h.name == name)
            return h.id;
    return std::nullopt;
}

std::optional<std::size_t> Topology::find_vm(std::string_view name) const
{
    for (std::size_t i = 0; i < vms.size(); ++i)
        if (vms[i].name == name)
            return i;
    return std::nullopt;
}

std::optional<std::size_t> Topology::find_vr(std::string_view name) const
{
    for (std::size_t i = 0; i < vrs.size(); ++i)
        if (vrs[i].name == name)
            return i;
    return std::nullopt;
}

std::optional<std::size_t> Topology::find_external(std::string_view name) const
{
    for (std::size_t i = 0; i < externals.size(); ++i)
        if (externals[i].name == name)
            return i;
    return std::nullopt;
}

std::optional<std::size_t> Topology::find_vm_by_ip(TenantId tenant, Ip4Addr ip) const
{
    for (std::size_t i = 0; i < vms.size(); ++i)
        if (vms[i].tenant == tenant && vms[i].ip == ip)
            return i;
    return std::nullopt;
}

std::optional<std::size_t> Topology::find_vr_by_mac(MacAddr mac) const
{
    for (std::size_t i = 0; i < vrs.size(); ++i)
        if (vrs[i].mac == mac)
            return i;
    return std::nullopt;
}

std::optional<std::size_t> Topology::find_vr_by_public_ip(Ip4Addr ip) const
{
    for (std::size_t i = 0; i < vrs.size(); ++i)
        for (auto p : vrs[i].public_ips)
            if (p == ip)
                return i;
    return std::nullopt;
}

std::optional<TenantId> Topology::find_tenant(std::string_view name) const
{
    for (const auto& t : tenants)
        if (t.name == name)
            return t.id;
    return std::nullopt;
}

AgentState* Topology::agent(HostId h, TenantId tenant)
{
    auto& agents = host(h).agents;
    auto it = agents.find(tenant);
    return it == agents.end() ? nullptr : &it->second;
}

const AgentState* Topology::agent(HostId h, TenantId tenant) const
{
    const auto& agents = host(h).agents;
    auto it = agents.find(tenant);
    return it == agents.end() ? nullptr : &it->second;
}

std::size_t Topology::agent_count() const
{
    std::size_t n = 0;
    for (const auto& h : hosts)
        n += h.agents.size();
    return n;
}

std::optional<std::size_t> Topology::local_vr(HostId h, TenantId tenant) const
{
    for (std::size_t i = 0; i < vrs.size(); ++i)
        if (vrs[i].attached && vrs[i].host == h && vrs[i].tenant == tenant)
            return i;
    return std::nullopt;
}

std::vector<HostId> Topology::hosts_with_vsi(TenantId tenant) const
{
    std::vector<HostId> out;
    for (const auto& h : hosts)
        if (h.alive && h.vsis.count(tenant))
            out.push_back(h.id);
    return out;
}

void Topology::ensure_vsi(HostId h, TenantId tenant)
{
    Host& hst = host(h);
    hst.vsis.insert(tenant);
    if (mode == NetMode::Eywa && !hst.agents.count(tenant)) {
        hst.agents.emplace(tenant, AgentState(h, this->tenant(tenant).gateway_ip, hst.agent_mac, agent_config));
    }
}

void Topology::maybe_drop_vsi(HostId h, TenantId tenant)
{
    for (const auto& vm : vms)
        if (vm.active && vm.host == h && vm.tenant == tenant)
            return;
    if (local_vr(h, tenant))
        return;
    host(h).vsis.erase(tenant);
    host(h).agents.erase(tenant);
}

PlacementResult Topology::attach_vm(std::size_t idx, SimTime)
{
    Vm& vm = vms.at(idx);
    vm.active = true;
    ensure_vsi(vm.host, vm.tenant);
    if (auto* a = agent(vm.host, vm.tenant))
        a->attach_vm(vm.ip, vm.mac);
    return {};
}

void Topology::detach_vm(std::size_t idx)
{
    Vm& vm = vms.at(idx);
    if (auto* a = agent(vm.host, vm.tenant))
        a->detach_vm(vm.ip);
    vm.active = false;
    maybe_drop_vsi(vm.host, vm.tenant);
}

PlacementResult Topology::attach_vr(std::size_t idx, SimTime now)
{
    Vr& vr = vrs.at(idx);
    vr.attached = true;
    vr.alive = true;
    ensure_vsi(vr.host, vr.tenant);
    PlacementResult result;
    if (auto* a = agent(vr.host, vr.tenant)) {
        bool was_orphan = a->mode() == AgentMode::Orphan;
        a->attach_vr(vr.mac, now);
        if (was_orphan) {
            result.mode_changed = true;
            result.garp = make_garp(vr.gateway_ip, vr.mac);
        }
    }
    return result;
}

void Topology::detach_vr(std::size_t idx)
{
    Vr& vr = vrs.at(idx);
    vr.attached = false;
    vr.alive = false;
    if (auto* a = agent(vr.host, vr.tenant)) {
        if (a->local_vr() == vr.mac)
            a->detach_vr();
    }
    maybe_drop_vsi(vr.host, vr.tenant);
}

namespace {

Vm make_vm(const Topology& topo, Tenant& tenant, const VmSpec& spec, HostId host)
{
    Vm vm;
    vm.name = spec.name;
    vm.tenant = tenant.id;
    vm.ip = spec.private_ip;
    vm.mac = MacAddr::for_instance(tenant.vni.value, tenant.next_vm_index++);
    vm.gateway_ip = tenant.gateway_ip;
    vm.host = host;
    vm.role = spec.role;
    vm.nic_bps = spec.nic_bps > 0.0 ? spec.nic_bps : topo.host(host).link_bps;
    vm.active = false;
    return vm;
}

Vr make_vr(const Topology& topo, Tenant& tenant, const VrSpec& spec, HostId host)
{
    Vr vr;
    vr.name = spec.name;
    vr.tenant = tenant.id;
    vr.gateway_ip = tenant.gateway_ip;
    vr.mac = MacAddr::for_instance(tenant.vni.value, tenant.next_vr_index++);
    vr.public_ips = spec.public_ips;
    vr.host = host;
    vr.attached = false;
    vr.alive = false;
    for (const auto& rule : spec.lb) {
        ResolvedLbRule r;
        r.public_ip = rule.public_ip.is_any() ? spec.public_ips.front() : rule.public_ip;
        r.port = rule.port;
        for (const auto& m : rule.members) {
            auto idx = topo.find_vm(m);
            if (!idx || topo.vms[*idx].tenant != tenant.id)
                throw ValidationError("VR '" + spec.name + "' load-balances to unknown VM '" + m + "'");
            r.members.push_back(*idx);
        }
        vr.lb.push_back(std::move(r));
    }
    return vr;
}

}  // namespace

Topology build_topology(const TopologySpec& spec, const AgentConfig& agent_config)
{
    validate(spec);
    Topology topo;
    topo.mode = spec.mode;
    topo.agent_config = agent_config;

    for (std::size_t i = 0; i < spec.hosts.size(); ++i) {
        const auto& hs = spec.hosts[i];
        Host h;
        h.id = HostId{static_cast<std::uint32_t>(i)};
        h.name = hs.name;
        h.link_bps = hs.link_bps;
        h.latency = hs.latency;
        h.agent_mac = MacAddr::for_agent(static_cast<std::uint32_t>(i));
        topo.hosts.push_back(std::move(h));
    }
    std::uint32_t ext_ip = Ip4Addr::parse("198.51.100.1").value;
    for (const auto& es : spec.externals)
        topo.externals.push_back(External{es.name, es.link_bps, es.ip.is_any() ? Ip4Addr{ext_ip++} : es.ip});

    for (std::size_t t = 0; t < spec.tenants.size(); ++t) {
        const auto& ts = spec.tenants[t];
        Tenant tenant;
        tenant.id = TenantId{static_cast<std::uint32_t>(t)};
        tenant.name = ts.name;
        tenant.vni = topo.vnis.allocate(tenant.id);
        tenant.gateway_ip = ts.gateway_ip;
        topo.tenants.push_back(tenant);
    }
    for (std::size_t t = 0; t < spec.tenants.size(); ++t) {
        const auto& ts = spec.tenants[t];
        for (const auto& vs : ts.vms)
            topo.vms.push_back(make_vm(topo, topo.tenants[t], vs, *topo.find_host(vs.host)));
    }
    for (std::size_t t = 0; t < spec.tenants.size(); ++t) {
        const auto& ts = spec.tenants[t];
        for (const auto& rs : ts.vrs)
            topo.vrs.push_back(make_vr(topo, topo.tenants[t], rs, *topo.find_host(rs.host)));
    }

    // Attach initially active instances; VRs first so agents start in the
    // right mode.
    std::size_t vm_i = 0, vr_i = 0;
    for (const auto& ts : spec.tenants) {
        for (const auto& rs : ts.vrs) {
            if (rs.active)
                topo.attach_vr(vr_i);
            ++vr_i;
        }
    }
    for (const auto& ts : spec.tenants) {
        for (const auto& vs : ts.vms) {
            if (vs.active)
                topo.attach_vm(vm_i);
            ++vm_i;
        }
    }
    return topo;
}

PlacementResult place_instance(Topology& topo, TenantId tenant, const VmSpec& spec, HostId host, SimTime now)
{
    if (host.value >= topo.hosts.size())
        throw ValidationError("VM '" + spec.name + "' placed on unknown host " + std::to_string(host.value));
    if (tenant.value >= topo.tenants.size())
        throw ValidationError("VM '" + spec.name + "' placed in unknown tenant");
    if (topo.find_vm(spec.name) || topo.find_vr(spec.name))
        throw ValidationError("duplicate entity name '" + spec.name + "'");
    if (topo.find_vm_by_ip(tenant, spec.private_ip) || spec.private_ip == topo.tenant(tenant).gateway_ip)
        throw ValidationError("VM '" + spec.name + "' duplicates private IP " + spec.private_ip.str());
    topo.vms.push_back(make_vm(topo, topo.tenants[tenant.value], spec, host));
    return topo.attach_vm(topo.vms.size() - 1, now);
}

PlacementResult place_instance(Topology& topo, TenantId tenant, const VrSpec& spec, HostId host, SimTime now)
{
    if (host.value >= topo.hosts.size())
        throw ValidationError("VR '" + spec.name + "' placed on unknown host " + std::to_string(host.value));
    if (tenant.value >= topo.tenants.size())
        throw ValidationError("VR '" + spec.name + "' placed in unknown tenant");
    if (topo.find_vm(spec.name) || topo.find_vr(spec.name))
        throw ValidationError("duplicate entity name '" + spec.name + "'");
    if (spec.public_ips.empty())
        throw ValidationError("VR '" + spec.name + "' has no public IP");
    for (auto ip : spec.public_ips) {
        if (topo.find_vr_by_public_ip(ip))
            throw ValidationError("VR '" + spec.name + "' reuses public IP " + ip.str());
    }
    for (const auto& vr : topo.vrs) {
        if (vr.tenant == tenant && vr.host == host)
            throw ValidationError("VR '" + spec.name + "' is a second VR of its tenant on host " +
                                  topo.host(host).name);
    }
    topo.vrs.push_back(make_vr(topo, topo.tenants[tenant.value], spec, host));
    return topo.attach_vr(topo.vrs.size() - 1, now);
}

}  // namespace eywa
