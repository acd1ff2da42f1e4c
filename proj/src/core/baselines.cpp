#include "baselines.hpp"

#include <algorithm>

namespace eywa {

std::string_view to_string(GatewayPolicy p)
{
    return p == GatewayPolicy::RoundRobin ? "round_robin" : "latency";
}

GatewayPolicy parse_gateway_policy(std::string_view text)
{
    if (text == "round_robin")
        return GatewayPolicy::RoundRobin;
    if (text == "latency")
        return GatewayPolicy::Latency;
    throw ValidationError("unknown gateway policy '" + std::string(text) + "' (expected round_robin or latency)");
}

Ip4Addr assign_gateway(GatewayPolicy policy, HostId vm_host, std::span<const GatewayCandidate> pool,
                       std::size_t& rr_cursor)
{
    if (pool.size() > kMaxVrrpVrsPerTenant)
        throw CapacityError("VRRP pool of " + std::to_string(pool.size()) + " VRs exceeds the limit of " +
                            std::to_string(kMaxVrrpVrsPerTenant) + " per tenant");
    if (pool.empty())
        throw ValidationError("no VR available for gateway assignment");

    if (policy == GatewayPolicy::RoundRobin) {
        const auto& pick = pool[rr_cursor % pool.size()];
        rr_cursor = (rr_cursor + 1) % pool.size();
        return pick.virtual_ip;
    }
    for (const auto& c : pool)
        if (c.host == vm_host)
            return c.virtual_ip;
    const GatewayCandidate* best = &pool[0];
    for (const auto& c : pool)
        if (c.latency < best->latency)
            best = &c;
    return best->virtual_ip;
}

SimTime master_down_interval(const VrrpConfig& config, std::uint8_t priority)
{
    // Skew of (256 - priority) / 4000 of an interval: 0.25 ms steps at 1 s.
    return 3 * config.advert_interval + (256 - priority) * config.advert_interval / 4000;
}

std::vector<VrrpGroup> build_vrrp_groups(const Topology& topology, TenantId tenant)
{
    std::vector<std::size_t> vrs;
    for (std::size_t i = 0; i < topology.vrs.size(); ++i)
        if (topology.vrs[i].tenant == tenant)
            vrs.push_back(i);
    if (vrs.size() > kMaxVrrpVrsPerTenant)
        throw CapacityError("tenant '" + topology.tenant(tenant).name + "' has " + std::to_string(vrs.size()) +
                            " VRs; VRRP supports at most 254 per tenant");

    const Ip4Addr base = topology.tenant(tenant).gateway_ip;
    const std::size_t n = vrs.size();
    std::vector<VrrpGroup> groups;
    for (std::size_t k = 0; k < n; ++k) {
        VrrpGroup g;
        g.vrid = static_cast<std::uint8_t>(k + 1);
        g.tenant = tenant;
        g.virtual_ip = base.offset(static_cast<std::uint32_t>(k));
        g.virtual_mac = MacAddr::vrrp_virtual(g.vrid);
        g.public_ips = topology.vrs[vrs[k]].public_ips;
        g.owner = k;
        for (std::size_t j = 0; j < n; ++j) {
            VrrpMember m;
            m.vr = vrs[j];
            std::size_t distance = (j + n - k) % n;
            m.priority = distance == 0 ? 200 : static_cast<std::uint8_t>(150 - (distance - 1));
            m.alive = topology.vrs[vrs[j]].alive;
            g.members.push_back(m);
        }
        std::optional<std::size_t> best;
        for (std::size_t j = 0; j < n; ++j) {
            if (g.members[j].alive && (!best || g.members[j].priority > g.members[*best].priority))
                best = j;
        }
        if (best)
            g.members[*best].role = VrrpRole::Master;
        groups.push_back(std::move(g));
    }
    return groups;
}

std::optional<std::size_t> vrrp_master(const VrrpGroup& group)
{
    std::optional<std::size_t> best;
    for (std::size_t i = 0; i < group.members.size(); ++i) {
        const auto& m = group.members[i];
        if (m.alive && m.role == VrrpRole::Master &&
            (!best || m.priority > group.members[*best].priority))
            best = i;
    }
    return best;
}

std::vector<VrrpAdvert> vrrp_tick(VrrpGroup& group, SimTime now, const VrrpConfig& config,
                                  std::vector<std::size_t>* promoted)
{
    auto p = vrrp_expire(group, now, config);
    if (promoted)
        *promoted = p;
    std::vector<VrrpAdvert> adverts;
    for (std::size_t i = 0; i < group.members.size(); ++i) {
        const auto& m = group.members[i];
        if (m.alive && m.role == VrrpRole::Master)
            adverts.push_back(VrrpAdvert{group.vrid, i, m.priority});
    }
    return adverts;
}

void vrrp_receive(VrrpGroup& group, std::size_t member, const VrrpAdvert& advert, SimTime now)
{
    auto& m = group.members.at(member);
    if (!m.alive || member == advert.from)
        return;
    m.last_advert_seen = now;
    if (m.role == VrrpRole::Master &&
        (advert.priority > m.priority || (advert.priority == m.priority && advert.from < member)))
        m.role = VrrpRole::Backup;
}

std::vector<std::size_t> vrrp_expire(VrrpGroup& group, SimTime now, const VrrpConfig& config)
{
    std::vector<std::size_t> promoted;
    for (std::size_t i = 0; i < group.members.size(); ++i) {
        auto& m = group.members[i];
        if (!m.alive || m.role == VrrpRole::Master)
            continue;
        if (now - m.last_advert_seen >= master_down_interval(config, m.priority)) {
            m.role = VrrpRole::Master;
            promoted.push_back(i);
        }
    }
    return promoted;
}

bool vrrp_set_alive(VrrpGroup& group, std::size_t member, bool alive, SimTime now)
{
    auto& m = group.members.at(member);
    m.alive = alive;
    m.role = VrrpRole::Backup;
    if (!alive)
        return false;
    m.last_advert_seen = now;
    auto current = vrrp_master(group);
    if (!current || m.priority > group.members[*current].priority) {
        m.role = VrrpRole::Master;
        return current.has_value();
    }
    return false;
}

SingleVrTransform single_vr_mode(const TopologySpec& spec)
{
    SingleVrTransform out;
    out.spec = spec;
    out.spec.mode = NetMode::SingleVr;

    std::string svc = "svc";
    auto taken = [&](const std::string& name) {
        return std::any_of(spec.hosts.begin(), spec.hosts.end(), [&](const HostSpec& h) { return h.name == name; });
    };
    for (int i = 1; taken(svc); ++i)
        svc = "svc" + std::to_string(i);
    out.service_host = svc;

    HostSpec service;
    service.name = svc;
    if (!spec.hosts.empty()) {
        service.link_bps = spec.hosts.front().link_bps;
        service.latency = spec.hosts.front().latency;
    }
    out.spec.hosts.push_back(service);

    for (auto& tenant : out.spec.tenants) {
        if (tenant.vrs.empty())
            continue;
        VrSpec shared;
        shared.name = tenant.name + "-shared-vr";
        shared.host = svc;
        shared.active = true;
        for (const auto& vr : tenant.vrs) {
            out.vr_aliases[vr.name] = shared.name;
            for (auto ip : vr.public_ips)
                shared.public_ips.push_back(ip);
            for (auto rule : vr.lb) {
                if (rule.public_ip.is_any() && !vr.public_ips.empty())
                    rule.public_ip = vr.public_ips.front();
                shared.lb.push_back(rule);
            }
        }
        out.vr_aliases[shared.name] = shared.name;
        tenant.vrs.assign(1, shared);
    }
    return out;
}

}  // namespace eywa
