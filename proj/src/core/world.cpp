#include "world.hpp"

#include <algorithm>
#include <cmath>

namespace eywa {

std::string_view to_string(EntityType t)
{
    switch (t) {
    case EntityType::Host: return "host";
    case EntityType::External: return "external";
    case EntityType::Vm: return "vm";
    case EntityType::Vr: return "vr";
    }
    return "?";
}

namespace {

bool allowed_broadcast_rule(const std::string& id)
{
    return id == "7" || id == "1-1" || id == "21-1" || id == "23-1";
}

}  // namespace

World::World(const TopologySpec& spec, const WorldConfig& config, std::map<std::string, std::string> vr_aliases)
    : config_(config), topo_(build_topology(spec, config.agent)), rng_(config.seed), vr_aliases_(std::move(vr_aliases))
{
    if (config_.sampling_interval <= 0)
        throw ValidationError("sampling interval must be positive");
    vteps_.resize(topo_.hosts.size());
    for (const auto& t : topo_.tenants)
        tenant_by_vni_[t.vni.value] = t.id;

    if (topo_.mode == NetMode::Mvrrp) {
        for (const auto& t : topo_.tenants) {
            auto groups = build_vrrp_groups(topo_, t.id);
            for (auto& g : groups) {
                topo_.vrs[g.members[g.owner].vr].gateway_ip = g.virtual_ip;
                groups_.push_back(std::move(g));
            }
        }
        for (const auto& g : groups_)
            for (const auto& vm : topo_.vms)
                if (vm.tenant == g.tenant && vm.ip == g.virtual_ip)
                    throw ValidationError("VM '" + vm.name + "' collides with VRRP virtual IP " +
                                          g.virtual_ip.str());
        for (std::size_t v = 0; v < topo_.vms.size(); ++v)
            assign_mvrrp_gateway(v);
        master_history_.resize(groups_.size());
        for (std::size_t g = 0; g < groups_.size(); ++g) {
            auto m = vrrp_master(groups_[g]);
            master_history_[g].push_back(
                MasterPoint{0, m ? std::optional<std::size_t>(groups_[g].members[*m].vr) : std::nullopt,
                            m ? std::size_t{1} : std::size_t{0}});
        }
    }

    for (const auto& vm : topo_.vms)
        vm_stacks_.emplace_back(vm.ip, vm.mac, vm.gateway_ip, config_.vm_arp);
    for (const auto& vr : topo_.vrs) {
        VrState state(vr.gateway_ip, vr.mac, vr.public_ips, config_.vr_arp);
        vr_states_.push_back(std::move(state));
    }
    for (std::size_t r = 0; r < topo_.vrs.size(); ++r) {
        // Under MVRRP any member may end up owning another group's public
        // IPs, so every VR carries the tenant's full LB configuration.
        for (const auto& src : topo_.vrs) {
            bool same = &src == &topo_.vrs[r];
            if (!same && !(topo_.mode == NetMode::Mvrrp && src.tenant == topo_.vrs[r].tenant))
                continue;
            for (const auto& rule : src.lb) {
                LbTable table;
                table.public_ip = rule.public_ip;
                table.port = rule.port;
                for (auto m : rule.members)
                    table.members.push_back(LbBackend{m, topo_.vms[m].ip});
                vr_states_[r].add_lb(std::move(table));
            }
        }
        refresh_vr_answers(r);
    }

    sync_ports();
    grow_tables();
}

std::size_t World::vm_index(const std::string& name) const
{
    auto i = topo_.find_vm(name);
    if (!i)
        throw ValidationError("unknown VM '" + name + "'");
    return *i;
}

std::size_t World::vr_index(const std::string& name) const
{
    auto alias = vr_aliases_.find(name);
    const std::string& real = alias == vr_aliases_.end() ? name : alias->second;
    auto i = topo_.find_vr(real);
    if (!i)
        throw ValidationError("unknown VR '" + name + "'");
    return *i;
}

std::size_t World::host_index(const std::string& name) const
{
    auto h = topo_.find_host(name);
    if (!h)
        throw ValidationError("unknown host '" + name + "'");
    return h->value;
}

bool World::vm_usable(std::size_t v) const
{
    const Vm& vm = topo_.vms.at(v);
    return vm.active && topo_.host(vm.host).alive;
}

bool World::vr_usable(std::size_t r) const
{
    const Vr& vr = topo_.vrs.at(r);
    return vr.attached && vr.alive && topo_.host(vr.host).alive;
}

void World::anomaly(std::string what)
{
    char stamp[32];
    std::snprintf(stamp, sizeof stamp, "t=%.6f ", to_seconds(sim_.now()));
    anomalies_.push_back(stamp + what);
}

void World::sync_ports()
{
    std::map<std::pair<HostId, TenantId>, std::set<PortId>> desired;
    for (const auto& h : topo_.hosts)
        for (auto t : h.vsis)
            desired[{h.id, t}].insert(PortId::vtep());
    for (std::size_t v = 0; v < topo_.vms.size(); ++v) {
        const auto& vm = topo_.vms[v];
        auto it = desired.find({vm.host, vm.tenant});
        if (vm.active && it != desired.end())
            it->second.insert(PortId{PortKind::Vm, static_cast<std::uint32_t>(v)});
    }
    for (std::size_t r = 0; r < topo_.vrs.size(); ++r) {
        const auto& vr = topo_.vrs[r];
        auto it = desired.find({vr.host, vr.tenant});
        if (vr.attached && it != desired.end())
            it->second.insert(PortId{PortKind::Vr, static_cast<std::uint32_t>(r)});
    }
    for (auto it = vsis_.begin(); it != vsis_.end();) {
        if (!desired.count(it->first))
            it = vsis_.erase(it);
        else
            ++it;
    }
    for (const auto& [key, ports] : desired) {
        VsiState& v = vsis_[key];
        std::vector<PortId> stale;
        for (const auto& p : v.ports())
            if (!ports.count(p))
                stale.push_back(p);
        for (const auto& p : stale)
            v.detach(p);
        for (const auto& p : ports)
            if (!v.has_port(p))
                v.attach(p);
    }
}

VsiState* World::vsi(HostId host, TenantId tenant)
{
    auto it = vsis_.find({host, tenant});
    return it == vsis_.end() ? nullptr : &it->second;
}

void World::grow_tables()
{
    const std::size_t n_links = vm_tx(topo_.vms.size());
    if (links_.size() < n_links) {
        links_.resize(n_links);
        link_bytes_.resize(n_links, 0.0);
    }
    for (const auto& h : topo_.hosts) {
        links_[host_up(h.id)] = LinkState{h.alive ? h.link_bps : 0.0, h.latency};
        links_[host_down(h.id)] = LinkState{h.alive ? h.link_bps : 0.0, h.latency};
    }
    for (std::size_t e = 0; e < topo_.externals.size(); ++e) {
        links_[ext_tx(e)] = LinkState{topo_.externals[e].link_bps, 0};
        links_[ext_rx(e)] = LinkState{topo_.externals[e].link_bps, 0};
    }
    for (std::size_t v = 0; v < topo_.vms.size(); ++v) {
        double cap = vm_usable(v) ? topo_.vms[v].nic_bps : 0.0;
        links_[vm_tx(v)] = LinkState{cap, 0};
        links_[vm_rx(v)] = LinkState{cap, 0};
    }
    vr_rx_bytes_.resize(topo_.vrs.size(), 0.0);
    vr_tx_bytes_.resize(topo_.vrs.size(), 0.0);
    qos_last_.resize(topo_.vrs.size(), {0.0, 0.0});

    if (entities_.empty()) {
        for (std::size_t h = 0; h < topo_.hosts.size(); ++h)
            entities_.push_back(EntityRef{EntityType::Host, h});
        for (std::size_t e = 0; e < topo_.externals.size(); ++e)
            entities_.push_back(EntityRef{EntityType::External, e});
    }
    std::size_t have_vm = 0, have_vr = 0;
    for (const auto& e : entities_) {
        have_vm += e.type == EntityType::Vm;
        have_vr += e.type == EntityType::Vr;
    }
    for (std::size_t v = have_vm; v < topo_.vms.size(); ++v)
        entities_.push_back(EntityRef{EntityType::Vm, v});
    for (std::size_t r = have_vr; r < topo_.vrs.size(); ++r)
        entities_.push_back(EntityRef{EntityType::Vr, r});
}

std::string World::entity_name(const EntityRef& e) const
{
    switch (e.type) {
    case EntityType::Host: return topo_.hosts.at(e.index).name;
    case EntityType::External: return topo_.externals.at(e.index).name;
    case EntityType::Vm: return topo_.vms.at(e.index).name;
    case EntityType::Vr: return topo_.vrs.at(e.index).name;
    }
    return {};
}

std::optional<std::size_t> World::find_entity(EntityType type, const std::string& name) const
{
    std::string real = name;
    if (type == EntityType::Vr) {
        auto alias = vr_aliases_.find(name);
        if (alias != vr_aliases_.end())
            real = alias->second;
    }
    for (std::size_t i = 0; i < entities_.size(); ++i)
        if (entities_[i].type == type && entity_name(entities_[i]) == real)
            return i;
    return std::nullopt;
}

void World::at(SimTime when, std::function<void()> fn, std::uint64_t rank)
{
    sim_.schedule_at(
        when,
        [this, fn = std::move(fn)] {
            advance();
            fn();
            refresh();
        },
        0, rank);
}

void World::after(SimTime delay, std::function<void()> fn, std::uint64_t rank)
{
    at(sim_.now() + delay, std::move(fn), rank);
}

void World::wake_at(SimTime t)
{
    if (t <= sim_.now() || !wakeups_.insert(t).second)
        return;
    at(t, [this, t] { wakeups_.erase(t); });
}

void World::advance()
{
    const SimTime now = sim_.now();
    const SimTime dt = now - last_account_;
    if (dt > 0 && !demands_.empty()) {
        account(alloc_, demands_, dt, link_bytes_, [this](std::size_t i, double bytes) {
            const FlowState& f = flows_[demand_flow_[i]];
            if (f.g) {
                vr_rx_bytes_[*f.g] += bytes;
                vr_tx_bytes_[*f.g] += bytes;
            }
            if (f.p && f.p != f.g) {
                vr_rx_bytes_[*f.p] += bytes;
                vr_tx_bytes_[*f.p] += bytes;
            }
        });
    }
    last_account_ = now;
}

ArpResolver& World::resolver(Owner owner)
{
    if (owner.kind == PortKind::Vm)
        return vm_stacks_.at(owner.index).arp();
    return vr_states_.at(owner.index).arp();
}

bool World::owner_usable(Owner owner) const
{
    return owner.kind == PortKind::Vm ? vm_usable(owner.index) : vr_usable(owner.index);
}

std::optional<MacAddr> World::ensure(Owner owner, Ip4Addr target)
{
    if (!owner_usable(owner))
        return std::nullopt;
    ArpResolver& r = resolver(owner);
    if (auto mac = r.lookup(target, sim_.now())) {
        wake_at(*r.expires_at(target));
        return mac;
    }
    if (!r.pending(target))
        send_request(owner, target);
    return resolver(owner).usable(target);
}

void World::send_request(Owner owner, Ip4Addr target)
{
    ArpResolver& r = resolver(owner);
    const ArpFrame request = r.start_request(target, sim_.now());
    const std::uint32_t seq = request.seq;
    const SimTime retry = r.config().retry;
    count("arp.requests");

    HostId host;
    TenantId tenant;
    if (owner.kind == PortKind::Vm) {
        host = topo_.vms[owner.index].host;
        tenant = topo_.vms[owner.index].tenant;
    } else {
        host = topo_.vrs[owner.index].host;
        tenant = topo_.vrs[owner.index].tenant;
    }
    emit(host, tenant, PortId{owner.kind, static_cast<std::uint32_t>(owner.index)}, request);

    // An unanswered request is abandoned after the retry interval; the next
    // refresh re-issues it with a fresh seq if a flow still needs it.
    after(retry, [this, owner, target, seq] {
        ArpResolver& rr = resolver(owner);
        if (rr.pending_seq(target) != seq)
            return;
        rr.cancel(target);
        count("arp.retries");
        // Every remote VR filtered or none answered: the VM keeps retrying.
        if (topo_.mode == NetMode::Eywa && owner.kind == PortKind::Vm) {
            const auto& vm = topo_.vms[owner.index];
            const AgentState* agent = topo_.agent(vm.host, vm.tenant);
            if (target == topo_.tenant(vm.tenant).gateway_ip && agent && agent->mode() == AgentMode::Orphan) {
                count("arp.gateway_starved");
                anomaly("gateway resolution starved for VM '" + vm.name + "'");
            }
        }
    });
}

std::optional<std::size_t> World::vr_for_gateway_mac(TenantId tenant, MacAddr mac) const
{
    if (topo_.mode == NetMode::Mvrrp) {
        for (const auto& g : groups_) {
            if (g.tenant == tenant && g.virtual_mac == mac) {
                auto m = vrrp_master(g);
                if (!m)
                    return std::nullopt;
                return g.members[*m].vr;
            }
        }
    }
    auto r = topo_.find_vr_by_mac(mac);
    if (!r || topo_.vrs[*r].tenant != tenant)
        return std::nullopt;
    return r;
}

std::optional<std::size_t> World::vr_for_public_ip(Ip4Addr ip) const
{
    if (topo_.mode == NetMode::Mvrrp) {
        for (const auto& g : groups_) {
            if (std::find(g.public_ips.begin(), g.public_ips.end(), ip) != g.public_ips.end()) {
                auto m = vrrp_master(g);
                if (!m)
                    return std::nullopt;
                return g.members[*m].vr;
            }
        }
        return std::nullopt;
    }
    return topo_.find_vr_by_public_ip(ip);
}

std::optional<std::size_t> World::gateway_of(std::size_t v)
{
    const Vm& vm = topo_.vms[v];
    auto mac = ensure(Owner{PortKind::Vm, v}, vm_stacks_[v].gateway_ip());
    if (!mac)
        return std::nullopt;
    auto g = vr_for_gateway_mac(vm.tenant, *mac);
    if (!g || !vr_usable(*g))
        return std::nullopt;
    if (!ensure(Owner{PortKind::Vr, *g}, vm.ip))
        return std::nullopt;
    return g;
}

bool World::bind_snat(FlowState& f, std::size_t g)
{
    if (f.snat_vr == g && f.snat_out)
        return true;
    if (f.snat_vr)
        vr_states_[*f.snat_vr].snat_release(f.frame);
    f.snat_vr.reset();
    f.snat_out.reset();
    auto out = vr_states_[g].snat_forward(f.frame);
    if (!out)
        return false;
    f.snat_vr = g;
    f.snat_out = out;
    return true;
}

bool World::bind_dnat(FlowState& f, std::size_t p)
{
    if (f.dnat_vr == p && f.member)
        return true;
    if (f.dnat_vr && f.dnat_in)
        vr_states_[*f.dnat_vr].dnat_release(*f.dnat_in);
    f.dnat_vr.reset();
    f.dnat_in.reset();
    f.member.reset();
    DataFrame in = f.kind == FlowKind::EastWest && f.snat_out ? *f.snat_out : f.frame;
    auto r = vr_states_[p].dnat_forward(in);
    if (!r)
        return false;
    f.dnat_vr = p;
    f.dnat_in = in;
    f.member = r->member;
    return true;
}

void World::release_bindings(FlowState& f)
{
    if (f.snat_vr)
        vr_states_[*f.snat_vr].snat_release(f.frame);
    if (f.dnat_vr && f.dnat_in)
        vr_states_[*f.dnat_vr].dnat_release(*f.dnat_in);
    f.snat_vr.reset();
    f.snat_out.reset();
    f.dnat_vr.reset();
    f.dnat_in.reset();
    f.member.reset();
}

bool World::route(FlowState& f)
{
    f.ready = false;
    f.path.clear();
    f.hops = 0;
    f.g.reset();
    f.p.reset();
    if (!f.active)
        return false;

    auto hop = [&](HostId from, HostId to) {
        if (from == to)
            return;
        f.path.push_back(host_up(from));
        f.path.push_back(host_down(to));
        f.hops += 2;
    };
    auto member_leg = [&](std::size_t p) -> bool {
        if (!bind_dnat(f, p))
            return false;
        const std::size_t m = *f.member;
        if (!vm_usable(m) || !ensure(Owner{PortKind::Vr, p}, topo_.vms[m].ip))
            return false;
        hop(topo_.vrs[p].host, topo_.vms[m].host);
        f.path.push_back(vm_rx(m));
        return true;
    };

    switch (f.kind) {
    case FlowKind::Outbound: {
        if (!vm_usable(f.src))
            return false;
        auto g = gateway_of(f.src);
        if (!g || !bind_snat(f, *g))
            return false;
        f.g = g;
        f.path.push_back(vm_tx(f.src));
        hop(topo_.vms[f.src].host, topo_.vrs[*g].host);
        f.path.push_back(host_up(topo_.vrs[*g].host));
        f.path.push_back(ext_rx(f.dst));
        f.hops += 2;
        break;
    }
    case FlowKind::Inbound: {
        auto p = vr_for_public_ip(f.public_ip);
        if (!p || !vr_usable(*p))
            return false;
        f.p = p;
        f.path.push_back(ext_tx(f.src));
        f.path.push_back(host_down(topo_.vrs[*p].host));
        f.hops += 2;
        if (!member_leg(*p))
            return false;
        break;
    }
    case FlowKind::EastWest: {
        if (!vm_usable(f.src))
            return false;
        auto g = gateway_of(f.src);
        if (!g || !bind_snat(f, *g))
            return false;
        f.g = g;
        auto p = vr_for_public_ip(f.public_ip);
        if (!p || !vr_usable(*p))
            return false;
        f.p = p;
        f.path.push_back(vm_tx(f.src));
        hop(topo_.vms[f.src].host, topo_.vrs[*g].host);
        hop(topo_.vrs[*g].host, topo_.vrs[*p].host);
        if (!member_leg(*p))
            return false;
        break;
    }
    case FlowKind::Private: {
        if (!vm_usable(f.src) || !vm_usable(f.dst))
            return false;
        auto mac = ensure(Owner{PortKind::Vm, f.src}, topo_.vms[f.dst].ip);
        if (!mac || *mac != topo_.vms[f.dst].mac)
            return false;
        f.path.push_back(vm_tx(f.src));
        hop(topo_.vms[f.src].host, topo_.vms[f.dst].host);
        f.path.push_back(vm_rx(f.dst));
        break;
    }
    }
    f.ready = true;
    return true;
}

void World::refresh()
{
    if (!running_)
        return;
    grow_tables();
    const SimTime now = sim_.now();

    demands_.clear();
    demand_flow_.clear();
    for (std::size_t i = 0; i < flows_.size(); ++i) {
        FlowState& f = flows_[i];
        route(f);
        if (f.active && (f.kind == FlowKind::Outbound || f.kind == FlowKind::EastWest)) {
            auto& hist = route_history_[f.spec.id];
            RoutePoint pt{now, f.ready ? f.g : std::nullopt, f.ready ? f.hops : 0};
            if (!hist.empty() && hist.back().time == now)
                hist.pop_back();
            if (hist.empty() || hist.back().gateway_vr != pt.gateway_vr || hist.back().hops != pt.hops)
                hist.push_back(pt);
        }
        if (f.ready) {
            demands_.push_back(FlowDemand{f.frame.flow_id, f.path, f.spec.demand_bps});
            demand_flow_.push_back(i);
        }
    }
    alloc_ = solve_flows(demands_, links_);
    count("flows.solves");

    std::vector<double> rates(flows_.size(), 0.0);
    for (std::size_t d = 0; d < demand_flow_.size(); ++d)
        rates[demand_flow_[d]] = alloc_.rate_bps[d];
    for (std::size_t i = 0; i < flows_.size(); ++i) {
        FlowState& f = flows_[i];
        if (!f.active)
            continue;
        f.rate = rates[i];
        auto& hist = rate_history_[f.spec.id];
        // Several solves at one instant collapse into the last one.
        if (!hist.empty() && hist.back().time == now)
            hist.pop_back();
        if (hist.empty() || std::fabs(hist.back().rate_bps - f.rate) > 1e-6 * std::max(1.0, f.rate))
            hist.push_back(RatePoint{now, f.rate});
    }
}

void World::start_flow(const FlowSpec& spec)
{
    for (const auto& f : flows_)
        if (f.spec.id == spec.id)
            throw ValidationError("duplicate flow id '" + spec.id + "'");

    FlowState f;
    f.spec = spec;
    auto ephemeral = [this] {
        for (;;) {
            auto port = static_cast<std::uint16_t>(32768 + rng_() % 28232);
            if (used_ephemeral_.insert(port).second)
                return port;
        }
    };

    if (auto v = topo_.find_vm(spec.src)) {
        f.src = *v;
        const Vm& vm = topo_.vms[*v];
        f.frame.src_ip = vm.ip;
        f.frame.l2_src = vm.mac;
        if (auto w = topo_.find_vm(spec.dst)) {
            if (topo_.vms[*w].tenant != vm.tenant)
                throw ValidationError("flow '" + spec.id + "' joins VMs of different tenants; use a public IP");
            f.kind = FlowKind::Private;
            f.dst = *w;
            f.frame.dst_ip = topo_.vms[*w].ip;
            f.frame.direction = TrafficDirection::Private;
        } else if (auto e = topo_.find_external(spec.dst)) {
            f.kind = FlowKind::Outbound;
            f.dst = *e;
            f.frame.dst_ip = topo_.externals[*e].ip;
            f.frame.direction = TrafficDirection::NorthSouth;
        } else {
            f.kind = FlowKind::EastWest;
            f.public_ip = Ip4Addr::parse(spec.dst);
            if (!topo_.find_vr_by_public_ip(f.public_ip))
                throw ValidationError("flow '" + spec.id + "' targets unknown public IP " + spec.dst);
            f.frame.dst_ip = f.public_ip;
            f.frame.direction = TrafficDirection::EastWest;
        }
    } else if (auto e = topo_.find_external(spec.src)) {
        f.kind = FlowKind::Inbound;
        f.src = *e;
        f.public_ip = Ip4Addr::parse(spec.dst);
        if (!topo_.find_vr_by_public_ip(f.public_ip))
            throw ValidationError("flow '" + spec.id + "' targets unknown public IP " + spec.dst);
        f.frame.src_ip = topo_.externals[*e].ip;
        f.frame.dst_ip = f.public_ip;
        f.frame.direction = TrafficDirection::NorthSouth;
    } else {
        throw ValidationError("flow '" + spec.id + "' has unknown source '" + spec.src + "'");
    }
    if (!(spec.demand_bps > 0.0))
        throw ValidationError("flow '" + spec.id + "' has non-positive demand");
    f.frame.src_port = ephemeral();
    f.frame.dst_port = spec.dst_port;
    f.frame.flow_id = flows_.size() + 1;
    flows_.push_back(std::move(f));
    count("flows.started");
}

void World::stop_flow(const std::string& id)
{
    for (auto& f : flows_) {
        if (f.spec.id == id && f.active) {
            release_bindings(f);
            f.active = false;
            f.rate = 0.0;
            auto& hist = rate_history_[id];
            if (!hist.empty() && hist.back().time == sim_.now())
                hist.pop_back();
            hist.push_back(RatePoint{sim_.now(), 0.0});
            count("flows.stopped");
            return;
        }
    }
    throw ValidationError("stop_flow: no active flow '" + id + "'");
}

void World::kill_vr(const std::string& name)
{
    const std::size_t r = vr_index(name);
    Vr& vr = topo_.vrs[r];
    if (!vr.alive)
        return;
    vr.alive = false;
    vr_states_[r].reset_state();
    for (auto& f : flows_) {
        if (f.snat_vr == r) {
            f.snat_vr.reset();
            f.snat_out.reset();
        }
        if (f.dnat_vr == r) {
            f.dnat_vr.reset();
            f.dnat_in.reset();
            f.member.reset();
        }
    }
    count("vr.kills");
    if (topo_.mode == NetMode::Mvrrp) {
        for (std::size_t gi = 0; gi < groups_.size(); ++gi) {
            auto& g = groups_[gi];
            for (std::size_t m = 0; m < g.members.size(); ++m) {
                if (g.members[m].vr == r) {
                    vrrp_set_alive(g, m, false, sim_.now());
                    vrrp_changed(gi, {});
                }
            }
        }
    }
}

void World::start_vr(const std::string& name)
{
    const std::size_t r = vr_index(name);
    Vr& vr = topo_.vrs[r];
    if (vr.attached && vr.alive)
        return;
    if (!topo_.host(vr.host).alive)
        throw ValidationError("start_vr: host of '" + vr.name + "' is down");
    PlacementResult placed = topo_.attach_vr(r, sim_.now());
    sync_ports();
    grow_tables();
    count("vr.starts");
    if (placed.garp)
        emit(vr.host, vr.tenant, PortId{PortKind::Vr, static_cast<std::uint32_t>(r)}, *placed.garp);
    if (topo_.mode == NetMode::Mvrrp) {
        for (std::size_t gi = 0; gi < groups_.size(); ++gi) {
            auto& g = groups_[gi];
            for (std::size_t m = 0; m < g.members.size(); ++m) {
                if (g.members[m].vr != r)
                    continue;
                vrrp_set_alive(g, m, true, sim_.now());
                std::vector<std::size_t> promoted;
                if (g.members[m].role == VrrpRole::Master)
                    promoted.push_back(m);
                vrrp_changed(gi, promoted);
            }
        }
    }
}

void World::kill_host(const std::string& name)
{
    const HostId h{static_cast<std::uint32_t>(host_index(name))};
    Host& host = topo_.host(h);
    if (!host.alive)
        return;
    for (std::size_t r = 0; r < topo_.vrs.size(); ++r)
        if (topo_.vrs[r].host == h && topo_.vrs[r].alive)
            kill_vr(topo_.vrs[r].name);
    host.alive = false;
    for (auto& v : vteps_)
        v.forget_host(h);
    count("host.kills");
}

void World::migrate_vm(const std::string& name, const std::string& host_name)
{
    const std::size_t v = vm_index(name);
    const HostId dst{static_cast<std::uint32_t>(host_index(host_name))};
    Vm& vm = topo_.vms[v];
    if (!vm.active)
        throw ValidationError("migrate_vm: VM '" + name + "' is not running");
    if (!topo_.host(dst).alive)
        throw ValidationError("migrate_vm: destination host '" + host_name + "' is down");
    for (std::size_t i = 0; i < topo_.vms.size(); ++i) {
        const Vm& other = topo_.vms[i];
        if (i != v && other.active && other.tenant == vm.tenant && other.ip == vm.ip)
            throw ValidationError("migrate_vm: address " + vm.ip.str() + " already in use");
    }
    if (vm.host == dst)
        return;
    topo_.detach_vm(v);
    topo_.vms[v].host = dst;
    topo_.attach_vm(v, sim_.now());
    sync_ports();
    count("vm.migrations");
}

void World::add_vm(const std::string& tenant, const VmSpec& spec)
{
    if (auto existing = topo_.find_vm(spec.name)) {
        if (topo_.vms[*existing].active)
            throw ValidationError("add_vm: VM '" + spec.name + "' is already running");
        topo_.attach_vm(*existing, sim_.now());
    } else {
        auto tid = topo_.find_tenant(tenant);
        if (!tid)
            throw ValidationError("add_vm: unknown tenant '" + tenant + "'");
        const HostId h{static_cast<std::uint32_t>(host_index(spec.host))};
        place_instance(topo_, *tid, spec, h, sim_.now());
        const std::size_t v = topo_.vms.size() - 1;
        if (topo_.mode == NetMode::Mvrrp)
            assign_mvrrp_gateway(v);
        const Vm& vm = topo_.vms[v];
        vm_stacks_.emplace_back(vm.ip, vm.mac, vm.gateway_ip, config_.vm_arp);
    }
    sync_ports();
    grow_tables();
    count("vm.adds");
}

void World::remove_vm(const std::string& name)
{
    const std::size_t v = vm_index(name);
    if (!topo_.vms[v].active)
        return;
    topo_.detach_vm(v);
    vm_stacks_[v].arp().clear();
    sync_ports();
    count("vm.removes");
}

void World::emit(HostId host, TenantId tenant, PortId ingress, const ArpFrame& frame)
{
    if (!topo_.host(host).alive)
        return;
    VsiState* v = vsi(host, tenant);
    if (!v)
        return;
    if (ingress.kind == PortKind::Vr) {
        if (auto* a = topo_.agent(host, tenant))
            a->observe(frame, Direction::Outbound, sim_.now());
    }
    count("arp.frames");
    const std::uint64_t rank = frame.is_reply() ? frame.sender_mac.value + 1 : 0;
    for (const PortId& p : v->forward(frame.l2_src, frame.l2_dst, ingress)) {
        if (p.kind == PortKind::Vtep) {
            vtep_out(host, tenant, frame);
            continue;
        }
        after(config_.local_delay, [this, host, tenant, p, frame] { deliver_local(host, tenant, p, frame); }, rank);
    }
}

void World::deliver_local(HostId host, TenantId tenant, PortId port, const ArpFrame& frame)
{
    if (!topo_.host(host).alive)
        return;
    const SimTime now = sim_.now();
    if (port.kind == PortKind::Vm) {
        const std::size_t v = port.index;
        const Vm& vm = topo_.vms.at(v);
        if (!vm.active || vm.host != host || vm.tenant != tenant)
            return;
        VmStack& stack = vm_stacks_[v];
        ArpOutcome out = stack.handle_arp(frame, now);
        if (frame.is_reply() && frame.l2_dst == vm.mac && frame.sender_ip == stack.gateway_ip()) {
            auto it = gateway_replies_.try_emplace({v, frame.seq}, GatewayReplyStat{now, 0}).first;
            ++it->second.count;
            if (out.learned) {
                gateway_learns_[v].push_back(GatewayLearn{now, frame.sender_ip, frame.sender_mac, host});
                const AgentState* a = topo_.agent(host, tenant);
                if (a && a->mode() == AgentMode::Normal && a->local_vr() && *a->local_vr() != frame.sender_mac) {
                    count("arp.locality_violations");
                    anomaly("VM " + vm.name + " bound to non-local VR " + frame.sender_mac.str() +
                            " while its host is in Normal mode");
                }
            }
        }
        if (out.conflict)
            count("arp.garp_conflicts");
        if (out.reply)
            emit(host, tenant, port, *out.reply);
        return;
    }
    if (port.kind == PortKind::Vr) {
        const std::size_t r = port.index;
        const Vr& vr = topo_.vrs.at(r);
        if (!vr.attached || !vr.alive || vr.host != host)
            return;
        ArpOutcome out = vr_states_[r].handle_arp(frame, now);
        if (out.conflict)
            count("arp.garp_conflicts");
        if (out.reply)
            emit(host, tenant, port, *out.reply);
    }
}

ArpKind World::baseline_kind(TenantId tenant, const ArpFrame& frame) const
{
    // Baseline VRs may each own a distinct gateway address, so classify
    // against whichever side of the exchange is a VR address.
    Ip4Addr gw = topo_.tenant(tenant).gateway_ip;
    for (const auto& vr : topo_.vrs) {
        if (vr.tenant != tenant)
            continue;
        if (vr.gateway_ip == frame.target_ip || vr.gateway_ip == frame.sender_ip) {
            gw = vr.gateway_ip;
            break;
        }
    }
    return classify(frame, gw);
}

void World::log_decision(HostId host, TenantId tenant, Direction dir, const ArpFrame& frame, const VtepResult& r,
                         AgentState* agent, std::size_t anomalies_before)
{
    ArpEvent ev;
    ev.time = sim_.now();
    ev.host = topo_.host(host).name;
    ev.direction = dir;
    ev.sender_ip = frame.sender_ip;
    ev.target_ip = frame.target_ip;
    if (agent && r.decision) {
        ev.kind = std::string(to_string(*r.kind));
        ev.rule_id = r.decision->rule_id;
        ev.action = std::string(to_string(r.effective));
        count("rule:" + ev.rule_id + ":" + ev.action);
        if (r.effective == RuleAction::NotApplicable)
            count("arp.na_decisions");
        const auto& list = agent->anomalies();
        for (std::size_t i = anomalies_before; i < list.size(); ++i)
            anomaly(ev.host + ": " + list[i]);
    } else {
        ev.kind = std::string(to_string(baseline_kind(tenant, frame)));
        ev.rule_id = "-";
        ev.action = "forward";
    }
    arp_events_.push_back(std::move(ev));
}

void World::vtep_out(HostId host, TenantId tenant, const ArpFrame& frame)
{
    AgentState* agent = topo_.agent(host, tenant);
    const std::size_t before = agent ? agent->anomalies().size() : 0;
    VtepResult r = vtep_forward(agent, frame, Direction::Outbound, sim_.now());
    log_decision(host, tenant, Direction::Outbound, frame, r, agent, before);
    const std::string rule = r.decision ? r.decision->rule_id : std::string("-");
    if (r.reply)
        emit(host, tenant, PortId::vtep(), *r.reply);
    if (r.forward)
        tunnel(host, tenant, frame, rule, std::nullopt);
}

void World::vtep_in(HostId host, const TunnelFrame& tf)
{
    if (!topo_.host(host).alive)
        return;
    auto t = tenant_by_vni_.find(tf.vni.value);
    if (t == tenant_by_vni_.end())
        return;
    const TenantId tenant = t->second;
    if (!vsi(host, tenant))
        return;
    const Frame& inner = decapsulate(tf);
    vteps_[host.value].learn(tf.vni, l2_source(inner), tf.src_vtep_host);
    const auto* arp = std::get_if<ArpFrame>(&inner);
    if (!arp)
        return;

    AgentState* agent = topo_.agent(host, tenant);
    const std::size_t before = agent ? agent->anomalies().size() : 0;
    VtepResult r = vtep_forward(agent, inner, Direction::Inbound, sim_.now());
    if (agent)
        log_decision(host, tenant, Direction::Inbound, *arp, r, agent, before);

    if (r.decision && r.decision->rule_id == "12") {
        auto key = std::make_tuple(host, arp->target_mac, arp->seq);
        auto it = flux_index_.find(key);
        if (it == flux_index_.end()) {
            it = flux_index_.emplace(key, flux_tallies_.size()).first;
            flux_tallies_.push_back(FluxTally{host, arp->target_mac, arp->seq, sim_.now(), 0, 0});
        }
        FluxTally& tally = flux_tallies_[it->second];
        if (r.forward)
            ++tally.passed;
        else
            ++tally.filtered;
    }
    if (r.reply) {
        const std::string rule = r.decision ? r.decision->rule_id : std::string("-");
        tunnel(host, tenant, *r.reply, rule, tf.src_vtep_host);
    }
    if (r.forward)
        emit(host, tenant, PortId::vtep(), *arp);
}

void World::tunnel(HostId src, TenantId tenant, const ArpFrame& frame, const std::string& rule_id,
                   std::optional<HostId> forced)
{
    const Vni vni = topo_.tenant(tenant).vni;
    std::vector<HostId> targets;
    TunnelDst dst = HeadEndReplication{};
    if (forced) {
        dst = *forced;
        targets.push_back(*forced);
    } else if (!frame.l2_dst.is_broadcast()) {
        if (auto h = vteps_[src.value].lookup(vni, frame.l2_dst)) {
            dst = *h;
            targets.push_back(*h);
        }
    }
    if (targets.empty()) {
        for (HostId h : topo_.hosts_with_vsi(tenant))
            if (h != src)
                targets.push_back(h);
    }

    TunnelFrame tf;
    try {
        tf = encapsulate(frame, vni, src, dst);
    } catch (const ProtocolError& e) {
        count("arp.encap_rejects");
        anomaly(e.what());
        return;
    }

    count("arp.tunneled");
    if (frame.is_broadcast()) {
        count("arp.tunneled_broadcast");
        if (topo_.mode == NetMode::Eywa && !allowed_broadcast_rule(rule_id))
            count("arp.bad_broadcast_rule");
    }
    if (frame.is_garp())
        count("arp.tunneled_garp");

    const SimTime src_latency = topo_.host(src).latency;
    const std::uint64_t rank = frame.is_reply() ? frame.sender_mac.value + 1 : 0;
    for (HostId h : targets) {
        if (!topo_.host(h).alive)
            continue;
        const SimTime latency = src_latency + topo_.host(h).latency;
        after(latency, [this, h, tf] { vtep_in(h, tf); }, rank);
    }
}

void World::deliver_probe(HostId host, TenantId tenant, const ArpFrame& probe)
{
    std::optional<ArpFrame> reply;
    for (std::size_t r = 0; r < topo_.vrs.size() && !reply; ++r) {
        if (topo_.vrs[r].host == host && topo_.vrs[r].tenant == tenant && topo_.vrs[r].mac == probe.l2_dst &&
            vr_usable(r) && topo_.vrs[r].attached)
            reply = vr_states_[r].handle_arp(probe, sim_.now()).reply;
    }
    for (std::size_t v = 0; v < topo_.vms.size() && !reply; ++v) {
        if (topo_.vms[v].host == host && topo_.vms[v].tenant == tenant && topo_.vms[v].mac == probe.l2_dst &&
            vm_usable(v))
            reply = vm_stacks_[v].handle_arp(probe, sim_.now()).reply;
    }
    if (!reply)
        return;
    sim_.schedule(2 * config_.local_delay, [this, host, tenant, reply = *reply] {
        AgentState* a = topo_.agent(host, tenant);
        if (!a || !topo_.host(host).alive)
            return;
        const AgentMode before = a->mode();
        a->on_probe_reply(reply, sim_.now());
        if (before == AgentMode::Orphan && a->mode() == AgentMode::Normal) {
            count("agent.normal_transitions");
            if (auto r = topo_.local_vr(host, tenant)) {
                const Vr& vr = topo_.vrs[*r];
                emit(host, tenant, PortId{PortKind::Vr, static_cast<std::uint32_t>(*r)},
                     make_garp(vr.gateway_ip, vr.mac));
            }
        }
    });
}

void World::agent_tick(HostId host)
{
    Host& h = topo_.host(host);
    if (h.alive) {
        for (auto& [tenant, agent] : h.agents) {
            const AgentMode before = agent.mode();
            std::vector<ArpFrame> probes = agent.monitor_tick(sim_.now());
            if (before == AgentMode::Normal && agent.mode() == AgentMode::Orphan) {
                count("agent.orphan_transitions");
                anomaly(h.name + ": local VR missed " + std::to_string(agent.config().miss_threshold) +
                        " probes, switching to orphan mode");
            }
            count("agent.probes", probes.size());
            for (const auto& p : probes)
                deliver_probe(host, tenant, p);
        }
    }
    sim_.schedule(topo_.agent_config.health_interval, [this, host] { agent_tick(host); });
}

void World::take_sample()
{
    advance();
    Sample s;
    s.time = sim_.now();
    s.bytes.reserve(entities_.size());
    for (const auto& e : entities_) {
        switch (e.type) {
        case EntityType::Host:
            s.bytes.push_back({link_bytes_[host_up(HostId{static_cast<std::uint32_t>(e.index)})],
                               link_bytes_[host_down(HostId{static_cast<std::uint32_t>(e.index)})]});
            break;
        case EntityType::External:
            s.bytes.push_back({link_bytes_[ext_tx(e.index)], link_bytes_[ext_rx(e.index)]});
            break;
        case EntityType::Vm:
            s.bytes.push_back({link_bytes_[vm_tx(e.index)], link_bytes_[vm_rx(e.index)]});
            break;
        case EntityType::Vr:
            s.bytes.push_back({vr_tx_bytes_[e.index], vr_rx_bytes_[e.index]});
            break;
        }
    }
    samples_.push_back(std::move(s));

    for (std::size_t r = 0; r < topo_.vrs.size(); ++r) {
        const double rx = vr_rx_bytes_[r] - qos_last_[r][0];
        const double tx = vr_tx_bytes_[r] - qos_last_[r][1];
        qos_last_[r] = {vr_rx_bytes_[r], vr_tx_bytes_[r]};
        const Vr& vr = topo_.vrs[r];
        if (AgentState* a = topo_.agent(vr.host, vr.tenant); a && vr_usable(r))
            a->update_qos(std::max(rx, tx), config_.sampling_interval, topo_.host(vr.host).link_bps);
    }
}

void World::refresh_vr_answers(std::size_t r)
{
    Vr& vr = topo_.vrs[r];
    VrState& state = vr_states_[r];
    if (topo_.mode != NetMode::Mvrrp) {
        state.set_answers({{vr.gateway_ip, vr.mac}});
        state.arp().set_identity(vr.gateway_ip, vr.mac);
        return;
    }
    std::map<Ip4Addr, MacAddr> answers;
    std::optional<std::pair<Ip4Addr, MacAddr>> identity;
    for (const auto& g : groups_) {
        if (g.tenant != vr.tenant)
            continue;
        auto m = vrrp_master(g);
        if (!m || g.members[*m].vr != r)
            continue;
        answers[g.virtual_ip] = g.virtual_mac;
        const bool own = g.members[g.owner].vr == r;
        if (!identity || own)
            identity = std::make_pair(g.virtual_ip, g.virtual_mac);
    }
    if (!identity)
        identity = std::make_pair(vr.gateway_ip, vr.mac);
    state.set_answers(std::move(answers));
    state.arp().set_identity(identity->first, identity->second);
}

void World::assign_mvrrp_gateway(std::size_t v)
{
    Vm& vm = topo_.vms[v];
    std::vector<GatewayCandidate> pool;
    for (const auto& g : groups_) {
        if (g.tenant != vm.tenant)
            continue;
        const HostId owner_host = topo_.vrs[g.members[g.owner].vr].host;
        const SimTime latency =
            owner_host == vm.host ? 0 : topo_.host(vm.host).latency + topo_.host(owner_host).latency;
        pool.push_back(GatewayCandidate{g.virtual_ip, owner_host, latency});
    }
    vm.gateway_ip = assign_gateway(config_.vrrp.policy, vm.host, pool, rr_cursor_[vm.tenant]);
    initial_assignment_[v] = vm.gateway_ip;
}

void World::vrrp_group_tick(std::size_t gi)
{
    VrrpGroup& g = groups_[gi];
    std::vector<std::size_t> promoted;
    const auto adverts = vrrp_tick(g, sim_.now(), config_.vrrp, &promoted);
    if (!promoted.empty()) {
        advance();
        vrrp_changed(gi, promoted);
        refresh();
    }
    for (const auto& ad : adverts) {
        count("vrrp.adverts");
        count("vrrp.advert_bytes", config_.vrrp.advert_bytes);
        const HostId from = topo_.vrs[g.members[ad.from].vr].host;
        for (std::size_t m = 0; m < g.members.size(); ++m) {
            if (m == ad.from)
                continue;
            const HostId to = topo_.vrs[g.members[m].vr].host;
            const SimTime latency = from == to ? config_.local_delay
                                               : topo_.host(from).latency + topo_.host(to).latency;
            sim_.schedule(latency, [this, gi, m, ad] { vrrp_deliver(gi, m, ad); });
        }
    }
    sim_.schedule(config_.vrrp.advert_interval, [this, gi] { vrrp_group_tick(gi); });
}

void World::vrrp_deliver(std::size_t gi, std::size_t member, VrrpAdvert advert)
{
    VrrpGroup& g = groups_[gi];
    const VrrpMember& sender = g.members[advert.from];
    if (!sender.alive || !vr_usable(sender.vr))
        return;
    const VrrpRole before = g.members[member].role;
    vrrp_receive(g, member, advert, sim_.now());
    if (before != g.members[member].role) {
        advance();
        vrrp_changed(gi, {});
        refresh();
    }
    const SimTime wait = master_down_interval(config_.vrrp, g.members[member].priority);
    sim_.schedule(wait, [this, gi] { vrrp_check(gi); });
}

void World::vrrp_check(std::size_t gi)
{
    auto promoted = vrrp_expire(groups_[gi], sim_.now(), config_.vrrp);
    if (promoted.empty())
        return;
    advance();
    vrrp_changed(gi, promoted);
    refresh();
}

void World::vrrp_changed(std::size_t gi, const std::vector<std::size_t>& promoted)
{
    VrrpGroup& g = groups_[gi];
    for (std::size_t r = 0; r < topo_.vrs.size(); ++r)
        if (topo_.vrs[r].tenant == g.tenant)
            refresh_vr_answers(r);
    for (std::size_t m : promoted) {
        const std::size_t r = g.members[m].vr;
        count("vrrp.promotions");
        emit(topo_.vrs[r].host, g.tenant, PortId{PortKind::Vr, static_cast<std::uint32_t>(r)},
             make_garp(g.virtual_ip, g.virtual_mac));
    }
    std::size_t masters = 0;
    for (const auto& m : g.members)
        masters += m.alive && m.role == VrrpRole::Master;
    auto cur = vrrp_master(g);
    MasterPoint pt{sim_.now(), cur ? std::optional<std::size_t>(g.members[*cur].vr) : std::nullopt, masters};
    auto& hist = master_history_[gi];
    if (hist.empty() || hist.back().master_vr != pt.master_vr || hist.back().masters != pt.masters)
        hist.push_back(pt);
}

void World::run(SimTime duration)
{
    if (duration < 0)
        throw ValidationError("duration must not be negative");
    running_ = true;
    grow_tables();
    Sample zero;
    zero.bytes.assign(entities_.size(), {0.0, 0.0});
    samples_.push_back(std::move(zero));

    const SimTime health = topo_.agent_config.health_interval;
    for (const auto& h : topo_.hosts) {
        const SimTime phase = static_cast<SimTime>(rng_() % 1000) * health / 1000;
        const HostId id = h.id;
        sim_.schedule_at(phase, [this, id] { agent_tick(id); });
    }
    const SimTime adv = config_.vrrp.advert_interval;
    for (std::size_t gi = 0; gi < groups_.size(); ++gi) {
        const SimTime phase = static_cast<SimTime>(rng_() % 900) * adv / 1000;
        sim_.schedule_at(phase, [this, gi] { vrrp_group_tick(gi); });
    }
    for (SimTime t = config_.sampling_interval; t <= duration; t += config_.sampling_interval)
        sim_.schedule_at(t, [this] { take_sample(); }, 0, ~std::uint64_t{0});
    at(0, [] {});

    sim_.run_until(duration);
    advance();
    running_ = false;
}

std::map<std::string, std::uint64_t> World::counters() const
{
    auto out = counters_;
    std::uint64_t snat = 0, dnat = 0, conflicts = 0;
    for (const auto& v : vr_states_) {
        snat += v.snat_drops();
        dnat += v.dnat_drops();
        conflicts += v.conflicts();
    }
    out["nat.snat_drops"] = snat;
    out["nat.dnat_drops"] = dnat;
    out["garp.conflicts"] = conflicts;
    std::size_t max_replies = 0;
    for (const auto& [key, stat] : gateway_replies_)
        max_replies = std::max(max_replies, stat.count);
    out["arp.max_gateway_replies_per_request"] = max_replies;
    out["anomalies"] = anomalies_.size();
    out["sim.events"] = sim_.executed();
    for (const char* k : {"arp.tunneled_garp", "arp.bad_broadcast_rule", "arp.na_decisions",
                          "arp.locality_violations", "arp.gateway_starved", "agent.orphan_transitions", "vrrp.adverts",
                          "vrrp.advert_bytes", "vrrp.promotions"})
        out.try_emplace(k, 0);
    return out;
}

double World::mean_rate(std::size_t entity, bool tx, SimTime t0, SimTime t1) const
{
    if (samples_.size() < 2 || entity >= entities_.size())
        return 0.0;
    const SimTime iv = config_.sampling_interval;
    auto snap = [&](SimTime t) {
        auto k = static_cast<std::size_t>(std::max<SimTime>(0, (t + iv / 2) / iv));
        return std::min(k, samples_.size() - 1);
    };
    const std::size_t k0 = snap(t0), k1 = snap(t1);
    if (k1 <= k0)
        return 0.0;
    const auto& a = samples_[k0];
    const auto& b = samples_[k1];
    if (entity >= a.bytes.size() || entity >= b.bytes.size())
        return 0.0;
    const int col = tx ? 0 : 1;
    return (b.bytes[entity][col] - a.bytes[entity][col]) * 8.0 / to_seconds(b.time - a.time);
}

const std::vector<RatePoint>& World::flow_rates(const std::string& flow) const
{
    static const std::vector<RatePoint> kEmpty;
    auto it = rate_history_.find(flow);
    return it == rate_history_.end() ? kEmpty : it->second;
}

const std::vector<RoutePoint>& World::flow_routes(const std::string& flow) const
{
    static const std::vector<RoutePoint> kEmpty;
    auto it = route_history_.find(flow);
    return it == route_history_.end() ? kEmpty : it->second;
}

const std::vector<GatewayLearn>& World::gateway_learns(std::size_t vm) const
{
    static const std::vector<GatewayLearn> kEmpty;
    auto it = gateway_learns_.find(vm);
    return it == gateway_learns_.end() ? kEmpty : it->second;
}

}  // namespace eywa
