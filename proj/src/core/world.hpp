#pragma once

#include "baselines.hpp"
#include "dataplane.hpp"
#include "net_model.hpp"
#include "simcore.hpp"

#include <array>
#include <functional>
#include <map>
#include <optional>
#include <random>
#include <set>
#include <string>
#include <tuple>
#include <vector>

namespace eywa {

struct WorldConfig {
    AgentConfig agent;
    ResolverConfig vm_arp;
    ResolverConfig vr_arp;
    VrrpConfig vrrp;
    SimTime sampling_interval = 100 * kMillisecond;
    SimTime local_delay = kMicrosecond;  // VSi hop between ports on one host
    std::uint64_t seed = 1;
};

// A fluid flow. `src` is a VM or external server name; `dst` is a VM name
// (private traffic), an external server name, or a public IP.
struct FlowSpec {
    std::string id;
    std::string src;
    std::string dst;
    double demand_bps = kUnbounded;
    std::uint16_t dst_port = 80;
};

struct ArpEvent {
    SimTime time = 0;
    std::string host;
    Direction direction = Direction::Outbound;
    std::string kind;
    std::string rule_id;
    std::string action;
    Ip4Addr sender_ip;
    Ip4Addr target_ip;
};

enum class EntityType : std::uint8_t { Host, External, Vm, Vr };
std::string_view to_string(EntityType t);

struct EntityRef {
    EntityType type = EntityType::Host;
    std::size_t index = 0;
};

struct Sample {
    SimTime time = 0;
    std::vector<std::array<double, 2>> bytes;  // cumulative (tx, rx) per entity
};

struct RatePoint {
    SimTime time = 0;
    double rate_bps = 0.0;
};

struct RoutePoint {
    SimTime time = 0;
    std::optional<std::size_t> gateway_vr;  // empty while the flow is down
    int hops = 0;
};

struct GatewayLearn {
    SimTime time = 0;
    Ip4Addr ip;
    MacAddr mac;
    HostId vm_host;
};

struct GatewayReplyStat {
    SimTime first = 0;
    std::size_t count = 0;
};

struct FluxTally {
    HostId host;
    MacAddr requester;
    std::uint32_t seq = 0;
    SimTime first_seen = 0;
    std::size_t passed = 0;
    std::size_t filtered = 0;
};

struct MasterPoint {
    SimTime time = 0;
    std::optional<std::size_t> master_vr;
    std::size_t masters = 0;
};

class World {
public:
    World(const TopologySpec& spec, const WorldConfig& config, std::map<std::string, std::string> vr_aliases = {});

    World(const World&) = delete;
    World& operator=(const World&) = delete;

    Simulator& sim() { return sim_; }
    const Topology& topology() const { return topo_; }
    Topology& topology() { return topo_; }
    const WorldConfig& config() const { return config_; }
    NetMode mode() const { return topo_.mode; }

    // Schedules `fn` at absolute time `when` with byte accounting brought up
    // to date before it runs and flows re-solved after.
    void at(SimTime when, std::function<void()> fn, std::uint64_t rank = 0);

    void run(SimTime duration);

    // Timeline actions; they act at the current simulated time.
    void start_flow(const FlowSpec& spec);
    void stop_flow(const std::string& id);
    void kill_vr(const std::string& name);
    void start_vr(const std::string& name);
    void kill_host(const std::string& name);
    void migrate_vm(const std::string& vm, const std::string& host);
    void add_vm(const std::string& tenant, const VmSpec& spec);  // activates a declared VM when `spec` only names it
    void remove_vm(const std::string& name);

    std::size_t vm_index(const std::string& name) const;
    std::size_t vr_index(const std::string& name) const;
    std::size_t host_index(const std::string& name) const;

    const VmStack& vm_stack(std::size_t vm) const { return vm_stacks_.at(vm); }
    const VrState& vr_state(std::size_t vr) const { return vr_states_.at(vr); }

    // Outputs.
    const std::vector<ArpEvent>& arp_events() const { return arp_events_; }
    const std::vector<EntityRef>& entities() const { return entities_; }
    std::string entity_name(const EntityRef& e) const;
    std::optional<std::size_t> find_entity(EntityType type, const std::string& name) const;
    const std::vector<Sample>& samples() const { return samples_; }
    std::map<std::string, std::uint64_t> counters() const;
    const std::vector<std::string>& anomalies() const { return anomalies_; }

    // Mean rate over [t0, t1] snapped to sample boundaries.
    double mean_rate(std::size_t entity, bool tx, SimTime t0, SimTime t1) const;

    const std::vector<RatePoint>& flow_rates(const std::string& flow) const;
    const std::vector<RoutePoint>& flow_routes(const std::string& flow) const;
    const std::vector<GatewayLearn>& gateway_learns(std::size_t vm) const;
    // Gateway replies delivered to a VM, keyed by (VM, request seq).
    const std::map<std::pair<std::size_t, std::uint32_t>, GatewayReplyStat>& gateway_replies() const
    {
        return gateway_replies_;
    }
    const std::vector<FluxTally>& flux_tallies() const { return flux_tallies_; }
    const std::vector<VrrpGroup>& vrrp_groups() const { return groups_; }
    const std::vector<MasterPoint>& master_history(std::size_t group) const { return master_history_.at(group); }
    const std::map<std::size_t, Ip4Addr>& initial_assignment() const { return initial_assignment_; }

private:
    enum class FlowKind : std::uint8_t { Outbound, Inbound, EastWest, Private };

    struct FlowState {
        FlowSpec spec;
        FlowKind kind = FlowKind::Outbound;
        std::size_t src = 0;  // VM or external index
        std::size_t dst = 0;  // VM or external index (unused for public IP targets)
        Ip4Addr public_ip;
        DataFrame frame;
        bool active = true;

        std::optional<std::size_t> snat_vr;
        std::optional<DataFrame> snat_out;
        std::optional<std::size_t> dnat_vr;
        std::optional<DataFrame> dnat_in;
        std::optional<std::size_t> member;

        bool ready = false;
        std::vector<std::size_t> path;
        int hops = 0;
        std::optional<std::size_t> g;
        std::optional<std::size_t> p;
        double rate = 0.0;
    };

    struct Owner {
        PortKind kind;
        std::size_t index;
    };

    // Link table layout: hosts (up, down), externals (tx, rx), then VMs (tx, rx).
    std::size_t host_up(HostId h) const { return 2 * h.value; }
    std::size_t host_down(HostId h) const { return 2 * h.value + 1; }
    std::size_t ext_tx(std::size_t e) const { return 2 * topo_.hosts.size() + 2 * e; }
    std::size_t ext_rx(std::size_t e) const { return ext_tx(e) + 1; }
    std::size_t vm_tx(std::size_t v) const { return 2 * (topo_.hosts.size() + topo_.externals.size()) + 2 * v; }
    std::size_t vm_rx(std::size_t v) const { return vm_tx(v) + 1; }

    bool vm_usable(std::size_t v) const;
    bool vr_usable(std::size_t r) const;

    void sync_ports();
    VsiState* vsi(HostId host, TenantId tenant);
    void grow_tables();

    void advance();
    void refresh();
    void wake_at(SimTime t);
    void after(SimTime delay, std::function<void()> fn, std::uint64_t rank = 0);

    std::optional<MacAddr> ensure(Owner owner, Ip4Addr target);
    void send_request(Owner owner, Ip4Addr target);
    ArpResolver& resolver(Owner owner);
    bool owner_usable(Owner owner) const;

    std::optional<std::size_t> vr_for_gateway_mac(TenantId tenant, MacAddr mac) const;
    std::optional<std::size_t> vr_for_public_ip(Ip4Addr ip) const;
    std::optional<std::size_t> gateway_of(std::size_t vm);
    bool bind_snat(FlowState& f, std::size_t g);
    bool bind_dnat(FlowState& f, std::size_t p);
    void release_bindings(FlowState& f);
    bool route(FlowState& f);

    void emit(HostId host, TenantId tenant, PortId ingress, const ArpFrame& frame);
    void deliver_local(HostId host, TenantId tenant, PortId port, const ArpFrame& frame);
    void vtep_out(HostId host, TenantId tenant, const ArpFrame& frame);
    void vtep_in(HostId host, const TunnelFrame& tunnel);
    void tunnel(HostId src, TenantId tenant, const ArpFrame& frame, const std::string& rule_id,
                std::optional<HostId> forced);
    void log_decision(HostId host, TenantId tenant, Direction dir, const ArpFrame& frame, const VtepResult& r,
                      AgentState* agent, std::size_t anomalies_before);
    ArpKind baseline_kind(TenantId tenant, const ArpFrame& frame) const;

    void agent_tick(HostId host);
    void deliver_probe(HostId host, TenantId tenant, const ArpFrame& probe);
    void take_sample();

    void vrrp_group_tick(std::size_t group);
    void vrrp_deliver(std::size_t group, std::size_t member, VrrpAdvert advert);
    void vrrp_check(std::size_t group);
    void vrrp_changed(std::size_t group, const std::vector<std::size_t>& promoted);
    void refresh_vr_answers(std::size_t vr);
    void assign_mvrrp_gateway(std::size_t vm);

    void count(const std::string& key, std::uint64_t n = 1) { counters_[key] += n; }
    void anomaly(std::string what);

    WorldConfig config_;
    Topology topo_;
    Simulator sim_;
    std::mt19937_64 rng_;
    std::map<std::string, std::string> vr_aliases_;

    std::vector<VmStack> vm_stacks_;
    std::vector<VrState> vr_states_;
    std::map<std::pair<HostId, TenantId>, VsiState> vsis_;
    std::vector<VtepState> vteps_;
    std::map<std::uint32_t, TenantId> tenant_by_vni_;

    std::vector<FlowState> flows_;
    std::vector<LinkState> links_;
    std::vector<double> link_bytes_;
    std::vector<double> vr_rx_bytes_;
    std::vector<double> vr_tx_bytes_;
    std::vector<FlowDemand> demands_;
    std::vector<std::size_t> demand_flow_;
    FlowAllocation alloc_;
    SimTime last_account_ = 0;
    std::set<SimTime> wakeups_;
    std::set<std::uint16_t> used_ephemeral_;

    std::vector<EntityRef> entities_;
    std::vector<Sample> samples_;
    std::vector<std::array<double, 2>> qos_last_;  // per VR (rx, tx) at last QoS update

    std::vector<ArpEvent> arp_events_;
    std::map<std::string, std::uint64_t> counters_;
    std::vector<std::string> anomalies_;
    std::map<std::string, std::vector<RatePoint>> rate_history_;
    std::map<std::string, std::vector<RoutePoint>> route_history_;
    std::map<std::size_t, std::vector<GatewayLearn>> gateway_learns_;
    std::map<std::pair<std::size_t, std::uint32_t>, GatewayReplyStat> gateway_replies_;
    std::map<std::tuple<HostId, MacAddr, std::uint32_t>, std::size_t> flux_index_;
    std::vector<FluxTally> flux_tallies_;

    std::vector<VrrpGroup> groups_;
    std::vector<std::vector<MasterPoint>> master_history_;
    std::map<std::size_t, Ip4Addr> initial_assignment_;
    std::map<TenantId, std::size_t> rr_cursor_;
    bool running_ = false;
};

}  // namespace eywa
