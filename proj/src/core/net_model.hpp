#pragma once

#include "agent.hpp"
#include "frames.hpp"
#include "types.hpp"

#include <map>
#include <optional>
#include <set>
#include <string>
#include <variant>
#include <vector>

namespace eywa {

// Lowest-free VNI allocator over the 24-bit VxLAN space.
class VniRegistry {
public:
    Vni allocate(TenantId tenant);
    void release(TenantId tenant);
    std::optional<Vni> lookup(TenantId tenant) const;
    bool is_allocated(Vni vni) const;
    std::size_t size() const { return count_; }

private:
    static constexpr std::uint32_t kNone = 0xffff'ffffu;
    std::vector<std::uint64_t> bitmap_ = std::vector<std::uint64_t>(Vni::kSpace / 64, 0);
    std::vector<std::uint32_t> by_tenant_;
    std::uint32_t lowest_free_ = 0;
    std::size_t count_ = 0;
};

enum class NetMode : std::uint8_t { Eywa, Mvrrp, SingleVr };
enum class VmRole : std::uint8_t { Generic, EastWest, NorthSouth };

std::string_view to_string(NetMode m);
NetMode parse_net_mode(std::string_view text);
std::string_view to_string(VmRole r);
VmRole parse_vm_role(std::string_view text);

struct HostSpec {
    std::string name;
    double link_bps = 1e9;
    SimTime latency = 50 * kMicrosecond;
};

struct ExternalSpec {
    std::string name;
    double link_bps = 10e9;
    Ip4Addr ip;
};

struct LbRule {
    Ip4Addr public_ip;  // zero: the VR's primary public IP
    std::uint16_t port = 0;
    std::vector<std::string> members;  // VM names
};

struct VmSpec {
    std::string name;
    Ip4Addr private_ip;
    std::string host;
    VmRole role = VmRole::Generic;
    double nic_bps = 0.0;  // zero: same as the host link
    bool active = true;
};

struct VrSpec {
    std::string name;
    std::string host;
    std::vector<Ip4Addr> public_ips;
    std::vector<LbRule> lb;
    bool active = true;
};

struct TenantSpec {
    std::string name;
    Ip4Addr gateway_ip = Ip4Addr::parse("10.0.0.1");
    std::vector<VmSpec> vms;
    std::vector<VrSpec> vrs;
};

struct TopologySpec {
    std::vector<HostSpec> hosts;
    std::vector<ExternalSpec> externals;
    std::vector<TenantSpec> tenants;
    NetMode mode = NetMode::Eywa;
};

// Throws ValidationError naming the offending entity.
void validate(const TopologySpec& spec);

struct Tenant {
    TenantId id;
    std::string name;
    Vni vni;
    Ip4Addr gateway_ip;
    std::uint16_t next_vm_index = 0;
    std::uint16_t next_vr_index = 0x8000;
};

struct Host {
    HostId id;
    std::string name;
    double link_bps = 0.0;
    SimTime latency = 0;
    bool alive = true;
    MacAddr agent_mac;
    std::set<TenantId> vsis;
    std::map<TenantId, AgentState> agents;  // eywa mode only
};

struct Vm {
    std::string name;
    TenantId tenant;
    Ip4Addr ip;
    MacAddr mac;
    Ip4Addr gateway_ip;
    HostId host;
    VmRole role = VmRole::Generic;
    double nic_bps = 0.0;
    bool active = true;
};

struct ResolvedLbRule {
    Ip4Addr public_ip;
    std::uint16_t port = 0;
    std::vector<std::size_t> members;  // VM indices
};

struct Vr {
    std::string name;
    TenantId tenant;
    Ip4Addr gateway_ip;  // shared tenant gateway in eywa, per-VR VIP in mvrrp
    MacAddr mac;
    std::vector<Ip4Addr> public_ips;
    std::vector<ResolvedLbRule> lb;
    HostId host;
    bool attached = true;  // present on the host VSi
    bool alive = true;     // answering traffic
};

struct External {
    std::string name;
    double link_bps = 0.0;
    Ip4Addr ip;
};

struct PlacementResult {
    std::optional<ArpFrame> garp;  // emitted by a VR that flipped its host to Normal mode
    bool mode_changed = false;
};

class Topology {
public:
    NetMode mode = NetMode::Eywa;
    AgentConfig agent_config;
    std::vector<Host> hosts;
    std::vector<Tenant> tenants;
    std::vector<Vm> vms;
    std::vector<Vr> vrs;
    std::vector<External> externals;
    VniRegistry vnis;

    std::optional<HostId> find_host(std::string_view name) const;
    std::optional<std::size_t> find_vm(std::string_view name) const;
    std::optional<std::size_t> find_vr(std::string_view name) const;
    std::optional<std::size_t> find_external(std::string_view name) const;
    std::optional<std::size_t> find_vm_by_ip(TenantId tenant, Ip4Addr ip) const;
    std::optional<std::size_t> find_vr_by_mac(MacAddr mac) const;
    std::optional<std::size_t> find_vr_by_public_ip(Ip4Addr ip) const;
    std::optional<TenantId> find_tenant(std::string_view name) const;

    const Tenant& tenant(TenantId id) const { return tenants.at(id.value); }
    Host& host(HostId id) { return hosts.at(id.value); }
    const Host& host(HostId id) const { return hosts.at(id.value); }

    AgentState* agent(HostId host, TenantId tenant);
    const AgentState* agent(HostId host, TenantId tenant) const;
    std::size_t agent_count() const;

    std::optional<std::size_t> local_vr(HostId host, TenantId tenant) const;
    std::vector<HostId> hosts_with_vsi(TenantId tenant) const;

    // Attach/detach active instances to their host VSi, updating the agent's
    // port registry and mode.
    PlacementResult attach_vm(std::size_t vm, SimTime now = 0);
    void detach_vm(std::size_t vm);
    PlacementResult attach_vr(std::size_t vr, SimTime now = 0);
    void detach_vr(std::size_t vr);

private:
    void ensure_vsi(HostId host, TenantId tenant);
    void maybe_drop_vsi(HostId host, TenantId tenant);
};

Topology build_topology(const TopologySpec& spec, const AgentConfig& agent_config = {});

// Adds a new instance to `host` and attaches it.
PlacementResult place_instance(Topology& topology, TenantId tenant, const VmSpec& spec, HostId host,
                               SimTime now = 0);
PlacementResult place_instance(Topology& topology, TenantId tenant, const VrSpec& spec, HostId host,
                               SimTime now = 0);

}  // namespace eywa
