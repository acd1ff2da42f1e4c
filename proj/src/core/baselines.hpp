#pragma once

#include "net_model.hpp"

#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace eywa {

enum class GatewayPolicy : std::uint8_t { RoundRobin, Latency };

std::string_view to_string(GatewayPolicy p);
GatewayPolicy parse_gateway_policy(std::string_view text);

inline constexpr std::size_t kMaxVrrpVrsPerTenant = 254;

struct GatewayCandidate {
    Ip4Addr virtual_ip;
    HostId host;
    SimTime latency = 0;  // one-way path latency from the VM's host
};

// Picks the VM's gateway at creation time. `rr_cursor` carries the
// round-robin position across calls for one tenant.
Ip4Addr assign_gateway(GatewayPolicy policy, HostId vm_host, std::span<const GatewayCandidate> pool,
                       std::size_t& rr_cursor);

struct VrrpConfig {
    SimTime advert_interval = kSecond;
    GatewayPolicy policy = GatewayPolicy::Latency;
    std::uint32_t advert_bytes = 100;
};

enum class VrrpRole : std::uint8_t { Backup, Master };

struct VrrpMember {
    std::size_t vr = 0;
    std::uint8_t priority = 100;
    VrrpRole role = VrrpRole::Backup;
    bool alive = true;
    SimTime last_advert_seen = 0;
};

struct VrrpGroup {
    std::uint8_t vrid = 1;
    TenantId tenant;
    Ip4Addr virtual_ip;
    MacAddr virtual_mac;
    std::vector<Ip4Addr> public_ips;
    std::size_t owner = 0;  // member index of the VR the group belongs to
    std::vector<VrrpMember> members;
};

struct VrrpAdvert {
    std::uint8_t vrid = 0;
    std::size_t from = 0;  // member index
    std::uint8_t priority = 0;
};

// Backups wait three advert intervals plus a small priority-ordered skew so
// the highest-priority backup always claims the group first.
SimTime master_down_interval(const VrrpConfig& config, std::uint8_t priority);

// One group per VR of the tenant. Owner priority 200; other members get
// 150 minus their ring distance from the owner.
std::vector<VrrpGroup> build_vrrp_groups(const Topology& topology, TenantId tenant);

std::optional<std::size_t> vrrp_master(const VrrpGroup& group);

// Masters advertise; backups whose down timer has run out promote themselves.
// Returns the adverts put on the wire.
std::vector<VrrpAdvert> vrrp_tick(VrrpGroup& group, SimTime now, const VrrpConfig& config,
                                  std::vector<std::size_t>* promoted = nullptr);
void vrrp_receive(VrrpGroup& group, std::size_t member, const VrrpAdvert& advert, SimTime now);
std::vector<std::size_t> vrrp_expire(VrrpGroup& group, SimTime now, const VrrpConfig& config);

// Returns true when a revived member preempted the current master.
bool vrrp_set_alive(VrrpGroup& group, std::size_t member, bool alive, SimTime now);

struct SingleVrTransform {
    TopologySpec spec;
    std::map<std::string, std::string> vr_aliases;  // original VR name -> shared VR
    std::string service_host;
};

// Collapses every tenant's VRs into one VR on a dedicated service host.
SingleVrTransform single_vr_mode(const TopologySpec& spec);

}  // namespace eywa
