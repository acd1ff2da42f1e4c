#pragma once

#include "frames.hpp"

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace eywa {

enum class AgentMode : std::uint8_t { Normal, Orphan };
enum class Direction : std::uint8_t { Outbound, Inbound };
enum class Origin : std::uint8_t { LocalVR, LocalVM, RemoteVM, RemoteVR };
enum class RuleAction : std::uint8_t { Pass, Filter, Proxy, PassFirstFilterRest, NotApplicable };

std::string_view to_string(AgentMode m);
std::string_view to_string(Direction d);
std::string_view to_string(RuleAction a);

// Synthetic rule IDs for VM->VM replies, which the enumerated cases do not cover.
inline constexpr std::string_view kRuleVmReplyPass = "vm-reply-pass";
inline constexpr std::string_view kRuleVmReplyFilter = "vm-reply-filter";
inline constexpr std::string_view kRuleVmReplyOut = "vm-reply-out";

struct RuleDecision {
    RuleAction action = RuleAction::NotApplicable;
    std::string rule_id;
    std::optional<ArpFrame> reply;
};

// Facts about the frame that only the local host can know.
struct LocalView {
    bool is_target_local = false;
    bool is_sender_local = false;
    bool cache_hit = false;
};

struct AgentConfig {
    SimTime health_interval = kSecond;
    int miss_threshold = 3;
    SimTime cache_ttl = 60 * kSecond;
    SimTime refresh_margin = 5 * kSecond;
    double overload_threshold = 0.8;
    SimTime ewma_window = kSecond;
    SimTime flux_ttl = 2 * kSecond;
};

struct ArpCacheEntry {
    Ip4Addr ip;
    MacAddr mac;
    Origin origin = Origin::LocalVM;
    SimTime learned_at = 0;
    SimTime ttl = 0;

    SimTime expires_at() const { return learned_at + ttl; }
    bool expired(SimTime now) const { return now >= expires_at(); }
};

struct VrHealth {
    SimTime last_probe_sent = -1;
    bool probe_outstanding = false;
    int consecutive_misses = 0;
    bool healthy = false;
};

// Pure rule matrix over the classification coordinates. `overloaded` is the
// local VR's QoS state.
RuleDecision decide_rule(AgentMode mode, Direction dir, ArpKind kind, const LocalView& view, bool overloaded);

// Per (host, tenant) agent state. Only ever fed with frames seen on the local
// vPort, the local VSi and the local VTEP.
class AgentState {
public:
    AgentState(HostId host, Ip4Addr gateway_ip, MacAddr agent_mac, AgentConfig config = {});

    HostId host() const { return host_; }
    Ip4Addr gateway_ip() const { return gateway_; }
    MacAddr agent_mac() const { return agent_mac_; }
    const AgentConfig& config() const { return config_; }

    AgentMode mode() const { return mode_; }
    const VrHealth& vr_health() const { return health_; }
    double vport_util() const { return vport_util_; }
    bool overloaded() const { return vport_util_ > config_.overload_threshold; }

    // Local port registry, maintained by the hypervisor as instances come and go.
    void attach_vr(MacAddr mac, SimTime now);
    void detach_vr();
    void attach_vm(Ip4Addr ip, MacAddr mac);
    void detach_vm(Ip4Addr ip);
    std::optional<MacAddr> local_vr() const { return local_vr_; }
    std::optional<MacAddr> local_vm(Ip4Addr ip) const;

    LocalView view(const ArpFrame& frame, Direction dir, SimTime now) const;

    void observe(const ArpFrame& frame, Direction dir, SimTime now);

    // Returns unicast probes to send to the local VR and to local VMs close to expiry.
    std::vector<ArpFrame> monitor_tick(SimTime now);
    void on_probe_reply(const ArpFrame& reply, SimTime now);

    void update_qos(double bytes_through_vport, SimTime window, double link_bps);

    // True for the first reply to a given request, false for every later one.
    bool admit_flux(const ArpFrame& reply, SimTime now);

    std::optional<ArpFrame> synthesize_proxy_reply(const RuleDecision& decision, const ArpFrame& request,
                                                   SimTime now);

    void record(std::string_view rule_id, RuleAction effective);
    const std::map<std::string, std::uint64_t>& counters() const { return counters_; }

    void note_anomaly(std::string what) { anomalies_.push_back(std::move(what)); }
    const std::vector<std::string>& anomalies() const { return anomalies_; }

    std::optional<ArpCacheEntry> cache_lookup(Ip4Addr ip, bool remote, SimTime now) const;
    std::size_t cache_size() const { return cache_.size(); }
    std::size_t flux_size() const { return flux_.size(); }
    void insert_cache_entry(const ArpCacheEntry& e);

private:
    struct CacheKey {
        Ip4Addr ip;
        bool remote = false;
        friend auto operator<=>(const CacheKey&, const CacheKey&) = default;
    };
    struct FluxKey {
        Ip4Addr target_ip;
        MacAddr requester;
        std::uint32_t seq = 0;
        friend auto operator<=>(const FluxKey&, const FluxKey&) = default;
    };

    void upsert(Ip4Addr ip, MacAddr mac, Origin origin, SimTime now);
    void expire(SimTime now);

    HostId host_;
    Ip4Addr gateway_;
    MacAddr agent_mac_;
    AgentConfig config_;
    AgentMode mode_ = AgentMode::Orphan;
    VrHealth health_;
    double vport_util_ = 0.0;
    std::optional<MacAddr> local_vr_;
    std::map<Ip4Addr, MacAddr> local_vms_;
    std::map<CacheKey, ArpCacheEntry> cache_;
    std::map<FluxKey, SimTime> flux_;
    std::uint32_t probe_seq_ = 0;
    std::map<std::string, std::uint64_t> counters_;
    std::vector<std::string> anomalies_;
};

RuleDecision decide(const AgentState& state, ArpKind kind, Direction dir, const ArpFrame& frame,
                    const LocalView& view);

}  // namespace eywa
