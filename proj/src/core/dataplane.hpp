#pragma once

#include "agent.hpp"
#include "frames.hpp"
#include "types.hpp"

#include <map>
#include <optional>
#include <set>
#include <vector>

namespace eywa {

struct ResolverConfig {
    SimTime ttl = 30 * kSecond;
    SimTime retry = kSecond;
};

// Host-stack ARP cache shared by VMs and VRs. An expired entry stays usable
// while its refresh is in flight, like a kernel neighbour entry in STALE
// state.
class ArpResolver {
public:
    struct Entry {
        MacAddr mac;
        SimTime learned_at = 0;
    };
    struct Pending {
        std::uint32_t seq = 0;
        SimTime sent_at = 0;
    };
    struct Result {
        std::optional<MacAddr> mac;
        std::optional<ArpFrame> request;
    };

    ArpResolver(Ip4Addr ip, MacAddr mac, ResolverConfig config = {});

    void set_identity(Ip4Addr ip, MacAddr mac);
    Ip4Addr ip() const { return ip_; }
    MacAddr mac() const { return mac_; }
    const ResolverConfig& config() const { return config_; }

    // Fresh hit, or a broadcast request when nothing is pending yet.
    Result resolve(Ip4Addr target, SimTime now);

    std::optional<MacAddr> lookup(Ip4Addr target, SimTime now) const;
    std::optional<MacAddr> usable(Ip4Addr target) const;
    std::optional<SimTime> expires_at(Ip4Addr target) const;
    bool has_entry(Ip4Addr target) const { return cache_.count(target) > 0; }

    bool pending(Ip4Addr target) const { return pending_.count(target) > 0; }
    std::optional<std::uint32_t> pending_seq(Ip4Addr target) const;
    ArpFrame start_request(Ip4Addr target, SimTime now);
    void cancel(Ip4Addr target) { pending_.erase(target); }

    void learn(Ip4Addr ip, MacAddr mac, SimTime now);
    bool update_existing(Ip4Addr ip, MacAddr mac, SimTime now);
    void forget(Ip4Addr ip) { cache_.erase(ip); }
    void clear();

    const std::map<Ip4Addr, Entry>& entries() const { return cache_; }

private:
    Ip4Addr ip_;
    MacAddr mac_;
    ResolverConfig config_;
    std::map<Ip4Addr, Entry> cache_;
    std::map<Ip4Addr, Pending> pending_;
    std::uint32_t next_seq_ = 0;
};

struct ArpOutcome {
    std::optional<ArpFrame> reply;
    bool learned = false;       // a reply was accepted into the cache
    bool conflict = false;      // GARP claiming one of our addresses
};

class VmStack {
public:
    VmStack(Ip4Addr ip, MacAddr mac, Ip4Addr gateway_ip, ResolverConfig config = {});

    Ip4Addr ip() const { return arp_.ip(); }
    MacAddr mac() const { return arp_.mac(); }
    Ip4Addr gateway_ip() const { return gateway_; }

    ArpResolver& arp() { return arp_; }
    const ArpResolver& arp() const { return arp_; }

    ArpResolver::Result resolve(Ip4Addr target, SimTime now) { return arp_.resolve(target, now); }
    ArpOutcome handle_arp(const ArpFrame& frame, SimTime now);

private:
    ArpResolver arp_;
    Ip4Addr gateway_;
};

struct FiveTuple {
    Ip4Addr src_ip;
    std::uint16_t src_port = 0;
    Ip4Addr dst_ip;
    std::uint16_t dst_port = 0;

    friend auto operator<=>(const FiveTuple&, const FiveTuple&) = default;
};

FiveTuple tuple_of(const DataFrame& f);

struct LbBackend {
    std::size_t vm = 0;
    Ip4Addr ip;
};

struct LbTable {
    Ip4Addr public_ip;
    std::uint16_t port = 0;
    std::vector<LbBackend> members;
    std::size_t cursor = 0;
};

struct DnatResult {
    DataFrame frame;
    std::size_t member = 0;  // VM index
};

class VrState {
public:
    static constexpr std::uint16_t kFirstSnatPort = 10000;

    VrState(Ip4Addr gateway_ip, MacAddr mac, std::vector<Ip4Addr> public_ips, ResolverConfig config = {});

    MacAddr mac() const { return mac_; }
    const std::vector<Ip4Addr>& public_ips() const { return public_ips_; }

    // Addresses this VR answers ARP for, with the MAC it answers with.
    void set_answers(std::map<Ip4Addr, MacAddr> answers) { answers_ = std::move(answers); }
    const std::map<Ip4Addr, MacAddr>& answers() const { return answers_; }

    ArpResolver& arp() { return arp_; }
    const ArpResolver& arp() const { return arp_; }
    ArpOutcome handle_arp(const ArpFrame& frame, SimTime now);

    std::optional<DataFrame> snat_forward(const DataFrame& frame);
    std::optional<DataFrame> snat_reverse(const DataFrame& frame) const;
    void snat_release(const DataFrame& frame);
    std::size_t snat_size() const { return snat_.size(); }

    void add_lb(LbTable table) { lb_.push_back(std::move(table)); }
    std::optional<DnatResult> dnat_forward(const DataFrame& frame);
    void dnat_release(const DataFrame& frame) { conns_.erase(tuple_of(frame)); }

    // Connection state is lost when the VR dies.
    void reset_state();

    std::uint64_t snat_drops() const { return snat_drops_; }
    std::uint64_t dnat_drops() const { return dnat_drops_; }
    std::uint64_t conflicts() const { return conflicts_; }

private:
    ArpResolver arp_;
    MacAddr mac_;
    std::vector<Ip4Addr> public_ips_;
    std::map<Ip4Addr, MacAddr> answers_;

    std::map<FiveTuple, FiveTuple> snat_;     // inner -> outer
    std::map<FiveTuple, FiveTuple> unsnat_;   // outer reply tuple -> inner reply tuple
    std::map<Ip4Addr, std::set<std::uint16_t>> used_ports_;

    std::vector<LbTable> lb_;
    std::map<FiveTuple, LbBackend> conns_;

    std::uint64_t snat_drops_ = 0;
    std::uint64_t dnat_drops_ = 0;
    std::uint64_t conflicts_ = 0;
};

enum class PortKind : std::uint8_t { Vm, Vr, Vtep };

struct PortId {
    PortKind kind = PortKind::Vm;
    std::uint32_t index = 0;

    static PortId vtep() { return PortId{PortKind::Vtep, 0}; }
    friend auto operator<=>(const PortId&, const PortId&) = default;
};

// Per (host, tenant) learning switch. No STP: flooding reaches every other
// port exactly once because the topology behind each port is a tree.
class VsiState {
public:
    void attach(PortId port);
    void detach(PortId port);
    bool has_port(PortId port) const { return ports_.count(port) > 0; }
    const std::set<PortId>& ports() const { return ports_; }

    std::vector<PortId> forward(MacAddr src, MacAddr dst, PortId ingress);
    std::optional<PortId> lookup(MacAddr mac) const;

private:
    std::set<PortId> ports_;
    std::map<MacAddr, PortId> table_;
};

class VtepState {
public:
    void learn(Vni vni, MacAddr mac, HostId host);
    std::optional<HostId> lookup(Vni vni, MacAddr mac) const;
    void forget_host(HostId host);

private:
    std::map<std::pair<std::uint32_t, MacAddr>, HostId> table_;
};

// Outcome of pushing one frame through a VTEP with the agent interposed.
struct VtepResult {
    std::optional<ArpKind> kind;
    std::optional<RuleDecision> decision;
    RuleAction effective = RuleAction::Pass;
    bool forward = true;              // keep the original frame moving
    std::optional<ArpFrame> reply;    // synthesized proxy reply
};

// Data frames and frames without an agent (baseline modes) always forward.
VtepResult vtep_forward(AgentState* agent, const Frame& frame, Direction dir, SimTime now);

inline constexpr std::string_view kRuleVmGarp = "vm-garp";

}  // namespace eywa
