#include "agent.hpp"

#include <algorithm>
#include <cmath>

namespace eywa {

std::string_view to_string(AgentMode m)
{
    return m == AgentMode::Normal ? "normal" : "orphan";
}

std::string_view to_string(Direction d)
{
    return d == Direction::Outbound ? "out" : "in";
}

std::string_view to_string(RuleAction a)
{
    switch (a) {
    case RuleAction::Pass: return "pass";
    case RuleAction::Filter: return "filter";
    case RuleAction::Proxy: return "proxy";
    case RuleAction::PassFirstFilterRest: return "pass-first";
    case RuleAction::NotApplicable: return "n/a";
    }
    return "?";
}

namespace {

RuleDecision make(RuleAction a, std::string_view id)
{
    return RuleDecision{a, std::string(id), std::nullopt};
}

// Cases 1-3 and 21/23: filter when the target answers locally, proxy from
// the cache when possible, otherwise let the broadcast through.
RuleDecision local_filter_proxy_or_pass(const LocalView& v, std::string_view filter, std::string_view proxy,
                                        std::string_view pass)
{
    if (v.is_target_local)
        return make(RuleAction::Filter, filter);
    if (v.cache_hit)
        return make(RuleAction::Proxy, proxy);
    return make(RuleAction::Pass, pass);
}

[[noreturn]] void bad_coordinates(AgentMode mode, Direction dir, ArpKind kind)
{
    throw ProtocolError("no ARP control rule for (" + std::to_string(static_cast<int>(mode)) + ", " +
                        std::to_string(static_cast<int>(dir)) + ", " + std::to_string(static_cast<int>(kind)) +
                        ")");
}

}  // namespace

RuleDecision decide_rule(AgentMode mode, Direction dir, ArpKind kind, const LocalView& v, bool overloaded)
{
    const bool normal = mode == AgentMode::Normal;
    const bool out = dir == Direction::Outbound;
    if (mode != AgentMode::Normal && mode != AgentMode::Orphan)
        bad_coordinates(mode, dir, kind);
    if (dir != Direction::Outbound && dir != Direction::Inbound)
        bad_coordinates(mode, dir, kind);

    switch (kind) {
    case ArpKind::VRtoVM_Request:
        if (normal && out)
            return local_filter_proxy_or_pass(v, "1-2", "1-3", "1-1");
        if (normal)
            return make(RuleAction::Filter, "2");
        if (out)
            return make(RuleAction::NotApplicable, "3");
        return v.is_target_local ? make(RuleAction::Proxy, "4-2") : make(RuleAction::Filter, "4-1");

    case ArpKind::VMtoVR_Request:
        if (normal && out)
            return make(RuleAction::Filter, "5");
        if (normal)
            return overloaded ? make(RuleAction::Filter, "6-1") : make(RuleAction::Proxy, "6-2");
        if (out)
            return make(RuleAction::Pass, "7");
        return make(RuleAction::Filter, "8");

    case ArpKind::VRtoVM_Reply:
        if (normal)
            return make(RuleAction::NotApplicable, out ? "9" : "10");
        if (out)
            return make(RuleAction::NotApplicable, "11");
        return make(RuleAction::PassFirstFilterRest, "12");

    case ArpKind::VMtoVR_Reply:
        if (normal)
            return out ? make(RuleAction::NotApplicable, "13") : make(RuleAction::Pass, "14");
        return make(RuleAction::NotApplicable, out ? "15" : "16");

    case ArpKind::GARP_VRtoVR:
        if (normal)
            return out ? make(RuleAction::Filter, "17") : make(RuleAction::NotApplicable, "18");
        return make(RuleAction::NotApplicable, out ? "19" : "20");

    case ArpKind::VMtoVM_Request:
        if (out) {
            return normal ? local_filter_proxy_or_pass(v, "21-2", "21-3", "21-1")
                          : local_filter_proxy_or_pass(v, "23-2", "23-3", "23-1");
        }
        if (v.is_target_local)
            return make(RuleAction::Proxy, normal ? "22-2" : "24-2");
        return make(RuleAction::Filter, normal ? "22-1" : "24-1");

    case ArpKind::VMtoVM_Reply:
        if (out)
            return make(RuleAction::NotApplicable, kRuleVmReplyOut);
        return v.is_target_local ? make(RuleAction::Pass, kRuleVmReplyPass)
                                 : make(RuleAction::Filter, kRuleVmReplyFilter);
    }
    bad_coordinates(mode, dir, kind);
}

RuleDecision decide(const AgentState& state, ArpKind kind, Direction dir, const ArpFrame&, const LocalView& view)
{
    return decide_rule(state.mode(), dir, kind, view, state.overloaded());
}

AgentState::AgentState(HostId host, Ip4Addr gateway_ip, MacAddr agent_mac, AgentConfig config)
    : host_(host), gateway_(gateway_ip), agent_mac_(agent_mac), config_(config)
{
}

void AgentState::attach_vr(MacAddr mac, SimTime now)
{
    local_vr_ = mac;
    mode_ = AgentMode::Normal;
    health_.healthy = true;
    health_.consecutive_misses = 0;
    health_.probe_outstanding = false;
    upsert(gateway_, mac, Origin::LocalVR, now);
}

void AgentState::detach_vr()
{
    local_vr_.reset();
    mode_ = AgentMode::Orphan;
    health_ = VrHealth{};
    cache_.erase(CacheKey{gateway_, false});
}

void AgentState::attach_vm(Ip4Addr ip, MacAddr mac)
{
    local_vms_[ip] = mac;
}

void AgentState::detach_vm(Ip4Addr ip)
{
    local_vms_.erase(ip);
    cache_.erase(CacheKey{ip, false});
}

std::optional<MacAddr> AgentState::local_vm(Ip4Addr ip) const
{
    auto it = local_vms_.find(ip);
    if (it == local_vms_.end())
        return std::nullopt;
    return it->second;
}

std::optional<ArpCacheEntry> AgentState::cache_lookup(Ip4Addr ip, bool remote, SimTime now) const
{
    auto it = cache_.find(CacheKey{ip, remote});
    if (it == cache_.end() || it->second.expired(now))
        return std::nullopt;
    return it->second;
}

void AgentState::insert_cache_entry(const ArpCacheEntry& e)
{
    bool remote = e.origin == Origin::RemoteVM || e.origin == Origin::RemoteVR;
    cache_[CacheKey{e.ip, remote}] = e;
}

LocalView AgentState::view(const ArpFrame& frame, Direction, SimTime now) const
{
    LocalView v;
    v.is_target_local = local_vms_.count(frame.target_ip) > 0;
    v.is_sender_local =
        local_vms_.count(frame.sender_ip) > 0 || (local_vr_ && frame.sender_mac == *local_vr_);
    v.cache_hit = cache_lookup(frame.target_ip, true, now).has_value();
    return v;
}

void AgentState::upsert(Ip4Addr ip, MacAddr mac, Origin origin, SimTime now)
{
    insert_cache_entry(ArpCacheEntry{ip, mac, origin, now, config_.cache_ttl});
}

void AgentState::observe(const ArpFrame& frame, Direction dir, SimTime now)
{
    if (frame.sender_ip.is_any() || frame.sender_mac.is_zero() || frame.sender_mac == agent_mac_)
        return;
    if (dir == Direction::Inbound) {
        // The shared gateway IP may map to a single MAC only: the local VR.
        if (frame.sender_ip == gateway_)
            return;
        upsert(frame.sender_ip, frame.sender_mac, Origin::RemoteVM, now);
        return;
    }
    if (local_vr_ && frame.sender_mac == *local_vr_) {
        upsert(gateway_, frame.sender_mac, Origin::LocalVR, now);
        return;
    }
    if (frame.sender_ip == gateway_)
        return;
    upsert(frame.sender_ip, frame.sender_mac, Origin::LocalVM, now);
}

void AgentState::expire(SimTime now)
{
    for (auto it = cache_.begin(); it != cache_.end();) {
        if (it->second.expired(now))
            it = cache_.erase(it);
        else
            ++it;
    }
    for (auto it = flux_.begin(); it != flux_.end();) {
        if (now - it->second >= config_.flux_ttl)
            it = flux_.erase(it);
        else
            ++it;
    }
}

std::vector<ArpFrame> AgentState::monitor_tick(SimTime now)
{
    std::vector<ArpFrame> probes;

    if (local_vr_) {
        if (health_.probe_outstanding) {
            ++health_.consecutive_misses;
        }
        if (health_.consecutive_misses >= config_.miss_threshold && health_.healthy) {
            health_.healthy = false;
            mode_ = AgentMode::Orphan;
            cache_.erase(CacheKey{gateway_, false});
        }
        ArpFrame probe = make_arp_request(Ip4Addr::any(), agent_mac_, gateway_, ++probe_seq_);
        probe.target_mac = *local_vr_;
        probe.l2_dst = *local_vr_;
        probes.push_back(probe);
        health_.probe_outstanding = true;
        health_.last_probe_sent = now;
    }

    expire(now);

    // Refresh local VM entries before they time out; remote entries are left to expire.
    for (const auto& [key, entry] : cache_) {
        if (key.remote || entry.origin != Origin::LocalVM)
            continue;
        if (now >= entry.expires_at() - config_.refresh_margin) {
            ArpFrame probe = make_arp_request(Ip4Addr::any(), agent_mac_, entry.ip, ++probe_seq_);
            probe.target_mac = entry.mac;
            probe.l2_dst = entry.mac;
            probes.push_back(probe);
        }
    }
    return probes;
}

void AgentState::on_probe_reply(const ArpFrame& reply, SimTime now)
{
    if (reply.sender_ip == gateway_) {
        if (!local_vr_ || reply.sender_mac != *local_vr_)
            return;
        health_.probe_outstanding = false;
        health_.consecutive_misses = 0;
        if (!health_.healthy) {
            health_.healthy = true;
            mode_ = AgentMode::Normal;
        }
        upsert(gateway_, reply.sender_mac, Origin::LocalVR, now);
        return;
    }
    if (local_vms_.count(reply.sender_ip))
        upsert(reply.sender_ip, reply.sender_mac, Origin::LocalVM, now);
}

void AgentState::update_qos(double bytes_through_vport, SimTime window, double link_bps)
{
    if (window <= 0 || link_bps <= 0.0)
        return;
    double sample = bytes_through_vport * 8.0 / (to_seconds(window) * link_bps);
    sample = std::clamp(sample, 0.0, 1.0);
    double alpha = 1.0 - std::exp(-static_cast<double>(window) / static_cast<double>(config_.ewma_window));
    vport_util_ += alpha * (sample - vport_util_);
}

bool AgentState::admit_flux(const ArpFrame& reply, SimTime now)
{
    FluxKey key{reply.sender_ip, reply.target_mac, reply.seq};
    auto it = flux_.find(key);
    if (it != flux_.end() && now - it->second < config_.flux_ttl)
        return false;
    flux_[key] = now;
    return true;
}

std::optional<ArpFrame> AgentState::synthesize_proxy_reply(const RuleDecision& decision, const ArpFrame& request,
                                                           SimTime now)
{
    const std::string& id = decision.rule_id;
    if (id == "6-2") {
        if (!local_vr_) {
            note_anomaly("proxy 6-2 without a local VR");
            return std::nullopt;
        }
        return make_arp_reply(request, gateway_, *local_vr_);
    }
    if (id == "4-2" || id == "22-2" || id == "24-2") {
        if (auto e = cache_lookup(request.target_ip, false, now))
            return make_arp_reply(request, request.target_ip, e->mac);
        if (auto mac = local_vm(request.target_ip))
            return make_arp_reply(request, request.target_ip, *mac);
        note_anomaly("proxy " + id + " for unknown local VM " + request.target_ip.str());
        return std::nullopt;
    }
    if (id == "1-3" || id == "21-3" || id == "23-3") {
        if (auto e = cache_lookup(request.target_ip, true, now))
            return make_arp_reply(request, request.target_ip, e->mac);
        note_anomaly("proxy " + id + " dropped: cache entry for " + request.target_ip.str() + " expired");
        return std::nullopt;
    }
    note_anomaly("proxy requested for non-proxy rule " + id);
    return std::nullopt;
}

void AgentState::record(std::string_view rule_id, RuleAction effective)
{
    std::string key(rule_id);
    key += ':';
    key += to_string(effective);
    ++counters_[key];
}

}  // namespace eywa
