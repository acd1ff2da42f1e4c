#include "dataplane.hpp"

namespace eywa {

ArpResolver::ArpResolver(Ip4Addr ip, MacAddr mac, ResolverConfig config) : ip_(ip), mac_(mac), config_(config) {}

void ArpResolver::set_identity(Ip4Addr ip, MacAddr mac)
{
    ip_ = ip;
    mac_ = mac;
}

std::optional<MacAddr> ArpResolver::lookup(Ip4Addr target, SimTime now) const
{
    auto it = cache_.find(target);
    if (it == cache_.end() || now >= it->second.learned_at + config_.ttl)
        return std::nullopt;
    return it->second.mac;
}

std::optional<MacAddr> ArpResolver::usable(Ip4Addr target) const
{
    auto it = cache_.find(target);
    if (it == cache_.end())
        return std::nullopt;
    return it->second.mac;
}

std::optional<SimTime> ArpResolver::expires_at(Ip4Addr target) const
{
    auto it = cache_.find(target);
    if (it == cache_.end())
        return std::nullopt;
    return it->second.learned_at + config_.ttl;
}

std::optional<std::uint32_t> ArpResolver::pending_seq(Ip4Addr target) const
{
    auto it = pending_.find(target);
    if (it == pending_.end())
        return std::nullopt;
    return it->second.seq;
}

ArpFrame ArpResolver::start_request(Ip4Addr target, SimTime now)
{
    std::uint32_t seq = ++next_seq_;
    pending_[target] = Pending{seq, now};
    return make_arp_request(ip_, mac_, target, seq);
}

ArpResolver::Result ArpResolver::resolve(Ip4Addr target, SimTime now)
{
    Result r;
    if (auto mac = lookup(target, now)) {
        r.mac = mac;
        return r;
    }
    r.mac = usable(target);
    if (!pending(target))
        r.request = start_request(target, now);
    return r;
}

void ArpResolver::learn(Ip4Addr ip, MacAddr mac, SimTime now)
{
    cache_[ip] = Entry{mac, now};
    pending_.erase(ip);
}

bool ArpResolver::update_existing(Ip4Addr ip, MacAddr mac, SimTime now)
{
    auto it = cache_.find(ip);
    if (it == cache_.end())
        return false;
    it->second = Entry{mac, now};
    return true;
}

void ArpResolver::clear()
{
    cache_.clear();
    pending_.clear();
}

VmStack::VmStack(Ip4Addr ip, MacAddr mac, Ip4Addr gateway_ip, ResolverConfig config)
    : arp_(ip, mac, config), gateway_(gateway_ip)
{
}

ArpOutcome VmStack::handle_arp(const ArpFrame& frame, SimTime now)
{
    ArpOutcome out;
    if (frame.is_request()) {
        if (frame.is_garp()) {
            if (frame.sender_ip != ip())
                arp_.update_existing(frame.sender_ip, frame.sender_mac, now);
            else if (frame.sender_mac != mac())
                out.conflict = true;
            return out;
        }
        if (frame.target_ip != ip())
            return out;
        if (!frame.sender_ip.is_any())
            arp_.learn(frame.sender_ip, frame.sender_mac, now);
        out.reply = make_arp_reply(frame, ip(), mac());
        return out;
    }
    if (frame.l2_dst != mac())
        return out;
    if (arp_.pending(frame.sender_ip) || arp_.has_entry(frame.sender_ip)) {
        arp_.learn(frame.sender_ip, frame.sender_mac, now);
        out.learned = true;
    }
    return out;
}

FiveTuple tuple_of(const DataFrame& f)
{
    return FiveTuple{f.src_ip, f.src_port, f.dst_ip, f.dst_port};
}

VrState::VrState(Ip4Addr gateway_ip, MacAddr mac, std::vector<Ip4Addr> public_ips, ResolverConfig config)
    : arp_(gateway_ip, mac, config), mac_(mac), public_ips_(std::move(public_ips))
{
    answers_[gateway_ip] = mac;
}

ArpOutcome VrState::handle_arp(const ArpFrame& frame, SimTime now)
{
    ArpOutcome out;
    if (frame.is_request()) {
        if (frame.is_garp()) {
            auto it = answers_.find(frame.sender_ip);
            if (it != answers_.end()) {
                if (frame.sender_mac != it->second) {
                    out.conflict = true;
                    ++conflicts_;
                }
                return out;
            }
            arp_.update_existing(frame.sender_ip, frame.sender_mac, now);
            return out;
        }
        auto it = answers_.find(frame.target_ip);
        if (it == answers_.end())
            return out;
        if (!frame.sender_ip.is_any() && !answers_.count(frame.sender_ip))
            arp_.learn(frame.sender_ip, frame.sender_mac, now);
        out.reply = make_arp_reply(frame, frame.target_ip, it->second);
        return out;
    }
    bool for_us = frame.l2_dst == mac_ || frame.l2_dst == arp_.mac();
    if (!for_us)
        return out;
    if (arp_.pending(frame.sender_ip) || arp_.has_entry(frame.sender_ip)) {
        arp_.learn(frame.sender_ip, frame.sender_mac, now);
        out.learned = true;
    }
    return out;
}

std::optional<DataFrame> VrState::snat_forward(const DataFrame& frame)
{
    if (public_ips_.empty()) {
        ++snat_drops_;
        return std::nullopt;
    }
    const FiveTuple inner = tuple_of(frame);
    DataFrame out = frame;
    out.l2_src = mac_;
    if (auto it = snat_.find(inner); it != snat_.end()) {
        out.src_ip = it->second.src_ip;
        out.src_port = it->second.src_port;
        return out;
    }
    const Ip4Addr pub = public_ips_.front();
    auto& used = used_ports_[pub];
    std::uint32_t port = kFirstSnatPort;
    for (auto p : used) {
        if (p > port)
            break;
        if (p == port)
            ++port;
    }
    if (port > 0xffff) {
        ++snat_drops_;
        return std::nullopt;
    }
    used.insert(static_cast<std::uint16_t>(port));
    FiveTuple outer{pub, static_cast<std::uint16_t>(port), inner.dst_ip, inner.dst_port};
    snat_[inner] = outer;
    unsnat_[FiveTuple{outer.dst_ip, outer.dst_port, outer.src_ip, outer.src_port}] =
        FiveTuple{inner.dst_ip, inner.dst_port, inner.src_ip, inner.src_port};
    out.src_ip = outer.src_ip;
    out.src_port = outer.src_port;
    return out;
}

std::optional<DataFrame> VrState::snat_reverse(const DataFrame& frame) const
{
    auto it = unsnat_.find(tuple_of(frame));
    if (it == unsnat_.end())
        return std::nullopt;
    DataFrame out = frame;
    out.src_ip = it->second.src_ip;
    out.src_port = it->second.src_port;
    out.dst_ip = it->second.dst_ip;
    out.dst_port = it->second.dst_port;
    return out;
}

void VrState::snat_release(const DataFrame& frame)
{
    auto it = snat_.find(tuple_of(frame));
    if (it == snat_.end())
        return;
    const FiveTuple outer = it->second;
    used_ports_[outer.src_ip].erase(outer.src_port);
    unsnat_.erase(FiveTuple{outer.dst_ip, outer.dst_port, outer.src_ip, outer.src_port});
    snat_.erase(it);
}

std::optional<DnatResult> VrState::dnat_forward(const DataFrame& frame)
{
    const FiveTuple key = tuple_of(frame);
    auto existing = conns_.find(key);
    if (existing == conns_.end()) {
        LbTable* table = nullptr;
        for (auto& t : lb_) {
            if (t.public_ip == frame.dst_ip && t.port == frame.dst_port) {
                table = &t;
                break;
            }
        }
        if (!table || table->members.empty()) {
            ++dnat_drops_;
            return std::nullopt;
        }
        const LbBackend chosen = table->members[table->cursor % table->members.size()];
        table->cursor = (table->cursor + 1) % table->members.size();
        existing = conns_.emplace(key, chosen).first;
    }
    DnatResult r;
    r.frame = frame;
    r.frame.dst_ip = existing->second.ip;
    r.frame.l2_src = mac_;
    r.member = existing->second.vm;
    return r;
}

void VrState::reset_state()
{
    snat_.clear();
    unsnat_.clear();
    used_ports_.clear();
    conns_.clear();
    for (auto& t : lb_)
        t.cursor = 0;
    arp_.clear();
}

void VsiState::attach(PortId port)
{
    ports_.insert(port);
}

void VsiState::detach(PortId port)
{
    ports_.erase(port);
    for (auto it = table_.begin(); it != table_.end();) {
        if (it->second == port)
            it = table_.erase(it);
        else
            ++it;
    }
}

std::vector<PortId> VsiState::forward(MacAddr src, MacAddr dst, PortId ingress)
{
    if (!src.is_zero() && !src.is_broadcast())
        table_[src] = ingress;
    if (!dst.is_broadcast()) {
        auto it = table_.find(dst);
        if (it != table_.end()) {
            if (it->second == ingress)
                return {};
            return {it->second};
        }
    }
    std::vector<PortId> out;
    for (const auto& p : ports_)
        if (p != ingress)
            out.push_back(p);
    return out;
}

std::optional<PortId> VsiState::lookup(MacAddr mac) const
{
    auto it = table_.find(mac);
    if (it == table_.end())
        return std::nullopt;
    return it->second;
}

void VtepState::learn(Vni vni, MacAddr mac, HostId host)
{
    if (mac.is_zero() || mac.is_broadcast())
        return;
    table_[{vni.value, mac}] = host;
}

std::optional<HostId> VtepState::lookup(Vni vni, MacAddr mac) const
{
    auto it = table_.find({vni.value, mac});
    if (it == table_.end())
        return std::nullopt;
    return it->second;
}

void VtepState::forget_host(HostId host)
{
    for (auto it = table_.begin(); it != table_.end();) {
        if (it->second == host)
            it = table_.erase(it);
        else
            ++it;
    }
}

VtepResult vtep_forward(AgentState* agent, const Frame& frame, Direction dir, SimTime now)
{
    VtepResult r;
    const auto* arp = std::get_if<ArpFrame>(&frame);
    if (!arp || !agent)
        return r;

    r.kind = classify(*arp, agent->gateway_ip());
    const LocalView view = agent->view(*arp, dir, now);
    agent->observe(*arp, dir, now);
    RuleDecision d = decide(*agent, *r.kind, dir, *arp, view);

    if (d.action == RuleAction::NotApplicable && *r.kind == ArpKind::GARP_VRtoVR &&
        arp->sender_ip != agent->gateway_ip()) {
        // GARP-shaped duplicate-address probe from a VM.
        agent->note_anomaly("GARP from VM address " + arp->sender_ip.str() + " filtered");
        d = RuleDecision{RuleAction::Filter, std::string(kRuleVmGarp), std::nullopt};
    }

    switch (d.action) {
    case RuleAction::Pass:
        r.effective = RuleAction::Pass;
        break;
    case RuleAction::Filter:
        r.effective = RuleAction::Filter;
        r.forward = false;
        break;
    case RuleAction::Proxy:
        r.effective = RuleAction::Proxy;
        r.forward = false;
        r.reply = agent->synthesize_proxy_reply(d, *arp, now);
        d.reply = r.reply;
        break;
    case RuleAction::PassFirstFilterRest:
        r.forward = agent->admit_flux(*arp, now);
        r.effective = r.forward ? RuleAction::Pass : RuleAction::Filter;
        break;
    case RuleAction::NotApplicable:
        agent->note_anomaly("rule " + d.rule_id + " produced at runtime");
        r.effective = RuleAction::NotApplicable;
        r.forward = false;
        break;
    }
    agent->record(d.rule_id, r.effective);
    r.decision = std::move(d);
    return r;
}

}  // namespace eywa
