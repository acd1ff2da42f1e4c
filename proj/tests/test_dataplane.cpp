#include "doctest.h"

#include "dataplane.hpp"

using namespace eywa;

namespace {

const Ip4Addr kGw = Ip4Addr::parse("10.0.0.1");
const Ip4Addr kVm1 = Ip4Addr::parse("10.0.1.1");
const Ip4Addr kVm2 = Ip4Addr::parse("10.0.1.2");
const Ip4Addr kPub = Ip4Addr::parse("203.0.113.1");
const Ip4Addr kExt = Ip4Addr::parse("198.51.100.1");
const MacAddr kVrMac = MacAddr::for_instance(1, 0x8000);
const MacAddr kVr2Mac = MacAddr::for_instance(1, 0x8001);
const MacAddr kVm1Mac = MacAddr::for_instance(1, 0);
const MacAddr kVm2Mac = MacAddr::for_instance(1, 1);

DataFrame flow(Ip4Addr src, std::uint16_t sport, Ip4Addr dst, std::uint16_t dport)
{
    DataFrame d;
    d.src_ip = src;
    d.src_port = sport;
    d.dst_ip = dst;
    d.dst_port = dport;
    return d;
}

VrState make_vr()
{
    VrState vr(kGw, kVrMac, {kPub});
    vr.set_answers({{kGw, kVrMac}, {kPub, kVrMac}});
    return vr;
}

}  // namespace

TEST_CASE("resolver: miss, pending, learn, expire, stale")
{
    ArpResolver r(kVm1, kVm1Mac, ResolverConfig{30 * kSecond, kSecond});
    auto first = r.resolve(kGw, 0);
    CHECK_FALSE(first.mac);
    REQUIRE(first.request);
    CHECK(first.request->target_ip == kGw);
    CHECK(r.pending(kGw));
    // No duplicate request while one is in flight.
    CHECK_FALSE(r.resolve(kGw, 10).request);

    r.learn(kGw, kVrMac, 100);
    CHECK_FALSE(r.pending(kGw));
    CHECK(r.lookup(kGw, 100) == kVrMac);
    CHECK(r.expires_at(kGw) == 100 + 30 * kSecond);
    CHECK(r.lookup(kGw, 100 + 30 * kSecond - 1) == kVrMac);
    CHECK_FALSE(r.lookup(kGw, 100 + 30 * kSecond));

    // Expired entries stay usable while the refresh is in flight.
    auto stale = r.resolve(kGw, 100 + 30 * kSecond);
    CHECK(stale.mac == kVrMac);
    CHECK(stale.request);
    CHECK(stale.request->seq > first.request->seq);
}

TEST_CASE("VM stack answers for itself and learns only solicited replies")
{
    VmStack vm(kVm1, kVm1Mac, kGw);
    // Request for us: reply and learn the requester.
    auto out = vm.handle_arp(make_arp_request(kGw, kVrMac, kVm1, 4), 0);
    REQUIRE(out.reply);
    CHECK(out.reply->sender_mac == kVm1Mac);
    CHECK(out.reply->seq == 4u);
    CHECK(vm.arp().lookup(kGw, 0) == kVrMac);

    // Request for someone else: ignored.
    CHECK_FALSE(vm.handle_arp(make_arp_request(kGw, kVrMac, kVm2), 0).reply);

    // Unsolicited reply is ignored; solicited one is learned.
    VmStack fresh(kVm1, kVm1Mac, kGw);
    const ArpFrame req = make_arp_request(kVm1, kVm1Mac, kGw);
    CHECK_FALSE(fresh.handle_arp(make_arp_reply(req, kGw, kVrMac), 0).learned);
    auto pending = fresh.resolve(kGw, 0);
    CHECK(fresh.handle_arp(make_arp_reply(*pending.request, kGw, kVrMac), 5).learned);
    CHECK(fresh.arp().lookup(kGw, 5) == kVrMac);
}

TEST_CASE("GARP updates existing entries and flags conflicts")
{
    VmStack vm(kVm1, kVm1Mac, kGw);
    // No entry yet: GARP does not create one.
    vm.handle_arp(make_garp(kGw, kVr2Mac), 0);
    CHECK_FALSE(vm.arp().has_entry(kGw));
    vm.arp().learn(kGw, kVrMac, 0);
    vm.handle_arp(make_garp(kGw, kVr2Mac), 10);
    CHECK(vm.arp().lookup(kGw, 10) == kVr2Mac);
    CHECK(vm.handle_arp(make_garp(kVm1, kVm2Mac), 10).conflict);

    VrState vr = make_vr();
    CHECK(vr.handle_arp(make_garp(kGw, kVr2Mac), 0).conflict);
    CHECK(vr.conflicts() == 1);
    CHECK_FALSE(vr.handle_arp(make_garp(kGw, kVrMac), 0).conflict);
}

TEST_CASE("VR answers for its addresses only")
{
    VrState vr = make_vr();
    auto out = vr.handle_arp(make_arp_request(kVm1, kVm1Mac, kGw, 2), 0);
    REQUIRE(out.reply);
    CHECK(out.reply->sender_ip == kGw);
    CHECK(out.reply->sender_mac == kVrMac);
    CHECK(vr.arp().lookup(kVm1, 0) == kVm1Mac);
    CHECK_FALSE(vr.handle_arp(make_arp_request(kVm1, kVm1Mac, kVm2), 0).reply);
}

TEST_CASE("SNAT allocates the lowest free port and reverses")
{
    VrState vr = make_vr();
    auto a = vr.snat_forward(flow(kVm1, 40000, kExt, 80));
    auto b = vr.snat_forward(flow(kVm2, 40000, kExt, 80));
    REQUIRE(a);
    REQUIRE(b);
    CHECK(a->src_ip == kPub);
    CHECK(a->src_port == VrState::kFirstSnatPort);
    CHECK(b->src_port == VrState::kFirstSnatPort + 1);
    CHECK(a->l2_src == kVrMac);
    CHECK(vr.snat_size() == 2);

    // Same inner tuple keeps its binding.
    CHECK(vr.snat_forward(flow(kVm1, 40000, kExt, 80))->src_port == a->src_port);

    auto back = vr.snat_reverse(flow(kExt, 80, kPub, a->src_port));
    REQUIRE(back);
    CHECK(back->dst_ip == kVm1);
    CHECK(back->dst_port == 40000);
    CHECK_FALSE(vr.snat_reverse(flow(kExt, 80, kPub, 9)));

    // Released ports are reused lowest-first.
    vr.snat_release(flow(kVm1, 40000, kExt, 80));
    CHECK(vr.snat_forward(flow(kVm1, 40001, kExt, 80))->src_port == VrState::kFirstSnatPort);

    vr.reset_state();
    CHECK(vr.snat_size() == 0);
}

TEST_CASE("SNAT without a public IP drops")
{
    VrState vr(kGw, kVrMac, {});
    CHECK_FALSE(vr.snat_forward(flow(kVm1, 1, kExt, 80)));
    CHECK(vr.snat_drops() == 1);
}

TEST_CASE("DNAT round-robins new connections and pins existing ones")
{
    VrState vr = make_vr();
    vr.add_lb(LbTable{kPub, 80, {{0, kVm1}, {1, kVm2}}, 0});
    auto c1 = vr.dnat_forward(flow(kExt, 5000, kPub, 80));
    auto c2 = vr.dnat_forward(flow(kExt, 5001, kPub, 80));
    auto c3 = vr.dnat_forward(flow(kExt, 5002, kPub, 80));
    REQUIRE((c1 && c2 && c3));
    CHECK(c1->member == 0);
    CHECK(c2->member == 1);
    CHECK(c3->member == 0);
    CHECK(c1->frame.dst_ip == kVm1);
    CHECK(vr.dnat_forward(flow(kExt, 5001, kPub, 80))->member == 1);

    vr.dnat_release(flow(kExt, 5001, kPub, 80));
    CHECK(vr.dnat_forward(flow(kExt, 5001, kPub, 80))->member == 1);  // cursor moved on: 0,1,0 -> next is 1

    CHECK_FALSE(vr.dnat_forward(flow(kExt, 5000, kPub, 443)));
    CHECK(vr.dnat_drops() == 1);
}

TEST_CASE("VSi learns and floods")
{
    VsiState vsi;
    const PortId p_vm{PortKind::Vm, 0}, p_vr{PortKind::Vr, 0}, p_vtep = PortId::vtep();
    vsi.attach(p_vm);
    vsi.attach(p_vr);
    vsi.attach(p_vtep);

    // Broadcast floods everywhere but the ingress.
    auto out = vsi.forward(kVm1Mac, MacAddr::broadcast(), p_vm);
    CHECK(out.size() == 2);
    CHECK(vsi.lookup(kVm1Mac) == p_vm);

    // Unknown unicast floods; known unicast goes straight to its port.
    CHECK(vsi.forward(kVrMac, kVm2Mac, p_vr).size() == 2);
    auto direct = vsi.forward(kVrMac, kVm1Mac, p_vr);
    REQUIRE(direct.size() == 1);
    CHECK(direct.front() == p_vm);

    // Hairpin to the ingress is dropped.
    CHECK(vsi.forward(kVm2Mac, kVm1Mac, p_vm).empty());
}

TEST_CASE("VTEP table keys by VNI")
{
    VtepState v;
    v.learn(Vni{1}, kVm1Mac, HostId{3});
    CHECK(v.lookup(Vni{1}, kVm1Mac) == HostId{3});
    CHECK_FALSE(v.lookup(Vni{2}, kVm1Mac));
    v.learn(Vni{1}, MacAddr::broadcast(), HostId{3});
    CHECK_FALSE(v.lookup(Vni{1}, MacAddr::broadcast()));
    v.forget_host(HostId{3});
    CHECK_FALSE(v.lookup(Vni{1}, kVm1Mac));
}

TEST_CASE("vtep_forward applies the agent's decision")
{
    AgentState agent(HostId{0}, kGw, MacAddr::for_agent(0));
    agent.attach_vr(kVrMac, 0);
    agent.attach_vm(kVm1, kVm1Mac);

    // Normal host, local VM asking for the gateway: filtered at the VTEP.
    auto r5 = vtep_forward(&agent, make_arp_request(kVm1, kVm1Mac, kGw), Direction::Outbound, 0);
    CHECK_FALSE(r5.forward);
    CHECK(r5.decision->rule_id == "5");

    // Remote orphan VM asking for the gateway: answered by proxy with the local VR's MAC.
    auto r62 = vtep_forward(&agent, make_arp_request(kVm2, kVm2Mac, kGw, 8), Direction::Inbound, 0);
    CHECK_FALSE(r62.forward);
    REQUIRE(r62.reply);
    CHECK(r62.reply->sender_mac == kVrMac);
    CHECK(r62.reply->seq == 8u);

    // Orphan host: only the first gateway reply to a request gets through.
    AgentState orphan(HostId{1}, kGw, MacAddr::for_agent(1));
    orphan.attach_vm(kVm2, kVm2Mac);
    const ArpFrame req = make_arp_request(kVm2, kVm2Mac, kGw, 1);
    auto first = vtep_forward(&orphan, make_arp_reply(req, kGw, kVrMac), Direction::Inbound, 0);
    auto second = vtep_forward(&orphan, make_arp_reply(req, kGw, kVr2Mac), Direction::Inbound, 1);
    CHECK(first.forward);
    CHECK(first.effective == RuleAction::Pass);
    CHECK_FALSE(second.forward);
    CHECK(second.effective == RuleAction::Filter);
    CHECK(orphan.counters().at("12:pass") == 1);
    CHECK(orphan.counters().at("12:filter") == 1);

    // VM-originated GARP-shaped probes never leave the host. A normal host
    // already filters every outbound GARP; an orphan host flags it.
    auto ng = vtep_forward(&agent, make_garp(kVm1, kVm1Mac), Direction::Outbound, 0);
    CHECK_FALSE(ng.forward);
    CHECK(ng.decision->rule_id == "17");
    auto vg = vtep_forward(&orphan, make_garp(kVm2, kVm2Mac), Direction::Outbound, 0);
    CHECK_FALSE(vg.forward);
    CHECK(vg.decision->rule_id == kRuleVmGarp);

    // No agent (baselines) and data frames always pass untouched.
    CHECK(vtep_forward(nullptr, make_arp_request(kVm1, kVm1Mac, kGw), Direction::Outbound, 0).forward);
    CHECK(vtep_forward(&agent, Frame{DataFrame{}}, Direction::Outbound, 0).forward);
}
