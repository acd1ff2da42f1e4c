#include "doctest.h"

#include "net_model.hpp"

using namespace eywa;

namespace {

TopologySpec two_host_spec(NetMode mode = NetMode::Eywa)
{
    TopologySpec s;
    s.mode = mode;
    s.hosts = {{"h0", 1e9, 50 * kMicrosecond}, {"h1", 1e9, 50 * kMicrosecond}};
    s.externals = {{"ext", 10e9, Ip4Addr::parse("198.51.100.10")}};
    TenantSpec t;
    t.name = "t";
    t.vms = {{"vm0", Ip4Addr::parse("10.0.1.1"), "h0", VmRole::Generic, 0.0, true},
             {"vm1", Ip4Addr::parse("10.0.1.2"), "h1", VmRole::Generic, 0.5e9, true}};
    t.vrs = {{"vr0", "h0", {Ip4Addr::parse("203.0.113.1")}, {}, true}};
    s.tenants.push_back(t);
    return s;
}

}  // namespace

TEST_CASE("VNI allocation is lowest-free and reuses released numbers")
{
    VniRegistry r;
    CHECK(r.allocate(TenantId{0}).value == 0u);
    CHECK(r.allocate(TenantId{1}).value == 1u);
    CHECK(r.allocate(TenantId{2}).value == 2u);
    CHECK(r.allocate(TenantId{1}).value == 1u);  // idempotent per tenant
    CHECK(r.size() == 3);
    r.release(TenantId{1});
    CHECK_FALSE(r.is_allocated(Vni{1}));
    CHECK_FALSE(r.lookup(TenantId{1}));
    CHECK(r.allocate(TenantId{7}).value == 1u);
    CHECK(r.allocate(TenantId{8}).value == 3u);
    CHECK(r.lookup(TenantId{7})->value == 1u);
    r.release(TenantId{99});  // unknown tenants are ignored
    CHECK(r.size() == 4);
}

TEST_CASE("build_topology assigns identities")
{
    Topology topo = build_topology(two_host_spec());
    REQUIRE(topo.hosts.size() == 2);
    REQUIRE(topo.vms.size() == 2);
    REQUIRE(topo.vrs.size() == 1);
    const Tenant& t = topo.tenant(TenantId{0});
    CHECK(topo.vms[0].mac == MacAddr::for_instance(t.vni.value, 0));
    CHECK(topo.vms[1].mac == MacAddr::for_instance(t.vni.value, 1));
    CHECK(topo.vrs[0].mac == MacAddr::for_instance(t.vni.value, 0x8000));
    CHECK(topo.vms[0].gateway_ip == t.gateway_ip);
    CHECK(topo.vms[0].nic_bps == 1e9);   // defaults to the host link
    CHECK(topo.vms[1].nic_bps == 0.5e9);
    CHECK(topo.find_vm("vm1") == 1u);
    CHECK(topo.find_vr_by_public_ip(Ip4Addr::parse("203.0.113.1")) == 0u);
    CHECK(topo.find_vm_by_ip(TenantId{0}, Ip4Addr::parse("10.0.1.2")) == 1u);
    CHECK_FALSE(topo.find_host("nope"));
}

TEST_CASE("agents exist per host and tenant with a VSi, in eywa mode only")
{
    Topology topo = build_topology(two_host_spec());
    CHECK(topo.agent_count() == 2);
    const AgentState* a0 = topo.agent(HostId{0}, TenantId{0});
    const AgentState* a1 = topo.agent(HostId{1}, TenantId{0});
    REQUIRE(a0);
    REQUIRE(a1);
    CHECK(a0->mode() == AgentMode::Normal);
    CHECK(a1->mode() == AgentMode::Orphan);
    CHECK(topo.local_vr(HostId{0}, TenantId{0}) == 0u);
    CHECK_FALSE(topo.local_vr(HostId{1}, TenantId{0}));
    CHECK(topo.hosts_with_vsi(TenantId{0}).size() == 2);

    Topology mv = build_topology(two_host_spec(NetMode::Mvrrp));
    CHECK(mv.agent_count() == 0);
}

TEST_CASE("placing a VR on an orphan host flips it to normal and emits a GARP")
{
    Topology topo = build_topology(two_host_spec());
    PlacementResult r = place_instance(topo, TenantId{0}, VrSpec{"vr1", "h1", {Ip4Addr::parse("203.0.113.2")}, {}, true},
                                       HostId{1}, 5 * kSecond);
    CHECK(r.mode_changed);
    REQUIRE(r.garp);
    CHECK(r.garp->is_garp());
    CHECK(r.garp->sender_ip == topo.tenant(TenantId{0}).gateway_ip);
    CHECK(topo.agent(HostId{1}, TenantId{0})->mode() == AgentMode::Normal);

    // Removing it drops the host back to orphan mode.
    topo.detach_vr(*topo.find_vr("vr1"));
    CHECK(topo.agent(HostId{1}, TenantId{0})->mode() == AgentMode::Orphan);
}

TEST_CASE("the VSi goes away with the last local instance")
{
    Topology topo = build_topology(two_host_spec());
    topo.detach_vm(1);
    CHECK(topo.hosts_with_vsi(TenantId{0}).size() == 1);
    CHECK_FALSE(topo.agent(HostId{1}, TenantId{0}));
    topo.attach_vm(1);
    CHECK(topo.agent(HostId{1}, TenantId{0}));
}

TEST_CASE("validation names the offending entity")
{
    auto expect = [](TopologySpec s, const std::string& needle) {
        try {
            validate(s);
            FAIL("accepted: " << needle);
        } catch (const ValidationError& e) {
            CHECK(std::string(e.what()).find(needle) != std::string::npos);
        }
    };
    {
        auto s = two_host_spec();
        s.hosts.push_back(s.hosts[0]);
        expect(s, "duplicate host 'h0'");
    }
    {
        auto s = two_host_spec();
        s.hosts[1].link_bps = 0;
        expect(s, "h1");
    }
    {
        auto s = two_host_spec();
        s.tenants[0].vms[0].host = "h9";
        expect(s, "unknown host 'h9'");
    }
    {
        auto s = two_host_spec();
        s.tenants[0].vms[1].private_ip = s.tenants[0].vms[0].private_ip;
        expect(s, "duplicates private IP");
    }
    {
        auto s = two_host_spec();
        s.tenants[0].vms[0].private_ip = s.tenants[0].gateway_ip;
        expect(s, "gateway IP");
    }
    {
        auto s = two_host_spec();
        s.tenants[0].vrs.push_back({"vr9", "h0", {Ip4Addr::parse("203.0.113.9")}, {}, true});
        expect(s, "second VR");
    }
    {
        auto s = two_host_spec();
        s.tenants[0].vrs.push_back({"vr9", "h1", {Ip4Addr::parse("203.0.113.1")}, {}, true});
        expect(s, "reuses public IP");
    }
    {
        auto s = two_host_spec();
        s.tenants[0].vrs[0].lb.push_back({Ip4Addr::any(), 80, {"ghost"}});
        expect(s, "unknown VM 'ghost'");
    }
    {
        auto s = two_host_spec();
        s.tenants[0].vms[1].name = "vm0";
        expect(s, "duplicate entity name 'vm0'");
    }
    CHECK_NOTHROW(validate(two_host_spec()));
}

TEST_CASE("MVRRP tenants are capped at 254 VRs")
{
    TopologySpec s;
    s.mode = NetMode::Mvrrp;
    TenantSpec t;
    t.name = "big";
    for (int i = 0; i < 255; ++i) {
        s.hosts.push_back({"h" + std::to_string(i), 1e9, 0});
        t.vrs.push_back({"vr" + std::to_string(i), "h" + std::to_string(i),
                         {Ip4Addr{Ip4Addr::parse("203.0.0.1").value + static_cast<std::uint32_t>(i)}}, {}, true});
    }
    s.tenants.push_back(t);
    CHECK_THROWS_AS(validate(s), CapacityError);
    s.tenants[0].vrs.pop_back();
    CHECK_NOTHROW(validate(s));
}
