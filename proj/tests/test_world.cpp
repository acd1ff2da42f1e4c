#include "doctest.h"

#include "world.hpp"

#include <algorithm>

using namespace eywa;

namespace {

// h0 runs vr0 and vm0; h1 runs only vm1; h2 runs vr2 and vm2.
TopologySpec small(NetMode mode = NetMode::Eywa)
{
    TopologySpec s;
    s.mode = mode;
    for (int i = 0; i < 3; ++i)
        s.hosts.push_back({"h" + std::to_string(i), 1e9, 50 * kMicrosecond});
    s.externals = {{"ext", 10e9, Ip4Addr::parse("198.51.100.10")}};
    TenantSpec t;
    t.name = "t";
    t.vms = {{"vm0", Ip4Addr::parse("10.0.1.1"), "h0", VmRole::Generic, 0.0, true},
             {"vm1", Ip4Addr::parse("10.0.1.2"), "h1", VmRole::Generic, 0.0, true},
             {"vm2", Ip4Addr::parse("10.0.1.3"), "h2", VmRole::Generic, 0.0, true}};
    t.vrs = {{"vr0", "h0", {Ip4Addr::parse("203.0.113.1")}, {}, true},
             {"vr2", "h2", {Ip4Addr::parse("203.0.113.3")}, {}, true}};
    s.tenants.push_back(t);
    return s;
}

double rate_at(const std::vector<RatePoint>& hist, SimTime t)
{
    double r = 0.0;
    for (const auto& p : hist)
        if (p.time <= t)
            r = p.rate_bps;
    return r;
}

std::size_t count_rule(const World& w, const std::string& host, const std::string& rule)
{
    return static_cast<std::size_t>(std::count_if(w.arp_events().begin(), w.arp_events().end(), [&](const ArpEvent& e) {
        return e.host == host && e.rule_id == rule;
    }));
}

}  // namespace

TEST_CASE("a VM with a local VR exits through it at line rate")
{
    World w(small(), WorldConfig{});
    w.at(0, [&] { w.start_flow({"f", "vm0", "ext", kUnbounded, 80}); });
    w.run(5 * kSecond);
    CHECK(rate_at(w.flow_rates("f"), 4 * kSecond) == doctest::Approx(1e9));
    const auto& routes = w.flow_routes("f");
    REQUIRE_FALSE(routes.empty());
    CHECK(routes.back().gateway_vr == w.vr_index("vr0"));
    // The VM's own gateway request never leaves the host.
    CHECK(count_rule(w, "h0", "5") >= 1);
    CHECK(count_rule(w, "h1", "6-2") == 0);
}

TEST_CASE("an orphan VM resolves the gateway through remote agents")
{
    World w(small(), WorldConfig{});
    w.at(0, [&] { w.start_flow({"f", "vm1", "ext", kUnbounded, 80}); });
    w.run(5 * kSecond);
    CHECK(rate_at(w.flow_rates("f"), 4 * kSecond) == doctest::Approx(1e9));
    CHECK(count_rule(w, "h1", "7") >= 1);
    CHECK(count_rule(w, "h0", "6-2") + count_rule(w, "h2", "6-2") == 2);
    // Two proxies answer, only one reply reaches the VM.
    CHECK(count_rule(w, "h1", "12") == 2);
    for (const auto& [key, stat] : w.gateway_replies())
        CHECK(stat.count == 1);
    const auto& learns = w.gateway_learns(w.vm_index("vm1"));
    REQUIRE_FALSE(learns.empty());
    CHECK(learns.front().ip == Ip4Addr::parse("10.0.0.1"));
}

TEST_CASE("private traffic between VMs of one tenant")
{
    World w(small(), WorldConfig{});
    w.at(0, [&] { w.start_flow({"p", "vm0", "vm1", 0.3e9, 80}); });
    w.run(2 * kSecond);
    CHECK(rate_at(w.flow_rates("p"), kSecond) == doctest::Approx(0.3e9));
    CHECK(count_rule(w, "h0", "21-1") == 1);
    CHECK(count_rule(w, "h1", "24-2") == 1);
}

TEST_CASE("killing the local VR drives the host to orphan mode and the VM recovers")
{
    WorldConfig cfg;
    World w(small(), cfg);
    w.at(0, [&] { w.start_flow({"f", "vm0", "ext", kUnbounded, 80}); });
    w.at(10 * kSecond, [&] { w.kill_vr("vr0"); });
    w.run(60 * kSecond);
    CHECK(w.topology().agent(HostId{0}, TenantId{0})->mode() == AgentMode::Orphan);
    const auto& rates = w.flow_rates("f");
    CHECK(rate_at(rates, 10 * kSecond + 1) == 0.0);
    SimTime back = -1;
    for (const auto& p : rates)
        if (p.time > 10 * kSecond && p.rate_bps > 0 && back < 0)
            back = p.time;
    REQUIRE(back > 0);
    const SimTime bound = cfg.agent.miss_threshold * cfg.agent.health_interval + cfg.vm_arp.ttl + cfg.vm_arp.retry;
    CHECK(back - 10 * kSecond <= bound);
    CHECK(w.flow_routes("f").back().gateway_vr == w.vr_index("vr2"));
    CHECK(w.counters().at("agent.orphan_transitions") == 1);
}

TEST_CASE("counters report containment in eywa mode")
{
    World w(small(), WorldConfig{});
    w.at(0, [&] {
        w.start_flow({"a", "vm1", "ext", kUnbounded, 80});
        w.start_flow({"b", "vm0", "vm2", kUnbounded, 80});
    });
    w.run(3 * kSecond);
    const auto c = w.counters();
    CHECK(c.at("arp.tunneled_garp") == 0);
    CHECK(c.at("arp.bad_broadcast_rule") == 0);
    CHECK(c.at("arp.na_decisions") == 0);
    CHECK(c.at("arp.max_gateway_replies_per_request") <= 1);
    CHECK(c.at("arp.locality_violations") == 0);
}

TEST_CASE("same seed, same run")
{
    auto once = [](std::uint64_t seed) {
        WorldConfig cfg;
        cfg.seed = seed;
        World w(small(), cfg);
        w.at(0, [&] { w.start_flow({"f", "vm1", "ext", kUnbounded, 80}); });
        w.at(2 * kSecond, [&] { w.kill_vr("vr0"); });
        w.run(40 * kSecond);
        std::vector<std::tuple<SimTime, std::string, std::string>> ev;
        for (const auto& e : w.arp_events())
            ev.emplace_back(e.time, e.host, e.rule_id);
        return ev;
    };
    CHECK(once(5) == once(5));
}

TEST_CASE("a zero-length run is empty but valid")
{
    World w(small(), WorldConfig{});
    CHECK_NOTHROW(w.run(0));
    CHECK(w.samples().size() == 1);
    World neg(small(), WorldConfig{});
    CHECK_THROWS_AS(neg.run(-1), ValidationError);
}

TEST_CASE("timeline actions reject bad references")
{
    World w(small(), WorldConfig{});
    CHECK_THROWS_AS(w.kill_vr("nope"), ValidationError);
    CHECK_THROWS_AS(w.migrate_vm("vm0", "h9"), ValidationError);
    w.start_flow({"f", "vm0", "ext", kUnbounded, 80});
    CHECK_THROWS_AS(w.start_flow({"f", "vm1", "ext", kUnbounded, 80}), ValidationError);
}

TEST_CASE("MVRRP virtual IPs may not collide with VM addresses")
{
    TopologySpec s = small(NetMode::Mvrrp);
    // Second group VIP is gateway + 1 = 10.0.0.2.
    s.tenants[0].vms[0].private_ip = Ip4Addr::parse("10.0.0.2");
    CHECK_THROWS_AS(World(s, WorldConfig{}), ValidationError);
}

TEST_CASE("MVRRP elects a new master after a VR dies")
{
    World w(small(NetMode::Mvrrp), WorldConfig{});
    w.at(0, [&] { w.start_flow({"f", "vm0", "ext", kUnbounded, 80}); });
    w.at(10 * kSecond, [&] { w.kill_vr("vr0"); });
    w.run(20 * kSecond);
    const auto& hist = w.master_history(0);
    REQUIRE_FALSE(hist.empty());
    CHECK(hist.back().master_vr == w.vr_index("vr2"));
    CHECK(hist.back().time - 10 * kSecond <= 3 * kSecond + 100 * kMillisecond);
    CHECK(rate_at(w.flow_rates("f"), 19 * kSecond) == doctest::Approx(1e9));
}

TEST_CASE("an orphan VM with no live VR anywhere is reported as starved")
{
    World w(small(), WorldConfig{});
    w.at(0, [&] {
        w.kill_vr("vr0");
        w.kill_vr("vr2");
        w.start_flow({"f", "vm1", "ext", kUnbounded, 80});
    });
    // Agents have not noticed yet at t=0 and proxy for their dead VRs; the
    // VM only starves at its next refresh, once both hosts are orphans.
    w.run(40 * kSecond);
    CHECK(rate_at(w.flow_rates("f"), 39 * kSecond) == 0.0);
    CHECK(w.counters().at("arp.gateway_starved") > 0);
    const auto& an = w.anomalies();
    CHECK(std::any_of(an.begin(), an.end(), [](const std::string& s) {
        return s.find("starved for VM 'vm1'") != std::string::npos;
    }));
}
