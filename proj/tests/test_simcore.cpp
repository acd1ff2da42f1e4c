#include "doctest.h"

#include "simcore.hpp"

#include <algorithm>
#include <random>

using namespace eywa;

TEST_CASE("events run in time, rank, then insertion order")
{
    Simulator sim;
    std::vector<int> order;
    sim.schedule(20, [&] { order.push_back(4); });
    sim.schedule(10, [&] { order.push_back(2); }, 0, 5);
    sim.schedule(10, [&] { order.push_back(1); }, 0, 1);
    sim.schedule(10, [&] { order.push_back(3); }, 0, 5);
    sim.schedule(0, [&] { order.push_back(0); });
    sim.run_until(100);
    CHECK(order == std::vector<int>{0, 1, 2, 3, 4});
    CHECK(sim.now() == 100);
    CHECK(sim.executed() == 5);
}

TEST_CASE("handlers can schedule more work; run_until stops at the horizon")
{
    Simulator sim;
    int ticks = 0;
    std::function<void()> tick = [&] {
        ++ticks;
        sim.schedule(10, tick);
    };
    sim.schedule(0, tick);
    sim.run_until(95);
    CHECK(ticks == 10);  // t = 0, 10, ..., 90
    CHECK(sim.now() == 95);
    CHECK(sim.pending() == 1);
    sim.run_until(100);
    CHECK(ticks == 11);
}

TEST_CASE("scheduling into the past is rejected")
{
    Simulator sim;
    sim.run_until(50);
    CHECK_THROWS_AS(sim.schedule(-1, [] {}), Error);
    CHECK_THROWS_AS(sim.schedule_at(49, [] {}), Error);
    CHECK_NOTHROW(sim.schedule_at(50, [] {}));
}

TEST_CASE("trace sees every event")
{
    Simulator sim;
    std::vector<std::uint32_t> targets;
    sim.set_trace([&](SimTime, std::uint64_t, std::uint32_t target) { targets.push_back(target); });
    sim.schedule(1, [] {}, 7);
    sim.schedule(2, [] {}, 9);
    sim.run_until(10);
    CHECK(targets == std::vector<std::uint32_t>{7, 9});
}

TEST_CASE("max-min: textbook two-link example")
{
    // Link 0 (10) carries f0 and f1; link 1 (4) carries f1 and f2.
    const std::vector<LinkState> links = {{10.0, 0}, {4.0, 0}};
    const std::vector<FlowDemand> flows = {{0, {0}}, {1, {0, 1}}, {2, {1}}};
    auto a = solve_flows(flows, links);
    CHECK(a.rate_bps[0] == doctest::Approx(8.0));
    CHECK(a.rate_bps[1] == doctest::Approx(2.0));
    CHECK(a.rate_bps[2] == doctest::Approx(2.0));
}

TEST_CASE("max-min: demand-limited flows release capacity")
{
    const std::vector<LinkState> links = {{10.0, 0}};
    const std::vector<FlowDemand> flows = {{0, {0}, 3.0}, {1, {0}}, {2, {0}, 100.0}};
    auto a = solve_flows(flows, links);
    CHECK(a.rate_bps[0] == doctest::Approx(3.0));
    CHECK(a.rate_bps[1] == doctest::Approx(3.5));
    CHECK(a.rate_bps[2] == doctest::Approx(3.5));
}

TEST_CASE("max-min: dead links and zero demand give zero")
{
    const std::vector<LinkState> links = {{0.0, 0}, {5.0, 0}};
    const std::vector<FlowDemand> flows = {{0, {0, 1}}, {1, {1}, 0.0}, {2, {1}}};
    auto a = solve_flows(flows, links);
    CHECK(a.rate_bps[0] == 0.0);
    CHECK(a.rate_bps[1] == 0.0);
    CHECK(a.rate_bps[2] == doctest::Approx(5.0));

    CHECK_THROWS_AS(solve_flows(std::vector<FlowDemand>{{0, {}}}, links), Error);
    CHECK_THROWS_AS(solve_flows(std::vector<FlowDemand>{{0, {7}}}, links), Error);
    const std::vector<LinkState> inf = {{kUnbounded, 0}};
    CHECK_THROWS_AS(solve_flows(std::vector<FlowDemand>{{0, {0}}}, inf), Error);
}

TEST_CASE("max-min: random instances satisfy the bottleneck condition")
{
    std::mt19937_64 rng(12345);
    for (int trial = 0; trial < 200; ++trial) {
        const std::size_t nl = 1 + rng() % 6, nf = 1 + rng() % 10;
        std::vector<LinkState> links(nl);
        for (auto& l : links)
            l.capacity_bps = 1.0 + static_cast<double>(rng() % 100);
        std::vector<FlowDemand> flows(nf);
        for (std::size_t i = 0; i < nf; ++i) {
            flows[i].flow_id = i;
            for (std::size_t l = 0; l < nl; ++l)
                if (rng() % 2)
                    flows[i].path.push_back(l);
            if (flows[i].path.empty())
                flows[i].path.push_back(rng() % nl);
            if (rng() % 3 == 0)
                flows[i].demand_bps = 1.0 + static_cast<double>(rng() % 50);
        }
        auto a = solve_flows(flows, links);

        std::vector<double> load(nl, 0.0);
        for (std::size_t i = 0; i < nf; ++i)
            for (std::size_t l : flows[i].path)
                load[l] += a.rate_bps[i];
        for (std::size_t l = 0; l < nl; ++l)
            CHECK(load[l] <= links[l].capacity_bps * (1 + 1e-9));

        // Every flow is demand-limited or crosses a saturated link on which
        // no other flow gets more.
        for (std::size_t i = 0; i < nf; ++i) {
            if (a.rate_bps[i] >= flows[i].demand_bps * (1 - 1e-9))
                continue;
            bool bottleneck = false;
            for (std::size_t l : flows[i].path) {
                if (load[l] < links[l].capacity_bps * (1 - 1e-9))
                    continue;
                bool is_max = true;
                for (std::size_t j = 0; j < nf; ++j)
                    if (std::find(flows[j].path.begin(), flows[j].path.end(), l) != flows[j].path.end() &&
                        a.rate_bps[j] > a.rate_bps[i] * (1 + 1e-9))
                        is_max = false;
                bottleneck = bottleneck || is_max;
            }
            CAPTURE(trial);
            CHECK(bottleneck);
        }
    }
}

TEST_CASE("byte accounting")
{
    const std::vector<FlowDemand> flows = {{0, {0, 1}}, {1, {1}}};
    FlowAllocation a{{8e9, 4e9}};
    std::vector<double> bytes(2, 0.0);
    std::vector<double> per(2, 0.0);
    account(a, flows, kSecond / 2, bytes, [&](std::size_t i, double b) { per[i] += b; });
    CHECK(bytes[0] == doctest::Approx(0.5e9));
    CHECK(bytes[1] == doctest::Approx(0.75e9));
    CHECK(per[1] == doctest::Approx(0.25e9));
    CHECK_THROWS_AS(account(a, flows, -1, bytes), Error);
}
