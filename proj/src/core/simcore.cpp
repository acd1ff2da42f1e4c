#include "simcore.hpp"

#include <algorithm>
#include <cmath>

namespace eywa {

void Simulator::schedule(SimTime delay, Handler handler, std::uint32_t target, std::uint64_t rank)
{
    if (delay < 0)
        throw Error("cannot schedule an event with negative delay " + std::to_string(delay));
    schedule_at(now_ + delay, std::move(handler), target, rank);
}

void Simulator::schedule_at(SimTime when, Handler handler, std::uint32_t target, std::uint64_t rank)
{
    if (when < now_)
        throw Error("cannot schedule an event in the past");
    queue_.push(Event{when, rank, next_seq_++, target, std::move(handler)});
}

void Simulator::run_until(SimTime t_end)
{
    while (!queue_.empty() && queue_.top().time <= t_end) {
        // Move the handler out before popping; the handler may push new events.
        Event ev = std::move(const_cast<Event&>(queue_.top()));
        queue_.pop();
        now_ = ev.time;
        if (trace_)
            trace_(ev.time, ev.seq, ev.target);
        ++executed_;
        ev.handler();
    }
    if (t_end > now_)
        now_ = t_end;
}

namespace {
constexpr double kRelEps = 1e-12;
}

FlowAllocation solve_flows(std::span<const FlowDemand> demands, std::span<const LinkState> links)
{
    const std::size_t n = demands.size();
    FlowAllocation alloc;
    alloc.rate_bps.assign(n, 0.0);

    std::vector<double> remaining(links.size());
    for (std::size_t l = 0; l < links.size(); ++l)
        remaining[l] = std::max(0.0, links[l].capacity_bps);

    std::vector<bool> active(n, false);
    std::vector<std::size_t> users(links.size(), 0);
    for (std::size_t i = 0; i < n; ++i) {
        const auto& d = demands[i];
        if (d.path.empty())
            throw Error("flow " + std::to_string(d.flow_id) + " has an empty path");
        bool ok = d.demand_bps > 0.0;
        for (std::size_t l : d.path) {
            if (l >= links.size())
                throw Error("flow " + std::to_string(d.flow_id) + " references unknown link " + std::to_string(l));
            if (remaining[l] <= 0.0)
                ok = false;
        }
        active[i] = ok;
        if (ok) {
            for (std::size_t l : d.path)
                ++users[l];
        }
    }

    std::size_t live = static_cast<std::size_t>(std::count(active.begin(), active.end(), true));
    while (live > 0) {
        double inc = kUnbounded;
        for (std::size_t l = 0; l < links.size(); ++l) {
            if (users[l] > 0)
                inc = std::min(inc, remaining[l] / static_cast<double>(users[l]));
        }
        for (std::size_t i = 0; i < n; ++i) {
            if (active[i])
                inc = std::min(inc, demands[i].demand_bps - alloc.rate_bps[i]);
        }
        if (!std::isfinite(inc))
            throw Error("unbounded flow with no capacitated link");

        for (std::size_t i = 0; i < n; ++i) {
            if (active[i])
                alloc.rate_bps[i] += inc;
        }
        std::vector<bool> saturated(links.size(), false);
        for (std::size_t l = 0; l < links.size(); ++l) {
            if (users[l] == 0)
                continue;
            remaining[l] -= inc * static_cast<double>(users[l]);
            if (remaining[l] <= kRelEps * links[l].capacity_bps) {
                remaining[l] = 0.0;
                saturated[l] = true;
            }
        }
        for (std::size_t i = 0; i < n; ++i) {
            if (!active[i])
                continue;
            const auto& d = demands[i];
            bool freeze = std::isfinite(d.demand_bps) && d.demand_bps - alloc.rate_bps[i] <= kRelEps * d.demand_bps;
            if (freeze)
                alloc.rate_bps[i] = d.demand_bps;
            for (std::size_t l : d.path)
                freeze = freeze || saturated[l];
            if (freeze) {
                active[i] = false;
                --live;
                for (std::size_t l : d.path)
                    --users[l];
            }
        }
    }
    return alloc;
}

void account(const FlowAllocation& allocation, std::span<const FlowDemand> demands, SimTime dt,
             std::span<double> link_bytes, const std::function<void(std::size_t, double)>& per_flow)
{
    if (dt < 0)
        throw Error("cannot account over a negative interval");
    if (dt == 0)
        return;
    const double secs = to_seconds(dt);
    for (std::size_t i = 0; i < demands.size(); ++i) {
        double rate = allocation.rate_bps.at(i);
        if (rate <= 0.0)
            continue;
        double bytes = rate * secs / 8.0;
        for (std::size_t l : demands[i].path)
            link_bytes[l] += bytes;
        if (per_flow)
            per_flow(i, bytes);
    }
}

}  // namespace eywa
