#pragma once

#include "types.hpp"

#include <cstdint>
#include <functional>
#include <limits>
#include <queue>
#include <span>
#include <vector>

namespace eywa {

// Single-threaded discrete-event engine. Events run in (time, rank, sequence)
// order; with the default rank this is plain insertion order at equal
// timestamps.
class Simulator {
public:
    using Handler = std::function<void()>;
    using TraceFn = std::function<void(SimTime, std::uint64_t seq, std::uint32_t target)>;

    SimTime now() const { return now_; }

    void schedule(SimTime delay, Handler handler, std::uint32_t target = 0, std::uint64_t rank = 0);
    void schedule_at(SimTime when, Handler handler, std::uint32_t target = 0, std::uint64_t rank = 0);

    // Executes every event stamped <= t_end, then parks the clock at t_end.
    void run_until(SimTime t_end);

    std::size_t pending() const { return queue_.size(); }
    std::uint64_t executed() const { return executed_; }

    void set_trace(TraceFn fn) { trace_ = std::move(fn); }

private:
    struct Event {
        SimTime time;
        std::uint64_t rank;
        std::uint64_t seq;
        std::uint32_t target;
        Handler handler;
    };
    struct Later {
        bool operator()(const Event& a, const Event& b) const
        {
            if (a.time != b.time)
                return a.time > b.time;
            if (a.rank != b.rank)
                return a.rank > b.rank;
            return a.seq > b.seq;
        }
    };

    SimTime now_ = 0;
    std::uint64_t next_seq_ = 0;
    std::uint64_t executed_ = 0;
    std::priority_queue<Event, std::vector<Event>, Later> queue_;
    TraceFn trace_;
};

inline constexpr double kUnbounded = std::numeric_limits<double>::infinity();

struct LinkState {
    double capacity_bps = 0.0;
    SimTime latency = 0;
};

struct FlowDemand {
    std::uint64_t flow_id = 0;
    std::vector<std::size_t> path;  // indices into the link table
    double demand_bps = kUnbounded;
};

struct FlowAllocation {
    std::vector<double> rate_bps;  // aligned with the demand list
};

// Progressive-filling max-min fair allocation.
FlowAllocation solve_flows(std::span<const FlowDemand> demands, std::span<const LinkState> links);

// Advances per-link byte counters by rate * dt and reports per-flow bytes.
void account(const FlowAllocation& allocation, std::span<const FlowDemand> demands, SimTime dt,
             std::span<double> link_bytes, const std::function<void(std::size_t, double)>& per_flow = {});

}  // namespace eywa
