// Acceptance driver: one PASS/FAIL line per criterion, exit status 1 if any fail.

#include "harness.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <map>
#include <sstream>
#include <string>
#include <vector>

using namespace eywa;

namespace {

struct Check {
    bool ok = true;
    std::vector<std::string> notes;

    void expect(bool cond, const std::string& what)
    {
        if (!cond) {
            ok = false;
            notes.push_back(what);
        }
    }
    void note(const std::string& s) { notes.push_back(s); }
};

std::string fmt(const char* f, double v)
{
    char buf[64];
    std::snprintf(buf, sizeof buf, f, v);
    return buf;
}

RunResult run(const std::string& name, std::uint64_t seed = 1)
{
    RunOptions o;
    o.seed = seed;
    return run_scenario(builtin_scenario(name), o);
}

const AssertionResult* find(const RunResult& r, const std::string& name)
{
    for (const auto& a : r.assertions)
        if (a.name == name)
            return &a;
    return nullptr;
}

void all_pass(Check& c, const RunResult& r)
{
    for (const auto& a : r.assertions)
        c.expect(a.pass, r.scenario + ": " + a.name + " failed");
}

std::size_t count_prefix(const RunResult& r, const std::string& prefix)
{
    return static_cast<std::size_t>(std::count_if(r.assertions.begin(), r.assertions.end(), [&](const auto& a) {
        return a.name.rfind(prefix, 0) == 0;
    }));
}

bool within(double measured, double expected, double rel)
{
    return std::fabs(measured - expected) <= rel * std::fabs(expected);
}

// Per-sample sums of one column over one entity type, read back from the CSV.
std::map<std::string, double> column_sums(const std::string& csv, const std::string& type, bool tx)
{
    std::map<std::string, double> sums;
    std::istringstream in(csv);
    std::string line;
    std::getline(in, line);
    while (std::getline(in, line)) {
        std::vector<std::string> f;
        std::stringstream ss(line);
        for (std::string cell; std::getline(ss, cell, ',');)
            f.push_back(cell);
        if (f.size() != 5 || f[1] != type)
            continue;
        sums[f[0]] += std::stod(tx ? f[3] : f[4]);
    }
    return sums;
}

// Median of the non-zero samples, which is the plateau for the step-shaped
// load profiles used here.
double plateau(const std::map<std::string, double>& sums)
{
    std::vector<double> v;
    for (const auto& [t, s] : sums)
        if (s > 0)
            v.push_back(s);
    if (v.empty())
        return 0.0;
    std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(v.size() / 2), v.end());
    return v[v.size() / 2];
}

struct Criterion {
    int id;
    const char* title;
    std::function<void(Check&)> body;
    double limit_ms = 0;  // 0 means no runtime bound
};

}  // namespace

int main()
{
    const std::vector<Criterion> criteria = {
        {1, "rule matrix conformance",
         [](Check& c) {
             ConformanceReport r = rules_conformance();
             c.expect(r.mismatches.empty(), std::to_string(r.mismatches.size()) + " mismatching cells");
             c.expect(r.missing_ids.empty(), std::to_string(r.missing_ids.size()) + " rule ids never produced");
             c.expect(r.census_ran && r.census_na == 0, "runtime census saw not-applicable decisions");
             c.note(std::to_string(r.checked) + " cases, " + std::to_string(enumerated_rule_ids().size()) + " ids");
         },
         1000},
        {2, "outbound and inbound aggregate across 10 pairs",
         [](Check& c) {
             RunResult r = run("fig11_outbound");
             all_pass(c, r);
             const double out = plateau(column_sums(r.throughput_csv, "external", false));
             const double in = plateau(column_sums(r.throughput_csv, "external", true));
             c.expect(within(out, 10e9, 0.005), "outbound plateau " + fmt("%.4g", out));
             c.expect(within(in, 10e9, 0.005), "inbound plateau " + fmt("%.4g", in));
             c.note("out " + fmt("%.4g", out) + " in " + fmt("%.4g", in));
         },
         5000},
        {3, "autoscale stages track active pair count",
         [](Check& c) {
             RunResult r = run("fig12_autoscale");
             all_pass(c, r);
             c.expect(count_prefix(r, "stage") == 19, "expected 10 growth and 9 shrink stages");
             c.note(std::to_string(count_prefix(r, "stage")) + " stages");
         }},
        {4, "inter-tenant 1-to-1 per-VM throughput",
         [](Check& c) {
             RunResult r = run("fig13_1to1");
             all_pass(c, r);
             c.expect(count_prefix(r, "per_vm[") >= 5, "missing per-VM assertions");
         }},
        {5, "inter-tenant 1-to-N per host pair",
         [](Check& c) {
             RunResult r = run("fig14_1toN");
             all_pass(c, r);
             c.expect(count_prefix(r, "pair_") == 5, "expected 5 host pairs");
         }},
        {6, "mixed traffic, eywa versus single shared VR",
         [](Check& c) {
             RunResult e = run("fig15_mixed");
             RunResult s = run("fig15_mixed_single_vr");
             all_pass(c, e);
             all_pass(c, s);
             c.expect(count_prefix(e, "pair_") == 5, "expected 5 host pairs");
             const auto* cap = find(s, "all_hosts_aggregate");
             c.expect(cap && cap->measured && within(*cap->measured, 2e9, 0.005), "single_vr cap is not 2 Gbps");
             if (cap && cap->measured)
                 c.note("single_vr " + fmt("%.4g", *cap->measured));
         }},
        {7, "failover within bound with a single gateway reply",
         [](Check& c) {
             RunResult r = run("failover_vr_kill");
             all_pass(c, r);
             const auto* f = find(r, "vm0_failover_s");
             c.expect(f && f->measured && *f->measured <= 34.0, "failover over 34 s");
             const auto* g = find(r, "vm0_gateway_replies_per_request");
             c.expect(g && g->measured && *g->measured == 1.0, "gateway replies != 1");
             c.expect(find(r, "others_uninterrupted") != nullptr, "no interruption check");
             if (f && f->measured)
                 c.note("failover " + fmt("%.3f", *f->measured) + " s");
         }},
        {8, "migration rebinds to the local VR",
         [](Check& c) {
             RunResult r = run("migration_rebind");
             all_pass(c, r);
             const auto* rb = find(r, "vm0_rebind_s");
             const auto* hops = find(r, "vm0_hops_decrease");
             c.expect(rb && rb->measured && *rb->measured <= 30.0, "rebind slower than cache ttl");
             c.expect(hops && hops->measured && hops->expected && *hops->measured < *hops->expected,
                      "hop count did not decrease");
             c.expect(find(r, "vm0_gateway_ip_stable") && find(r, "vm0_gateway_ip_stable")->pass,
                      "gateway IP changed");
             if (rb && rb->measured && hops && hops->measured)
                 c.note("rebind " + fmt("%.3f", *rb->measured) + " s, hops " + fmt("%.0f", *hops->expected) +
                        " -> " + fmt("%.0f", *hops->measured));
         }},
        {9, "broadcast containment over all builtins",
         [](Check& c) {
             std::size_t runs = 0;
             for (const auto& b : builtin_scenarios()) {
                 RunResult r = run(b.name);
                 ++runs;
                 if (r.mode != NetMode::Eywa)
                     continue;
                 c.expect(count_prefix(r, "containment.") == 5, b.name + ": containment checks missing");
                 for (const auto& a : r.assertions)
                     if (a.name.rfind("containment.", 0) == 0)
                         c.expect(a.pass, b.name + ": " + a.name);
                 c.expect(r.counters.at("arp.tunneled_garp") == 0, b.name + ": tunneled GARP");
                 c.expect(r.counters.at("arp.bad_broadcast_rule") == 0, b.name + ": bad broadcast rule");
                 c.expect(r.counters.at("arp.na_decisions") == 0, b.name + ": N/A decisions");
                 c.expect(r.counters.at("arp.max_gateway_replies_per_request") <= 1, b.name + ": reply flux");
             }
             c.note(std::to_string(runs) + " scenarios");
         }},
        {10, "byte-identical outputs for a fixed seed",
         [](Check& c) {
             std::size_t runs = 0;
             for (const auto& b : builtin_scenarios())
                 for (std::uint64_t seed : {1ULL, 1234ULL}) {
                     RunResult a = run(b.name, seed);
                     RunResult z = run(b.name, seed);
                     ++runs;
                     c.expect(a.throughput_csv == z.throughput_csv, b.name + ": throughput.csv differs");
                     c.expect(a.arp_events_csv == z.arp_events_csv, b.name + ": arp_events.csv differs");
                     c.expect(a.report_json == z.report_json, b.name + ": report.json differs");
                 }
             c.note(std::to_string(runs) + " run pairs");
         }},
        {11, "MVRRP convergence, fixed assignment, VNI space",
         [](Check& c) {
             RunResult r = run("failover_vr_kill_mvrrp");
             all_pass(c, r);
             const auto* conv = find(r, "vrrp_convergence_s");
             c.expect(conv && conv->measured && *conv->measured <= 3.0, "convergence over 3 s");
             const auto* imm = find(r, "assignment_immutable");
             c.expect(imm && imm->pass, "assignments changed");

             VniRegistry reg;
             std::uint32_t last = 0;
             for (std::uint32_t t = 0; t < Vni::kSpace; ++t)
                 last = reg.allocate(TenantId{t}).value;
             c.expect(reg.size() == 16'777'216 && last == 16'777'215, "allocator stopped early");
             bool threw = false;
             try {
                 reg.allocate(TenantId{Vni::kSpace});
             } catch (const CapacityError&) {
                 threw = true;
             }
             c.expect(threw, "allocation past 16777216 did not fail");
             if (conv && conv->measured)
                 c.note("convergence " + fmt("%.3f", *conv->measured) + " s");
         }},
    };

    int failed = 0;
    for (const auto& cr : criteria) {
        Check c;
        const auto t0 = std::chrono::steady_clock::now();
        try {
            cr.body(c);
        } catch (const std::exception& e) {
            c.expect(false, std::string("exception: ") + e.what());
        }
        const double ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
        if (cr.limit_ms > 0)
            c.expect(ms < cr.limit_ms, "runtime " + fmt("%.0f", ms) + " ms over limit");
        std::string detail;
        for (const auto& n : c.notes)
            detail += (detail.empty() ? "" : "; ") + n;
        std::printf("%s  criterion %2d  %-48s %8.1f ms  %s\n", c.ok ? "PASS" : "FAIL", cr.id, cr.title, ms,
                    detail.c_str());
        failed += c.ok ? 0 : 1;
    }
    std::printf("%d/%zu criteria passed\n", static_cast<int>(criteria.size()) - failed, criteria.size());
    return failed ? 1 : 0;
}
