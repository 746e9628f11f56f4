// Runs the acceptance criteria and prints one PASS/FAIL line per criterion.
// Exit status is non-zero when a blocking criterion fails.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <functional>
#include <map>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "../support/generators.hpp"
#include "smartpubsub/harness/network.hpp"
#include "smartpubsub/harness/scenario.hpp"
#include "smartpubsub/scoutsubs/filter_table.hpp"

using namespace smartpubsub;
using namespace smartpubsub::harness;

namespace {

struct Outcome {
    bool passed = true;
    std::string detail;

    void fail(const std::string& why) {
        passed = false;
        if (detail.size() < 600) detail += (detail.empty() ? "" : "; ") + why;
    }
};

std::string num(double v, int digits = 1) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*f", digits, v);
    return buf;
}

double mean_of(const std::vector<double>& v) {
    double s = 0;
    for (double x : v) s += x;
    return v.empty() ? 0 : s / static_cast<double>(v.size());
}

std::vector<std::uint64_t> seeds(std::uint64_t from, std::uint64_t to) {
    std::vector<std::uint64_t> out;
    for (auto s = from; s <= to; ++s) out.push_back(s);
    return out;
}

std::string label(const MetricsReport& r) { return r.scenario + "/" + r.variant + "/seed " + std::to_string(r.seed); }

// 1. No faults: every variant, three scenarios, ten seeds, missing = 0.
Outcome correctness() {
    Outcome o;
    std::size_t runs = 0, expected = 0;
    for (const char* name : {"normal", "sub-burst", "event-burst"}) {
        auto sc = Scenario::preset(name);
        for (auto v : all_variants()) {
            for (auto seed : seeds(1, 10)) {
                auto r = run_scenario(sc, v, seed);
                ++runs;
                expected += r.expected;
                if (r.missing > 0) o.fail(label(r) + " missing " + std::to_string(r.missing));
                for (const auto& a : r.assertion_failures) {
                    if (a.rfind("missing", 0) != 0) o.fail(label(r) + ": " + a);
                }
            }
        }
    }
    o.detail = std::to_string(runs) + " runs, " + std::to_string(expected) + " expected deliveries" +
               (o.detail.empty() ? "" : "; " + o.detail);
    return o;
}

// 2. Crash faults.
Outcome fault_tolerance() {
    Outcome o;
    std::size_t scattered_missing = 0;
    for (auto v : {Variant::BaseReliable, Variant::RedirectReliable}) {
        for (auto seed : seeds(1, 10)) {
            auto r = run_scenario(Scenario::preset("fault"), v, seed);
            scattered_missing += r.missing;
            if (r.missing > 0) o.fail(label(r) + " missing " + std::to_string(r.missing));
        }
    }
    std::size_t cluster_f = 0, cluster_f1 = 0, runs_f1_with_loss = 0;
    for (auto v : {Variant::BaseReliable, Variant::RedirectReliable}) {
        for (auto seed : seeds(1, 10)) {
            auto sc = Scenario::preset("fault");
            sc.failure_mode = FailureMode::RendezvousCluster;
            sc.failures = sc.f;
            auto r = run_scenario(sc, v, seed);
            cluster_f += r.missing;
            if (r.missing > 0) o.fail(label(r) + " f-cluster missing " + std::to_string(r.missing));
            sc.failures = sc.f + 1;
            auto r1 = run_scenario(sc, v, seed);
            cluster_f1 += r1.missing;
            if (r1.missing > 0) ++runs_f1_with_loss;
        }
    }
    // Failing f+1 must be visible to the oracle, otherwise the placement
    // never touched a delivery path and the f case proves nothing.
    if (runs_f1_with_loss == 0) o.fail("f+1 cluster failures never caused a detectable loss");
    o.detail = "scattered missing " + std::to_string(scattered_missing) + ", f-cluster missing " +
               std::to_string(cluster_f) + ", f+1-cluster missing " + std::to_string(cluster_f1) + " (in " +
               std::to_string(runs_f1_with_loss) + "/20 runs)" + (o.detail.empty() ? "" : "; " + o.detail);
    return o;
}

// 3. Base vs Redirect on identical seeds.
Outcome redirect_transparency() {
    Outcome o;
    std::size_t strictly_fewer = 0;
    std::uint64_t base_total = 0, redirect_total = 0;
    for (auto seed : seeds(1, 50)) {
        auto sc = Scenario::preset("normal");
        // Half the pairs use sparse routing tables, which produce chains.
        if (seed > 25) sc.bucket_size = 2;
        auto base = run_scenario(sc, Variant::BaseUnreliable, seed);
        auto red = run_scenario(sc, Variant::RedirectUnreliable, seed);
        base_total += base.event_messages;
        redirect_total += red.event_messages;
        if (base.delivered_multiset != red.delivered_multiset) {
            o.fail("seed " + std::to_string(seed) + " delivered multisets differ");
        }
        if (red.event_messages > base.event_messages) {
            o.fail("seed " + std::to_string(seed) + " redirect forwarded " + std::to_string(red.event_messages) +
                   " > " + std::to_string(base.event_messages));
        }
        if (red.event_messages < base.event_messages) ++strictly_fewer;
    }
    if (strictly_fewer == 0) o.fail("redirect never saved a forwarding message");
    o.detail = "event messages base " + std::to_string(base_total) + " vs redirect " + std::to_string(redirect_total) +
               ", strictly fewer in " + std::to_string(strictly_fewer) + "/50 pairs" +
               (o.detail.empty() ? "" : "; " + o.detail);
    return o;
}

// 4. Transient drops with the ack chain.
Outcome reliability() {
    Outcome o;
    std::uint64_t created = 0, completed = 0, dropped = 0;
    for (auto v : {Variant::BaseReliable, Variant::RedirectReliable}) {
        for (auto seed : seeds(1, 10)) {
            auto sc = Scenario::preset("normal");
            sc.drop_probability = 0.05;
            auto r = run_scenario(sc, v, seed);
            created += r.trackers_created;
            completed += r.trackers_completed;
            dropped += r.dropped;
            if (r.missing > 0) o.fail(label(r) + " missing " + std::to_string(r.missing));
            if (r.trackers_completed != r.trackers_created) {
                o.fail(label(r) + " trackers " + std::to_string(r.trackers_completed) + "/" +
                       std::to_string(r.trackers_created) + " completed");
            }
        }
    }
    o.detail = std::to_string(dropped) + " messages dropped, trackers " + std::to_string(completed) + "/" +
               std::to_string(created) + " completed" + (o.detail.empty() ? "" : "; " + o.detail);
    return o;
}

// 5. Refresh garbage collection.
struct GcProbe {
    bool present = false;
    sim::Time last_seen = -1;
};

bool holds_attribute(const scoutsubs::FilterTable& t, const std::string& attr) {
    for (const auto& [peer, e] : t.entries()) {
        for (const auto& [key, kf] : e.routes) {
            for (const auto& f : kf.filters) {
                auto names = f.attribute_names();
                if (std::find(names.begin(), names.end(), attr) != names.end()) return true;
            }
        }
    }
    return false;
}

bool network_holds(Network& net, const std::string& attr) {
    for (std::size_t i = 0; i < net.size(); ++i) {
        const auto& s = net.peer(i).scout();
        if (holds_attribute(s.main_table(), attr) || holds_attribute(s.secondary_table(), attr)) return true;
        for (const auto& [id, c] : s.backup_copies()) {
            if (c.table && holds_attribute(*c.table, attr)) return true;
        }
        for (const auto& [id, c] : s.rendezvous_copies()) {
            if (c.table && holds_attribute(*c.table, attr)) return true;
        }
    }
    return false;
}

Outcome refresh_gc() {
    Outcome o;
    const sim::Time t = sim::from_ms(5000);
    double worst_after_drop = 0, best_after_drop = 1e300;
    std::size_t literal_failures = 0, phases = 0;
    for (int phase = 0; phase < 8; ++phase) {
        NetworkOptions opt;
        opt.sim = sim::SimConfig::world(100 + static_cast<std::uint64_t>(phase));
        opt.peer.scout.refresh_period = t;
        Network net(opt);
        std::mt19937_64 rng(static_cast<std::uint64_t>(phase) + 1);
        overlay::IdSpace space;
        for (int i = 0; i < 30; ++i) net.add_peer(space.random(rng), static_cast<sim::RegionId>(i % 4));
        const auto propagation =
            sim::from_ms(net.sim().config().max_one_way_ms() * std::ceil(std::log2(static_cast<double>(net.size()))));

        std::optional<SubscriptionId> dropped, kept;
        net.at(sim::from_ms(500), 3, [&](sim::Context& ctx, Peer& p) {
            dropped = p.scout().subscribe(ctx, predicate::Predicate::parse("zebra/price[10,20]"));
        });
        net.at(sim::from_ms(700), 7, [&](sim::Context& ctx, Peer& p) {
            kept = p.scout().subscribe(ctx, predicate::Predicate::parse("okapi/temp[1,5]"));
        });
        // Drop at eight phases across one swap cycle.
        sim::Time drop_at = sim::from_ms(12000) + phase * (2 * t / 8);
        net.at(drop_at, 3, [&](sim::Context&, Peer& p) { p.scout().drop_interest(*dropped); });
        net.run_until(drop_at);
        if (!network_holds(net, "zebra")) o.fail("phase " + std::to_string(phase) + ": filter missing before drop");

        sim::Time gone = -1;
        for (sim::Time at = drop_at; at <= drop_at + 6 * t; at += sim::from_ms(50)) {
            net.run_until(at);
            if (!network_holds(net, "zebra")) {
                gone = at;
                break;
            }
        }
        ++phases;
        if (gone < 0) {
            o.fail("phase " + std::to_string(phase) + ": never collected");
            continue;
        }
        worst_after_drop = std::max(worst_after_drop, sim::to_ms(gone - drop_at));
        best_after_drop = std::min(best_after_drop, sim::to_ms(gone - drop_at));
        if (gone > drop_at + 2 * t + propagation) ++literal_failures;
        // A renewal just before the drop lands in the new main table right
        // after a swap, so the filter can outlive the drop by up to 4t.
        if (gone > drop_at + 4 * t + propagation) {
            o.fail("phase " + std::to_string(phase) + ": present beyond 4t after the drop");
        }

        // The renewed subscription survives ten full cycles.
        bool survived = true;
        for (int cycle = 1; cycle <= 10; ++cycle) {
            net.run_until(drop_at + 6 * t + cycle * 2 * t);
            if (!network_holds(net, "okapi")) survived = false;
        }
        if (!survived) o.fail("phase " + std::to_string(phase) + ": renewed subscription lapsed");
    }
    if (literal_failures > 0) {
        o.fail(std::to_string(literal_failures) + "/" + std::to_string(phases) +
               " drop phases still held the filter 2t + propagation after the drop");
    }
    o.detail = "residency after drop " + num(best_after_drop) + ".." + num(worst_after_drop) +
               " ms with t = 5000 ms" + (o.detail.empty() ? "" : "; " + o.detail);
    return o;
}

// 6. Replication sweep trends.
Outcome replication_trends() {
    Outcome o;
    SweepConfig cfg;
    auto rows = replication_sweep(cfg);
    for (const auto& r : rows) {
        if (!r.passed()) o.fail(label(r) + " f=" + std::to_string(r.f) + ": " + r.assertion_failures.front());
    }
    for (const auto& t : sweep_trends(cfg, rows)) {
        if (!t.passed) o.fail(t.name + ":" + t.detail);
    }
    // Cell means for the record.
    std::string table;
    for (auto f : cfg.f_values) {
        std::vector<double> sub, ev, mem;
        for (const auto& r : rows) {
            if (r.f != f) continue;
            sub.push_back(r.subscription_latency.mean);
            ev.push_back(r.event_latency.mean);
            mem.push_back(static_cast<double>(r.peak_entries));
        }
        table += " f=" + std::to_string(f) + " sub " + num(mean_of(sub)) + " ev " + num(mean_of(ev)) + " mem " +
                 num(mean_of(mem), 0) + ";";
    }
    o.detail = std::to_string(rows.size()) + " runs;" + table + (o.detail.empty() ? "" : " " + o.detail);
    return o;
}

// 7. Predicate algebra against a linear scan.
Outcome predicate_oracle() {
    Outcome o;
    std::mt19937_64 rng(2024);
    std::size_t discrepancies = 0, positives = 0;
    const int instances = 10000;
    for (int i = 0; i < instances; ++i) {
        scoutsubs::FilterTable table;
        std::vector<predicate::Predicate> merged;
        std::vector<std::pair<std::uint64_t, gen::Spec>> raw;
        int n = gen::uniform(rng, 1, 12);
        for (int k = 0; k < n; ++k) {
            auto peer = static_cast<std::uint64_t>(gen::uniform(rng, 1, 4));
            auto spec = gen::filter(rng);
            raw.emplace_back(peer, spec);
            table.insert(overlay::PeerInfo{overlay::NodeId::from_uint(peer), sim::Endpoint{static_cast<std::uint32_t>(peer)}, 0},
                         {}, overlay::NodeId::from_uint(1), gen::to_predicate(spec));
            merged = predicate::filter_set_insert(std::move(merged), gen::to_predicate(spec));
        }
        auto ev = gen::event(rng);
        auto event = gen::to_event(ev);

        std::set<std::uint64_t> expected;
        bool any = false;
        for (const auto& [peer, spec] : raw) {
            if (gen::oracle_match(spec, ev)) {
                expected.insert(peer);
                any = true;
            }
        }
        std::size_t checks = 0;
        std::set<std::uint64_t> actual;
        for (const auto& m : table.matching(overlay::NodeId::from_uint(1), event, checks)) {
            actual.insert(m.entry->peer.id.low64());
        }
        bool merged_any = false;
        for (const auto& f : merged) merged_any = merged_any || predicate::matches(f, event);
        if (actual != expected || merged_any != any) ++discrepancies;
        if (any) ++positives;
    }
    if (discrepancies > 0) o.fail(std::to_string(discrepancies) + " discrepancies");
    o.detail = std::to_string(instances) + " instances, " + std::to_string(positives) + " matching, " +
               std::to_string(discrepancies) + " discrepancies" + (o.detail.empty() ? "" : "; " + o.detail);
    return o;
}

// 8. FastDelivery.
Outcome fast_delivery() {
    Outcome o;
    std::size_t publishes = 0, expected = 0;
    for (auto seed : seeds(1, 10)) {
        auto sc = Scenario::preset("fastdelivery-compare");
        sc.audit = true;
        sc.fd_threshold = 3;
        auto r = run_scenario(sc, Variant::FastDelivery, seed);
        publishes += r.events;
        expected += r.expected;
        if (r.missing || r.unexpected || r.duplicates) {
            o.fail(label(r) + " missing " + std::to_string(r.missing) + " unexpected " + std::to_string(r.unexpected) +
                   " duplicates " + std::to_string(r.duplicates));
        }
        for (const auto& a : r.assertion_failures) o.fail(label(r) + ": " + a);
    }
    // Helper crashes go through the same checks.
    for (auto seed : seeds(1, 5)) {
        auto sc = Scenario::preset("fault");
        sc.audit = true;
        sc.fd_threshold = 3;
        auto r = run_scenario(sc, Variant::FastDelivery, seed);
        for (const auto& a : r.assertion_failures) o.fail(label(r) + ": " + a);
    }
    if (publishes < 1000) o.fail("only " + std::to_string(publishes) + " publishes");

    std::size_t wins = 0;
    std::vector<double> fd_lat, sc_lat;
    for (auto seed : seeds(1, 10)) {
        auto sc = Scenario::preset("fastdelivery-compare");
        auto fd = run_scenario(sc, Variant::FastDelivery, seed);
        double best_scout = 1e300;
        for (auto v : {Variant::BaseUnreliable, Variant::BaseReliable, Variant::RedirectUnreliable,
                       Variant::RedirectReliable}) {
            auto r = run_scenario(sc, v, seed);
            best_scout = std::min(best_scout, r.event_latency.mean);
        }
        fd_lat.push_back(fd.event_latency.mean);
        sc_lat.push_back(best_scout);
        if (fd.event_latency.mean < best_scout) {
            ++wins;
        } else {
            o.fail("seed " + std::to_string(seed) + " FastDelivery " + num(fd.event_latency.mean) +
                   " ms not below ScoutSubs " + num(best_scout) + " ms");
        }
    }
    o.detail = std::to_string(publishes) + " publishes, " + std::to_string(expected) +
               " expected deliveries; mean latency FastDelivery " + num(mean_of(fd_lat)) + " ms vs best ScoutSubs " +
               num(mean_of(sc_lat)) + " ms, lower in " + std::to_string(wins) + "/10 pairs" +
               (o.detail.empty() ? "" : "; " + o.detail);
    return o;
}

// 9. Latency calibration band.
Outcome calibration() {
    Outcome o;
    std::string detail;
    for (auto v : {Variant::BaseUnreliable, Variant::BaseReliable, Variant::RedirectUnreliable,
                   Variant::RedirectReliable}) {
        std::vector<double> lat;
        for (auto seed : seeds(1, 10)) lat.push_back(run_scenario(Scenario::preset("normal"), v, seed).event_latency.mean);
        double m = mean_of(lat);
        detail += " " + to_string(v) + " " + num(m) + " ms;";
        if (m < 150 || m > 350) o.fail(to_string(v) + " outside [150, 350]");
    }
    o.detail = "mean event latency:" + detail + (o.detail.empty() ? "" : " " + o.detail);
    return o;
}

// 10. Determinism.
Outcome determinism() {
    Outcome o;
    std::size_t checked = 0;
    for (const char* name : {"normal", "sub-burst", "event-burst", "fault", "fastdelivery-compare"}) {
        for (auto v : all_variants()) {
            auto sc = Scenario::preset(name);
            auto a = run_scenario(sc, v, 7, RunOptions{true, true});
            auto b = run_scenario(sc, v, 7, RunOptions{true, true});
            ++checked;
            if (csv({a}) != csv({b})) o.fail(label(a) + " CSV differs");
            if (a.trace != b.trace) o.fail(label(a) + " trace differs");
            if (a.trace.empty()) o.fail(label(a) + " empty trace");
        }
    }
    SweepConfig cfg;
    cfg.f_values = {1, 3};
    cfg.subs_values = {1, 3};
    cfg.seeds = {1, 2};
    auto s1 = csv(replication_sweep(cfg));
    auto s2 = csv(replication_sweep(cfg));
    if (s1 != s2) o.fail("parallel sweep CSV differs");
    o.detail = std::to_string(checked) + " (scenario, variant) pairs re-run with traces, plus a parallel sweep" +
               (o.detail.empty() ? "" : "; " + o.detail);
    return o;
}

}  // namespace

int main() {
    struct Criterion {
        int number;
        const char* name;
        std::function<Outcome()> run;
        bool blocking;
    };
    std::vector<Criterion> criteria{
        {1, "correctness without faults", correctness, true},
        {2, "fault tolerance", fault_tolerance, true},
        {3, "redirect transparency", redirect_transparency, true},
        {4, "reliability under drops", reliability, true},
        {5, "refresh garbage collection", refresh_gc, true},
        {6, "replication trends", replication_trends, true},
        {7, "predicate algebra oracle", predicate_oracle, true},
        {8, "FastDelivery", fast_delivery, true},
        {9, "latency calibration band", calibration, false},
        {10, "determinism", determinism, true},
    };
    int failures = 0;
    for (const auto& c : criteria) {
        Outcome out;
        try {
            out = c.run();
        } catch (const std::exception& e) {
            out.fail(std::string("exception: ") + e.what());
        }
        std::printf("%s criterion %d (%s)%s: %s\n", out.passed ? "PASS" : "FAIL", c.number, c.name,
                    c.blocking ? "" : " [non-blocking]", out.detail.c_str());
        std::fflush(stdout);
        if (!out.passed && c.blocking) ++failures;
    }
    return failures == 0 ? 0 : 1;
}
