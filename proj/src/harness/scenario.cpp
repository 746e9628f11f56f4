#include "smartpubsub/harness/scenario.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <set>
#include <sstream>
#include <stdexcept>
#include <unordered_map>

#include "smartpubsub/harness/network.hpp"

namespace smartpubsub::harness {

using predicate::EventPredicate;
using predicate::Predicate;

namespace {

const std::vector<std::string> kTopics{"portugal", "soccer", "tech",    "music",   "weather", "travel",
                                       "stocks",   "games",  "movies", "science", "health",  "food"};
struct RangeAttr {
    const char* name;
    int lo;
    int hi;
};
const RangeAttr kRanges[] = {{"price", 0, 100}, {"temp", 0, 40}};

}  // namespace

NLOHMANN_JSON_SERIALIZE_ENUM(FailureMode, {{FailureMode::Scattered, "scattered"},
                                           {FailureMode::RendezvousCluster, "rendezvous-cluster"}})

NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(Scenario, name, nodes, publishers, subscribers, subs_per_node,
                                   events_per_publisher, event_interval_ms, rate_multiplier, volume_multiplier,
                                   subscribe_window_ms, late_subscription_fraction, failures, failure_mode,
                                   failure_offset_ms, f, refresh_period_ms, bucket_size, drop_probability, drain_ms,
                                   service_time_ms, event_cost_ms, match_cost_us, fd_threshold, fd_max_capacity, audit)

std::string to_string(Variant v) {
    switch (v) {
        case Variant::BaseUnreliable: return "base-unreliable";
        case Variant::BaseReliable: return "base-reliable";
        case Variant::RedirectUnreliable: return "redirect-unreliable";
        case Variant::RedirectReliable: return "redirect-reliable";
        case Variant::FastDelivery: return "fastdelivery";
    }
    return "unknown";
}

Variant parse_variant(const std::string& name) {
    for (auto v : all_variants()) {
        if (to_string(v) == name) return v;
    }
    throw std::invalid_argument("unknown variant: " + name);
}

const std::vector<Variant>& all_variants() {
    static const std::vector<Variant> all{Variant::BaseUnreliable, Variant::BaseReliable, Variant::RedirectUnreliable,
                                          Variant::RedirectReliable, Variant::FastDelivery};
    return all;
}

bool is_reliable(Variant v) { return v == Variant::BaseReliable || v == Variant::RedirectReliable; }

Scenario Scenario::preset(const std::string& name) {
    Scenario s;
    s.name = name;
    if (name == "normal" || name == "fastdelivery-compare") {
    } else if (name == "sub-burst") {
        s.late_subscription_fraction = 0.5;
    } else if (name == "event-burst") {
        s.rate_multiplier = 10;
        s.volume_multiplier = 10;
    } else if (name == "fault") {
        s.failures = 2;
    } else if (name == "replication-sweep") {
        s.nodes = 75;
        s.publishers = 12;
    } else {
        throw std::invalid_argument("unknown scenario: " + name);
    }
    return s;
}

void Scenario::validate() const {
    auto fail = [](const std::string& what) { throw std::invalid_argument("invalid scenario: " + what); };
    preset(name);
    if (nodes < 2) fail("nodes must be at least 2");
    if (publishers == 0 || publishers >= nodes) fail("publishers must be in [1, nodes)");
    if (subscribers > nodes - publishers) fail("subscribers exceed non-publisher nodes");
    if (failures >= nodes - publishers) fail("too many failures");
    if (!(event_interval_ms > 0) || !(rate_multiplier > 0) || !(volume_multiplier > 0)) {
        fail("event interval and multipliers must be positive");
    }
    if (subscribe_window_ms < 0 || drain_ms < 0 || failure_offset_ms < 0) fail("durations must be non-negative");
    if (late_subscription_fraction < 0 || late_subscription_fraction > 1) fail("late fraction must be in [0, 1]");
    if (!(refresh_period_ms > 0)) fail("refresh period must be positive");
    if (bucket_size == 0) fail("bucket size must be positive");
    if (drop_probability < 0 || drop_probability > 1) fail("drop probability must be in [0, 1]");
    if (service_time_ms < 0 || event_cost_ms < 0 || match_cost_us < 0) fail("costs must be non-negative");
    if (fd_threshold == 0) fail("fd threshold must be positive");
}

nlohmann::json Scenario::to_json() const {
    nlohmann::json j = *this;
    return j;
}

Scenario Scenario::from_json(const nlohmann::json& j) {
    if (!j.is_object()) throw std::invalid_argument("scenario must be an object");
    auto name = j.value("name", std::string("normal"));
    nlohmann::json merged = preset(name).to_json();
    for (const auto& [key, value] : j.items()) {
        if (!merged.contains(key)) throw std::invalid_argument("unknown scenario key: " + key);
        merged[key] = value;
    }
    Scenario s;
    try {
        s = merged.get<Scenario>();
    } catch (const nlohmann::json::exception& e) {
        throw std::invalid_argument(std::string("bad scenario value: ") + e.what());
    }
    s.validate();
    return s;
}

std::string predicate_text(const Interest& interest) {
    std::string out;
    for (const auto& t : interest.topics) out += (out.empty() ? "" : "/") + t;
    for (const auto& [name, r] : interest.ranges) {
        out += (out.empty() ? "" : "/") + name + "[" + std::to_string(r.first) + "," + std::to_string(r.second) + "]";
    }
    return out;
}

std::string event_text(const Publication& publication) {
    std::string out;
    for (const auto& t : publication.topics) out += (out.empty() ? "" : "/") + t;
    for (const auto& [name, v] : publication.values) {
        out += (out.empty() ? "" : "/") + name + "[" + std::to_string(v) + "," + std::to_string(v) + "]";
    }
    return out;
}

bool oracle_matches(const Interest& interest, const Publication& publication) {
    for (const auto& t : interest.topics) {
        if (std::find(publication.topics.begin(), publication.topics.end(), t) == publication.topics.end()) return false;
    }
    for (const auto& [name, r] : interest.ranges) {
        auto it = publication.values.find(name);
        if (it == publication.values.end() || it->second < r.first || it->second > r.second) return false;
    }
    return true;
}

Summary Summary::of(std::vector<double> samples) {
    Summary s;
    s.count = samples.size();
    if (samples.empty()) return s;
    std::sort(samples.begin(), samples.end());
    double sum = 0;
    for (double v : samples) sum += v;
    s.mean = sum / static_cast<double>(samples.size());
    auto rank = [&](double q) {
        auto i = static_cast<std::size_t>(std::ceil(q * static_cast<double>(samples.size()))) - 1;
        return samples[std::min(i, samples.size() - 1)];
    };
    s.p50 = rank(0.5);
    s.p95 = rank(0.95);
    s.max = samples.back();
    return s;
}

namespace {

struct SubPlan {
    std::size_t node;
    std::size_t publisher;
    Interest interest;
    sim::Time at;
    bool late;
    unsigned capacity;
};
struct EventPlan {
    std::size_t publisher;
    Publication publication;
    sim::Time at;
};

/// Everything the workload does, fixed by (scenario, seed) alone so that
/// variants run against identical scripts.
struct Script {
    std::vector<overlay::NodeId> ids;
    std::vector<sim::RegionId> regions;
    std::vector<std::size_t> publishers;
    std::vector<std::string> publisher_topic;
    std::vector<SubPlan> subs;
    std::vector<EventPlan> events;
    std::vector<std::size_t> failed;
    sim::Time fail_at = 0;
    sim::Time publish_start = 0;
    sim::Time publish_end = 0;
    sim::Time end = 0;
};

int uniform(std::mt19937_64& rng, int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng); }
double unit(std::mt19937_64& rng) { return std::uniform_real_distribution<double>(0.0, 1.0)(rng); }

std::string group_text(const std::string& topic) {
    std::string out = topic;
    for (const auto& r : kRanges) out += "/" + std::string(r.name) + "[" + std::to_string(r.lo) + "," + std::to_string(r.hi) + "]";
    return out;
}

std::vector<std::size_t> choose_failures(const Scenario& sc, const Script& s, std::mt19937_64& rng) {
    std::set<std::size_t> publishers(s.publishers.begin(), s.publishers.end());
    std::vector<std::size_t> out;
    if (sc.failures == 0) return out;
    if (sc.failure_mode == FailureMode::Scattered) {
        std::vector<std::size_t> by_id(s.ids.size());
        for (std::size_t i = 0; i < by_id.size(); ++i) by_id[i] = i;
        std::sort(by_id.begin(), by_id.end(), [&](auto a, auto b) { return s.ids[a] < s.ids[b]; });
        std::vector<std::size_t> rank(by_id.size());
        for (std::size_t r = 0; r < by_id.size(); ++r) rank[by_id[r]] = r;
        std::vector<std::size_t> pool;
        for (std::size_t i = 0; i < s.ids.size(); ++i) {
            if (!publishers.count(i)) pool.push_back(i);
        }
        std::shuffle(pool.begin(), pool.end(), rng);
        for (auto cand : pool) {
            if (out.size() == sc.failures) break;
            bool adjacent = false;
            for (auto chosen : out) {
                auto d = rank[cand] > rank[chosen] ? rank[cand] - rank[chosen] : rank[chosen] - rank[cand];
                if (d <= 1 || d == by_id.size() - 1) adjacent = true;
            }
            if (!adjacent) out.push_back(cand);
        }
        if (out.size() < sc.failures) throw std::invalid_argument("cannot place scattered failures");
        return out;
    }
    // Busiest attribute first: the one most subscriptions mention.
    std::map<std::string, std::size_t> uses;
    for (const auto& sub : s.subs) {
        for (const auto& t : sub.interest.topics) ++uses[t];
        for (const auto& [name, r] : sub.interest.ranges) ++uses[name];
    }
    std::vector<std::pair<std::size_t, std::string>> order;
    for (const auto& [name, n] : uses) order.emplace_back(n, name);
    std::sort(order.rbegin(), order.rend());
    overlay::IdSpace space;
    for (const auto& [n, name] : order) {
        auto key = space.key_for_attribute(name);
        std::vector<std::size_t> near(s.ids.size());
        for (std::size_t i = 0; i < near.size(); ++i) near[i] = i;
        std::sort(near.begin(), near.end(), [&](auto a, auto b) {
            return overlay::xor_distance(s.ids[a], key) < overlay::xor_distance(s.ids[b], key);
        });
        near.resize(sc.failures);
        if (std::none_of(near.begin(), near.end(), [&](auto i) { return publishers.count(i) > 0; })) return near;
    }
    throw std::invalid_argument("no rendezvous cluster free of publishers");
}

Script make_script(const Scenario& sc, std::uint64_t seed) {
    std::mt19937_64 rng(seed * 0x9E3779B97F4A7C15ULL + 0x5bd1e995ULL);
    Script s;
    overlay::IdSpace space;
    std::set<overlay::NodeId> used;
    while (s.ids.size() < sc.nodes) {
        auto id = space.random(rng);
        if (used.insert(id).second) s.ids.push_back(id);
    }
    auto world = sim::SimConfig::world(seed);
    for (std::size_t i = 0; i < sc.nodes; ++i) s.regions.push_back(static_cast<sim::RegionId>(i % world.regions.size()));

    std::vector<std::size_t> order(sc.nodes);
    for (std::size_t i = 0; i < sc.nodes; ++i) order[i] = i;
    std::shuffle(order.begin(), order.end(), rng);
    s.publishers.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(sc.publishers));
    std::size_t n_subscribers = sc.subscribers == 0 ? sc.nodes - sc.publishers : sc.subscribers;
    std::vector<std::size_t> subscribers(order.begin() + static_cast<std::ptrdiff_t>(sc.publishers),
                                         order.begin() + static_cast<std::ptrdiff_t>(sc.publishers + n_subscribers));
    for (std::size_t p = 0; p < sc.publishers; ++p) s.publisher_topic.push_back(kTopics[p % kTopics.size()]);

    const sim::Time warmup = sim::from_ms(500);
    const double diameter = std::ceil(std::log2(static_cast<double>(sc.nodes)));
    const sim::Time settle = sim::from_ms(3.0 * world.max_one_way_ms() * diameter);
    s.publish_start = warmup + sim::from_ms(sc.subscribe_window_ms) + settle;
    auto per_publisher = static_cast<std::size_t>(std::llround(static_cast<double>(sc.events_per_publisher) * sc.volume_multiplier));
    double interval = sc.event_interval_ms / sc.rate_multiplier;
    s.publish_end = s.publish_start + sim::from_ms(interval * static_cast<double>(per_publisher));

    for (auto node : subscribers) {
        for (std::size_t k = 0; k < sc.subs_per_node; ++k) {
            SubPlan plan;
            plan.node = node;
            plan.publisher = static_cast<std::size_t>(uniform(rng, 0, static_cast<int>(sc.publishers) - 1));
            plan.interest.topics.push_back(s.publisher_topic[plan.publisher]);
            for (const auto& r : kRanges) {
                if (unit(rng) < 0.5) {
                    int width = uniform(rng, (r.hi - r.lo) / 10, (r.hi - r.lo) / 2);
                    int lo = uniform(rng, r.lo, r.hi - width);
                    plan.interest.ranges[r.name] = {lo, lo + width};
                }
            }
            plan.late = unit(rng) < sc.late_subscription_fraction;
            double window = plan.late ? sim::to_ms(s.publish_end - s.publish_start) : sc.subscribe_window_ms;
            sim::Time base = plan.late ? s.publish_start : warmup;
            plan.at = base + sim::from_ms(unit(rng) * window);
            plan.capacity = static_cast<unsigned>(uniform(rng, 0, static_cast<int>(sc.fd_max_capacity)));
            s.subs.push_back(std::move(plan));
        }
    }

    for (std::size_t p = 0; p < sc.publishers; ++p) {
        sim::Time offset = sim::from_ms(unit(rng) * interval);
        for (std::size_t k = 0; k < per_publisher; ++k) {
            EventPlan e;
            e.publisher = p;
            e.publication.topics.push_back(s.publisher_topic[p]);
            for (const auto& r : kRanges) e.publication.values[r.name] = uniform(rng, r.lo, r.hi);
            e.at = s.publish_start + offset + sim::from_ms(interval * static_cast<double>(k));
            s.events.push_back(std::move(e));
        }
    }
    std::stable_sort(s.events.begin(), s.events.end(), [](const auto& a, const auto& b) { return a.at < b.at; });

    s.failed = choose_failures(sc, s, rng);
    s.fail_at = s.publish_start + sim::from_ms(sc.failure_offset_ms);
    s.end = std::max(s.publish_end, s.fail_at) + sim::from_ms(sc.drain_ms);
    return s;
}

NetworkOptions network_options(const Scenario& sc, Variant variant, std::uint64_t seed, bool trace) {
    NetworkOptions o;
    o.sim = sim::SimConfig::world(seed);
    o.sim.drop_probability = sc.drop_probability;
    o.sim.service_time = sim::from_ms(sc.service_time_ms);
    o.sim.trace = trace;
    o.peer.bucket_size = sc.bucket_size;
    o.peer.event_cost = sim::from_ms(sc.event_cost_ms);
    auto& sc_cfg = o.peer.scout;
    sc_cfg.f = sc.f;
    sc_cfg.refresh_period = sim::from_ms(sc.refresh_period_ms);
    sc_cfg.redirect = variant == Variant::RedirectUnreliable || variant == Variant::RedirectReliable;
    sc_cfg.reliable = is_reliable(variant);
    sc_cfg.match_cost = static_cast<sim::Time>(std::llround(sc.match_cost_us));
    sc_cfg.audit = sc.audit;
    auto& fd = o.peer.fast;
    fd.threshold = sc.fd_threshold;
    fd.refresh_period = sim::from_ms(sc.refresh_period_ms);
    fd.match_cost = static_cast<sim::Time>(std::llround(sc.match_cost_us));
    fd.audit = sc.audit;
    return o;
}

std::uint64_t stored_entries(Network& net) {
    std::uint64_t total = 0;
    for (std::size_t i = 0; i < net.size(); ++i) {
        if (!net.sim().alive(net.info(i).endpoint)) continue;
        const auto& p = net.peer(i);
        total += p.scout().stored_entries();
        for (const auto& [id, g] : p.fast().groups()) total += g.size();
        for (const auto& [id, s] : p.fast().supports()) total += s.index.size();
    }
    return total;
}

}  // namespace

MetricsReport run_scenario(const Scenario& scenario, Variant variant, std::uint64_t seed, RunOptions options) {
    scenario.validate();
    const bool fast = variant == Variant::FastDelivery;
    Script script = make_script(scenario, seed);

    MetricsReport report;
    report.scenario = scenario.name;
    report.variant = to_string(variant);
    report.seed = seed;
    report.nodes = scenario.nodes;
    report.f = scenario.f;
    report.subs_per_node = scenario.subs_per_node;
    report.subscriptions = script.subs.size();
    report.events = script.events.size();
    report.failed_nodes = script.failed.size();

    Network net(network_options(scenario, variant, seed, options.trace));
    for (std::size_t i = 0; i < script.ids.size(); ++i) net.add_peer(script.ids[i], script.regions[i], 0);

    std::vector<std::optional<fastdelivery::GroupId>> groups(script.publishers.size());
    std::vector<std::optional<SubscriptionId>> sub_ids(script.subs.size());
    std::vector<sim::Time> issued(script.subs.size(), -1);
    std::vector<std::optional<EventId>> event_ids(script.events.size());
    std::vector<sim::Time> published(script.events.size(), -1);

    if (fast) {
        for (std::size_t p = 0; p < script.publishers.size(); ++p) {
            auto pred = Predicate::parse(group_text(script.publisher_topic[p]));
            net.at(sim::from_ms(100), script.publishers[p], [&groups, p, pred](sim::Context& ctx, Peer& peer) {
                groups[p] = peer.fast().create_group(ctx, pred);
            });
        }
    }
    for (std::size_t k = 0; k < script.subs.size(); ++k) {
        const auto& plan = script.subs[k];
        auto pred = Predicate::parse(predicate_text(plan.interest));
        net.at(plan.at, plan.node, [&, k, pred, fast](sim::Context& ctx, Peer& peer) {
            const auto& pl = script.subs[k];
            issued[k] = ctx.now();
            sub_ids[k] = fast ? peer.fast().join(ctx, *groups[pl.publisher], pred, pl.capacity)
                              : peer.scout().subscribe(ctx, pred);
        });
    }
    for (std::size_t k = 0; k < script.events.size(); ++k) {
        const auto& plan = script.events[k];
        auto ev = EventPredicate::parse(event_text(plan.publication));
        net.at(plan.at, script.publishers[plan.publisher], [&, k, ev, fast](sim::Context& ctx, Peer& peer) {
            published[k] = ctx.now();
            event_ids[k] = fast ? peer.fast().publish(ctx, *groups[script.events[k].publisher], ev)
                                : peer.scout().publish(ctx, ev);
        });
    }
    for (auto i : script.failed) net.fail(i, script.fail_at);

    // Memory proxy: sampled stored entries.
    const sim::Time sample_every = sim::from_ms(250);
    for (sim::Time t = sample_every; t <= script.end; t += sample_every) {
        net.sim().schedule_control(t, [&report, &net] {
            auto n = stored_entries(net);
            report.peak_entries = std::max(report.peak_entries, n);
            report.cumulative_entries += n;
        });
    }

    try {
        net.run_until(script.end);
    } catch (const std::exception& e) {
        report.assertion_failures.push_back(std::string("run aborted: ") + e.what());
        return report;
    }

    // Oracle: brute force over the script, using only plain-data matching.
    std::set<std::size_t> failed(script.failed.begin(), script.failed.end());
    std::unordered_map<overlay::NodeId, std::size_t> node_index;
    for (std::size_t i = 0; i < script.ids.size(); ++i) node_index[script.ids[i]] = i;
    std::map<EventId, std::size_t> event_index;
    for (std::size_t k = 0; k < event_ids.size(); ++k) {
        if (event_ids[k]) event_index[*event_ids[k]] = k;
    }
    const auto& metrics = net.metrics();
    std::vector<sim::Time> settled(script.subs.size(), -1);
    std::vector<double> sub_latency;
    for (std::size_t k = 0; k < script.subs.size(); ++k) {
        if (!sub_ids[k]) continue;
        auto it = metrics.settled_at.find(*sub_ids[k]);
        if (it == metrics.settled_at.end()) continue;
        settled[k] = it->second;
        ++report.settled_subscriptions;
        sub_latency.push_back(sim::to_ms(it->second - issued[k]));
    }

    std::set<std::pair<std::size_t, std::size_t>> expected, possible;
    for (std::size_t e = 0; e < script.events.size(); ++e) {
        const auto& ev = script.events[e];
        if (published[e] < 0) continue;
        for (std::size_t k = 0; k < script.subs.size(); ++k) {
            const auto& sub = script.subs[k];
            if (fast && sub.publisher != ev.publisher) continue;
            if (!oracle_matches(sub.interest, ev.publication)) continue;
            possible.emplace(sub.node, e);
            if (failed.count(sub.node)) continue;
            // Late subscriptions only count once settled before the publish.
            if (sub.late && (settled[k] < 0 || settled[k] > published[e])) continue;
            expected.emplace(sub.node, e);
        }
    }

    std::vector<double> latency;
    for (const auto& d : metrics.deliveries) {
        auto n = node_index.find(d.subscriber);
        auto e = event_index.find(d.event);
        if (n == node_index.end() || e == event_index.end()) {
            ++report.unexpected;
            continue;
        }
        auto key = std::make_pair(n->second, e->second);
        auto& count = report.delivered_multiset[key];
        if (++count > 1) {
            ++report.duplicates;
            continue;
        }
        if (!possible.count(key)) ++report.unexpected;
        latency.push_back(sim::to_ms(d.delivered_at - d.published_at));
    }
    report.expected = expected.size();
    report.delivered = report.delivered_multiset.size();
    for (const auto& key : expected) {
        if (!report.delivered_multiset.count(key)) ++report.missing;
    }
    report.event_latency = Summary::of(std::move(latency));
    report.subscription_latency = Summary::of(std::move(sub_latency));

    const auto& acc = net.sim().accounting();
    report.messages = acc.sent;
    report.dropped = acc.dropped;
    for (const auto& [kind, n] : acc.sent_by_kind) report.messages_by_kind[kind] = n;
    report.event_messages = acc.sent_of("Event") + acc.sent_of("FdEvent");
    report.match_ops = metrics.match_ops;
    report.trackers_created = metrics.trackers_created;
    report.trackers_completed = metrics.trackers_completed;
    report.trackers_abandoned = metrics.trackers_abandoned;
    report.publish_failed = metrics.publish_failed;
    report.route_failures = metrics.route_failures;
    if (options.trace) report.trace = net.sim().trace();

    if (options.assertions) {
        bool must_be_complete = true;
        if (scenario.failures > 0 || scenario.drop_probability > 0) must_be_complete = is_reliable(variant);
        if (scenario.failure_mode == FailureMode::RendezvousCluster && scenario.failures > scenario.f) {
            must_be_complete = false;
        }
        if (must_be_complete && report.missing > 0) {
            report.assertion_failures.push_back("missing = " + std::to_string(report.missing));
        }
        if (report.unexpected > 0) {
            report.assertion_failures.push_back("unexpected deliveries = " + std::to_string(report.unexpected));
        }
        if (fast) {
            for (const auto& d : metrics.deliveries) {
                if (d.hops > 2) {
                    report.assertion_failures.push_back("FastDelivery path longer than two hops");
                    break;
                }
            }
        }
    }
    return report;
}

}  // namespace smartpubsub::harness
