#include <doctest.h>

#include <map>
#include <set>

#include "../support/generators.hpp"
#include "fixture.hpp"
#include "smartpubsub/fastdelivery/engine.hpp"

using namespace fixture;
using fastdelivery::GroupId;
using fastdelivery::MulticastGroup;
using fastdelivery::RangeTree;
using fastdelivery::SubscriberRecord;

namespace {

SubscriberRecord record(std::uint64_t node, unsigned capacity, const Predicate& pred, sim::RegionId region = 0) {
    return SubscriberRecord{SubscriptionId{id(node), 1},
                            overlay::PeerInfo{id(node), sim::Endpoint{static_cast<std::uint32_t>(node)}, region},
                            region, capacity, pred};
}

}  // namespace

TEST_CASE("range tree stabbing queries") {
    RangeTree<int> t;
    CHECK(t.query(1).empty());
    t.insert(1, 0, 1);
    t.insert(2, 1, 3);
    t.insert(3, 5, 6);
    CHECK(t.query(1) == std::vector<int>{1, 2});
    CHECK(t.query(4).empty());
    t.insert(4, 2, 2);
    CHECK(t.query(2) == std::vector<int>{2, 4});
    CHECK(t.erase(2));
    CHECK(t.query(2) == std::vector<int>{4});
    CHECK(t.audit());
}

TEST_CASE("property: range tree equals a linear scan") {
    std::mt19937_64 rng(3);
    for (int round = 0; round < 200; ++round) {
        RangeTree<int> t;
        std::map<int, std::pair<int, int>> live;
        for (int op = 0; op < 60; ++op) {
            int key = gen::uniform(rng, 0, 30);
            if (gen::uniform(rng, 0, 3) == 0) {
                CHECK(t.erase(key) == (live.erase(key) > 0));
            } else {
                int a = gen::uniform(rng, 0, 20);
                int b = gen::uniform(rng, 0, 20);
                t.insert(key, std::min(a, b), std::max(a, b));
                live[key] = {std::min(a, b), std::max(a, b)};
            }
            REQUIRE(t.audit());
            int v = gen::uniform(rng, -1, 21);
            std::vector<int> expected;
            for (const auto& [k, iv] : live) {
                if (iv.first <= v && v <= iv.second) expected.push_back(k);
            }
            REQUIRE(t.query(v) == expected);
        }
    }
}

TEST_CASE("region of twelve recruits the strongest member") {
    MulticastGroup g(GroupId{id(1), P("price[0,100]")}, 10);
    // Capacities 8, then 1..11 for the rest.
    CHECK(g.add(record(100, 8, P("price[0,100]"))) == MulticastGroup::AddResult::Added);
    for (std::uint64_t i = 1; i <= 11; ++i) {
        g.add(record(100 + i, static_cast<unsigned>(i % 8), P("price[0,100]")));
        REQUIRE(g.audit());
    }
    CHECK(g.fanout(0) == 12);
    auto changes = g.rebalance(0);
    REQUIRE(g.audit());
    REQUIRE(changes.size() == 1);
    CHECK(changes[0].delegated.size() == 8);
    CHECK(g.helpers().size() == 1);
    CHECK(g.helpers().begin()->second.helper.capacity == 8);
    // Publisher keeps 3 managed plus the helper.
    CHECK(g.direct().size() == 3);
    CHECK(g.fanout(0) == 4);
    CHECK(g.size() == 12);
    // The delegated ones are the weakest.
    unsigned weakest_kept = 100;
    for (const auto& [sid, r] : g.direct().records()) weakest_kept = std::min(weakest_kept, r.capacity);
    for (const auto& r : changes[0].delegated) CHECK(r.capacity <= weakest_kept);
}

TEST_CASE("zero-capacity members are never recruited") {
    MulticastGroup g(GroupId{id(1), P("news")}, 10);
    for (std::uint64_t i = 0; i < 30; ++i) g.add(record(100 + i, 0, P("news")));
    CHECK(g.rebalance(0).empty());
    CHECK(g.helpers().empty());
    CHECK(g.direct().size() == 30);
    CHECK(g.audit());
}

TEST_CASE("recruitment passes over skipped candidates and foreign attributes are rejected") {
    MulticastGroup g(GroupId{id(1), P("news/price[0,10]")}, 2);
    CHECK(g.add(record(50, 1, P("football"))) == MulticastGroup::AddResult::Rejected);
    g.add(record(10, 5, P("news")));
    g.add(record(11, 3, P("price[1,2]")));
    g.add(record(12, 0, P("news/price[0,10]")));
    CHECK(g.add(record(12, 0, P("news"))) == MulticastGroup::AddResult::Duplicate);
    auto changes = g.rebalance(0, {SubscriptionId{id(10), 1}});
    REQUIRE(changes.size() == 1);
    CHECK(changes[0].helper == SubscriptionId{id(11), 1});
    CHECK(g.audit());

    auto back = g.reabsorb(SubscriptionId{id(11), 1});
    CHECK(back.size() == 2);
    CHECK(g.helpers().empty());
    CHECK(g.size() == 2);
    CHECK(g.audit());
}

TEST_CASE("helpers stay within their region") {
    MulticastGroup g(GroupId{id(1), P("news")}, 2);
    for (std::uint64_t i = 0; i < 4; ++i) g.add(record(10 + i, 3, P("news"), 0));
    for (std::uint64_t i = 0; i < 2; ++i) g.add(record(20 + i, 9, P("news"), 1));
    g.rebalance(0);
    g.rebalance(1);
    CHECK(g.fanout(1) == 2);
    for (const auto& [sid, h] : g.helpers()) {
        for (const auto& r : h.delegated) CHECK(r.region == h.helper.region);
    }
    CHECK(g.audit());
}

TEST_CASE("property: group routing equals a brute-force scan and audits hold") {
    std::mt19937_64 rng(5);
    Predicate group_pred = gen::to_predicate(gen::Spec(gen::alphabet().begin(), gen::alphabet().end()));
    for (int round = 0; round < 100; ++round) {
        MulticastGroup g(GroupId{id(1), group_pred}, static_cast<std::size_t>(gen::uniform(rng, 1, 6)));
        std::map<SubscriptionId, gen::Spec> specs;
        for (int op = 0; op < 80; ++op) {
            int what = gen::uniform(rng, 0, 9);
            if (what < 6) {
                auto node = static_cast<std::uint64_t>(gen::uniform(rng, 2, 200));
                auto spec = gen::filter(rng);
                auto rec = record(node, static_cast<unsigned>(gen::uniform(rng, 0, 5)), gen::to_predicate(spec),
                                  static_cast<sim::RegionId>(gen::uniform(rng, 0, 2)));
                if (g.add(rec) == MulticastGroup::AddResult::Added) specs[rec.id] = spec;
                g.rebalance(rec.region);
            } else if (what < 8 && !g.helpers().empty()) {
                auto victim = g.helpers().begin()->first;
                g.reabsorb(victim);
                specs.erase(victim);
            } else if (!g.direct().records().empty()) {
                auto victim = g.direct().records().begin()->first;
                g.remove(victim);
                specs.erase(victim);
            }
            REQUIRE(g.audit());
            REQUIRE(g.size() == specs.size());
            for (sim::RegionId r = 0; r < 3; ++r) g.rebalance(r);
            REQUIRE(g.audit());
            for (const auto& [region, list] : g.regions()) {
                // Recruitment only stalls when nobody is left to take load.
                if (list.size() <= g.threshold()) continue;
                std::size_t direct = 0, able = 0;
                for (const auto& sid : list) {
                    if (const auto* r = g.direct().find(sid)) {
                        ++direct;
                        if (r->capacity > 0) ++able;
                    }
                }
                CHECK((able == 0 || direct <= 1));
            }
        }
        for (int e = 0; e < 10; ++e) {
            auto ev = gen::event(rng);
            std::set<SubscriptionId> expected;
            for (const auto& [sid, spec] : specs) {
                if (gen::oracle_match(spec, ev)) expected.insert(sid);
            }
            std::size_t checks = 0;
            auto plan = g.route(gen::to_event(ev), checks);
            std::set<SubscriptionId> actual;
            for (const auto* r : plan.direct) actual.insert(r->id);
            for (const auto* h : plan.helpers) {
                if (predicate::matches(h->helper.predicate, gen::to_event(ev))) actual.insert(h->helper.id);
                for (const auto& r : h->delegated) {
                    if (predicate::matches(r.predicate, gen::to_event(ev))) actual.insert(r.id);
                }
            }
            REQUIRE(actual == expected);
        }
    }
}

// ---------------------------------------------------------------------------
// Engine

namespace {

harness::Network fd_net(std::size_t n, std::map<std::string, std::uint64_t> keys, std::size_t threshold = 10) {
    auto o = small(std::move(keys));
    o.peer.fast.threshold = threshold;
    harness::Network net(o);
    for (std::size_t i = 0; i < n; ++i) net.add_peer(id(0x10 + i * 3), 0);
    return net;
}

}  // namespace

TEST_CASE("group creation posts one board entry per attribute") {
    auto net = fd_net(8, {{"apple", 0x10}, {"france", 0x13}, {"price", 0x16}});
    GroupId g{id(0x10 + 7 * 3), P("apple")};
    net.at(from_ms(10), 7, [&](sim::Context& ctx, Peer& p) { g = p.fast().create_group(ctx, P("apple/france/price[0,1]")); });
    net.run_until(from_ms(500));
    std::size_t entries = 0;
    for (std::size_t i = 0; i < net.size(); ++i) entries += net.peer(i).fast().board_entries();
    CHECK(entries == 3);
    for (auto [node, key] : {std::pair{0, 0x10}, {1, 0x13}, {2, 0x16}}) {
        auto listing = net.peer(static_cast<std::size_t>(node)).fast().board(id(static_cast<std::uint64_t>(key)), net.sim().now());
        REQUIRE(listing.size() == 1);
        CHECK(listing[0].group == g);
        CHECK(listing[0].publisher->id == net.info(7).id);
    }
    // Creating it again re-advertises without duplicating.
    net.at(from_ms(500), 7, [&](sim::Context& ctx, Peer& p) { p.fast().create_group(ctx, P("apple/france/price[0,1]")); });
    net.run_until(from_ms(1000));
    entries = 0;
    for (std::size_t i = 0; i < net.size(); ++i) entries += net.peer(i).fast().board_entries();
    CHECK(entries == 3);
    CHECK(net.peer(7).fast().groups().size() == 1);
}

TEST_CASE("discovery, private groups and board expiry") {
    auto net = fd_net(6, {{"apple", 0x10}, {"news", 0x13}});
    std::uint64_t empty_q = 0, q = 0, late_q = 0;
    net.at(from_ms(10), 5, [&](sim::Context& ctx, Peer& p) { p.fast().create_group(ctx, P("apple"), true); });
    net.at(from_ms(10), 4, [&](sim::Context& ctx, Peer& p) { empty_q = p.fast().discover(ctx, "news"); });
    net.at(from_ms(500), 4, [&](sim::Context& ctx, Peer& p) { q = p.fast().discover(ctx, "apple"); });
    net.run_until(from_ms(1000));
    const auto* empty = net.peer(4).fast().discovery(empty_q);
    REQUIRE(empty);
    CHECK(empty->done);
    CHECK(empty->listings.empty());
    const auto* found = net.peer(4).fast().discovery(q);
    REQUIRE(found->listings.size() == 1);
    CHECK_FALSE(found->listings[0].publisher.has_value());

    // A private group is still joinable through the board.
    net.at(from_ms(1000), 3, [&, g = found->listings[0].group](sim::Context& ctx, Peer& p) {
        p.fast().join(ctx, g, P("apple"), 1);
    });
    net.run_until(from_ms(2000));
    CHECK(net.peer(5).fast().groups().begin()->second.size() == 1);

    // Publisher stops re-advertising once it fails; boards lapse after 2t.
    net.fail(5, from_ms(2000));
    net.at(from_ms(16000), 4, [&](sim::Context& ctx, Peer& p) { late_q = p.fast().discover(ctx, "apple"); });
    net.run_until(from_ms(17000));
    CHECK(net.peer(4).fast().discovery(late_q)->listings.empty());
}

TEST_CASE("publishing reaches exactly the matching subscribers within two hops") {
    auto net = fd_net(30, {{"price", 0x10}}, 4);
    GroupId g{id(0x10), P("price[0,10]")};
    net.at(from_ms(10), 0, [&](sim::Context& ctx, Peer& p) { g = p.fast().create_group(ctx, P("price[0,10]")); });
    std::map<std::size_t, Predicate> subs;
    for (std::size_t i = 1; i < net.size(); ++i) {
        auto pred = i % 2 ? P("price[0,1]") : P("price[2,3]");
        subs.emplace(i, pred);
        net.at(from_ms(200 + 10 * i), i, [&g, pred, i](sim::Context& ctx, Peer& p) {
            p.fast().join(ctx, g, pred, i % 3 == 0 ? 12u : 0u);
        });
    }
    net.run_until(from_ms(2000));
    const auto& group = net.peer(0).fast().groups().at(g);
    CHECK(group.size() == subs.size());
    CHECK_FALSE(group.helpers().empty());
    CHECK(group.fanout(0) <= 4);
    net.at(from_ms(2000), 0, [&](sim::Context& ctx, Peer& p) { p.fast().publish(ctx, g, E("price[0.5,0.5]")); });
    net.run_until(from_ms(3000));
    std::set<NodeId> got;
    for (const auto& d : net.metrics().deliveries) {
        CHECK(d.hops <= 2);
        CHECK(d.protocol == Protocol::FastDelivery);
        got.insert(d.subscriber);
    }
    std::set<NodeId> expected;
    for (const auto& [i, pred] : subs) {
        if (i % 2) expected.insert(net.info(i).id);
    }
    CHECK(got == expected);
    CHECK(net.metrics().deliveries.size() == expected.size());
}

TEST_CASE("a dead helper's members are reabsorbed and still served") {
    auto net = fd_net(16, {{"news", 0x10}}, 3);
    GroupId g{id(0x10), P("news")};
    net.at(from_ms(10), 0, [&](sim::Context& ctx, Peer& p) { g = p.fast().create_group(ctx, P("news")); });
    for (std::size_t i = 1; i < net.size(); ++i) {
        net.at(from_ms(200 + 10 * i), i, [&g, i](sim::Context& ctx, Peer& p) {
            p.fast().join(ctx, g, P("news"), i == 5 ? 20u : 1u);
        });
    }
    net.run_until(from_ms(2000));
    const auto& group = net.peer(0).fast().groups().at(g);
    REQUIRE(group.helpers().count(SubscriptionId{net.info(5).id, (std::uint64_t{1} << 63) | 1}));
    net.fail(5, from_ms(2000));
    net.at(from_ms(2100), 0, [&](sim::Context& ctx, Peer& p) { p.fast().publish(ctx, g, E("news")); });
    net.run_until(from_ms(3000));
    CHECK(net.metrics().fd_reabsorbed > 0);
    std::set<NodeId> got;
    for (const auto& d : net.metrics().deliveries) got.insert(d.subscriber);
    CHECK(got.size() == net.size() - 2);
    CHECK_FALSE(got.count(net.info(5).id));
    CHECK(group.audit());
}
