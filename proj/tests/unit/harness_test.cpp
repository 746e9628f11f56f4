#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include "smartpubsub/harness/scenario.hpp"
#include "smartpubsub/predicate/predicate.hpp"

using namespace smartpubsub;
using namespace smartpubsub::harness;

namespace {

std::size_t count_fields(const std::string& line) {
    return static_cast<std::size_t>(std::count(line.begin(), line.end(), ',')) + 1;
}

double family_mean(const std::string& scenario, Variant v) {
    double sum = 0;
    for (std::uint64_t seed = 1; seed <= 10; ++seed) {
        sum += run_scenario(Scenario::preset(scenario), v, seed).event_latency.mean;
    }
    return sum / 10;
}

}  // namespace

TEST_CASE("scenario presets and json") {
    auto burst = Scenario::preset("event-burst");
    CHECK(burst.rate_multiplier == 10);
    CHECK(burst.volume_multiplier == 10);
    CHECK(Scenario::preset("fault").failures == 2);
    CHECK_THROWS_AS(Scenario::preset("nope"), std::invalid_argument);

    auto s = Scenario::from_json(nlohmann::json{{"name", "fault"}, {"failure_mode", "rendezvous-cluster"}, {"f", 3}});
    CHECK(s.failures == 2);
    CHECK(s.failure_mode == FailureMode::RendezvousCluster);
    CHECK(s.f == 3);
    CHECK(s.to_json()["failure_mode"] == "rendezvous-cluster");

    auto back = Scenario::from_json(s.to_json());
    CHECK(back.to_json() == s.to_json());

    CHECK_THROWS_AS(Scenario::from_json(nlohmann::json{{"name", "normal"}, {"colour", 1}}), std::invalid_argument);
    CHECK_THROWS_AS(Scenario::from_json(nlohmann::json{{"name", "normal"}, {"nodes", "many"}}),
                    std::invalid_argument);
    CHECK_THROWS_AS(Scenario::from_json(nlohmann::json{{"name", "normal"}, {"publishers", 60}}),
                    std::invalid_argument);
    CHECK_THROWS_AS(Scenario::from_json(nlohmann::json{{"name", "normal"}, {"drop_probability", 1.5}}),
                    std::invalid_argument);
}

TEST_CASE("variant names round trip") {
    for (auto v : all_variants()) CHECK(parse_variant(to_string(v)) == v);
    CHECK(is_reliable(Variant::BaseReliable));
    CHECK_FALSE(is_reliable(Variant::RedirectUnreliable));
    CHECK_THROWS_AS(parse_variant("gossip"), std::invalid_argument);
}

TEST_CASE("summary percentiles") {
    auto s = Summary::of({5, 1, 4, 2, 3, 6, 7, 8, 9, 10});
    CHECK(s.count == 10);
    CHECK(s.mean == doctest::Approx(5.5));
    CHECK(s.p50 == 5);
    CHECK(s.p95 == 10);
    CHECK(s.max == 10);
    CHECK(Summary::of({}).count == 0);
}

TEST_CASE("harness oracle agrees with the predicate matcher") {
    std::mt19937_64 rng(11);
    const std::vector<std::string> topics{"a", "b", "c"};
    auto pick = [&](int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng); };
    for (int round = 0; round < 2000; ++round) {
        Interest in;
        Publication pub;
        for (const auto& t : topics) {
            if (pick(0, 2) == 0) in.topics.push_back(t);
            if (pick(0, 1) == 0) pub.topics.push_back(t);
        }
        for (const char* r : {"price", "temp"}) {
            if (pick(0, 1) == 0) {
                int x = pick(0, 20);
                int y = pick(0, 20);
                in.ranges[r] = {std::min(x, y), std::max(x, y)};
            }
            if (pick(0, 3) != 0) pub.values[r] = pick(0, 20);
        }
        if (in.topics.empty() && in.ranges.empty()) in.topics.push_back("a");
        if (pub.topics.empty() && pub.values.empty()) pub.topics.push_back("a");
        auto p = predicate::Predicate::parse(predicate_text(in));
        auto e = predicate::EventPredicate::parse(event_text(pub));
        CHECK(predicate::matches(p, e) == oracle_matches(in, pub));
    }
}

TEST_CASE("csv rows line up with the header") {
    auto r = run_scenario(Scenario::preset("normal"), Variant::BaseReliable, 1);
    auto r2 = run_scenario(Scenario::preset("normal"), Variant::FastDelivery, 1);
    auto text = csv({r, r2});
    std::istringstream in(text);
    std::vector<std::string> lines;
    for (std::string line; std::getline(in, line);) lines.push_back(line);
    REQUIRE(lines.size() == 3);
    CHECK(count_fields(lines[0]) == csv_columns().size());
    CHECK(count_fields(lines[1]) == csv_columns().size());
    CHECK(count_fields(lines[2]) == csv_columns().size());
    CHECK(r.passed());
    CHECK(r.missing == 0);
    CHECK(r.expected > 0);
}

TEST_CASE("emit_report writes files") {
    auto dir = std::filesystem::temp_directory_path() / "smartpubsub_harness_test";
    std::filesystem::remove_all(dir);
    auto r = run_scenario(Scenario::preset("normal"), Variant::BaseUnreliable, 2, RunOptions{true, true});
    emit_report({r}, dir.string());
    CHECK(std::filesystem::exists(dir / "report.csv"));
    CHECK(std::filesystem::exists(dir / "summary.txt"));
    CHECK(std::filesystem::file_size(dir / "trace.jsonl") > 0);
    std::ifstream trace(dir / "trace.jsonl");
    std::string first;
    std::getline(trace, first);
    auto rec = nlohmann::json::parse(first);
    CHECK(rec.contains("t"));
    CHECK(rec.contains("ev"));
    std::filesystem::remove_all(dir);
    CHECK_THROWS(emit_report({}, dir.string()));
}

TEST_CASE("sweep config parsing and row order") {
    auto cfg = SweepConfig::from_json(nlohmann::json{
        {"scenario", {{"nodes", 30}, {"publishers", 5}}}, {"f_values", {1, 2}}, {"subs_per_node", {1}}, {"seeds", {4, 5}}});
    CHECK(cfg.base.nodes == 30);
    CHECK(cfg.base.name == "replication-sweep");
    auto rows = replication_sweep(cfg);
    REQUIRE(rows.size() == 4);
    CHECK(rows[0].f == 1);
    CHECK(rows[0].seed == 4);
    CHECK(rows[1].seed == 5);
    CHECK(rows[3].f == 2);
    CHECK_THROWS_AS(SweepConfig::from_json(nlohmann::json{{"f", {1}}}), std::invalid_argument);
    CHECK_THROWS_AS(SweepConfig::from_json(nlohmann::json{{"seeds", nlohmann::json::array()}}),
                    std::invalid_argument);
}

TEST_CASE("event burst raises ScoutSubs latency over the seed family") {
    for (auto v : {Variant::BaseUnreliable, Variant::BaseReliable, Variant::RedirectUnreliable,
                   Variant::RedirectReliable}) {
        CAPTURE(to_string(v));
        CHECK(family_mean("event-burst", v) > family_mean("normal", v));
    }
}

TEST_CASE("late subscriptions count only once settled") {
    auto r = run_scenario(Scenario::preset("sub-burst"), Variant::BaseReliable, 3);
    CHECK(r.passed());
    CHECK(r.settled_subscriptions <= r.subscriptions);
    CHECK(r.unexpected == 0);
}
