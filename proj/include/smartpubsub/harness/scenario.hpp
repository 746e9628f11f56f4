#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "smartpubsub/simnet/endpoint.hpp"

namespace smartpubsub::harness {

enum class Variant : std::uint8_t { BaseUnreliable, BaseReliable, RedirectUnreliable, RedirectReliable, FastDelivery };

std::string to_string(Variant v);
/// Throws std::invalid_argument for unknown names.
Variant parse_variant(const std::string& name);
const std::vector<Variant>& all_variants();
bool is_reliable(Variant v);

enum class FailureMode : std::uint8_t {
    /// Random non-publisher nodes, no two adjacent in ID order.
    Scattered,
    /// The rendezvous of the busiest attribute plus its closest peers.
    RendezvousCluster,
};

struct Scenario {
    std::string name = "normal";
    std::size_t nodes = 60;
    std::size_t publishers = 10;
    /// Nodes that subscribe; 0 means every non-publisher.
    std::size_t subscribers = 0;
    std::size_t subs_per_node = 1;
    std::size_t events_per_publisher = 10;
    /// Interval between one publisher's events before the multiplier.
    double event_interval_ms = 500;
    double rate_multiplier = 1;
    /// Events per publisher are multiplied too (burst = more events, faster).
    double volume_multiplier = 1;
    double subscribe_window_ms = 2000;
    /// Fraction of subscriptions issued during the publish phase.
    double late_subscription_fraction = 0;

    std::size_t failures = 0;
    FailureMode failure_mode = FailureMode::Scattered;
    /// Offset of the crash into the publish phase.
    double failure_offset_ms = 1000;

    std::size_t f = 2;
    double refresh_period_ms = 5000;
    std::size_t bucket_size = 20;
    double drop_probability = 0;
    double drain_ms = 10000;
    /// Processing cost per handled item, extra per event message, and per
    /// filter evaluation.
    double service_time_ms = 0.2;
    double event_cost_ms = 4;
    double match_cost_us = 50;
    /// FastDelivery direct children per region before recruiting.
    std::size_t fd_threshold = 10;
    /// FastDelivery helper capacity is drawn uniformly from [0, max].
    unsigned fd_max_capacity = 8;
    bool audit = false;

    /// Applies the preset for a named scenario (counts, multipliers, failures).
    static Scenario preset(const std::string& name);
    /// Throws std::invalid_argument when a count or rate is out of range.
    void validate() const;

    nlohmann::json to_json() const;
    /// Starts from the preset named in j["name"] and overrides given keys.
    static Scenario from_json(const nlohmann::json& j);
};

/// Plain-data description of a subscription or event, independent of the
/// protocol predicate types.
struct Interest {
    std::vector<std::string> topics;
    std::map<std::string, std::pair<int, int>> ranges;
};
struct Publication {
    std::vector<std::string> topics;
    std::map<std::string, int> values;
};
std::string predicate_text(const Interest& interest);
std::string event_text(const Publication& publication);
bool oracle_matches(const Interest& interest, const Publication& publication);

struct Summary {
    double mean = 0;
    double p50 = 0;
    double p95 = 0;
    double max = 0;
    std::size_t count = 0;
    static Summary of(std::vector<double> samples);
};

struct MetricsReport {
    std::string scenario;
    std::string variant;
    std::uint64_t seed = 0;
    std::size_t nodes = 0;
    std::size_t f = 0;
    std::size_t subs_per_node = 0;

    std::size_t subscriptions = 0;
    std::size_t settled_subscriptions = 0;
    std::size_t events = 0;
    std::size_t expected = 0;
    std::size_t delivered = 0;
    std::size_t missing = 0;
    std::size_t duplicates = 0;
    /// Deliveries to subscribers the oracle did not expect (unsettled or none).
    std::size_t unexpected = 0;
    std::size_t failed_nodes = 0;

    Summary event_latency;
    Summary subscription_latency;
    std::uint64_t messages = 0;
    std::uint64_t event_messages = 0;
    std::map<std::string, std::uint64_t> messages_by_kind;
    std::uint64_t peak_entries = 0;
    std::uint64_t cumulative_entries = 0;
    std::uint64_t match_ops = 0;
    std::uint64_t trackers_created = 0;
    std::uint64_t trackers_completed = 0;
    std::uint64_t trackers_abandoned = 0;
    std::uint64_t publish_failed = 0;
    std::uint64_t route_failures = 0;
    std::uint64_t dropped = 0;

    /// (subscriber index, event index) -> delivery count.
    std::map<std::pair<std::size_t, std::size_t>, std::size_t> delivered_multiset;
    std::vector<std::string> trace;

    std::vector<std::string> assertion_failures;
    bool passed() const { return assertion_failures.empty(); }
};

struct RunOptions {
    bool trace = false;
    /// Adds the run's embedded assertions (missing = 0 where required).
    bool assertions = true;
};

MetricsReport run_scenario(const Scenario& scenario, Variant variant, std::uint64_t seed, RunOptions options = {});

struct SweepConfig {
    Scenario base = Scenario::preset("replication-sweep");
    Variant variant = Variant::BaseReliable;
    std::vector<std::size_t> f_values{1, 2, 3, 5};
    std::vector<std::size_t> subs_values{1, 3, 5};
    std::vector<std::uint64_t> seeds{1, 2, 3, 4, 5, 6, 7, 8, 9, 10};
    /// 0 uses the hardware concurrency.
    unsigned threads = 0;

    static SweepConfig from_json(const nlohmann::json& j);
};

/// Runs the cross product f x subs x seed. Rows come back in that order.
std::vector<MetricsReport> replication_sweep(const SweepConfig& config);

struct TrendCheck {
    std::string name;
    bool passed = false;
    std::string detail;
};
/// Ordering properties over a sweep's cell means.
std::vector<TrendCheck> sweep_trends(const SweepConfig& config, const std::vector<MetricsReport>& rows);

std::vector<std::string> csv_columns();
std::string csv_row(const MetricsReport& r);
std::string csv(const std::vector<MetricsReport>& reports);
std::string summary_table(const std::vector<MetricsReport>& reports);
/// Writes report.csv and summary.txt (and trace.jsonl when traced) into dir.
/// Throws std::runtime_error when a file cannot be written.
void emit_report(const std::vector<MetricsReport>& reports, const std::string& dir);

}  // namespace smartpubsub::harness
