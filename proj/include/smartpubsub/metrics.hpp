#pragma once

#include <compare>
#include <cstdint>
#include <functional>
#include <map>
#include <vector>

#include "smartpubsub/overlay/node_id.hpp"
#include "smartpubsub/simnet/endpoint.hpp"

namespace smartpubsub {

struct EventId {
    overlay::NodeId publisher;
    std::uint64_t seq = 0;

    friend auto operator<=>(const EventId&, const EventId&) = default;
    friend bool operator==(const EventId&, const EventId&) = default;
};

struct SubscriptionId {
    overlay::NodeId subscriber;
    std::uint64_t seq = 0;

    friend auto operator<=>(const SubscriptionId&, const SubscriptionId&) = default;
    friend bool operator==(const SubscriptionId&, const SubscriptionId&) = default;
};

enum class Protocol : std::uint8_t { ScoutSubs, FastDelivery };

struct Delivery {
    overlay::NodeId subscriber;
    EventId event;
    sim::Time published_at = 0;
    sim::Time delivered_at = 0;
    unsigned hops = 0;
    Protocol protocol = Protocol::ScoutSubs;
};

/// Shared sink for one simulation run. Nodes only append; the harness reads.
struct Metrics {
    std::vector<Delivery> deliveries;
    /// Initial subscriptions only: issue -> rendezvous ack, in ms.
    std::vector<double> subscription_latency_ms;
    /// First ack time per subscription.
    std::map<SubscriptionId, sim::Time> settled_at;

    std::uint64_t match_ops = 0;
    std::uint64_t delivery_gaps = 0;
    std::uint64_t route_failures = 0;
    std::uint64_t publish_failed = 0;
    std::uint64_t trackers_created = 0;
    std::uint64_t trackers_completed = 0;
    std::uint64_t trackers_abandoned = 0;
    std::uint64_t tracker_takeovers = 0;
    std::uint64_t unknown_acks = 0;
    std::uint64_t malformed = 0;
    std::uint64_t subscription_failures = 0;
    std::uint64_t fd_misses = 0;
    std::uint64_t fd_reabsorbed = 0;
    std::uint64_t fd_rejected = 0;

    std::function<void(const Delivery&)> on_delivery;

    void deliver(const Delivery& d) {
        deliveries.push_back(d);
        if (on_delivery) on_delivery(d);
    }
    void settle(const SubscriptionId& id, sim::Time at) { settled_at.try_emplace(id, at); }
};

}  // namespace smartpubsub
