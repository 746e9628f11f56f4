#pragma once

#include <map>
#include <string>
#include <string_view>

#include <json.hpp>

#include "smartpubsub/harness/network.hpp"

namespace fixture {

using namespace smartpubsub;
using overlay::NodeId;
using predicate::EventPredicate;
using predicate::Predicate;
using sim::from_ms;

inline NodeId id(std::uint64_t v) { return NodeId::from_uint(v); }
inline Predicate P(std::string_view s) { return Predicate::parse(s); }
inline EventPredicate E(std::string_view s) { return EventPredicate::parse(s); }

/// 8-bit id space, one region, tracing on, audits on. Attribute keys come
/// from `keys` when listed there.
inline harness::NetworkOptions small(std::map<std::string, std::uint64_t> keys, scoutsubs::ScoutConfig scout = {},
                                     std::size_t bucket = 20) {
    harness::NetworkOptions o;
    o.sim.seed = 7;
    o.sim.trace = true;
    o.peer.id_width = 8;
    o.peer.bucket_size = bucket;
    o.peer.scout = scout;
    o.peer.scout.audit = true;
    o.peer.fast.audit = true;
    overlay::IdSpace space(8);
    o.key_fn = [keys = std::move(keys), space](std::string_view name) {
        auto it = keys.find(std::string(name));
        return it != keys.end() ? NodeId::from_uint(it->second) : space.key_for_attribute(name);
    };
    return o;
}

/// Trace records of event type `ev` (send/deliver) and message kind.
inline std::vector<nlohmann::json> records(const sim::Simulator& sim, std::string_view ev, std::string_view kind) {
    std::vector<nlohmann::json> out;
    for (const auto& line : sim.trace()) {
        auto r = nlohmann::json::parse(line);
        if (r["ev"] == ev && r.contains("kind") && r["kind"] == kind) out.push_back(std::move(r));
    }
    return out;
}

inline std::size_t delivered_to(const sim::Simulator& sim, sim::Endpoint to, std::string_view kind) {
    std::size_t n = 0;
    for (const auto& r : records(sim, "deliver", kind)) n += r["to"] == to.value;
    return n;
}

inline std::size_t sent_from(const sim::Simulator& sim, sim::Endpoint from, std::string_view kind) {
    std::size_t n = 0;
    for (const auto& r : records(sim, "send", kind)) n += r["from"] == from.value;
    return n;
}

inline std::size_t deliveries_at(const Metrics& m, const NodeId& node) {
    std::size_t n = 0;
    for (const auto& d : m.deliveries) n += d.subscriber == node;
    return n;
}

}  // namespace fixture
