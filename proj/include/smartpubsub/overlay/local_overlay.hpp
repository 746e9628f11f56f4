#pragma once

#include <functional>
#include <optional>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "smartpubsub/overlay/node_id.hpp"
#include "smartpubsub/overlay/routing_table.hpp"
#include "smartpubsub/simnet/simulator.hpp"

namespace smartpubsub::overlay {

using KeyFn = std::function<Key(std::string_view)>;

/// Global membership snapshot used to bootstrap and refill routing tables.
class Directory {
public:
    void add(const PeerInfo& peer);
    const std::vector<PeerInfo>& members() const { return members_; }
    const PeerInfo* find(sim::Endpoint endpoint) const;

private:
    std::vector<PeerInfo> members_;
    std::unordered_map<sim::Endpoint, std::size_t> by_endpoint_;
};

/// One node's view of the overlay: its identity, routing table, and the
/// attribute-key function shared by the whole network.
class LocalOverlay {
public:
    LocalOverlay(PeerInfo self, unsigned width, std::size_t bucket_size, KeyFn key_fn,
                 const Directory* directory = nullptr);

    const PeerInfo& self() const { return self_; }
    const NodeId& id() const { return self_.id; }
    RoutingTable& table() { return table_; }
    const RoutingTable& table() const { return table_; }

    Key key_for(std::string_view attribute) const { return key_fn_(attribute); }
    std::optional<PeerInfo> next_hop(const Key& key) const { return route_next_hop(self_.id, table_, key); }
    std::vector<PeerInfo> closest(const Key& key, std::size_t n) const { return table_.closest_peers(key, n); }

    bool learn(const PeerInfo& peer) { return table_.insert(peer); }
    /// Inserts every live directory member (bucket capacity permitting).
    void bootstrap(const sim::Simulator& sim);
    /// Inserts the given peers regardless of liveness (pre-run setup).
    void seed(const std::vector<PeerInfo>& peers);

    /// A send to `endpoint` failed. A crashed peer is removed and its slot
    /// refilled from the live membership; returns false when the peer is
    /// still alive (the message was dropped in transit).
    bool on_unreachable(sim::Endpoint endpoint, const sim::Simulator& sim);

private:
    PeerInfo self_;
    RoutingTable table_;
    KeyFn key_fn_;
    const Directory* directory_;
};

}  // namespace smartpubsub::overlay
