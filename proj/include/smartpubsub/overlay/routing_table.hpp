#pragma once

#include <cstddef>
#include <optional>
#include <vector>

#include "smartpubsub/overlay/node_id.hpp"
#include "smartpubsub/simnet/endpoint.hpp"

namespace smartpubsub::overlay {

struct PeerInfo {
    NodeId id;
    sim::Endpoint endpoint;
    sim::RegionId region = 0;

    friend bool operator==(const PeerInfo&, const PeerInfo&) = default;
};

/// Kademlia k-bucket table. Bucket i holds peers whose XOR distance to the
/// owner has its highest set bit at i. Full buckets reject new peers; there
/// is no eviction or liveness probing.
class RoutingTable {
public:
    static constexpr std::size_t kDefaultBucketSize = 20;

    RoutingTable(NodeId owner, unsigned width, std::size_t bucket_size = kDefaultBucketSize);

    const NodeId& owner() const { return owner_; }
    unsigned width() const { return static_cast<unsigned>(buckets_.size()); }
    std::size_t bucket_size() const { return k_; }

    /// False when the peer is the owner, already present, or its bucket is full.
    bool insert(const PeerInfo& peer);
    bool remove(const NodeId& id);
    bool contains(const NodeId& id) const;
    std::optional<PeerInfo> find(const NodeId& id) const;

    std::size_t size() const;
    bool empty() const { return size() == 0; }
    const std::vector<PeerInfo>& bucket(unsigned index) const { return buckets_.at(index); }
    std::vector<PeerInfo> peers() const;

    /// Up to n peers ordered by XOR distance to key, ties by lower id.
    std::vector<PeerInfo> closest_peers(const Key& key, std::size_t n) const;

    /// Invariant check: no duplicates, correct bucket placement, sizes <= k.
    bool audit() const;

private:
    int bucket_index(const NodeId& id) const;

    NodeId owner_;
    std::size_t k_;
    std::vector<std::vector<PeerInfo>> buckets_;
};

/// Free-function form of closest-peer lookup.
inline std::vector<PeerInfo> closest_peers(const RoutingTable& table, const Key& key, std::size_t n) {
    return table.closest_peers(key, n);
}

/// Greedy step: the known peer strictly closer to key than self with minimal
/// distance, or nullopt when self is the closest (self is the rendezvous).
std::optional<PeerInfo> route_next_hop(const NodeId& self, const RoutingTable& table, const Key& key);

}  // namespace smartpubsub::overlay
