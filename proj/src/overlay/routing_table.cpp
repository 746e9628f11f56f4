#include "smartpubsub/overlay/routing_table.hpp"

#include <algorithm>
#include <set>

namespace smartpubsub::overlay {

RoutingTable::RoutingTable(NodeId owner, unsigned width, std::size_t bucket_size)
    : owner_(owner), k_(bucket_size), buckets_(width) {
    if (bucket_size == 0) throw std::invalid_argument("bucket size must be positive");
}

int RoutingTable::bucket_index(const NodeId& id) const { return (id ^ owner_).highest_bit(); }

bool RoutingTable::insert(const PeerInfo& peer) {
    int index = bucket_index(peer.id);
    if (index < 0 || index >= static_cast<int>(buckets_.size())) return false;
    auto& bucket = buckets_[static_cast<std::size_t>(index)];
    auto it = std::find_if(bucket.begin(), bucket.end(), [&](const PeerInfo& p) { return p.id == peer.id; });
    if (it != bucket.end()) {
        *it = peer;
        return false;
    }
    if (bucket.size() >= k_) return false;
    bucket.push_back(peer);
    return true;
}

bool RoutingTable::remove(const NodeId& id) {
    int index = bucket_index(id);
    if (index < 0 || index >= static_cast<int>(buckets_.size())) return false;
    auto& bucket = buckets_[static_cast<std::size_t>(index)];
    auto it = std::find_if(bucket.begin(), bucket.end(), [&](const PeerInfo& p) { return p.id == id; });
    if (it == bucket.end()) return false;
    bucket.erase(it);
    return true;
}

std::optional<PeerInfo> RoutingTable::find(const NodeId& id) const {
    int index = bucket_index(id);
    if (index < 0 || index >= static_cast<int>(buckets_.size())) return std::nullopt;
    for (const auto& p : buckets_[static_cast<std::size_t>(index)]) {
        if (p.id == id) return p;
    }
    return std::nullopt;
}

bool RoutingTable::contains(const NodeId& id) const { return find(id).has_value(); }

std::size_t RoutingTable::size() const {
    std::size_t n = 0;
    for (const auto& b : buckets_) n += b.size();
    return n;
}

std::vector<PeerInfo> RoutingTable::peers() const {
    std::vector<PeerInfo> out;
    out.reserve(size());
    for (const auto& b : buckets_) out.insert(out.end(), b.begin(), b.end());
    return out;
}

std::vector<PeerInfo> RoutingTable::closest_peers(const Key& key, std::size_t n) const {
    std::vector<PeerInfo> all = peers();
    auto closer = [&](const PeerInfo& a, const PeerInfo& b) {
        auto da = xor_distance(a.id, key);
        auto db = xor_distance(b.id, key);
        if (da != db) return da < db;
        return a.id < b.id;
    };
    std::size_t take = std::min(n, all.size());
    std::partial_sort(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(take), all.end(), closer);
    all.resize(take);
    return all;
}

bool RoutingTable::audit() const {
    std::set<NodeId> seen;
    for (std::size_t i = 0; i < buckets_.size(); ++i) {
        if (buckets_[i].size() > k_) return false;
        for (const auto& p : buckets_[i]) {
            if (!seen.insert(p.id).second) return false;
            if (bucket_index(p.id) != static_cast<int>(i)) return false;
        }
    }
    return true;
}

std::optional<PeerInfo> route_next_hop(const NodeId& self, const RoutingTable& table, const Key& key) {
    const PeerInfo* best = nullptr;
    Distance best_distance = xor_distance(self, key);
    for (unsigned i = 0; i < table.width(); ++i) {
        for (const auto& p : table.bucket(i)) {
            auto d = xor_distance(p.id, key);
            if (d < best_distance || (best != nullptr && d == best_distance && p.id < best->id)) {
                best = &p;
                best_distance = d;
            }
        }
    }
    if (best == nullptr) return std::nullopt;
    return *best;
}

}  // namespace smartpubsub::overlay
