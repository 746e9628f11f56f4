#include "smartpubsub/overlay/local_overlay.hpp"

namespace smartpubsub::overlay {

void Directory::add(const PeerInfo& peer) {
    auto [it, inserted] = by_endpoint_.try_emplace(peer.endpoint, members_.size());
    if (inserted) {
        members_.push_back(peer);
    } else {
        members_[it->second] = peer;
    }
}

const PeerInfo* Directory::find(sim::Endpoint endpoint) const {
    auto it = by_endpoint_.find(endpoint);
    return it == by_endpoint_.end() ? nullptr : &members_[it->second];
}

LocalOverlay::LocalOverlay(PeerInfo self, unsigned width, std::size_t bucket_size, KeyFn key_fn,
                           const Directory* directory)
    : self_(self), table_(self.id, width, bucket_size), key_fn_(std::move(key_fn)), directory_(directory) {}

void LocalOverlay::bootstrap(const sim::Simulator& sim) {
    if (!directory_) return;
    for (const auto& peer : directory_->members()) {
        if (sim.alive(peer.endpoint)) table_.insert(peer);
    }
}

void LocalOverlay::seed(const std::vector<PeerInfo>& peers) {
    for (const auto& peer : peers) table_.insert(peer);
}

bool LocalOverlay::on_unreachable(sim::Endpoint endpoint, const sim::Simulator& sim) {
    if (sim.alive(endpoint)) return false;
    bool removed = false;
    for (const auto& peer : table_.peers()) {
        if (peer.endpoint == endpoint) removed = table_.remove(peer.id) || removed;
    }
    if (removed) bootstrap(sim);
    return true;
}

}  // namespace smartpubsub::overlay
