#include "smartpubsub/peer/peer.hpp"

namespace smartpubsub {

Peer::Peer(overlay::PeerInfo self, const PeerConfig& config, overlay::KeyFn key_fn,
           const overlay::Directory* directory, Metrics* metrics)
    : overlay_(std::move(self), config.id_width, config.bucket_size, std::move(key_fn), directory),
      scout_(overlay_, config.scout, metrics),
      fast_(overlay_, config.fast, metrics),
      metrics_(metrics),
      event_cost_(config.event_cost) {}

void Peer::bootstrap(const sim::Simulator& sim) {
    overlay_.bootstrap(sim);
    bootstrapped_ = true;
}

void Peer::seed(const std::vector<overlay::PeerInfo>& peers) {
    overlay_.seed(peers);
    bootstrapped_ = true;
}

void Peer::learn_peer(sim::Context& ctx, const overlay::PeerInfo& peer) {
    if (peer.id == overlay_.id()) return;
    overlay_.learn(peer);
    scout_.on_peer_joined(ctx, peer);
}

void Peer::on_start(sim::Context& ctx) {
    if (!bootstrapped_) bootstrap(ctx.simulator());
    scout_.start(ctx);
    fast_.start(ctx);
}

void Peer::on_message(sim::Context& ctx, sim::Endpoint from, const sim::MessagePtr& msg) {
    const auto* m = dynamic_cast<const ProtocolMessage*>(msg.get());
    if (!m || !(scout_.handle(ctx, from, *m) || fast_.handle(ctx, from, *m))) {
        ++metrics_->malformed;
        return;
    }
    if (m->type() == MsgType::Event || m->type() == MsgType::FdEvent) ctx.charge(event_cost_);
}

void Peer::on_timer(sim::Context& ctx, sim::TimerId, std::uint64_t tag) {
    if (fastdelivery::FastEngine::owns_tag(tag)) {
        fast_.on_timer(ctx, tag);
    } else {
        scout_.on_timer(ctx, tag);
    }
}

void Peer::on_send_failure(sim::Context& ctx, sim::Endpoint to, const sim::MessagePtr& msg) {
    const auto* m = dynamic_cast<const ProtocolMessage*>(msg.get());
    if (m && !scout_.on_send_failure(ctx, to, *m)) fast_.on_send_failure(ctx, to, *m);
}

}  // namespace smartpubsub
