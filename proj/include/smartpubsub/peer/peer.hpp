#pragma once

#include <memory>

#include "smartpubsub/fastdelivery/engine.hpp"
#include "smartpubsub/metrics.hpp"
#include "smartpubsub/overlay/local_overlay.hpp"
#include "smartpubsub/scoutsubs/engine.hpp"
#include "smartpubsub/simnet/simulator.hpp"

namespace smartpubsub {

struct PeerConfig {
    unsigned id_width = 256;
    std::size_t bucket_size = 20;
    scoutsubs::ScoutConfig scout;
    fastdelivery::FastConfig fast;
    /// Extra processing time for handling an event message.
    sim::Time event_cost = 0;
};

/// A simulated node running both protocols over one overlay view.
class Peer : public sim::Node {
public:
    Peer(overlay::PeerInfo self, const PeerConfig& config, overlay::KeyFn key_fn,
         const overlay::Directory* directory, Metrics* metrics);

    overlay::LocalOverlay& overlay() { return overlay_; }
    const overlay::LocalOverlay& overlay() const { return overlay_; }
    scoutsubs::ScoutEngine& scout() { return scout_; }
    const scoutsubs::ScoutEngine& scout() const { return scout_; }
    fastdelivery::FastEngine& fast() { return fast_; }
    const fastdelivery::FastEngine& fast() const { return fast_; }

    /// Fills the routing table from the live membership. Nodes that have not
    /// been bootstrapped beforehand do it themselves when they start.
    void bootstrap(const sim::Simulator& sim);
    void seed(const std::vector<overlay::PeerInfo>& peers);
    /// Another node joined the network.
    void learn_peer(sim::Context& ctx, const overlay::PeerInfo& peer);

    void on_start(sim::Context& ctx) override;
    void on_message(sim::Context& ctx, sim::Endpoint from, const sim::MessagePtr& msg) override;
    void on_timer(sim::Context& ctx, sim::TimerId id, std::uint64_t tag) override;
    void on_send_failure(sim::Context& ctx, sim::Endpoint to, const sim::MessagePtr& msg) override;

private:
    overlay::LocalOverlay overlay_;
    scoutsubs::ScoutEngine scout_;
    fastdelivery::FastEngine fast_;
    Metrics* metrics_;
    sim::Time event_cost_;
    bool bootstrapped_ = false;
};

}  // namespace smartpubsub
