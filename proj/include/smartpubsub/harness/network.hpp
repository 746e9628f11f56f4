#pragma once

#include <functional>
#include <memory>
#include <optional>
#include <vector>

#include "smartpubsub/metrics.hpp"
#include "smartpubsub/overlay/local_overlay.hpp"
#include "smartpubsub/peer/peer.hpp"
#include "smartpubsub/simnet/simulator.hpp"

namespace smartpubsub::harness {

struct NetworkOptions {
    sim::SimConfig sim;
    PeerConfig peer;
    /// Defaults to the id space's attribute digest.
    overlay::KeyFn key_fn;
};

/// A simulator populated with Peers sharing one Directory and one Metrics.
/// Peers that join at time 0 start with complete routing tables; later
/// joiners bootstrap themselves and are announced to every live peer.
class Network {
public:
    explicit Network(NetworkOptions options);

    std::size_t add_peer(const overlay::NodeId& id, sim::RegionId region, sim::Time join_at = 0);

    std::size_t size() const { return peers_.size(); }
    Peer& peer(std::size_t i) { return *peers_.at(i); }
    const Peer& peer(std::size_t i) const { return *peers_.at(i); }
    const overlay::PeerInfo& info(std::size_t i) const { return infos_.at(i); }
    std::optional<std::size_t> index_of(const overlay::NodeId& id) const;
    std::optional<std::size_t> index_of(sim::Endpoint endpoint) const;

    sim::Simulator& sim() { return sim_; }
    const sim::Simulator& sim() const { return sim_; }
    Metrics& metrics() { return metrics_; }
    const Metrics& metrics() const { return metrics_; }
    const overlay::KeyFn& key_fn() const { return key_fn_; }
    const NetworkOptions& options() const { return options_; }

    /// Runs fn inside peer i's handler context at time `at`.
    void at(sim::Time at, std::size_t i, std::function<void(sim::Context&, Peer&)> fn);
    void fail(std::size_t i, sim::Time at);
    sim::RunResult run_until(sim::Time t);

    /// Peers alive now.
    std::vector<std::size_t> live() const;

private:
    void seed_initial();

    NetworkOptions options_;
    overlay::KeyFn key_fn_;
    sim::Simulator sim_;
    overlay::Directory directory_;
    Metrics metrics_;
    std::vector<Peer*> peers_;
    std::vector<overlay::PeerInfo> infos_;
    std::vector<sim::Time> join_at_;
    bool seeded_ = false;
};

}  // namespace smartpubsub::harness
