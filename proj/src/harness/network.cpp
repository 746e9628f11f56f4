#include "smartpubsub/harness/network.hpp"

#include <stdexcept>

namespace smartpubsub::harness {

Network::Network(NetworkOptions options)
    : options_(std::move(options)), key_fn_(options_.key_fn), sim_(options_.sim) {
    if (!key_fn_) {
        overlay::IdSpace space(options_.peer.id_width);
        key_fn_ = [space](std::string_view name) { return space.key_for_attribute(name); };
    }
}

std::size_t Network::add_peer(const overlay::NodeId& id, sim::RegionId region, sim::Time join_at) {
    if (index_of(id)) throw std::invalid_argument("duplicate node id");
    sim::Endpoint endpoint{static_cast<std::uint32_t>(sim_.node_count())};
    overlay::PeerInfo info{id, endpoint, region};
    auto peer = std::make_unique<Peer>(info, options_.peer, key_fn_, &directory_, &metrics_);
    Peer* raw = peer.get();
    sim::Time at = std::max(join_at, sim_.now());
    auto actual = sim_.add_node(std::move(peer), region, at);
    if (actual != endpoint) throw std::logic_error("endpoint allocation out of step");
    directory_.add(info);
    peers_.push_back(raw);
    infos_.push_back(info);
    join_at_.push_back(at);

    bool late = seeded_ || at > 0;
    if (late) {
        std::size_t self = peers_.size() - 1;
        sim_.schedule_control(at, [this, self] {
            if (!sim_.alive(infos_[self].endpoint)) return;
            for (std::size_t j = 0; j < peers_.size(); ++j) {
                if (j == self || !sim_.alive(infos_[j].endpoint)) continue;
                auto joined = infos_[self];
                sim_.schedule_call(sim_.now(), infos_[j].endpoint,
                                   [p = peers_[j], joined](sim::Context& ctx) { p->learn_peer(ctx, joined); });
            }
        });
    }
    return peers_.size() - 1;
}

std::optional<std::size_t> Network::index_of(const overlay::NodeId& id) const {
    for (std::size_t i = 0; i < infos_.size(); ++i) {
        if (infos_[i].id == id) return i;
    }
    return std::nullopt;
}

std::optional<std::size_t> Network::index_of(sim::Endpoint endpoint) const {
    if (endpoint.value < infos_.size()) return endpoint.value;
    return std::nullopt;
}

void Network::at(sim::Time at, std::size_t i, std::function<void(sim::Context&, Peer&)> fn) {
    Peer* p = peers_.at(i);
    sim_.schedule_call(at, infos_[i].endpoint, [p, fn = std::move(fn)](sim::Context& ctx) { fn(ctx, *p); });
}

void Network::fail(std::size_t i, sim::Time at) { sim_.fail_node(infos_.at(i).endpoint, at); }

void Network::seed_initial() {
    seeded_ = true;
    std::vector<overlay::PeerInfo> initial;
    for (std::size_t i = 0; i < peers_.size(); ++i) {
        if (join_at_[i] <= 0) initial.push_back(infos_[i]);
    }
    for (std::size_t i = 0; i < peers_.size(); ++i) {
        if (join_at_[i] <= 0) peers_[i]->seed(initial);
    }
}

sim::RunResult Network::run_until(sim::Time t) {
    if (!seeded_) seed_initial();
    return sim_.run_until(t);
}

std::vector<std::size_t> Network::live() const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < infos_.size(); ++i) {
        if (sim_.alive(infos_[i].endpoint)) out.push_back(i);
    }
    return out;
}

}  // namespace smartpubsub::harness
