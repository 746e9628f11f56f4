#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "smartpubsub/fastdelivery/config.hpp"
#include "smartpubsub/fastdelivery/group.hpp"
#include "smartpubsub/fastdelivery/messages.hpp"
#include "smartpubsub/metrics.hpp"
#include "smartpubsub/overlay/local_overlay.hpp"

namespace smartpubsub::fastdelivery {

/// The FastDelivery state of one node: groups it publishes, boards it hosts
/// as a rendezvous, helper support lists, and its own group memberships.
class FastEngine {
public:
    struct BoardEntry {
        std::string attr;
        PeerInfo publisher;
        bool is_private = false;
        sim::Time expires = 0;
    };
    struct Discovery {
        bool done = false;
        bool error = false;
        std::vector<Listing> listings;
    };
    struct Support {
        PeerInfo publisher;
        SubscriberIndex index;
    };
    struct Interest {
        SubscriptionId id;
        GroupId group;
        Predicate predicate;
        unsigned capacity = 0;
    };

    FastEngine(overlay::LocalOverlay& overlay, FastConfig config, Metrics* metrics);

    const FastConfig& config() const { return config_; }

    void start(sim::Context& ctx);

    /// Creates (or re-advertises) a group. One board entry per attribute.
    GroupId create_group(sim::Context& ctx, const Predicate& pred, bool is_private = false);
    /// Asks the board of `attribute`; the result appears under the handle.
    std::uint64_t discover(sim::Context& ctx, const std::string& attribute);
    const Discovery* discovery(std::uint64_t handle) const;
    /// Joins a group by looking it up on the board of its first attribute.
    SubscriptionId join(sim::Context& ctx, const GroupId& group, const Predicate& pred, unsigned capacity);
    /// Throws std::invalid_argument for unknown groups or events lacking a
    /// group attribute.
    EventId publish(sim::Context& ctx, const GroupId& group, const EventPredicate& ev,
                    std::shared_ptr<const std::string> payload = {});

    bool handle(sim::Context& ctx, sim::Endpoint from, const ProtocolMessage& m);
    bool on_send_failure(sim::Context& ctx, sim::Endpoint to, const ProtocolMessage& m);
    bool on_timer(sim::Context& ctx, std::uint64_t tag);

    // Inspection.
    const std::map<GroupId, MulticastGroup>& groups() const { return groups_; }
    const MulticastGroup* group(const GroupId& id) const;
    /// Unexpired listings on the board this node hosts for key.
    std::vector<Listing> board(const Key& key, sim::Time now) const;
    std::size_t board_entries() const;
    const std::map<GroupId, Support>& supports() const { return supports_; }
    const std::vector<Interest>& interests() const { return interests_; }
    bool audit() const;

    /// Timer tags used by this engine have bit 56 set.
    static bool owns_tag(std::uint64_t tag) { return ((tag >> 56) & 1) != 0; }

private:
    struct PendingJoin {
        Interest interest;
        std::string attr;
        unsigned attempts = 0;
    };

    void advertise(sim::Context& ctx, const MulticastGroup& group);
    void route(sim::Context& ctx, const Key& key, const std::shared_ptr<const ProtocolMessage>& m);
    void at_rendezvous(sim::Context& ctx, const ProtocolMessage& m);
    void ask_board(sim::Context& ctx, std::uint64_t handle, const std::string& attr, bool join);
    void on_reply(sim::Context& ctx, const msg::BoardReply& m);
    void send_join(sim::Context& ctx, std::uint64_t index, const Listing& listing);
    void retry_join(sim::Context& ctx, std::uint64_t index);
    void on_fd_subscribe(sim::Context& ctx, const msg::FdSubscribe& m);
    void rebalance(sim::Context& ctx, MulticastGroup& group, sim::RegionId region);
    void send_direct(sim::Context& ctx, const GroupId& group, const FdRecordPtr& rec,
                     const std::vector<const SubscriberRecord*>& matches, unsigned hops);
    void on_event(sim::Context& ctx, const msg::FdEvent& m);
    void deliver_local(sim::Context& ctx, const GroupId& group, const FdRecordPtr& rec, unsigned hops);
    void on_event_failure(sim::Context& ctx, sim::Endpoint to, const msg::FdEvent& m);
    void on_advertise_tick(sim::Context& ctx);
    std::uint64_t arm(sim::Context& ctx, sim::Time delay, std::uint64_t kind, std::uint64_t index);
    void check(const char* where) const;

    overlay::LocalOverlay& overlay_;
    FastConfig config_;
    Metrics* metrics_;

    std::map<GroupId, MulticastGroup> groups_;
    std::set<GroupId> private_;
    std::map<Key, std::map<GroupId, BoardEntry>> boards_;
    std::map<GroupId, Support> supports_;
    std::vector<Interest> interests_;
    std::set<EventId> seen_;
    std::map<std::uint64_t, Discovery> discoveries_;
    std::map<std::uint64_t, PendingJoin> joins_;
    std::uint64_t next_handle_ = 1;
    std::uint64_t sub_seq_ = 0;
    std::uint64_t event_seq_ = 0;
};

}  // namespace smartpubsub::fastdelivery
