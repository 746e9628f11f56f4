#pragma once

#include <cstdint>
#include <list>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "smartpubsub/metrics.hpp"
#include "smartpubsub/overlay/local_overlay.hpp"
#include "smartpubsub/scoutsubs/config.hpp"
#include "smartpubsub/scoutsubs/filter_table.hpp"
#include "smartpubsub/scoutsubs/messages.hpp"

namespace smartpubsub::scoutsubs {

/// Attribute of pred whose key is XOR-closest to self; ties go to the
/// lexicographically smaller name.
std::pair<Key, std::string> choose_subscription_rendezvous(const Predicate& pred, const NodeId& self,
                                                           const overlay::KeyFn& key_for);

/// Bounded set with least-recently-inserted eviction.
template <typename T>
class LruSet {
public:
    explicit LruSet(std::size_t capacity) : capacity_(capacity) {}

    /// False when already present.
    bool insert(const T& value) {
        if (index_.count(value)) return false;
        order_.push_back(value);
        index_.insert(value);
        if (order_.size() > capacity_) {
            index_.erase(order_.front());
            order_.pop_front();
        }
        return true;
    }
    bool contains(const T& value) const { return index_.count(value) > 0; }
    std::size_t size() const { return order_.size(); }

private:
    std::size_t capacity_;
    std::list<T> order_;
    std::set<T> index_;
};

/// The ScoutSubs protocol state machine of one node.
class ScoutEngine {
public:
    struct Interest {
        SubscriptionId id;
        Predicate predicate;
        Key rv;
        std::string rv_attr;
    };
    struct HeldCopy {
        std::shared_ptr<const FilterTable> table;
        sim::Time updated = 0;
    };
    /// Identifies one routing copy of an event at one acting identity.
    struct CopyKey {
        EventId event;
        Key rv;
        NodeId acting;
        friend auto operator<=>(const CopyKey&, const CopyKey&) = default;
    };
    struct Target {
        NodeId entry;
        msg::Direction direction = msg::Direction::Down;
        std::vector<msg::Hop> chain;
    };
    /// Per-event ack aggregation. At the rendezvous this is the tracker.
    struct AckMap {
        EventRecordPtr record;
        Key rv;
        std::string rv_attr;
        bool rendezvous = false;
        sim::Endpoint upstream;
        NodeId upstream_via;
        NodeId upstream_ctx;
        std::map<NodeId, Target> pending;
        std::set<NodeId> delivered;
        bool done = false;
        unsigned attempts = 0;
        sim::TimerId timer = 0;
        sim::Time created = 0;
    };

    ScoutEngine(overlay::LocalOverlay& overlay, ScoutConfig config, Metrics* metrics);

    const ScoutConfig& config() const { return config_; }

    /// Arms the refresh timers, aligned to global multiples of t and 2t.
    void start(sim::Context& ctx);

    SubscriptionId subscribe(sim::Context& ctx, const Predicate& pred);
    /// The application stops renewing; state elsewhere lapses by refresh.
    bool drop_interest(const SubscriptionId& id);
    EventId publish(sim::Context& ctx, const EventPredicate& pred, std::shared_ptr<const std::string> payload = {});

    /// Called after this node learned of a newly joined peer.
    void on_peer_joined(sim::Context& ctx, const PeerInfo& peer);

    /// False when the message is not a ScoutSubs message.
    bool handle(sim::Context& ctx, sim::Endpoint from, const ProtocolMessage& m);
    bool on_send_failure(sim::Context& ctx, sim::Endpoint to, const ProtocolMessage& m);
    bool on_timer(sim::Context& ctx, std::uint64_t tag);

    // Inspection.
    const FilterTable& main_table() const { return main_; }
    const FilterTable& secondary_table() const { return secondary_; }
    const std::vector<Interest>& interests() const { return interests_; }
    const std::map<NodeId, HeldCopy>& backup_copies() const { return copies_; }
    const std::map<std::pair<NodeId, Key>, HeldCopy>& rendezvous_copies() const { return rv_copies_; }
    const std::map<CopyKey, AckMap>& ack_maps() const { return ack_maps_; }
    std::size_t retained_events() const { return retained_.size(); }
    std::size_t tracker_replicas() const { return replicas_.size(); }
    bool redirect_active(const Key& rv) const { return redirects_.count(rv) > 0; }
    std::optional<PeerInfo> current_offer(const Key& rv) const;
    /// Filter entries stored in the main table plus held copies.
    std::size_t stored_entries() const;
    bool audit() const;

    /// Timer tags used by this engine have bit 56 clear.
    static bool owns_tag(std::uint64_t tag) { return (tag >> 56) == 0; }

private:
    struct OfferState {
        std::optional<PeerInfo> target;
        std::uint64_t version = 0;
    };
    struct PendingForward {
        std::shared_ptr<const msg::Subscribe> msg;
        std::size_t waiting = 0;
    };
    struct Retained {
        EventRecordPtr record;
        Key rv;
        std::string rv_attr;
        unsigned attempts = 0;
        sim::TimerId timer = 0;
    };
    struct Replica {
        EventRecordPtr record;
        Key rv;
        std::string rv_attr;
        PeerInfo owner;
        std::set<NodeId> pending;
        unsigned probes = 0;
        sim::Time created = 0;
    };
    struct Redirect {
        std::string rv_attr;
        PeerInfo old_rv;
        std::vector<PeerInfo> old_backups;
        sim::Time until = 0;
    };
    using EventKey = std::pair<EventId, Key>;

    // Subscriptions.
    void issue(sim::Context& ctx, const Interest& interest, bool initial);
    void on_subscribe(sim::Context& ctx, const msg::Subscribe& m);
    void finish_subscribe(sim::Context& ctx, const std::shared_ptr<const msg::Subscribe>& m);
    void send_subscribe(sim::Context& ctx, std::shared_ptr<msg::Subscribe> m);
    void on_subscribe_ack(sim::Context& ctx, const msg::SubscribeAck& m);
    void backup_done(sim::Context& ctx, std::uint64_t op);
    void replicate(sim::Context& ctx, std::uint64_t op, std::size_t& waiting);
    void store_copies(sim::Context& ctx, std::shared_ptr<const FilterTable> table, const std::optional<Key>& rv,
                      std::uint64_t op, std::size_t& waiting);

    // Shortcuts.
    std::optional<PeerInfo> effective_offer(const Key& rv) const;
    void update_offer(sim::Context& ctx, const Key& rv, bool defer_new);
    void on_shortcut(sim::Context& ctx, const NodeId& from, const Key& rv, const std::optional<PeerInfo>& target,
                     std::uint64_t version);

    // Events.
    void route_up(sim::Context& ctx, const EventRecordPtr& rec, const Key& rv, const std::string& attr,
                  unsigned hops, unsigned attempts);
    void at_rendezvous(sim::Context& ctx, const EventRecordPtr& rec, const Key& rv, const std::string& attr,
                       unsigned hops);
    void on_down(sim::Context& ctx, sim::Endpoint from, const msg::Event& m);
    void collect(const FilterTable& table, const Key& rv, const EventPredicate& ev, std::size_t& checks,
                 std::map<NodeId, Target>& out) const;
    void deliver_local(sim::Context& ctx, const EventRecordPtr& rec, const Key& rv, unsigned hops);
    void send_target(sim::Context& ctx, const EventRecordPtr& rec, const Key& rv, const std::string& attr,
                     const NodeId& acting, const Target& target, unsigned hops);
    void on_event_failure(sim::Context& ctx, sim::Endpoint to, const msg::Event& m);
    void ack_publisher(sim::Context& ctx, const EventRecordPtr& rec, const Key& rv);
    void ack_upstream(sim::Context& ctx, AckMap& map);
    void on_ack(sim::Context& ctx, const msg::EventAck& m);
    void complete_tracker(sim::Context& ctx, AckMap& map);
    void start_tracker(sim::Context& ctx, const CopyKey& key, AckMap map);
    void on_track(sim::Context& ctx, sim::Endpoint from, const msg::TrackReplicate& m);
    void take_over(sim::Context& ctx, const EventKey& key);

    // Maintenance.
    void on_resubscribe_tick(sim::Context& ctx);
    void on_swap_tick(sim::Context& ctx);
    void on_handover(sim::Context& ctx, const msg::Handover& m);
    sim::Time until_next(sim::Time now, sim::Time period) const;
    /// Resend timeout after `resends` resends: doubles twice, then stays.
    sim::Time backoff(unsigned resends) const;

    std::vector<PeerInfo> own_backups() const;
    std::vector<PeerInfo> key_backups(const Key& rv) const;
    std::uint64_t arm(sim::Context& ctx, sim::Time delay, std::uint64_t kind, std::uint64_t index,
                      sim::TimerId* id = nullptr);
    void check(const char* where) const;

    overlay::LocalOverlay& overlay_;
    ScoutConfig config_;
    Metrics* metrics_;

    FilterTable main_;
    FilterTable secondary_;
    std::vector<Interest> interests_;
    std::uint64_t sub_seq_ = 0;
    std::uint64_t event_seq_ = 0;

    std::map<NodeId, HeldCopy> copies_;
    std::map<std::pair<NodeId, Key>, HeldCopy> rv_copies_;
    std::map<std::uint64_t, PendingForward> pending_forwards_;
    std::uint64_t next_op_ = 1;
    /// Backups hold a non-empty copy of main_.
    bool copies_out_ = false;

    std::map<Key, OfferState> offers_;
    LruSet<CopyKey> seen_;
    std::map<CopyKey, AckMap> ack_maps_;
    std::map<EventKey, Retained> retained_;
    std::map<EventKey, Replica> replicas_;
    std::map<Key, Redirect> redirects_;
    /// Keys this node has served as rendezvous for (attribute name kept).
    std::map<Key, std::string> served_;

    std::uint64_t next_index_ = 1;
    std::map<std::uint64_t, CopyKey> tracker_timers_;
    std::map<std::uint64_t, EventKey> retain_timers_;
    std::map<std::uint64_t, EventKey> replica_timers_;
};

}  // namespace smartpubsub::scoutsubs
