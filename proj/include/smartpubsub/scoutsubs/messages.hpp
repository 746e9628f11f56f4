#pragma once

// Wire vocabulary of the ScoutSubs protocol. Messages are immutable once
// sent; describe() feeds the trace log.

#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "smartpubsub/metrics.hpp"
#include "smartpubsub/scoutsubs/filter_table.hpp"
#include "smartpubsub/wire.hpp"

namespace smartpubsub::scoutsubs {

struct EventRecord {
    EventId id;
    EventPredicate predicate;
    std::shared_ptr<const std::string> payload;
    PeerInfo publisher;
    sim::Time published_at = 0;
};
using EventRecordPtr = std::shared_ptr<const EventRecord>;

namespace msg {

/// Subscription travelling toward the rendezvous of `rv_attr`. `hop` is the
/// sender, whose entry the receiver creates; the shortcut fields carry the
/// sender's current redirect offer for rv.
struct Subscribe final : ProtocolMessage {
    SubscriptionId sub;
    Predicate predicate;
    Key rv;
    std::string rv_attr;
    PeerInfo origin;
    PeerInfo hop;
    std::vector<PeerInfo> hop_backups;
    std::optional<PeerInfo> shortcut;
    std::uint64_t shortcut_version = 0;
    sim::Time issued_at = 0;
    bool initial = false;
    unsigned attempts = 0;

    explicit Subscribe(Predicate p) : predicate(std::move(p)) {}
    MsgType type() const override { return MsgType::Subscribe; }
    void describe(nlohmann::json& out) const override;
};

/// Rendezvous -> subscriber, sent once the filter is stored along the path.
struct SubscribeAck final : ProtocolMessage {
    SubscriptionId sub;
    Key rv;
    sim::Time issued_at = 0;
    bool initial = false;

    MsgType type() const override { return MsgType::SubscribeAck; }
    void describe(nlohmann::json& out) const override;
};

enum class Direction : std::uint8_t { Up, Down, Redirect };

/// One candidate receiver of a downstream copy. A backup flag names the
/// node whose copied table the receiver must use.
struct Hop {
    PeerInfo peer;
    std::optional<NodeId> backup_flag;
};

struct Event final : ProtocolMessage {
    EventRecordPtr record;
    Key rv;
    std::string rv_attr;
    Direction direction = Direction::Up;
    std::optional<NodeId> backup_flag;
    /// Filter entry (at the sender) this copy satisfies; echoed in the ack.
    NodeId via_entry;
    /// Identity the sender acted as (itself, or the node it backs up).
    NodeId sender_ctx;
    /// Remaining candidates if this hop fails.
    std::vector<Hop> fallbacks;
    unsigned hops = 0;
    unsigned attempts = 0;

    MsgType type() const override { return MsgType::Event; }
    void describe(nlohmann::json& out) const override;
};

struct EventAck final : ProtocolMessage {
    EventId event;
    Key rv;
    bool to_publisher = false;
    NodeId via_entry;
    NodeId ctx;

    MsgType type() const override { return MsgType::EventAck; }
    void describe(nlohmann::json& out) const override;
};

/// Copy of the owner's table. With rv set, the copy holds only the filters
/// routed to that key and is kept by the key's closest peers.
struct BackupStore final : ProtocolMessage {
    PeerInfo owner;
    std::optional<Key> rv;
    std::shared_ptr<const FilterTable> table;
    /// Non-zero when the owner waits for a BackupAck.
    std::uint64_t op = 0;
    /// Every peer sent this round's copy; a replacement for a dead one is
    /// picked outside this list.
    std::vector<NodeId> recipients;

    MsgType type() const override { return MsgType::BackupStore; }
    void describe(nlohmann::json& out) const override;
};

struct BackupAck final : ProtocolMessage {
    std::uint64_t op = 0;

    MsgType type() const override { return MsgType::BackupAck; }
    void describe(nlohmann::json& out) const override;
};

/// Upstream hop may send events for rv straight to `target`.
struct ShortcutOffer final : ProtocolMessage {
    Key rv;
    PeerInfo from;
    PeerInfo target;
    std::uint64_t version = 0;

    MsgType type() const override { return MsgType::ShortcutOffer; }
    void describe(nlohmann::json& out) const override;
};

struct ShortcutRevoke final : ProtocolMessage {
    Key rv;
    PeerInfo from;
    std::uint64_t version = 0;

    MsgType type() const override { return MsgType::ShortcutRevoke; }
    void describe(nlohmann::json& out) const override;
};

/// Rendezvous tracker state mirrored on the key's backups. Probe asks the
/// owner for the current state.
struct TrackReplicate final : ProtocolMessage {
    enum class Stage : std::uint8_t { Track, Complete, Probe };
    Stage stage = Stage::Track;
    EventRecordPtr record;
    Key rv;
    std::string rv_attr;
    std::vector<NodeId> pending;
    PeerInfo owner;

    MsgType type() const override { return MsgType::TrackReplicate; }
    void describe(nlohmann::json& out) const override;
};

/// Routed toward rv: tells a newly joined rendezvous where the previous
/// one and its backups are.
struct Handover final : ProtocolMessage {
    Key rv;
    std::string rv_attr;
    PeerInfo old_rv;
    std::vector<PeerInfo> old_backups;

    MsgType type() const override { return MsgType::Handover; }
    void describe(nlohmann::json& out) const override;
};

}  // namespace msg
}  // namespace smartpubsub::scoutsubs
