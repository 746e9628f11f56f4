#pragma once

#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "smartpubsub/fastdelivery/group.hpp"
#include "smartpubsub/wire.hpp"

namespace smartpubsub::fastdelivery {

using overlay::Key;

struct FdRecord {
    EventId id;
    EventPredicate predicate;
    std::shared_ptr<const std::string> payload;
    sim::Time published_at = 0;
};
using FdRecordPtr = std::shared_ptr<const FdRecord>;

/// One board line as seen by a subscriber. No endpoint for private groups.
struct Listing {
    GroupId group;
    std::optional<PeerInfo> publisher;
};

namespace msg {

/// Publisher -> board at the rendezvous of `attr`, routed hop by hop.
struct Advertise final : ProtocolMessage {
    Key key;
    std::string attr;
    GroupId group;
    PeerInfo publisher;
    bool is_private = false;
    unsigned attempts = 0;

    Advertise(GroupId g, PeerInfo p) : group(std::move(g)), publisher(std::move(p)) {}
    MsgType type() const override { return MsgType::Advertise; }
    void describe(nlohmann::json& out) const override;
};

struct BoardQuery final : ProtocolMessage {
    Key key;
    std::string attr;
    PeerInfo origin;
    std::uint64_t query = 0;
    /// Issued by a pending join rather than by discover().
    bool join = false;
    unsigned attempts = 0;

    MsgType type() const override { return MsgType::BoardQuery; }
    void describe(nlohmann::json& out) const override;
};

struct BoardReply final : ProtocolMessage {
    std::uint64_t query = 0;
    bool join = false;
    /// The relayed subscription found no board entry for its group.
    bool error = false;
    std::vector<Listing> listings;

    MsgType type() const override { return MsgType::BoardReply; }
    void describe(nlohmann::json& out) const override;
};

/// Subscriber -> publisher, either direct or relayed through the board of
/// `relay_attr` when the publisher's endpoint is private.
struct FdSubscribe final : ProtocolMessage {
    GroupId group;
    SubscriberRecord record;
    std::optional<Key> relay;
    std::string relay_attr;
    std::uint64_t join = 0;
    unsigned attempts = 0;

    FdSubscribe(GroupId g, SubscriberRecord r) : group(std::move(g)), record(std::move(r)) {}
    MsgType type() const override { return MsgType::FdSubscribe; }
    void describe(nlohmann::json& out) const override;
};

/// Publisher -> helper: the full list of records the helper now manages.
struct FdDelegate final : ProtocolMessage {
    GroupId group;
    SubscriptionId helper;
    PeerInfo publisher;
    std::vector<SubscriberRecord> delegated;

    explicit FdDelegate(GroupId g) : group(std::move(g)) {}
    MsgType type() const override { return MsgType::FdDelegate; }
    void describe(nlohmann::json& out) const override;
};

struct FdEvent final : ProtocolMessage {
    enum class Role : std::uint8_t { Direct, Helper };

    GroupId group;
    FdRecordPtr record;
    Role role = Role::Direct;
    /// Subscriptions at the receiver this copy is for (Direct) or the
    /// helper's own subscription (Helper).
    std::vector<SubscriptionId> targets;
    unsigned hops = 1;
    unsigned attempts = 0;

    explicit FdEvent(GroupId g) : group(std::move(g)) {}
    MsgType type() const override { return MsgType::FdEvent; }
    void describe(nlohmann::json& out) const override;
};

}  // namespace msg
}  // namespace smartpubsub::fastdelivery
