#pragma once

#include <cstdint>
#include <string_view>

#include "smartpubsub/simnet/simulator.hpp"

namespace smartpubsub {

enum class MsgType : std::uint8_t {
    // ScoutSubs
    Subscribe,
    SubscribeAck,
    Event,
    EventAck,
    BackupStore,
    BackupAck,
    ShortcutOffer,
    ShortcutRevoke,
    TrackReplicate,
    Handover,
    // FastDelivery
    Advertise,
    BoardQuery,
    BoardReply,
    FdSubscribe,
    FdDelegate,
    FdEvent,
};

std::string_view to_string(MsgType type);

/// Base of every protocol message; the type tag drives dispatch in Peer.
class ProtocolMessage : public sim::Message {
public:
    virtual MsgType type() const = 0;
    std::string_view kind() const override { return to_string(type()); }
};

}  // namespace smartpubsub
