#include "smartpubsub/wire.hpp"

namespace smartpubsub {

std::string_view to_string(MsgType type) {
    switch (type) {
        case MsgType::Subscribe: return "Subscribe";
        case MsgType::SubscribeAck: return "SubscribeAck";
        case MsgType::Event: return "Event";
        case MsgType::EventAck: return "EventAck";
        case MsgType::BackupStore: return "BackupStore";
        case MsgType::BackupAck: return "BackupAck";
        case MsgType::ShortcutOffer: return "ShortcutOffer";
        case MsgType::ShortcutRevoke: return "ShortcutRevoke";
        case MsgType::TrackReplicate: return "TrackReplicate";
        case MsgType::Handover: return "Handover";
        case MsgType::Advertise: return "Advertise";
        case MsgType::BoardQuery: return "BoardQuery";
        case MsgType::BoardReply: return "BoardReply";
        case MsgType::FdSubscribe: return "FdSubscribe";
        case MsgType::FdDelegate: return "FdDelegate";
        case MsgType::FdEvent: return "FdEvent";
    }
    return "Unknown";
}

}  // namespace smartpubsub
