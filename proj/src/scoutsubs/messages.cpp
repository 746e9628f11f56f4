#include "smartpubsub/scoutsubs/messages.hpp"

namespace smartpubsub::scoutsubs::msg {

namespace {

std::string short_id(const NodeId& id) { return id.hex(64); }

nlohmann::json event_id(const EventId& id) { return {short_id(id.publisher), id.seq}; }

const char* direction_name(Direction d) {
    switch (d) {
        case Direction::Up: return "up";
        case Direction::Down: return "down";
        case Direction::Redirect: return "redirect";
    }
    return "?";
}

}  // namespace

void Subscribe::describe(nlohmann::json& out) const {
    out["sub"] = {short_id(sub.subscriber), sub.seq};
    out["pred"] = predicate.to_string();
    out["rv_attr"] = rv_attr;
    if (shortcut) out["shortcut"] = short_id(shortcut->id);
    out["initial"] = initial;
}

void SubscribeAck::describe(nlohmann::json& out) const {
    out["sub"] = {short_id(sub.subscriber), sub.seq};
    out["initial"] = initial;
}

void Event::describe(nlohmann::json& out) const {
    out["event"] = event_id(record->id);
    out["rv_attr"] = rv_attr;
    out["dir"] = direction_name(direction);
    if (backup_flag) out["backup_flag"] = short_id(*backup_flag);
    out["hops"] = hops;
}

void EventAck::describe(nlohmann::json& out) const {
    out["event"] = event_id(event);
    out["to_publisher"] = to_publisher;
    out["via"] = short_id(via_entry);
}

void BackupStore::describe(nlohmann::json& out) const {
    out["owner"] = short_id(owner.id);
    out["entries"] = table ? table->entry_count() : 0;
    if (rv) out["rv"] = short_id(*rv);
}

void BackupAck::describe(nlohmann::json& out) const { out["op"] = op; }

void ShortcutOffer::describe(nlohmann::json& out) const {
    out["target"] = short_id(target.id);
    out["version"] = version;
}

void ShortcutRevoke::describe(nlohmann::json& out) const { out["version"] = version; }

void TrackReplicate::describe(nlohmann::json& out) const {
    static const char* names[] = {"track", "complete", "probe"};
    out["stage"] = names[static_cast<int>(stage)];
    if (record) out["event"] = event_id(record->id);
    out["pending"] = pending.size();
}

void Handover::describe(nlohmann::json& out) const {
    out["rv_attr"] = rv_attr;
    out["old_rv"] = short_id(old_rv.id);
}

}  // namespace smartpubsub::scoutsubs::msg
