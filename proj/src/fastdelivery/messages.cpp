#include "smartpubsub/fastdelivery/messages.hpp"

namespace smartpubsub::fastdelivery::msg {

namespace {

nlohmann::json sub_json(const SubscriptionId& s) { return {s.subscriber.hex(64), s.seq}; }

}  // namespace

void Advertise::describe(nlohmann::json& out) const {
    out["group"] = group.to_string();
    out["attr"] = attr;
    out["private"] = is_private;
}

void BoardQuery::describe(nlohmann::json& out) const {
    out["attr"] = attr;
    out["query"] = query;
    out["join"] = join;
}

void BoardReply::describe(nlohmann::json& out) const {
    out["query"] = query;
    out["error"] = error;
    out["listings"] = listings.size();
}

void FdSubscribe::describe(nlohmann::json& out) const {
    out["group"] = group.to_string();
    out["sub"] = sub_json(record.id);
    out["relayed"] = relay.has_value();
}

void FdDelegate::describe(nlohmann::json& out) const {
    out["group"] = group.to_string();
    out["helper"] = sub_json(helper);
    out["delegated"] = delegated.size();
}

void FdEvent::describe(nlohmann::json& out) const {
    out["group"] = group.to_string();
    out["event"] = {record->id.publisher.hex(64), record->id.seq};
    out["role"] = role == Role::Direct ? "direct" : "helper";
    out["hops"] = hops;
}

}  // namespace smartpubsub::fastdelivery::msg
