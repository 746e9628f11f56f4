#include "smartpubsub/fastdelivery/engine.hpp"

#include <stdexcept>

namespace smartpubsub::fastdelivery {

namespace {

constexpr std::uint64_t kOwnBit = std::uint64_t{1} << 56;
constexpr std::uint64_t kAdvertise = 1;
constexpr std::uint64_t kJoinRetry = 2;
constexpr std::uint64_t kIndexMask = (std::uint64_t{1} << 48) - 1;
constexpr std::uint64_t kSeqBit = std::uint64_t{1} << 63;

}  // namespace

FastEngine::FastEngine(overlay::LocalOverlay& overlay, FastConfig config, Metrics* metrics)
    : overlay_(overlay), config_(config), metrics_(metrics) {
    config_.validate();
}

std::uint64_t FastEngine::arm(sim::Context& ctx, sim::Time delay, std::uint64_t kind, std::uint64_t index) {
    std::uint64_t tag = kOwnBit | (kind << 48) | (index & kIndexMask);
    ctx.set_timer(delay, tag);
    return tag;
}

void FastEngine::start(sim::Context& ctx) {
    const sim::Time t = config_.refresh_period;
    arm(ctx, t - ctx.now() % t, kAdvertise, 0);
}

bool FastEngine::on_timer(sim::Context& ctx, std::uint64_t tag) {
    if (!owns_tag(tag)) return false;
    std::uint64_t kind = (tag >> 48) & 0xFF;
    std::uint64_t index = tag & kIndexMask;
    if (kind == kAdvertise) {
        on_advertise_tick(ctx);
    } else if (kind == kJoinRetry) {
        auto it = joins_.find(index);
        if (it != joins_.end()) ask_board(ctx, index, it->second.attr, true);
    }
    check("timer");
    return true;
}

void FastEngine::on_advertise_tick(sim::Context& ctx) {
    for (const auto& [id, group] : groups_) advertise(ctx, group);
    for (auto it = boards_.begin(); it != boards_.end();) {
        std::erase_if(it->second, [&](const auto& kv) { return kv.second.expires <= ctx.now(); });
        it = it->second.empty() ? boards_.erase(it) : std::next(it);
    }
    arm(ctx, config_.refresh_period, kAdvertise, 0);
}

// ---------------------------------------------------------------------------
// Boards

GroupId FastEngine::create_group(sim::Context& ctx, const Predicate& pred, bool is_private) {
    GroupId id{overlay_.id(), pred};
    auto it = groups_.find(id);
    if (it == groups_.end()) it = groups_.emplace(id, MulticastGroup(id, config_.threshold)).first;
    if (is_private) {
        private_.insert(id);
    } else {
        private_.erase(id);
    }
    advertise(ctx, it->second);
    return id;
}

void FastEngine::advertise(sim::Context& ctx, const MulticastGroup& group) {
    for (const auto& name : group.id().predicate.attribute_names()) {
        auto m = std::make_shared<msg::Advertise>(group.id(), overlay_.self());
        m->key = overlay_.key_for(name);
        m->attr = name;
        m->is_private = private_.count(group.id()) > 0;
        route(ctx, m->key, m);
    }
}

void FastEngine::route(sim::Context& ctx, const Key& key, const std::shared_ptr<const ProtocolMessage>& m) {
    if (auto next = overlay_.next_hop(key)) {
        ctx.send(next->endpoint, m);
    } else {
        at_rendezvous(ctx, *m);
    }
}

void FastEngine::at_rendezvous(sim::Context& ctx, const ProtocolMessage& m) {
    switch (m.type()) {
        case MsgType::Advertise: {
            const auto& a = static_cast<const msg::Advertise&>(m);
            boards_[a.key].insert_or_assign(
                a.group, BoardEntry{a.attr, a.publisher, a.is_private, ctx.now() + 2 * config_.refresh_period});
            break;
        }
        case MsgType::BoardQuery: {
            const auto& q = static_cast<const msg::BoardQuery&>(m);
            auto reply = std::make_shared<msg::BoardReply>();
            reply->query = q.query;
            reply->join = q.join;
            reply->listings = board(q.key, ctx.now());
            if (q.origin.endpoint == ctx.self()) {
                on_reply(ctx, *reply);
            } else {
                ctx.send(q.origin.endpoint, reply);
            }
            break;
        }
        case MsgType::FdSubscribe: {
            const auto& s = static_cast<const msg::FdSubscribe&>(m);
            const BoardEntry* entry = nullptr;
            if (auto b = boards_.find(*s.relay); b != boards_.end()) {
                auto e = b->second.find(s.group);
                if (e != b->second.end() && e->second.expires > ctx.now()) entry = &e->second;
            }
            if (!entry) {
                auto reply = std::make_shared<msg::BoardReply>();
                reply->query = s.join;
                reply->join = true;
                reply->error = true;
                if (s.record.peer.endpoint == ctx.self()) {
                    on_reply(ctx, *reply);
                } else {
                    ctx.send(s.record.peer.endpoint, reply);
                }
                break;
            }
            auto direct = std::make_shared<msg::FdSubscribe>(s);
            direct->relay.reset();
            if (entry->publisher.endpoint == ctx.self()) {
                on_fd_subscribe(ctx, *direct);
            } else {
                ctx.send(entry->publisher.endpoint, direct);
            }
            break;
        }
        default:
            break;
    }
}

std::vector<Listing> FastEngine::board(const Key& key, sim::Time now) const {
    std::vector<Listing> out;
    auto b = boards_.find(key);
    if (b == boards_.end()) return out;
    for (const auto& [group, entry] : b->second) {
        if (entry.expires <= now) continue;
        out.push_back(Listing{group, entry.is_private ? std::nullopt : std::optional<PeerInfo>(entry.publisher)});
    }
    return out;
}

std::size_t FastEngine::board_entries() const {
    std::size_t n = 0;
    for (const auto& [key, entries] : boards_) n += entries.size();
    return n;
}

std::uint64_t FastEngine::discover(sim::Context& ctx, const std::string& attribute) {
    auto handle = next_handle_++;
    discoveries_[handle];
    ask_board(ctx, handle, attribute, false);
    return handle;
}

const FastEngine::Discovery* FastEngine::discovery(std::uint64_t handle) const {
    auto it = discoveries_.find(handle);
    return it == discoveries_.end() ? nullptr : &it->second;
}

void FastEngine::ask_board(sim::Context& ctx, std::uint64_t handle, const std::string& attr, bool join) {
    auto q = std::make_shared<msg::BoardQuery>();
    q->key = overlay_.key_for(attr);
    q->attr = attr;
    q->origin = overlay_.self();
    q->query = handle;
    q->join = join;
    route(ctx, q->key, q);
}

void FastEngine::on_reply(sim::Context& ctx, const msg::BoardReply& m) {
    if (!m.join) {
        auto it = discoveries_.find(m.query);
        if (it == discoveries_.end()) return;
        it->second.done = true;
        it->second.error = m.error;
        it->second.listings = m.listings;
        return;
    }
    auto it = joins_.find(m.query);
    if (it == joins_.end()) return;
    if (!m.error) {
        for (const auto& l : m.listings) {
            if (l.group == it->second.interest.group) {
                send_join(ctx, m.query, l);
                return;
            }
        }
    }
    retry_join(ctx, m.query);
}

// ---------------------------------------------------------------------------
// Membership

SubscriptionId FastEngine::join(sim::Context& ctx, const GroupId& group, const Predicate& pred, unsigned capacity) {
    if (!uses_group_attributes(group.predicate, pred)) {
        throw std::invalid_argument("subscription uses attributes outside the group predicate");
    }
    SubscriptionId id{overlay_.id(), kSeqBit | ++sub_seq_};
    Interest interest{id, group, pred, capacity};
    interests_.push_back(interest);
    auto index = next_handle_++;
    joins_.emplace(index, PendingJoin{interest, group.predicate.attribute_names().front(), 0});
    ask_board(ctx, index, joins_.at(index).attr, true);
    return id;
}

void FastEngine::send_join(sim::Context& ctx, std::uint64_t index, const Listing& listing) {
    const auto& j = joins_.at(index);
    SubscriberRecord rec{j.interest.id, overlay_.self(), ctx.region(), j.interest.capacity, j.interest.predicate};
    auto m = std::make_shared<msg::FdSubscribe>(j.interest.group, rec);
    m->join = index;
    if (listing.publisher) {
        if (listing.publisher->endpoint == ctx.self()) {
            joins_.erase(index);
            on_fd_subscribe(ctx, *m);
            return;
        }
        ctx.send(listing.publisher->endpoint, m);
    } else {
        m->relay = overlay_.key_for(j.attr);
        m->relay_attr = j.attr;
        route(ctx, *m->relay, m);
    }
    joins_.erase(index);
}

void FastEngine::retry_join(sim::Context& ctx, std::uint64_t index) {
    auto& j = joins_.at(index);
    if (++j.attempts > config_.join_retry_cap) {
        ++metrics_->subscription_failures;
        joins_.erase(index);
        return;
    }
    arm(ctx, config_.join_retry, kJoinRetry, index);
}

void FastEngine::on_fd_subscribe(sim::Context& ctx, const msg::FdSubscribe& m) {
    auto it = groups_.find(m.group);
    if (it == groups_.end()) {
        ++metrics_->fd_rejected;
        return;
    }
    switch (it->second.add(m.record)) {
        case MulticastGroup::AddResult::Rejected:
            ++metrics_->fd_rejected;
            return;
        case MulticastGroup::AddResult::Duplicate:
            return;
        case MulticastGroup::AddResult::Added:
            break;
    }
    metrics_->settle(m.record.id, ctx.now());
    rebalance(ctx, it->second, m.record.region);
}

void FastEngine::rebalance(sim::Context& ctx, MulticastGroup& group, sim::RegionId region) {
    for (auto& d : group.rebalance(region)) {
        const auto& helper = group.helpers().at(d.helper).helper;
        auto m = std::make_shared<msg::FdDelegate>(group.id());
        m->helper = d.helper;
        m->publisher = overlay_.self();
        m->delegated = std::move(d.delegated);
        if (helper.peer.endpoint == ctx.self()) {
            handle(ctx, ctx.self(), *m);
        } else {
            ctx.send(helper.peer.endpoint, m);
        }
    }
}

// ---------------------------------------------------------------------------
// Events

EventId FastEngine::publish(sim::Context& ctx, const GroupId& group, const EventPredicate& ev,
                            std::shared_ptr<const std::string> payload) {
    auto it = groups_.find(group);
    if (it == groups_.end()) throw std::invalid_argument("not the publisher of this group");
    if (!uses_group_attributes(ev.predicate(), group.predicate)) {
        throw std::invalid_argument("event lacks an attribute of the group predicate");
    }
    auto& g = it->second;
    // Helpers lost since the last publish are replaced now.
    for (const auto& [region, list] : std::map(g.regions())) {
        if (list.size() > g.threshold()) rebalance(ctx, g, region);
    }

    auto rec = std::make_shared<FdRecord>(FdRecord{EventId{overlay_.id(), kSeqBit | ++event_seq_}, ev,
                                                   std::move(payload), ctx.now()});
    std::size_t checks = 0;
    auto plan = g.route(ev, checks);
    metrics_->match_ops += checks;
    ctx.charge(config_.match_cost * static_cast<sim::Time>(checks));

    send_direct(ctx, group, rec, plan.direct, 1);
    for (const auto* h : plan.helpers) {
        auto m = std::make_shared<msg::FdEvent>(group);
        m->record = rec;
        m->role = msg::FdEvent::Role::Helper;
        m->targets = {h->helper.id};
        m->hops = 1;
        if (h->helper.peer.endpoint == ctx.self()) {
            on_event(ctx, *m);
        } else {
            ctx.send(h->helper.peer.endpoint, m);
        }
    }
    check("publish");
    return rec->id;
}

void FastEngine::send_direct(sim::Context& ctx, const GroupId& group, const FdRecordPtr& rec,
                             const std::vector<const SubscriberRecord*>& matches, unsigned hops) {
    std::map<sim::Endpoint, std::vector<SubscriptionId>> by_peer;
    for (const auto* r : matches) by_peer[r->peer.endpoint].push_back(r->id);
    for (auto& [endpoint, targets] : by_peer) {
        if (endpoint == ctx.self()) {
            deliver_local(ctx, group, rec, hops - 1);
            continue;
        }
        auto m = std::make_shared<msg::FdEvent>(group);
        m->record = rec;
        m->role = msg::FdEvent::Role::Direct;
        m->targets = std::move(targets);
        m->hops = hops;
        ctx.send(endpoint, m);
    }
}

void FastEngine::on_event(sim::Context& ctx, const msg::FdEvent& m) {
    if (m.role == msg::FdEvent::Role::Direct) {
        deliver_local(ctx, m.group, m.record, m.hops);
        return;
    }
    deliver_local(ctx, m.group, m.record, m.hops);
    auto s = supports_.find(m.group);
    if (s == supports_.end()) return;
    std::size_t checks = 0;
    auto matches = s->second.index.match(m.record->predicate, checks);
    metrics_->match_ops += checks;
    ctx.charge(config_.match_cost * static_cast<sim::Time>(checks));
    send_direct(ctx, m.group, m.record, matches, m.hops + 1);
}

void FastEngine::deliver_local(sim::Context& ctx, const GroupId& group, const FdRecordPtr& rec, unsigned hops) {
    if (seen_.count(rec->id)) return;
    for (const auto& i : interests_) {
        if (i.group == group && predicate::matches(i.predicate, rec->predicate)) {
            seen_.insert(rec->id);
            metrics_->deliver(Delivery{overlay_.id(), rec->id, rec->published_at, ctx.now(), hops,
                                       Protocol::FastDelivery});
            return;
        }
    }
}

void FastEngine::on_event_failure(sim::Context& ctx, sim::Endpoint to, const msg::FdEvent& m) {
    if (!overlay_.on_unreachable(to, ctx.simulator())) {
        if (m.attempts < config_.hop_retry_cap) {
            auto copy = std::make_shared<msg::FdEvent>(m);
            ++copy->attempts;
            ctx.send(to, copy);
        } else {
            metrics_->fd_misses += m.targets.size();
        }
        return;
    }
    auto g = groups_.find(m.group);
    if (g != groups_.end() && m.role == msg::FdEvent::Role::Helper) {
        auto back = g->second.reabsorb(m.targets.front());
        metrics_->fd_reabsorbed += back.size();
        std::vector<const SubscriberRecord*> matches;
        for (const auto& r : back) {
            ++metrics_->match_ops;
            if (predicate::matches(r.predicate, m.record->predicate)) matches.push_back(&r);
        }
        send_direct(ctx, m.group, m.record, matches, 1);
        return;
    }
    metrics_->fd_misses += m.targets.size();
    if (g != groups_.end()) {
        for (const auto& id : m.targets) g->second.remove(id);
    } else if (auto s = supports_.find(m.group); s != supports_.end()) {
        for (const auto& id : m.targets) s->second.index.erase(id);
    }
}

// ---------------------------------------------------------------------------
// Dispatch

bool FastEngine::handle(sim::Context& ctx, sim::Endpoint /*from*/, const ProtocolMessage& m) {
    switch (m.type()) {
        case MsgType::Advertise:
            route(ctx, static_cast<const msg::Advertise&>(m).key,
                  std::make_shared<msg::Advertise>(static_cast<const msg::Advertise&>(m)));
            break;
        case MsgType::BoardQuery:
            route(ctx, static_cast<const msg::BoardQuery&>(m).key,
                  std::make_shared<msg::BoardQuery>(static_cast<const msg::BoardQuery&>(m)));
            break;
        case MsgType::BoardReply:
            on_reply(ctx, static_cast<const msg::BoardReply&>(m));
            break;
        case MsgType::FdSubscribe: {
            const auto& s = static_cast<const msg::FdSubscribe&>(m);
            if (s.relay) {
                route(ctx, *s.relay, std::make_shared<msg::FdSubscribe>(s));
            } else {
                on_fd_subscribe(ctx, s);
            }
            break;
        }
        case MsgType::FdDelegate: {
            const auto& d = static_cast<const msg::FdDelegate&>(m);
            if (d.delegated.empty()) {
                supports_.erase(d.group);
                break;
            }
            Support s{d.publisher, SubscriberIndex(d.group.predicate)};
            for (const auto& r : d.delegated) s.index.insert(r);
            supports_.insert_or_assign(d.group, std::move(s));
            break;
        }
        case MsgType::FdEvent:
            on_event(ctx, static_cast<const msg::FdEvent&>(m));
            break;
        default:
            return false;
    }
    check("message");
    return true;
}

bool FastEngine::on_send_failure(sim::Context& ctx, sim::Endpoint to, const ProtocolMessage& m) {
    auto& sim = ctx.simulator();
    switch (m.type()) {
        case MsgType::FdEvent:
            on_event_failure(ctx, to, static_cast<const msg::FdEvent&>(m));
            break;
        case MsgType::Advertise:
        case MsgType::BoardQuery: {
            overlay_.on_unreachable(to, sim);
            if (m.type() == MsgType::Advertise) {
                auto copy = std::make_shared<msg::Advertise>(static_cast<const msg::Advertise&>(m));
                if (++copy->attempts <= config_.hop_retry_cap) route(ctx, copy->key, copy);
            } else {
                auto copy = std::make_shared<msg::BoardQuery>(static_cast<const msg::BoardQuery&>(m));
                if (++copy->attempts <= config_.hop_retry_cap) {
                    route(ctx, copy->key, copy);
                } else if (copy->origin.endpoint == ctx.self() && !copy->join) {
                    discoveries_[copy->query] = Discovery{true, true, {}};
                }
            }
            break;
        }
        case MsgType::FdSubscribe: {
            const auto& s = static_cast<const msg::FdSubscribe&>(m);
            bool dead = overlay_.on_unreachable(to, sim);
            auto copy = std::make_shared<msg::FdSubscribe>(s);
            if (++copy->attempts > config_.hop_retry_cap || (dead && !copy->relay)) {
                ++metrics_->subscription_failures;
                break;
            }
            if (copy->relay) {
                route(ctx, *copy->relay, copy);
            } else {
                ctx.send(to, copy);
            }
            break;
        }
        case MsgType::FdDelegate: {
            const auto& d = static_cast<const msg::FdDelegate&>(m);
            if (!overlay_.on_unreachable(to, sim)) {
                ctx.send(to, std::make_shared<msg::FdDelegate>(d));
                break;
            }
            // The recruit is gone; its records come back and the next
            // publish recruits someone else.
            if (auto g = groups_.find(d.group); g != groups_.end()) {
                metrics_->fd_reabsorbed += g->second.reabsorb(d.helper).size();
            }
            break;
        }
        case MsgType::BoardReply:
            if (!overlay_.on_unreachable(to, sim)) {
                ctx.send(to, std::make_shared<msg::BoardReply>(static_cast<const msg::BoardReply&>(m)));
            }
            break;
        default:
            return false;
    }
    check("failure");
    return true;
}

// ---------------------------------------------------------------------------
// Inspection

const MulticastGroup* FastEngine::group(const GroupId& id) const {
    auto it = groups_.find(id);
    return it == groups_.end() ? nullptr : &it->second;
}

bool FastEngine::audit() const {
    for (const auto& [id, g] : groups_) {
        if (!g.audit()) return false;
    }
    for (const auto& [id, s] : supports_) {
        if (!s.index.audit()) return false;
    }
    return true;
}

void FastEngine::check(const char* where) const {
    if (config_.audit && !audit()) {
        throw std::logic_error(std::string("fastdelivery audit failed after ") + where);
    }
}

}  // namespace smartpubsub::fastdelivery
