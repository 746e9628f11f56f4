#include "smartpubsub/scoutsubs/engine.hpp"

#include <algorithm>
#include <stdexcept>

namespace smartpubsub::scoutsubs {

namespace {

constexpr std::uint64_t kResubscribe = 1;
constexpr std::uint64_t kSwap = 2;
constexpr std::uint64_t kRetain = 3;
constexpr std::uint64_t kTracker = 4;
constexpr std::uint64_t kReplica = 5;
constexpr std::uint64_t kIndexMask = (std::uint64_t{1} << 48) - 1;

std::optional<NodeId> id_of(const std::optional<PeerInfo>& p) {
    return p ? std::optional<NodeId>(p->id) : std::nullopt;
}

bool has_attribute(const Predicate& p, const std::string& name) {
    return p.topic(name) != nullptr || p.range(name) != nullptr;
}

}  // namespace

std::pair<Key, std::string> choose_subscription_rendezvous(const Predicate& pred, const NodeId& self,
                                                           const overlay::KeyFn& key_for) {
    std::optional<std::pair<Key, std::string>> best;
    overlay::Distance best_distance;
    for (const auto& name : pred.attribute_names()) {
        Key key = key_for(name);
        auto d = overlay::xor_distance(key, self);
        if (!best || d < best_distance || (d == best_distance && name < best->second)) {
            best = std::make_pair(key, name);
            best_distance = d;
        }
    }
    return *best;
}

ScoutEngine::ScoutEngine(overlay::LocalOverlay& overlay, ScoutConfig config, Metrics* metrics)
    : overlay_(overlay), config_(config), metrics_(metrics), seen_(config.dedupe_capacity) {
    config_.validate();
}

// ---------------------------------------------------------------------------
// Timers

std::uint64_t ScoutEngine::arm(sim::Context& ctx, sim::Time delay, std::uint64_t kind, std::uint64_t index,
                               sim::TimerId* id) {
    std::uint64_t tag = (kind << 48) | (index & kIndexMask);
    auto timer = ctx.set_timer(delay, tag);
    if (id) *id = timer;
    return tag;
}

sim::Time ScoutEngine::backoff(unsigned resends) const {
    return config_.ack_timeout << std::min(resends, 2u);
}

sim::Time ScoutEngine::until_next(sim::Time now, sim::Time period) const {
    return period - (now % period);
}

void ScoutEngine::start(sim::Context& ctx) {
    const sim::Time t = config_.refresh_period;
    // Resubscriptions run at a per-node offset inside the first half of each
    // period so every swap window sees two of them and the network is not
    // flooded at one instant.
    sim::Time offset = static_cast<sim::Time>(overlay_.id().low64() % 1000) * (t / 2) / 1000;
    sim::Time first = until_next(ctx.now() - offset, t);
    arm(ctx, first, kResubscribe, 0);
    arm(ctx, until_next(ctx.now(), 2 * t), kSwap, 0);
}

bool ScoutEngine::on_timer(sim::Context& ctx, std::uint64_t tag) {
    if (!owns_tag(tag)) return false;
    std::uint64_t kind = (tag >> 48) & 0xFF;
    std::uint64_t index = tag & kIndexMask;
    switch (kind) {
        case kResubscribe:
            on_resubscribe_tick(ctx);
            break;
        case kSwap:
            on_swap_tick(ctx);
            break;
        case kRetain: {
            auto it = retain_timers_.find(index);
            if (it == retain_timers_.end()) break;
            auto key = it->second;
            retain_timers_.erase(it);
            auto r = retained_.find(key);
            if (r == retained_.end()) break;
            if (++r->second.attempts > config_.publish_resend_cap) {
                ++metrics_->publish_failed;
                retained_.erase(r);
                break;
            }
            auto idx = next_index_++;
            arm(ctx, backoff(r->second.attempts - 1), kRetain, idx, &r->second.timer);
            retain_timers_[idx] = key;
            route_up(ctx, r->second.record, r->second.rv, r->second.rv_attr, 0, 0);
            break;
        }
        case kTracker: {
            auto it = tracker_timers_.find(index);
            if (it == tracker_timers_.end()) break;
            auto key = it->second;
            tracker_timers_.erase(it);
            auto m = ack_maps_.find(key);
            if (m == ack_maps_.end() || m->second.done) break;
            auto& map = m->second;
            if (++map.attempts > config_.tracker_resend_cap) {
                ++metrics_->trackers_abandoned;
                map.done = true;
                break;
            }
            for (const auto& [entry, target] : map.pending) {
                send_target(ctx, map.record, map.rv, map.rv_attr, overlay_.id(), target, 0);
            }
            auto idx = next_index_++;
            arm(ctx, backoff(map.attempts), kTracker, idx, &map.timer);
            tracker_timers_[idx] = key;
            break;
        }
        case kReplica: {
            auto it = replica_timers_.find(index);
            if (it == replica_timers_.end()) break;
            auto key = it->second;
            replica_timers_.erase(it);
            auto r = replicas_.find(key);
            if (r == replicas_.end()) break;
            if (++r->second.probes > config_.tracker_resend_cap) {
                replicas_.erase(r);
                break;
            }
            auto probe = std::make_shared<msg::TrackReplicate>();
            probe->stage = msg::TrackReplicate::Stage::Probe;
            probe->record = r->second.record;
            probe->rv = r->second.rv;
            probe->rv_attr = r->second.rv_attr;
            probe->owner = r->second.owner;
            ctx.send(r->second.owner.endpoint, probe);
            auto idx = next_index_++;
            arm(ctx, 3 * config_.ack_timeout, kReplica, idx);
            replica_timers_[idx] = key;
            break;
        }
        default:
            return false;
    }
    check("timer");
    return true;
}

// ---------------------------------------------------------------------------
// Subscriptions

std::vector<PeerInfo> ScoutEngine::own_backups() const { return overlay_.closest(overlay_.id(), config_.f); }

std::vector<PeerInfo> ScoutEngine::key_backups(const Key& rv) const { return overlay_.closest(rv, config_.f); }

SubscriptionId ScoutEngine::subscribe(sim::Context& ctx, const Predicate& pred) {
    auto [rv, attr] = choose_subscription_rendezvous(
        pred, overlay_.id(), [this](std::string_view name) { return overlay_.key_for(name); });
    Interest interest{SubscriptionId{overlay_.id(), ++sub_seq_}, pred, rv, attr};
    interests_.push_back(interest);
    // A local interest ends any shortcut this node offered for rv.
    update_offer(ctx, rv, false);
    issue(ctx, interest, true);
    return interest.id;
}

bool ScoutEngine::drop_interest(const SubscriptionId& id) {
    auto it = std::find_if(interests_.begin(), interests_.end(), [&](const Interest& i) { return i.id == id; });
    if (it == interests_.end()) return false;
    interests_.erase(it);
    return true;
}

void ScoutEngine::issue(sim::Context& ctx, const Interest& interest, bool initial) {
    auto m = std::make_shared<msg::Subscribe>(interest.predicate);
    m->sub = interest.id;
    m->rv = interest.rv;
    m->rv_attr = interest.rv_attr;
    m->origin = overlay_.self();
    m->issued_at = ctx.now();
    m->initial = initial;
    send_subscribe(ctx, std::move(m));
}

void ScoutEngine::send_subscribe(sim::Context& ctx, std::shared_ptr<msg::Subscribe> m) {
    m->hop = overlay_.self();
    m->hop_backups = own_backups();
    if (config_.redirect) {
        const auto& st = offers_[m->rv];
        m->shortcut = st.target;
        m->shortcut_version = st.version;
    }
    auto next = overlay_.next_hop(m->rv);
    if (next) {
        ctx.send(next->endpoint, std::move(m));
        return;
    }
    // This node is the rendezvous.
    served_[m->rv] = m->rv_attr;
    if (m->origin.id == overlay_.id()) {
        metrics_->settle(m->sub, ctx.now());
        if (m->initial) metrics_->subscription_latency_ms.push_back(sim::to_ms(ctx.now() - m->issued_at));
        return;
    }
    auto ack = std::make_shared<msg::SubscribeAck>();
    ack->sub = m->sub;
    ack->rv = m->rv;
    ack->issued_at = m->issued_at;
    ack->initial = m->initial;
    ctx.send(m->origin.endpoint, ack);
}

void ScoutEngine::on_subscribe(sim::Context& ctx, const msg::Subscribe& m) {
    try {
        if (overlay_.key_for(m.rv_attr) != m.rv || !has_attribute(m.predicate, m.rv_attr)) {
            ++metrics_->malformed;
            return;
        }
    } catch (const overlay::InvalidAttribute&) {
        ++metrics_->malformed;
        return;
    }

    main_.insert(m.hop, m.hop_backups, m.rv, m.predicate);
    secondary_.insert(m.hop, m.hop_backups, m.rv, m.predicate);
    if (config_.redirect && m.shortcut_version > 0) {
        auto target = m.shortcut && m.shortcut->id == overlay_.id() ? std::nullopt : m.shortcut;
        main_.set_shortcut(m.hop.id, m.rv, target, m.shortcut_version);
        secondary_.set_shortcut(m.hop.id, m.rv, target, m.shortcut_version);
    }
    update_offer(ctx, m.rv, true);

    auto op = next_op_++;
    std::size_t waiting = 0;
    auto forward = std::make_shared<const msg::Subscribe>(m);
    if (!overlay_.next_hop(m.rv)) served_[m.rv] = m.rv_attr;
    replicate(ctx, op, waiting);
    if (!overlay_.next_hop(m.rv)) {
        store_copies(ctx, std::make_shared<const FilterTable>(main_.restricted(m.rv)), m.rv, op, waiting);
    }
    if (waiting == 0) {
        finish_subscribe(ctx, forward);
    } else {
        pending_forwards_[op] = PendingForward{forward, waiting};
    }
}

void ScoutEngine::replicate(sim::Context& ctx, std::uint64_t op, std::size_t& waiting) {
    store_copies(ctx, std::make_shared<const FilterTable>(main_), std::nullopt, op, waiting);
    copies_out_ = !main_.empty();
}

void ScoutEngine::store_copies(sim::Context& ctx, std::shared_ptr<const FilterTable> table,
                               const std::optional<Key>& rv, std::uint64_t op, std::size_t& waiting) {
    auto targets = rv ? key_backups(*rv) : own_backups();
    std::vector<NodeId> ids;
    for (const auto& b : targets) ids.push_back(b.id);
    for (const auto& b : targets) {
        auto store = std::make_shared<msg::BackupStore>();
        store->owner = overlay_.self();
        store->rv = rv;
        store->table = table;
        store->op = op;
        store->recipients = ids;
        ctx.send(b.endpoint, store);
        ++waiting;
    }
}

void ScoutEngine::backup_done(sim::Context& ctx, std::uint64_t op) {
    auto it = pending_forwards_.find(op);
    if (it == pending_forwards_.end()) return;
    if (--it->second.waiting > 0) return;
    auto forward = it->second.msg;
    pending_forwards_.erase(it);
    finish_subscribe(ctx, forward);
}

void ScoutEngine::finish_subscribe(sim::Context& ctx, const std::shared_ptr<const msg::Subscribe>& m) {
    auto copy = std::make_shared<msg::Subscribe>(*m);
    copy->attempts = 0;
    send_subscribe(ctx, std::move(copy));
}

void ScoutEngine::on_subscribe_ack(sim::Context& ctx, const msg::SubscribeAck& m) {
    metrics_->settle(m.sub, ctx.now());
    if (m.initial) metrics_->subscription_latency_ms.push_back(sim::to_ms(ctx.now() - m.issued_at));
}

// ---------------------------------------------------------------------------
// Shortcuts

std::optional<PeerInfo> ScoutEngine::effective_offer(const Key& rv) const {
    if (!config_.redirect) return std::nullopt;
    for (const auto& i : interests_) {
        if (i.rv == rv) return std::nullopt;
    }
    const auto* entry = main_.sole_entry(rv);
    if (!entry) return std::nullopt;
    const auto& route = entry->routes.at(rv);
    return route.shortcut ? route.shortcut : std::optional<PeerInfo>(entry->peer);
}

std::optional<PeerInfo> ScoutEngine::current_offer(const Key& rv) const {
    auto it = offers_.find(rv);
    return it == offers_.end() ? std::nullopt : it->second.target;
}

void ScoutEngine::update_offer(sim::Context& ctx, const Key& rv, bool defer_new) {
    if (!config_.redirect) return;
    auto eff = effective_offer(rv);
    auto& st = offers_[rv];
    if (id_of(eff) == id_of(st.target)) return;
    bool was_none = !st.target;
    st.target = eff;
    ++st.version;
    // A new offer rides on the subscription about to be forwarded; changes
    // and revocations go out at once.
    if (defer_new && was_none) return;
    auto next = overlay_.next_hop(rv);
    if (!next) return;
    if (eff) {
        auto offer = std::make_shared<msg::ShortcutOffer>();
        offer->rv = rv;
        offer->from = overlay_.self();
        offer->target = *eff;
        offer->version = st.version;
        ctx.send(next->endpoint, offer);
    } else {
        auto revoke = std::make_shared<msg::ShortcutRevoke>();
        revoke->rv = rv;
        revoke->from = overlay_.self();
        revoke->version = st.version;
        ctx.send(next->endpoint, revoke);
    }
}

void ScoutEngine::on_shortcut(sim::Context& ctx, const NodeId& from, const Key& rv,
                              const std::optional<PeerInfo>& target, std::uint64_t version) {
    if (!config_.redirect) return;
    auto t = target && target->id == overlay_.id() ? std::nullopt : target;
    bool a = main_.set_shortcut(from, rv, t, version);
    bool b = secondary_.set_shortcut(from, rv, t, version);
    if (a || b) update_offer(ctx, rv, false);
}

// ---------------------------------------------------------------------------
// Events

EventId ScoutEngine::publish(sim::Context& ctx, const EventPredicate& pred, std::shared_ptr<const std::string> payload) {
    auto rec = std::make_shared<const EventRecord>(
        EventRecord{EventId{overlay_.id(), ++event_seq_}, pred, std::move(payload), overlay_.self(), ctx.now()});
    std::set<Key> keys;
    for (const auto& name : pred.predicate().attribute_names()) {
        Key rv = overlay_.key_for(name);
        if (!keys.insert(rv).second) continue;
        if (config_.reliable) {
            Retained r{rec, rv, name, 1, 0};
            auto idx = next_index_++;
            arm(ctx, config_.ack_timeout, kRetain, idx, &r.timer);
            retain_timers_[idx] = EventKey{rec->id, rv};
            retained_[EventKey{rec->id, rv}] = r;
        }
        route_up(ctx, rec, rv, name, 0, 0);
    }
    return rec->id;
}

void ScoutEngine::route_up(sim::Context& ctx, const EventRecordPtr& rec, const Key& rv, const std::string& attr,
                           unsigned hops, unsigned attempts) {
    auto next = overlay_.next_hop(rv);
    if (!next) {
        at_rendezvous(ctx, rec, rv, attr, hops);
        return;
    }
    auto m = std::make_shared<msg::Event>();
    m->record = rec;
    m->rv = rv;
    m->rv_attr = attr;
    m->direction = msg::Direction::Up;
    m->hops = hops + 1;
    m->attempts = attempts;
    ctx.send(next->endpoint, m);
}

void ScoutEngine::collect(const FilterTable& table, const Key& rv, const EventPredicate& ev, std::size_t& checks,
                          std::map<NodeId, Target>& out) const {
    for (const auto& match : table.matching(rv, ev, checks)) {
        const auto& entry = *match.entry;
        if (out.count(entry.peer.id)) continue;
        Target t;
        t.entry = entry.peer.id;
        t.direction = msg::Direction::Down;
        if (config_.redirect && match.route->shortcut) t.chain.push_back(msg::Hop{*match.route->shortcut, {}});
        t.chain.push_back(msg::Hop{entry.peer, {}});
        for (const auto& b : entry.backups) {
            if (b.id != entry.peer.id) t.chain.push_back(msg::Hop{b, entry.peer.id});
        }
        out.emplace(entry.peer.id, std::move(t));
    }
}

void ScoutEngine::deliver_local(sim::Context& ctx, const EventRecordPtr& rec, const Key& rv, unsigned hops) {
    std::size_t checks = 0;
    bool hit = false;
    for (const auto& i : interests_) {
        if (i.rv != rv) continue;
        ++checks;
        if (predicate::matches(i.predicate, rec->predicate)) {
            hit = true;
            break;
        }
    }
    metrics_->match_ops += checks;
    ctx.charge(config_.match_cost * static_cast<sim::Time>(checks));
    if (!hit) return;
    metrics_->deliver(Delivery{overlay_.id(), rec->id, rec->published_at, ctx.now(), hops, Protocol::ScoutSubs});
}

void ScoutEngine::at_rendezvous(sim::Context& ctx, const EventRecordPtr& rec, const Key& rv, const std::string& attr,
                                unsigned hops) {
    CopyKey key{rec->id, rv, overlay_.id()};
    if (config_.reliable) {
        if (ack_maps_.count(key)) {
            ack_publisher(ctx, rec, rv);
            return;
        }
    } else if (!seen_.insert(key)) {
        return;
    }

    std::map<NodeId, Target> targets;
    std::size_t checks = 0;
    collect(main_, rv, rec->predicate, checks, targets);
    // Filters of a previous rendezvous for this key, held as its backup.
    for (const auto& [owner_key, copy] : rv_copies_) {
        if (owner_key.second != rv || owner_key.first == overlay_.id()) continue;
        std::map<NodeId, Target> extra;
        collect(*copy.table, rv, rec->predicate, checks, extra);
        for (auto& [id, t] : extra) {
            if (id != overlay_.id()) targets.emplace(id, std::move(t));
        }
    }
    auto redirect = redirects_.find(rv);
    if (redirect != redirects_.end()) {
        if (redirect->second.until <= ctx.now()) {
            redirects_.erase(redirect);
        } else {
            const auto& r = redirect->second;
            Target t;
            t.entry = r.old_rv.id;
            t.direction = msg::Direction::Redirect;
            t.chain.push_back(msg::Hop{r.old_rv, {}});
            for (const auto& b : r.old_backups) t.chain.push_back(msg::Hop{b, r.old_rv.id});
            targets.emplace(t.entry, std::move(t));
        }
    }
    metrics_->match_ops += checks;
    ctx.charge(config_.match_cost * static_cast<sim::Time>(checks));
    deliver_local(ctx, rec, rv, hops);

    if (config_.reliable) {
        AckMap map;
        map.record = rec;
        map.rv = rv;
        map.rv_attr = attr;
        map.rendezvous = true;
        map.pending = targets;
        map.created = ctx.now();
        std::vector<NodeId> pending;
        for (const auto& [id, t] : targets) pending.push_back(id);
        for (const auto& b : key_backups(rv)) {
            auto track = std::make_shared<msg::TrackReplicate>();
            track->stage = msg::TrackReplicate::Stage::Track;
            track->record = rec;
            track->rv = rv;
            track->rv_attr = attr;
            track->pending = pending;
            track->owner = overlay_.self();
            ctx.send(b.endpoint, track);
        }
        ack_publisher(ctx, rec, rv);
        start_tracker(ctx, key, std::move(map));
    }
    for (const auto& [id, t] : targets) send_target(ctx, rec, rv, attr, overlay_.id(), t, hops);
}

void ScoutEngine::start_tracker(sim::Context& ctx, const CopyKey& key, AckMap map) {
    ++metrics_->trackers_created;
    auto& stored = ack_maps_[key] = std::move(map);
    if (stored.pending.empty()) {
        stored.done = true;
        ++metrics_->trackers_completed;
        return;
    }
    auto idx = next_index_++;
    arm(ctx, config_.ack_timeout, kTracker, idx, &stored.timer);
    tracker_timers_[idx] = key;
}

void ScoutEngine::send_target(sim::Context& ctx, const EventRecordPtr& rec, const Key& rv, const std::string& attr,
                              const NodeId& acting, const Target& target, unsigned hops) {
    if (target.chain.empty()) return;
    auto m = std::make_shared<msg::Event>();
    m->record = rec;
    m->rv = rv;
    m->rv_attr = attr;
    m->direction = target.direction;
    m->backup_flag = target.chain.front().backup_flag;
    m->via_entry = target.entry;
    m->sender_ctx = acting;
    m->fallbacks.assign(target.chain.begin() + 1, target.chain.end());
    m->hops = hops + 1;
    ctx.send(target.chain.front().peer.endpoint, m);
}

void ScoutEngine::on_down(sim::Context& ctx, sim::Endpoint from, const msg::Event& m) {
    const auto& rec = m.record;
    NodeId acting = m.backup_flag.value_or(overlay_.id());
    CopyKey key{rec->id, m.rv, acting};
    if (config_.reliable) {
        auto it = ack_maps_.find(key);
        if (it != ack_maps_.end()) {
            auto& map = it->second;
            map.upstream = from;
            map.upstream_via = m.via_entry;
            map.upstream_ctx = m.sender_ctx;
            if (map.pending.empty()) {
                ack_upstream(ctx, map);
            } else {
                for (const auto& [id, t] : map.pending) send_target(ctx, rec, m.rv, m.rv_attr, acting, t, m.hops);
            }
            return;
        }
    } else if (!seen_.insert(key)) {
        return;
    }

    std::map<NodeId, Target> targets;
    std::size_t checks = 0;
    if (m.backup_flag) {
        bool found = false;
        if (auto c = copies_.find(acting); c != copies_.end()) {
            collect(*c->second.table, m.rv, rec->predicate, checks, targets);
            found = true;
        }
        if (auto c = rv_copies_.find({acting, m.rv}); c != rv_copies_.end()) {
            collect(*c->second.table, m.rv, rec->predicate, checks, targets);
            found = true;
        }
        if (!found) {
            // No copy here: hand the copy on to the next backup.
            if (!m.fallbacks.empty()) {
                Target pass;
                pass.entry = acting;
                pass.direction = m.direction;
                pass.chain = m.fallbacks;
                targets.emplace(acting, std::move(pass));
            } else {
                ++metrics_->delivery_gaps;
            }
        }
    } else {
        collect(main_, m.rv, rec->predicate, checks, targets);
    }
    metrics_->match_ops += checks;
    ctx.charge(config_.match_cost * static_cast<sim::Time>(checks));
    if (!m.backup_flag) deliver_local(ctx, rec, m.rv, m.hops);

    if (config_.reliable) {
        AckMap map;
        map.record = rec;
        map.rv = m.rv;
        map.rv_attr = m.rv_attr;
        map.upstream = from;
        map.upstream_via = m.via_entry;
        map.upstream_ctx = m.sender_ctx;
        map.pending = targets;
        map.created = ctx.now();
        auto& stored = ack_maps_[key] = std::move(map);
        if (stored.pending.empty()) ack_upstream(ctx, stored);
    }
    for (const auto& [id, t] : targets) send_target(ctx, rec, m.rv, m.rv_attr, acting, t, m.hops);
}

void ScoutEngine::on_event_failure(sim::Context& ctx, sim::Endpoint to, const msg::Event& m) {
    bool dead = overlay_.on_unreachable(to, ctx.simulator());
    if (m.direction == msg::Direction::Up) {
        // The reliable publisher resends dropped copies itself.
        if (!dead && config_.reliable) return;
        if (m.attempts + 1 > config_.hop_retry_cap) {
            ++metrics_->route_failures;
            return;
        }
        route_up(ctx, m.record, m.rv, m.rv_attr, m.hops - 1, m.attempts + 1);
        return;
    }
    auto copy = std::make_shared<msg::Event>(m);
    if (!dead) {
        // Transient loss. Reliable runs recover through the ack chain.
        if (config_.reliable) return;
        if (m.attempts < config_.hop_retry_cap) {
            ++copy->attempts;
            ctx.send(to, copy);
            return;
        }
    }
    if (m.fallbacks.empty()) {
        ++metrics_->delivery_gaps;
        if (m.direction == msg::Direction::Redirect) redirects_.erase(m.rv);
        return;
    }
    auto next = m.fallbacks.front();
    copy->backup_flag = next.backup_flag;
    copy->fallbacks.erase(copy->fallbacks.begin());
    copy->attempts = 0;
    ctx.send(next.peer.endpoint, copy);
}

void ScoutEngine::ack_publisher(sim::Context& ctx, const EventRecordPtr& rec, const Key& rv) {
    if (!config_.reliable) return;
    if (rec->publisher.id == overlay_.id()) {
        auto it = retained_.find(EventKey{rec->id, rv});
        if (it != retained_.end()) {
            ctx.cancel_timer(it->second.timer);
            retained_.erase(it);
        }
        return;
    }
    auto ack = std::make_shared<msg::EventAck>();
    ack->event = rec->id;
    ack->rv = rv;
    ack->to_publisher = true;
    ctx.send(rec->publisher.endpoint, ack);
}

void ScoutEngine::ack_upstream(sim::Context& ctx, AckMap& map) {
    auto ack = std::make_shared<msg::EventAck>();
    ack->event = map.record->id;
    ack->rv = map.rv;
    ack->via_entry = map.upstream_via;
    ack->ctx = map.upstream_ctx;
    ctx.send(map.upstream, ack);
    map.done = true;
}

void ScoutEngine::on_ack(sim::Context& ctx, const msg::EventAck& m) {
    if (m.to_publisher) {
        auto it = retained_.find(EventKey{m.event, m.rv});
        if (it != retained_.end()) {
            ctx.cancel_timer(it->second.timer);
            retained_.erase(it);
        }
        return;
    }
    auto it = ack_maps_.find(CopyKey{m.event, m.rv, m.ctx});
    if (it == ack_maps_.end()) {
        ++metrics_->unknown_acks;
        return;
    }
    auto& map = it->second;
    if (map.pending.erase(m.via_entry) > 0) map.delivered.insert(m.via_entry);
    if (!map.pending.empty() || map.done) return;
    if (map.rendezvous) {
        complete_tracker(ctx, map);
    } else {
        ack_upstream(ctx, map);
    }
}

void ScoutEngine::complete_tracker(sim::Context& ctx, AckMap& map) {
    map.done = true;
    if (map.timer) ctx.cancel_timer(map.timer);
    ++metrics_->trackers_completed;
    for (const auto& b : key_backups(map.rv)) {
        auto done = std::make_shared<msg::TrackReplicate>();
        done->stage = msg::TrackReplicate::Stage::Complete;
        done->record = map.record;
        done->rv = map.rv;
        done->rv_attr = map.rv_attr;
        done->owner = overlay_.self();
        ctx.send(b.endpoint, done);
    }
}

void ScoutEngine::on_track(sim::Context& ctx, sim::Endpoint from, const msg::TrackReplicate& m) {
    EventKey key{m.record->id, m.rv};
    switch (m.stage) {
        case msg::TrackReplicate::Stage::Track: {
            if (m.pending.empty()) {
                replicas_.erase(key);
                return;
            }
            auto [it, created] = replicas_.try_emplace(key);
            auto& r = it->second;
            r.record = m.record;
            r.rv = m.rv;
            r.rv_attr = m.rv_attr;
            r.owner = m.owner;
            r.pending = std::set<NodeId>(m.pending.begin(), m.pending.end());
            if (created) {
                r.created = ctx.now();
                auto idx = next_index_++;
                arm(ctx, 3 * config_.ack_timeout, kReplica, idx);
                replica_timers_[idx] = key;
            }
            return;
        }
        case msg::TrackReplicate::Stage::Complete:
            replicas_.erase(key);
            return;
        case msg::TrackReplicate::Stage::Probe: {
            auto reply = std::make_shared<msg::TrackReplicate>();
            reply->record = m.record;
            reply->rv = m.rv;
            reply->rv_attr = m.rv_attr;
            reply->owner = overlay_.self();
            reply->stage = msg::TrackReplicate::Stage::Complete;
            auto it = ack_maps_.find(CopyKey{m.record->id, m.rv, overlay_.id()});
            if (it != ack_maps_.end() && !it->second.done) {
                reply->stage = msg::TrackReplicate::Stage::Track;
                for (const auto& [id, t] : it->second.pending) reply->pending.push_back(id);
            }
            ctx.send(from, reply);
            return;
        }
    }
}

void ScoutEngine::take_over(sim::Context& ctx, const EventKey& key) {
    auto it = replicas_.find(key);
    if (it == replicas_.end()) return;
    Replica r = std::move(it->second);
    replicas_.erase(it);
    CopyKey ck{r.record->id, r.rv, overlay_.id()};
    if (ack_maps_.count(ck)) return;

    std::map<NodeId, Target> all;
    std::size_t checks = 0;
    if (auto c = rv_copies_.find({r.owner.id, r.rv}); c != rv_copies_.end()) {
        collect(*c->second.table, r.rv, r.record->predicate, checks, all);
    }
    metrics_->match_ops += checks;
    ctx.charge(config_.match_cost * static_cast<sim::Time>(checks));
    std::map<NodeId, Target> targets;
    for (auto& [id, t] : all) {
        if (r.pending.count(id) && id != overlay_.id()) targets.emplace(id, std::move(t));
    }
    ++metrics_->tracker_takeovers;
    AckMap map;
    map.record = r.record;
    map.rv = r.rv;
    map.rv_attr = r.rv_attr;
    map.rendezvous = true;
    map.pending = targets;
    map.created = ctx.now();
    start_tracker(ctx, ck, std::move(map));
    for (const auto& [id, t] : targets) send_target(ctx, r.record, r.rv, r.rv_attr, overlay_.id(), t, 0);
}

// ---------------------------------------------------------------------------
// Maintenance

void ScoutEngine::on_resubscribe_tick(sim::Context& ctx) {
    for (const auto& i : interests_) issue(ctx, i, false);
    arm(ctx, config_.refresh_period, kResubscribe, 0);
}

void ScoutEngine::on_swap_tick(sim::Context& ctx) {
    const sim::Time t = config_.refresh_period;
    const sim::Time now = ctx.now();
    main_ = std::move(secondary_);
    secondary_ = FilterTable{};

    // Copies not refreshed for more than a cycle belong to owners that no
    // longer pick this node (or are gone).
    const sim::Time max_age = 2 * t + t / 2;
    std::erase_if(copies_, [&](const auto& kv) { return now - kv.second.updated > max_age; });
    std::erase_if(rv_copies_, [&](const auto& kv) { return now - kv.second.updated > max_age; });
    std::erase_if(redirects_, [&](const auto& kv) { return kv.second.until <= now; });
    std::erase_if(ack_maps_, [&](const auto& kv) { return now - kv.second.created > 2 * t; });
    std::erase_if(replicas_, [&](const auto& kv) { return now - kv.second.created > 2 * t; });

    std::erase_if(served_, [&](const auto& kv) { return overlay_.next_hop(kv.first).has_value(); });

    std::vector<Key> offered;
    for (const auto& [rv, st] : offers_) offered.push_back(rv);
    for (const auto& rv : offered) update_offer(ctx, rv, false);

    // Restore the full set of f backups. Keys whose filters all lapsed get
    // one last, empty copy so the backups drop theirs.
    std::size_t unused = 0;
    if (!main_.empty() || copies_out_) replicate(ctx, 0, unused);
    for (const auto& [rv, attr] : served_) {
        store_copies(ctx, std::make_shared<const FilterTable>(main_.restricted(rv)), rv, 0, unused);
    }
    std::erase_if(served_, [&](const auto& kv) {
        bool local = std::any_of(interests_.begin(), interests_.end(), [&](const Interest& i) { return i.rv == kv.first; });
        return main_.counter(kv.first) == 0 && !local;
    });
    arm(ctx, until_next(now, 2 * t), kSwap, 0);
}

void ScoutEngine::on_peer_joined(sim::Context& ctx, const PeerInfo& peer) {
    (void)peer;
    for (auto it = served_.begin(); it != served_.end();) {
        auto next = overlay_.next_hop(it->first);
        if (!next) {
            ++it;
            continue;
        }
        auto h = std::make_shared<msg::Handover>();
        h->rv = it->first;
        h->rv_attr = it->second;
        h->old_rv = overlay_.self();
        h->old_backups = key_backups(it->first);
        ctx.send(next->endpoint, h);
        it = served_.erase(it);
    }
}

void ScoutEngine::on_handover(sim::Context& ctx, const msg::Handover& m) {
    if (auto next = overlay_.next_hop(m.rv)) {
        ctx.send(next->endpoint, std::make_shared<msg::Handover>(m));
        return;
    }
    if (m.old_rv.id == overlay_.id()) return;
    Redirect r;
    r.rv_attr = m.rv_attr;
    r.old_rv = m.old_rv;
    for (const auto& b : m.old_backups) {
        if (b.id != overlay_.id()) r.old_backups.push_back(b);
    }
    r.until = ctx.now() + 2 * config_.refresh_period;
    redirects_[m.rv] = std::move(r);
    served_[m.rv] = m.rv_attr;
}

// ---------------------------------------------------------------------------
// Dispatch

bool ScoutEngine::handle(sim::Context& ctx, sim::Endpoint from, const ProtocolMessage& m) {
    switch (m.type()) {
        case MsgType::Subscribe:
            on_subscribe(ctx, static_cast<const msg::Subscribe&>(m));
            break;
        case MsgType::SubscribeAck:
            on_subscribe_ack(ctx, static_cast<const msg::SubscribeAck&>(m));
            break;
        case MsgType::Event: {
            const auto& e = static_cast<const msg::Event&>(m);
            if (e.direction == msg::Direction::Up) {
                route_up(ctx, e.record, e.rv, e.rv_attr, e.hops, 0);
            } else {
                on_down(ctx, from, e);
            }
            break;
        }
        case MsgType::EventAck:
            on_ack(ctx, static_cast<const msg::EventAck&>(m));
            break;
        case MsgType::BackupStore: {
            const auto& s = static_cast<const msg::BackupStore&>(m);
            HeldCopy copy{s.table, ctx.now()};
            bool empty = !s.table || s.table->empty();
            if (s.rv) {
                if (empty) {
                    rv_copies_.erase({s.owner.id, *s.rv});
                } else {
                    rv_copies_[{s.owner.id, *s.rv}] = copy;
                }
            } else if (empty) {
                copies_.erase(s.owner.id);
            } else {
                copies_[s.owner.id] = copy;
            }
            if (s.op != 0) {
                auto ack = std::make_shared<msg::BackupAck>();
                ack->op = s.op;
                ctx.send(from, ack);
            }
            break;
        }
        case MsgType::BackupAck:
            backup_done(ctx, static_cast<const msg::BackupAck&>(m).op);
            break;
        case MsgType::ShortcutOffer: {
            const auto& o = static_cast<const msg::ShortcutOffer&>(m);
            on_shortcut(ctx, o.from.id, o.rv, o.target, o.version);
            break;
        }
        case MsgType::ShortcutRevoke: {
            const auto& r = static_cast<const msg::ShortcutRevoke&>(m);
            on_shortcut(ctx, r.from.id, r.rv, std::nullopt, r.version);
            break;
        }
        case MsgType::TrackReplicate:
            on_track(ctx, from, static_cast<const msg::TrackReplicate&>(m));
            break;
        case MsgType::Handover:
            on_handover(ctx, static_cast<const msg::Handover&>(m));
            break;
        default:
            return false;
    }
    check("message");
    return true;
}

bool ScoutEngine::on_send_failure(sim::Context& ctx, sim::Endpoint to, const ProtocolMessage& m) {
    auto& sim = ctx.simulator();
    switch (m.type()) {
        case MsgType::Subscribe: {
            overlay_.on_unreachable(to, sim);
            auto copy = std::make_shared<msg::Subscribe>(static_cast<const msg::Subscribe&>(m));
            if (++copy->attempts > config_.hop_retry_cap) {
                ++metrics_->subscription_failures;
                return true;
            }
            send_subscribe(ctx, std::move(copy));
            return true;
        }
        case MsgType::Event:
            on_event_failure(ctx, to, static_cast<const msg::Event&>(m));
            return true;
        case MsgType::EventAck:
            // Lost acks are recovered by tracker resends.
            overlay_.on_unreachable(to, sim);
            return true;
        case MsgType::BackupStore: {
            const auto& s = static_cast<const msg::BackupStore&>(m);
            if (!overlay_.on_unreachable(to, sim)) {
                ctx.send(to, std::make_shared<msg::BackupStore>(s));
                return true;
            }
            // The copy goes to the next closest peer instead.
            for (const auto& b : s.rv ? key_backups(*s.rv) : own_backups()) {
                if (std::find(s.recipients.begin(), s.recipients.end(), b.id) != s.recipients.end()) continue;
                auto copy = std::make_shared<msg::BackupStore>(s);
                copy->recipients.push_back(b.id);
                ctx.send(b.endpoint, copy);
                return true;
            }
            if (s.op != 0) backup_done(ctx, s.op);
            return true;
        }
        case MsgType::TrackReplicate: {
            const auto& t = static_cast<const msg::TrackReplicate&>(m);
            if (!overlay_.on_unreachable(to, sim)) {
                ctx.send(to, std::make_shared<msg::TrackReplicate>(t));
            } else if (t.stage == msg::TrackReplicate::Stage::Probe) {
                take_over(ctx, EventKey{t.record->id, t.rv});
            }
            return true;
        }
        case MsgType::ShortcutOffer:
        case MsgType::ShortcutRevoke:
        case MsgType::Handover: {
            Key rv = m.type() == MsgType::ShortcutOffer    ? static_cast<const msg::ShortcutOffer&>(m).rv
                     : m.type() == MsgType::ShortcutRevoke ? static_cast<const msg::ShortcutRevoke&>(m).rv
                                                           : static_cast<const msg::Handover&>(m).rv;
            sim::Endpoint target = to;
            if (overlay_.on_unreachable(to, sim)) {
                auto next = overlay_.next_hop(rv);
                if (!next) {
                    if (m.type() == MsgType::Handover) on_handover(ctx, static_cast<const msg::Handover&>(m));
                    return true;
                }
                target = next->endpoint;
            }
            if (m.type() == MsgType::ShortcutOffer) {
                ctx.send(target, std::make_shared<msg::ShortcutOffer>(static_cast<const msg::ShortcutOffer&>(m)));
            } else if (m.type() == MsgType::ShortcutRevoke) {
                ctx.send(target, std::make_shared<msg::ShortcutRevoke>(static_cast<const msg::ShortcutRevoke&>(m)));
            } else {
                ctx.send(target, std::make_shared<msg::Handover>(static_cast<const msg::Handover&>(m)));
            }
            return true;
        }
        case MsgType::SubscribeAck:
        case MsgType::BackupAck: {
            if (!overlay_.on_unreachable(to, sim)) {
                if (m.type() == MsgType::SubscribeAck) {
                    ctx.send(to, std::make_shared<msg::SubscribeAck>(static_cast<const msg::SubscribeAck&>(m)));
                } else {
                    ctx.send(to, std::make_shared<msg::BackupAck>(static_cast<const msg::BackupAck&>(m)));
                }
            }
            return true;
        }
        default:
            return false;
    }
}

// ---------------------------------------------------------------------------
// Inspection

std::size_t ScoutEngine::stored_entries() const {
    std::size_t n = main_.entry_count();
    for (const auto& [owner, copy] : copies_) n += copy.table->entry_count();
    for (const auto& [owner, copy] : rv_copies_) n += copy.table->entry_count();
    return n;
}

bool ScoutEngine::audit() const {
    if (!main_.audit() || !secondary_.audit()) return false;
    for (const auto& [key, map] : ack_maps_) {
        for (const auto& id : map.delivered) {
            if (map.pending.count(id)) return false;
        }
    }
    return true;
}

void ScoutEngine::check(const char* where) const {
    if (config_.audit && !audit()) throw std::logic_error(std::string("scoutsubs audit failed after ") + where);
}

}  // namespace smartpubsub::scoutsubs
