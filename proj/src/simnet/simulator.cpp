#include "smartpubsub/simnet/simulator.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace smartpubsub::sim {

namespace {

std::uint64_t link_key(Endpoint from, Endpoint to) {
    return (static_cast<std::uint64_t>(from.value) << 32) | to.value;
}

}  // namespace

void SimConfig::validate() const {
    if (regions.empty()) throw std::invalid_argument("at least one region is required");
    if (latency.size() != regions.size()) throw std::invalid_argument("latency matrix size must match regions");
    for (std::size_t i = 0; i < latency.size(); ++i) {
        if (latency[i].size() != regions.size()) throw std::invalid_argument("latency matrix must be square");
        for (std::size_t j = 0; j < latency[i].size(); ++j) {
            const auto& r = latency[i][j];
            if (!(r.min_ms > 0.0) || r.max_ms < r.min_ms) {
                throw std::invalid_argument("latency ranges must satisfy 0 < min <= max");
            }
            const auto& back = latency[j][i];
            if (back.min_ms != r.min_ms || back.max_ms != r.max_ms) {
                throw std::invalid_argument("latency matrix must be symmetric");
            }
        }
    }
    if (drop_probability < 0.0 || drop_probability > 1.0) {
        throw std::invalid_argument("drop probability must be in [0, 1]");
    }
    if (service_time < 0) throw std::invalid_argument("service time must be non-negative");
}

double SimConfig::max_one_way_ms() const {
    double m = 0.0;
    for (const auto& row : latency) {
        for (const auto& r : row) m = std::max(m, r.max_ms);
    }
    return m;
}

double SimConfig::p99_one_way_ms() const {
    double m = 0.0;
    for (const auto& row : latency) {
        for (const auto& r : row) m = std::max(m, r.min_ms + 0.99 * (r.max_ms - r.min_ms));
    }
    return m;
}

SimConfig SimConfig::world(std::uint64_t seed) {
    SimConfig c;
    c.seed = seed;
    c.regions = {"eu", "na", "sa", "asia"};
    auto r = [](double lo, double hi) { return LatencyRange{lo, hi}; };
    c.latency = {
        {r(5, 15), r(40, 70), r(70, 110), r(80, 130)},
        {r(40, 70), r(5, 15), r(50, 90), r(70, 120)},
        {r(70, 110), r(50, 90), r(5, 15), r(110, 160)},
        {r(80, 130), r(70, 120), r(110, 160), r(5, 15)},
    };
    return c;
}

RegionId Context::region() const { return sim_->region_of(self_); }

void Context::send(Endpoint to, MessagePtr msg) { sends_.push_back(PendingSend{to, std::move(msg)}); }

TimerId Context::set_timer(Time delay, std::uint64_t tag) {
    if (delay <= 0) throw std::invalid_argument("timer delay must be positive");
    TimerId id = sim_->next_timer_++;
    timers_.push_back(PendingTimer{id, delay, tag});
    return id;
}

void Context::cancel_timer(TimerId id) { sim_->cancelled_.insert(id); }

Simulator::Simulator(SimConfig config) : config_(std::move(config)), rng_(config_.seed) { config_.validate(); }

Endpoint Simulator::add_node(std::unique_ptr<Node> node, RegionId region, Time join_at) {
    if (region >= config_.regions.size()) throw std::invalid_argument("unknown region");
    Endpoint e{static_cast<std::uint32_t>(nodes_.size())};
    NodeSlot slot;
    slot.impl = std::move(node);
    slot.region = region;
    nodes_.push_back(std::move(slot));

    Time at = join_at < 0 ? now_ : join_at;
    schedule_control(at, [this, e] {
        auto& s = nodes_[e.value];
        if (s.failed) return;
        s.alive = true;
        if (config_.trace) record({{"t", now_}, {"ev", "join"}, {"node", e.value}});
        Item start;
        start.at = now_;
        start.kind = ItemKind::Call;
        start.target = e;
        start.call = std::make_shared<std::function<void(Context&)>>(
            [this, e](Context& ctx) { nodes_[e.value].impl->on_start(ctx); });
        dispatch(std::move(start));
    });
    return e;
}

void Simulator::fail_node(Endpoint endpoint, Time at) {
    schedule_control(at, [this, endpoint] {
        if (endpoint.value >= nodes_.size()) return;
        auto& s = nodes_[endpoint.value];
        if (s.failed) return;
        s.alive = false;
        s.failed = true;
        s.busy = false;
        if (config_.trace) record({{"t", now_}, {"ev", "crash"}, {"node", endpoint.value}});
        // Queued but unprocessed messages are lost with the node.
        auto inbox = std::move(s.inbox);
        s.inbox.clear();
        for (auto& item : inbox) {
            if (item.kind == ItemKind::Deliver) notify_failure(item, now_, "dead");
        }
    });
}

void Simulator::schedule_call(Time at, Endpoint endpoint, std::function<void(Context&)> fn) {
    Item item;
    item.at = std::max(at, now_);
    item.kind = ItemKind::Call;
    item.target = endpoint;
    item.call = std::make_shared<std::function<void(Context&)>>(std::move(fn));
    push(std::move(item));
}

void Simulator::schedule_control(Time at, std::function<void()> fn) {
    Item item;
    item.at = std::max(at, now_);
    item.kind = ItemKind::Control;
    item.control = std::make_shared<std::function<void()>>(std::move(fn));
    push(std::move(item));
}

void Simulator::push(Item item) {
    item.seq = next_seq_++;
    heap_.push_back(std::move(item));
    std::push_heap(heap_.begin(), heap_.end(), Later{});
}

Time Simulator::sample_latency(RegionId from, RegionId to) {
    const auto& r = config_.latency.at(from).at(to);
    std::uniform_real_distribution<double> dist(r.min_ms, r.max_ms);
    return std::max<Time>(1, from_ms(dist(rng_)));
}

void Simulator::record(nlohmann::json record) { trace_.push_back(record.dump()); }

RunResult Simulator::run_until(Time t_end) {
    while (!heap_.empty() && heap_.front().at <= t_end) {
        std::pop_heap(heap_.begin(), heap_.end(), Later{});
        Item item = std::move(heap_.back());
        heap_.pop_back();
        now_ = item.at;
        dispatch(std::move(item));
    }
    now_ = std::max(now_, t_end);

    RunResult result;
    result.end = now_;
    result.accounting = accounting_;
    std::uint64_t in_flight = 0;
    for (const auto& item : heap_) {
        if (item.kind == ItemKind::Deliver) ++in_flight;
    }
    for (const auto& slot : nodes_) {
        for (const auto& item : slot.inbox) {
            if (item.kind == ItemKind::Deliver) ++in_flight;
        }
    }
    result.accounting.in_flight = in_flight;
    return result;
}

void Simulator::dispatch(Item item) {
    if (item.kind == ItemKind::Control) {
        (*item.control)();
        return;
    }
    auto& slot = nodes_.at(item.target.value);
    if (item.kind == ItemKind::Resume) {
        if (!slot.alive) return;
        slot.busy = false;
        if (!slot.inbox.empty()) process_next(item.target);
        return;
    }
    if (!slot.alive) {
        if (item.kind == ItemKind::Deliver) notify_failure(item, now_, "dead");
        return;
    }
    slot.inbox.push_back(std::move(item));
    if (!slot.busy) process_next(slot.inbox.back().target);
}

void Simulator::process_next(Endpoint e) {
    auto& slot = nodes_[e.value];
    Item item = std::move(slot.inbox.front());
    slot.inbox.pop_front();
    run_handler(e, item);
}

void Simulator::run_handler(Endpoint e, Item& item) {
    auto& slot = nodes_[e.value];
    if (item.kind == ItemKind::Timer && cancelled_.erase(item.timer) > 0) {
        // Cancelled timers cost nothing.
        if (!slot.inbox.empty()) process_next(e);
        return;
    }

    Context ctx(*this, e, now_);
    switch (item.kind) {
        case ItemKind::Deliver:
            ++accounting_.delivered;
            if (config_.trace) {
                nlohmann::json r{{"t", now_}, {"ev", "deliver"}, {"id", item.msg_id}, {"from", item.peer.value},
                                 {"to", e.value}, {"kind", item.msg->kind()}};
                record(std::move(r));
            }
            slot.impl->on_message(ctx, item.peer, item.msg);
            break;
        case ItemKind::Failure:
            if (config_.trace) {
                record({{"t", now_}, {"ev", "send_failed"}, {"id", item.msg_id}, {"node", e.value},
                        {"to", item.peer.value}, {"kind", item.msg->kind()}});
            }
            slot.impl->on_send_failure(ctx, item.peer, item.msg);
            break;
        case ItemKind::Timer:
            if (config_.trace) record({{"t", now_}, {"ev", "timer"}, {"node", e.value}, {"tag", item.tag}});
            slot.impl->on_timer(ctx, item.timer, item.tag);
            break;
        case ItemKind::Call:
            (*item.call)(ctx);
            break;
        default:
            break;
    }

    Time done = now_ + config_.service_time + ctx.charged_;
    flush(ctx, done);
    if (done > now_) {
        slot.busy = true;
        Item resume;
        resume.at = done;
        resume.kind = ItemKind::Resume;
        resume.target = e;
        push(std::move(resume));
    } else if (!slot.inbox.empty()) {
        process_next(e);
    }
}

void Simulator::flush(Context& ctx, Time depart) {
    for (auto& t : ctx.timers_) {
        Item item;
        item.at = depart + t.delay;
        item.kind = ItemKind::Timer;
        item.target = ctx.self_;
        item.timer = t.id;
        item.tag = t.tag;
        push(std::move(item));
    }
    for (auto& s : ctx.sends_) transmit(ctx.self_, s.to, std::move(s.msg), depart);
}

void Simulator::transmit(Endpoint from, Endpoint to, MessagePtr msg, Time depart) {
    ++accounting_.sent;
    ++accounting_.sent_by_kind[std::string(msg->kind())];
    std::uint64_t id = next_msg_id_++;

    Item item;
    item.kind = ItemKind::Deliver;
    item.target = to;
    item.peer = from;
    item.msg = std::move(msg);
    item.msg_id = id;

    if (config_.trace) {
        nlohmann::json r{{"t", depart}, {"ev", "send"}, {"id", id}, {"from", from.value}, {"to", to.value},
                         {"kind", item.msg->kind()}};
        item.msg->describe(r);
        record(std::move(r));
    }

    if (to.value >= nodes_.size()) {
        ++accounting_.unknown_target;
        notify_failure(item, depart, "unknown");
        return;
    }

    Time arrive = depart + sample_latency(nodes_[from.value].region, nodes_[to.value].region);
    auto& clock = link_clock_[link_key(from, to)];
    arrive = std::max(arrive, clock);
    clock = arrive;

    bool dropped = false;
    if (config_.drop_probability > 0.0) {
        std::bernoulli_distribution drop(config_.drop_probability);
        dropped = drop(rng_);
    }
    if (!dropped && drop_filter_) dropped = drop_filter_(from, to, *item.msg);
    {
        if (dropped) {
            ++accounting_.dropped;
            if (config_.trace) record({{"t", arrive}, {"ev", "drop"}, {"id", id}});
            Item failure = item;
            failure.at = arrive;
            failure.kind = ItemKind::Failure;
            failure.target = from;
            failure.peer = to;
            push(std::move(failure));
            return;
        }
    }
    item.at = arrive;
    push(std::move(item));
}

void Simulator::notify_failure(const Item& delivery, Time at, const char* reason) {
    if (std::string_view(reason) == "dead") ++accounting_.dead_target;
    if (config_.trace) record({{"t", at}, {"ev", reason}, {"id", delivery.msg_id}});
    Item failure;
    failure.at = at;
    failure.kind = ItemKind::Failure;
    failure.target = delivery.peer;
    failure.peer = delivery.target;
    failure.msg = delivery.msg;
    failure.msg_id = delivery.msg_id;
    push(std::move(failure));
}

}  // namespace smartpubsub::sim
