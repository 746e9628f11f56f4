#pragma once

#include <cstdint>
#include <deque>
#include <functional>
#include <map>
#include <memory>
#include <random>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include <json.hpp>

#include "smartpubsub/simnet/endpoint.hpp"

namespace smartpubsub::sim {

/// Immutable wire message. Shared between sender and receiver.
class Message {
public:
    virtual ~Message() = default;
    virtual std::string_view kind() const = 0;
    /// Adds kind-specific fields to a trace record.
    virtual void describe(nlohmann::json& /*out*/) const {}
};

using MessagePtr = std::shared_ptr<const Message>;
using TimerId = std::uint64_t;

class Simulator;
class Context;

/// A simulated process. All callbacks run inside the single-threaded event
/// loop; a node never observes another node's state directly.
class Node {
public:
    virtual ~Node() = default;
    virtual void on_start(Context& /*ctx*/) {}
    virtual void on_message(Context& ctx, Endpoint from, const MessagePtr& msg) = 0;
    virtual void on_timer(Context& /*ctx*/, TimerId /*id*/, std::uint64_t /*tag*/) {}
    /// The message to `to` was dropped or its target was dead.
    virtual void on_send_failure(Context& /*ctx*/, Endpoint /*to*/, const MessagePtr& /*msg*/) {}
};

struct LatencyRange {
    double min_ms = 5.0;
    double max_ms = 15.0;
};

struct SimConfig {
    std::uint64_t seed = 1;
    std::vector<std::string> regions{"local"};
    /// One-way latency per (from-region, to-region), uniform in [min, max].
    std::vector<std::vector<LatencyRange>> latency{{LatencyRange{}}};
    double drop_probability = 0.0;
    /// Processing time charged for every handled message, timer or call.
    Time service_time = from_ms(0.2);
    bool trace = false;

    /// Throws std::invalid_argument when the matrix is not square, not
    /// symmetric, or has non-positive latencies.
    void validate() const;

    double max_one_way_ms() const;
    /// 99th percentile of the slowest pair's uniform distribution.
    double p99_one_way_ms() const;

    /// Four-region world used by the scenario harness.
    static SimConfig world(std::uint64_t seed);
};

struct Accounting {
    std::uint64_t sent = 0;
    std::uint64_t delivered = 0;
    std::uint64_t dropped = 0;
    std::uint64_t dead_target = 0;
    std::uint64_t unknown_target = 0;
    std::uint64_t in_flight = 0;
    std::map<std::string, std::uint64_t, std::less<>> sent_by_kind;

    std::uint64_t sent_of(std::string_view kind) const {
        auto it = sent_by_kind.find(kind);
        return it == sent_by_kind.end() ? 0 : it->second;
    }
};

struct RunResult {
    Time end = 0;
    Accounting accounting;
};

/// Handle given to node callbacks. Sends and timers take effect when the
/// handler's processing time has elapsed.
class Context {
public:
    Time now() const { return now_; }
    Endpoint self() const { return self_; }
    RegionId region() const;

    void send(Endpoint to, MessagePtr msg);
    TimerId set_timer(Time delay, std::uint64_t tag);
    void cancel_timer(TimerId id);
    /// Extra processing time for the current handler (e.g. filter matching).
    void charge(Time cost) { charged_ += cost; }

    Simulator& simulator() { return *sim_; }

private:
    friend class Simulator;
    Context(Simulator& sim, Endpoint self, Time now) : sim_(&sim), self_(self), now_(now) {}

    struct PendingSend {
        Endpoint to;
        MessagePtr msg;
    };
    struct PendingTimer {
        TimerId id;
        Time delay;
        std::uint64_t tag;
    };

    Simulator* sim_;
    Endpoint self_;
    Time now_;
    Time charged_ = 0;
    std::vector<PendingSend> sends_;
    std::vector<PendingTimer> timers_;
};

/// Deterministic discrete-event network. Events are ordered by (time,
/// insertion sequence). Each node is a FIFO server: items queue while the
/// node is busy processing. Links are FIFO per ordered endpoint pair.
class Simulator {
public:
    explicit Simulator(SimConfig config);

    const SimConfig& config() const { return config_; }
    Time now() const { return now_; }

    /// Registers a node that becomes alive at `join_at` (defaults to now);
    /// on_start runs then.
    Endpoint add_node(std::unique_ptr<Node> node, RegionId region, Time join_at = -1);
    void fail_node(Endpoint endpoint, Time at);

    /// Runs fn in the node's context at time `at` (queued like a message).
    void schedule_call(Time at, Endpoint endpoint, std::function<void(Context&)> fn);
    /// Runs fn outside any node at time `at`.
    void schedule_control(Time at, std::function<void()> fn);

    RunResult run_until(Time t_end);

    std::size_t node_count() const { return nodes_.size(); }
    bool alive(Endpoint e) const { return e.value < nodes_.size() && nodes_[e.value].alive; }
    bool ever_failed(Endpoint e) const { return e.value < nodes_.size() && nodes_[e.value].failed; }
    RegionId region_of(Endpoint e) const { return nodes_.at(e.value).region; }
    Node& node(Endpoint e) { return *nodes_.at(e.value).impl; }
    const Node& node(Endpoint e) const { return *nodes_.at(e.value).impl; }

    const Accounting& accounting() const { return accounting_; }
    const std::vector<std::string>& trace() const { return trace_; }

    /// Fault injection: messages for which the filter returns true are
    /// dropped in transit (the sender is notified as for random drops).
    using DropFilter = std::function<bool(Endpoint from, Endpoint to, const Message& msg)>;
    void set_drop_filter(DropFilter filter) { drop_filter_ = std::move(filter); }

    /// Samples a one-way latency (consumes the simulation RNG).
    Time sample_latency(RegionId from, RegionId to);

private:
    friend class Context;

    enum class ItemKind : std::uint8_t { Deliver, Failure, Timer, Call, Resume, Control };

    struct Item {
        Time at = 0;
        std::uint64_t seq = 0;
        ItemKind kind = ItemKind::Control;
        Endpoint target;
        Endpoint peer;
        MessagePtr msg;
        std::uint64_t msg_id = 0;
        TimerId timer = 0;
        std::uint64_t tag = 0;
        std::shared_ptr<std::function<void(Context&)>> call;
        std::shared_ptr<std::function<void()>> control;
    };
    struct Later {
        bool operator()(const Item& a, const Item& b) const {
            return a.at != b.at ? a.at > b.at : a.seq > b.seq;
        }
    };
    struct NodeSlot {
        std::unique_ptr<Node> impl;
        RegionId region = 0;
        bool alive = false;
        bool failed = false;
        bool busy = false;
        std::deque<Item> inbox;
    };

    void push(Item item);
    void dispatch(Item item);
    void process_next(Endpoint e);
    void run_handler(Endpoint e, Item& item);
    void flush(Context& ctx, Time depart);
    void transmit(Endpoint from, Endpoint to, MessagePtr msg, Time depart);
    void notify_failure(const Item& delivery, Time at, const char* reason);
    void record(nlohmann::json record);

    SimConfig config_;
    std::mt19937_64 rng_;
    std::vector<Item> heap_;
    std::uint64_t next_seq_ = 0;
    std::uint64_t next_msg_id_ = 0;
    TimerId next_timer_ = 1;
    Time now_ = 0;
    std::vector<NodeSlot> nodes_;
    std::unordered_set<TimerId> cancelled_;
    std::unordered_map<std::uint64_t, Time> link_clock_;
    Accounting accounting_;
    std::vector<std::string> trace_;
    DropFilter drop_filter_;
};

}  // namespace smartpubsub::sim
