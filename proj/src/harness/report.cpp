#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <stdexcept>

#include "smartpubsub/harness/scenario.hpp"
#include "smartpubsub/wire.hpp"

namespace smartpubsub::harness {

namespace {

const std::vector<MsgType> kKinds{MsgType::Subscribe,     MsgType::SubscribeAck,   MsgType::Event,
                                  MsgType::EventAck,      MsgType::BackupStore,    MsgType::BackupAck,
                                  MsgType::ShortcutOffer, MsgType::ShortcutRevoke, MsgType::TrackReplicate,
                                  MsgType::Handover,      MsgType::Advertise,      MsgType::BoardQuery,
                                  MsgType::BoardReply,    MsgType::FdSubscribe,    MsgType::FdDelegate,
                                  MsgType::FdEvent};

std::string fixed(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.3f", v);
    return buf;
}

}  // namespace

std::vector<std::string> csv_columns() {
    std::vector<std::string> cols{"scenario",
                                  "variant",
                                  "seed",
                                  "nodes",
                                  "f",
                                  "subs_per_node",
                                  "subscriptions",
                                  "settled_subscriptions",
                                  "events",
                                  "failed_nodes",
                                  "expected",
                                  "delivered",
                                  "missing",
                                  "duplicates",
                                  "unexpected",
                                  "event_latency_mean_ms",
                                  "event_latency_p50_ms",
                                  "event_latency_p95_ms",
                                  "event_latency_max_ms",
                                  "sub_latency_mean_ms",
                                  "sub_latency_p95_ms",
                                  "messages",
                                  "event_messages",
                                  "dropped",
                                  "peak_entries",
                                  "cumulative_entries",
                                  "match_ops",
                                  "trackers_created",
                                  "trackers_completed",
                                  "trackers_abandoned",
                                  "publish_failed",
                                  "route_failures"};
    for (auto k : kKinds) cols.push_back("msg_" + std::string(to_string(k)));
    cols.push_back("passed");
    return cols;
}

std::string csv_row(const MetricsReport& r) {
    std::vector<std::string> v{r.scenario,
                               r.variant,
                               std::to_string(r.seed),
                               std::to_string(r.nodes),
                               std::to_string(r.f),
                               std::to_string(r.subs_per_node),
                               std::to_string(r.subscriptions),
                               std::to_string(r.settled_subscriptions),
                               std::to_string(r.events),
                               std::to_string(r.failed_nodes),
                               std::to_string(r.expected),
                               std::to_string(r.delivered),
                               std::to_string(r.missing),
                               std::to_string(r.duplicates),
                               std::to_string(r.unexpected),
                               fixed(r.event_latency.mean),
                               fixed(r.event_latency.p50),
                               fixed(r.event_latency.p95),
                               fixed(r.event_latency.max),
                               fixed(r.subscription_latency.mean),
                               fixed(r.subscription_latency.p95),
                               std::to_string(r.messages),
                               std::to_string(r.event_messages),
                               std::to_string(r.dropped),
                               std::to_string(r.peak_entries),
                               std::to_string(r.cumulative_entries),
                               std::to_string(r.match_ops),
                               std::to_string(r.trackers_created),
                               std::to_string(r.trackers_completed),
                               std::to_string(r.trackers_abandoned),
                               std::to_string(r.publish_failed),
                               std::to_string(r.route_failures)};
    for (auto k : kKinds) {
        auto it = r.messages_by_kind.find(std::string(to_string(k)));
        v.push_back(std::to_string(it == r.messages_by_kind.end() ? 0 : it->second));
    }
    v.push_back(r.passed() ? "1" : "0");
    std::string out;
    for (std::size_t i = 0; i < v.size(); ++i) out += (i ? "," : "") + v[i];
    return out;
}

std::string csv(const std::vector<MetricsReport>& reports) {
    std::string out;
    auto cols = csv_columns();
    for (std::size_t i = 0; i < cols.size(); ++i) out += (i ? "," : "") + cols[i];
    out += "\n";
    for (const auto& r : reports) out += csv_row(r) + "\n";
    return out;
}

std::string summary_table(const std::vector<MetricsReport>& reports) {
    std::ostringstream os;
    os << std::left << std::setw(22) << "scenario" << std::setw(21) << "variant" << std::right << std::setw(6)
       << "seed" << std::setw(4) << "f" << std::setw(5) << "k" << std::setw(9) << "expected" << std::setw(8)
       << "missing" << std::setw(6) << "dups" << std::setw(10) << "ev_ms" << std::setw(10) << "sub_ms"
       << std::setw(10) << "messages" << std::setw(8) << "peak" << "  result\n";
    for (const auto& r : reports) {
        os << std::left << std::setw(22) << r.scenario << std::setw(21) << r.variant << std::right << std::setw(6)
           << r.seed << std::setw(4) << r.f << std::setw(5) << r.subs_per_node << std::setw(9) << r.expected
           << std::setw(8) << r.missing << std::setw(6) << r.duplicates << std::setw(10)
           << fixed(r.event_latency.mean) << std::setw(10) << fixed(r.subscription_latency.mean) << std::setw(10)
           << r.messages << std::setw(8) << r.peak_entries << "  " << (r.passed() ? "ok" : "FAILED") << "\n";
        for (const auto& f : r.assertion_failures) os << "    " << f << "\n";
    }
    return os.str();
}

void emit_report(const std::vector<MetricsReport>& reports, const std::string& dir) {
    if (reports.empty()) throw std::invalid_argument("no reports to emit");
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    auto write = [&](const std::string& name, const std::string& body) {
        auto path = std::filesystem::path(dir) / name;
        std::ofstream out(path, std::ios::binary);
        out << body;
        out.close();
        if (!out) throw std::runtime_error("cannot write " + path.string());
    };
    write("report.csv", csv(reports));
    write("summary.txt", summary_table(reports));
    std::string trace;
    for (const auto& r : reports) {
        for (const auto& line : r.trace) trace += line + "\n";
    }
    if (!trace.empty()) write("trace.jsonl", trace);
}

}  // namespace smartpubsub::harness
