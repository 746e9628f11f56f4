#include <algorithm>
#include <atomic>
#include <cstdio>
#include <functional>
#include <thread>

#include "smartpubsub/harness/scenario.hpp"

namespace smartpubsub::harness {

SweepConfig SweepConfig::from_json(const nlohmann::json& j) {
    SweepConfig c;
    for (const auto& [key, value] : j.items()) {
        if (key != "scenario" && key != "variant" && key != "f_values" && key != "subs_per_node" && key != "seeds" &&
            key != "threads") {
            throw std::invalid_argument("unknown sweep key: " + key);
        }
    }
    try {
        if (j.contains("scenario")) {
            auto s = j.at("scenario");
            if (!s.contains("name")) s["name"] = "replication-sweep";
            c.base = Scenario::from_json(s);
        }
        if (j.contains("variant")) c.variant = parse_variant(j.at("variant").get<std::string>());
        if (j.contains("f_values")) c.f_values = j.at("f_values").get<std::vector<std::size_t>>();
        if (j.contains("subs_per_node")) c.subs_values = j.at("subs_per_node").get<std::vector<std::size_t>>();
        if (j.contains("seeds")) c.seeds = j.at("seeds").get<std::vector<std::uint64_t>>();
        if (j.contains("threads")) c.threads = j.at("threads").get<unsigned>();
    } catch (const nlohmann::json::exception& e) {
        throw std::invalid_argument(std::string("bad sweep value: ") + e.what());
    }
    if (c.f_values.empty() || c.subs_values.empty() || c.seeds.empty()) {
        throw std::invalid_argument("sweep value lists must be non-empty");
    }
    return c;
}

std::vector<MetricsReport> replication_sweep(const SweepConfig& config) {
    struct Cell {
        std::size_t f;
        std::size_t subs;
        std::uint64_t seed;
    };
    std::vector<Cell> cells;
    for (auto f : config.f_values) {
        for (auto k : config.subs_values) {
            for (auto seed : config.seeds) cells.push_back({f, k, seed});
        }
    }
    std::vector<MetricsReport> rows(cells.size());
    std::atomic<std::size_t> next{0};
    auto work = [&] {
        for (std::size_t i = next++; i < cells.size(); i = next++) {
            Scenario s = config.base;
            s.f = cells[i].f;
            s.subs_per_node = cells[i].subs;
            rows[i] = run_scenario(s, config.variant, cells[i].seed);
        }
    };
    unsigned threads = config.threads ? config.threads : std::max(1u, std::thread::hardware_concurrency());
    threads = std::min<unsigned>(threads, static_cast<unsigned>(cells.size()));
    std::vector<std::thread> pool;
    for (unsigned t = 1; t < threads; ++t) pool.emplace_back(work);
    work();
    for (auto& t : pool) t.join();
    return rows;
}

namespace {

using Metric = std::function<double(const MetricsReport&)>;

/// Per-seed values of one cell, in seed order.
std::vector<double> cell(const std::vector<MetricsReport>& rows, std::size_t f, std::size_t subs, const Metric& m) {
    std::vector<double> out;
    for (const auto& r : rows) {
        if (r.f == f && r.subs_per_node == subs) out.push_back(m(r));
    }
    return out;
}

double mean(const std::vector<double>& v) {
    double s = 0;
    for (double x : v) s += x;
    return v.empty() ? 0 : s / static_cast<double>(v.size());
}

double rel_spread(const std::vector<double>& means) {
    auto [lo, hi] = std::minmax_element(means.begin(), means.end());
    double m = mean(means);
    return m == 0 ? 0 : (*hi - *lo) / m;
}

/// Cell means ordered along `values`; `strict` asks for an increase. One
/// adverse seed pair per step is tolerated: the step passes when it holds
/// after dropping the pair with the largest decrease.
bool monotone(const std::vector<std::vector<double>>& cells, bool strict, std::string& detail) {
    bool ok = true;
    for (std::size_t i = 0; i + 1 < cells.size(); ++i) {
        const auto& a = cells[i];
        const auto& b = cells[i + 1];
        auto holds = [&](double ma, double mb) { return strict ? mb > ma : mb >= ma; };
        if (holds(mean(a), mean(b))) continue;
        std::size_t worst = 0;
        double worst_diff = 0;
        for (std::size_t s = 0; s < std::min(a.size(), b.size()); ++s) {
            double d = b[s] - a[s];
            if (s == 0 || d < worst_diff) {
                worst = s;
                worst_diff = d;
            }
        }
        auto a2 = a;
        auto b2 = b;
        if (a2.size() > 1 && b2.size() > 1) {
            a2.erase(a2.begin() + static_cast<std::ptrdiff_t>(worst));
            b2.erase(b2.begin() + static_cast<std::ptrdiff_t>(worst));
        }
        if (!holds(mean(a2), mean(b2))) {
            ok = false;
            char buf[128];
            std::snprintf(buf, sizeof buf, " step %zu: %.3f -> %.3f;", i, mean(a), mean(b));
            detail += buf;
        }
    }
    return ok;
}

}  // namespace

std::vector<TrendCheck> sweep_trends(const SweepConfig& config, const std::vector<MetricsReport>& rows) {
    Metric sub_lat = [](const MetricsReport& r) { return r.subscription_latency.mean; };
    Metric ev_lat = [](const MetricsReport& r) { return r.event_latency.mean; };
    Metric memory = [](const MetricsReport& r) { return static_cast<double>(r.peak_entries); };

    auto f_sorted = config.f_values;
    std::sort(f_sorted.begin(), f_sorted.end());
    auto k_sorted = config.subs_values;
    std::sort(k_sorted.begin(), k_sorted.end());

    auto along_f = [&](std::size_t k, const Metric& m) {
        std::vector<std::vector<double>> out;
        for (auto f : f_sorted) out.push_back(cell(rows, f, k, m));
        return out;
    };
    auto means_of = [](const std::vector<std::vector<double>>& cells) {
        std::vector<double> out;
        for (const auto& c : cells) out.push_back(mean(c));
        return out;
    };
    auto fmt = [](const char* label, double v) {
        char buf[96];
        std::snprintf(buf, sizeof buf, " %s=%.3f", label, v);
        return std::string(buf);
    };

    std::vector<TrendCheck> out;
    TrendCheck sub{"subscription latency non-decreasing in f", true, ""};
    TrendCheck spread{"event latency spread across f below subscription latency spread", true, ""};
    TrendCheck mem{"memory proxy increasing in f", true, ""};
    TrendCheck flat{"memory proxy flatter in subs/node than in f", true, ""};
    for (auto k : k_sorted) {
        std::string d;
        if (!monotone(along_f(k, sub_lat), false, d)) {
            sub.passed = false;
            sub.detail += " k=" + std::to_string(k) + ":" + d;
        }
        double se = rel_spread(means_of(along_f(k, ev_lat)));
        double ss = rel_spread(means_of(along_f(k, sub_lat)));
        spread.detail += " k=" + std::to_string(k) + fmt("event", se) + fmt("sub", ss);
        if (!(se < ss)) spread.passed = false;
        d.clear();
        if (!monotone(along_f(k, memory), true, d)) {
            mem.passed = false;
            mem.detail += " k=" + std::to_string(k) + ":" + d;
        }
    }
    // Flatness: worst spread across subs/node vs smallest spread across f.
    double worst_k = 0;
    for (auto f : f_sorted) {
        std::vector<double> means;
        for (auto k : k_sorted) means.push_back(mean(cell(rows, f, k, memory)));
        worst_k = std::max(worst_k, rel_spread(means));
    }
    double least_f = 1e300;
    for (auto k : k_sorted) least_f = std::min(least_f, rel_spread(means_of(along_f(k, memory))));
    flat.passed = worst_k < least_f;
    flat.detail = fmt("subs_spread", worst_k) + fmt("f_spread", least_f);

    if (f_sorted.size() > 1) {
        out.push_back(sub);
        out.push_back(spread);
        out.push_back(mem);
    }
    if (f_sorted.size() > 1 && k_sorted.size() > 1) out.push_back(flat);
    return out;
}

}  // namespace smartpubsub::harness
