#include <CLI11.hpp>

#include <fstream>
#include <iostream>

#include "smartpubsub/harness/scenario.hpp"

using namespace smartpubsub::harness;

namespace {

int run_command(const std::string& scenario_name, const std::string& config, const std::string& variant_name,
                std::size_t nodes, std::uint64_t seed, std::size_t f, std::size_t subs, const std::string& out,
                bool trace) {
    Scenario s;
    if (!config.empty()) {
        std::ifstream in(config);
        if (!in) throw std::invalid_argument("cannot open " + config);
        s = Scenario::from_json(nlohmann::json::parse(in));
    } else {
        s = Scenario::preset(scenario_name);
    }
    if (nodes) s.nodes = nodes;
    if (f) s.f = f;
    if (subs) s.subs_per_node = subs;
    s.validate();
    auto report = run_scenario(s, parse_variant(variant_name), seed, RunOptions{trace, true});
    emit_report({report}, out);
    std::cout << summary_table({report});
    return report.passed() ? 0 : 1;
}

int sweep_command(const std::string& config, const std::string& out) {
    std::ifstream in(config);
    if (!in) throw std::invalid_argument("cannot open " + config);
    auto cfg = SweepConfig::from_json(nlohmann::json::parse(in));
    auto rows = replication_sweep(cfg);
    emit_report(rows, out);
    bool ok = true;
    for (const auto& r : rows) ok = ok && r.passed();
    std::cout << summary_table(rows);
    for (const auto& t : sweep_trends(cfg, rows)) {
        std::cout << (t.passed ? "PASS " : "FAIL ") << t.name << ":" << t.detail << "\n";
        ok = ok && t.passed;
    }
    return ok ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Content-based publish/subscribe simulator"};
    app.require_subcommand(1);

    std::string scenario = "normal", config, variant = "base-reliable", out = "out";
    std::size_t nodes = 0, f = 0, subs = 0;
    std::uint64_t seed = 1;
    bool trace = false;
    auto* run = app.add_subcommand("run", "Run one scenario and write report.csv and summary.txt");
    run->add_option("--scenario", scenario, "normal, sub-burst, event-burst, fault, replication-sweep or fastdelivery-compare");
    run->add_option("--config", config, "Scenario JSON file (overrides --scenario)");
    run->add_option("--variant", variant,
                    "base-unreliable, base-reliable, redirect-unreliable, redirect-reliable or fastdelivery");
    run->add_option("--nodes", nodes, "Node count (default from the scenario)");
    run->add_option("--seed", seed, "Seed");
    run->add_option("--f", f, "Replication factor (default from the scenario)");
    run->add_option("--subs-per-node", subs, "Subscriptions per subscriber (default from the scenario)");
    run->add_option("--out", out, "Output directory");
    run->add_flag("--trace", trace, "Also write trace.jsonl");

    std::string sweep_config, sweep_out = "out";
    auto* sweep = app.add_subcommand("sweep", "Run a replication sweep from a config file");
    sweep->add_option("--config", sweep_config, "Sweep JSON file")->required();
    sweep->add_option("--out", sweep_out, "Output directory");

    CLI11_PARSE(app, argc, argv);
    try {
        if (*run) return run_command(scenario, config, variant, nodes, seed, f, subs, out, trace);
        return sweep_command(sweep_config, sweep_out);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
}
