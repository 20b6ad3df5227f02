#include <csignal>
#include <cstdio>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>

#include "mas/gateway.hpp"
#include "mas/inspect.hpp"
#include "mas/scenario.hpp"
#include "mas/trace_checks.hpp"

namespace {

mas::Gateway* g_gateway = nullptr;

void on_signal(int) {
    if (g_gateway) g_gateway->stop();
}

int cmd_run(const std::string& path, std::optional<std::uint64_t> ticks, const std::string& log_path,
            std::optional<std::uint64_t> seed, bool check) {
    mas::Scenario scenario;
    try {
        scenario = mas::load_scenario(path);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    mas::OrchestratorOptions opts;
    opts.tools = &mas::ToolClient::global();
    mas::Orchestrator orch(opts);
    mas::ScenarioOutcome outcome;
    try {
        mas::setup_scenario(orch, scenario, seed);
        outcome = mas::run_scenario(orch, scenario, ticks);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    if (!log_path.empty()) {
        std::ofstream out(log_path);
        if (!out) {
            std::cerr << "error: cannot write " << log_path << "\n";
            return 2;
        }
        out << orch.log().dump();
    }

    std::printf("scenario  %s\n", scenario.name.c_str());
    std::printf("ticks     %llu (%s)\n", static_cast<unsigned long long>(outcome.run.ticks), outcome.run.status.c_str());
    std::printf("events    %zu\n", orch.log().size());
    bool ok = outcome.passed();
    for (const auto& a : outcome.assertions) {
        std::printf("  %-4s  %s%s%s\n", a.ok ? "PASS" : "FAIL", a.description.c_str(), a.detail.empty() ? "" : "  -- ",
                    a.detail.c_str());
    }
    if (check) {
        const auto issues = mas::check_trace(orch.log().entries());
        std::printf("  %-4s  trace checks (%zu issues)\n", issues.empty() ? "PASS" : "FAIL", issues.size());
        for (const auto& i : issues) std::printf("        %s: %s\n", i.check.c_str(), i.detail.c_str());
        ok = ok && issues.empty();
    }
    return ok ? 0 : 1;
}

int cmd_serve(const std::string& config, const std::string& host, int port) {
    mas::OrchestratorOptions opts;
    opts.deterministic = false;
    opts.tools = &mas::ToolClient::global();
    mas::Orchestrator orch(opts);
    if (!config.empty()) {
        try {
            auto scenario = mas::load_scenario(config);
            mas::setup_scenario(orch, scenario);
            for (const auto& t : scenario.tasks) orch.start_task(t.instruction, t.manager, t.members);
        } catch (const std::exception& e) {
            std::cerr << "error: " << e.what() << "\n";
            return 2;
        }
    }
    orch.start_live();
    mas::Gateway gateway(orch);
    g_gateway = &gateway;
    std::signal(SIGINT, on_signal);
    std::signal(SIGTERM, on_signal);
    std::printf("serving on http://%s:%d\n", host.c_str(), port);
    std::fflush(stdout);
    const bool ok = gateway.listen(host, port);
    g_gateway = nullptr;
    orch.stop_live();
    if (!ok) {
        std::cerr << "error: could not serve on " << host << ":" << port << "\n";
        return 1;
    }
    return 0;
}

int cmd_inspect(const std::string& path, const mas::InspectQuery& query, bool stats) {
    std::ifstream probe(path);
    if (!probe) {
        std::cerr << "error: cannot open " << path << "\n";
        return 2;
    }
    std::vector<mas::json> log;
    try {
        log = mas::load_event_log(path);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    const auto events = mas::filter_events(log, query);
    if (stats) {
        std::cout << mas::compute_stats(events).dump(2) << "\n";
        return 0;
    }
    for (const auto& e : events) std::cout << e.dump() << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"multi-agent orchestration runtime"};
    app.require_subcommand(1);

    auto* run = app.add_subcommand("run", "run a scenario deterministically and check its assertions");
    std::string scenario_path;
    std::optional<std::uint64_t> ticks;
    std::optional<std::uint64_t> seed;
    std::string log_path;
    bool check = false;
    run->add_option("scenario", scenario_path, "scenario file")->required();
    run->add_option("--ticks", ticks, "tick budget (overrides max_ticks)");
    run->add_option("--log", log_path, "write the event log here (JSON lines)");
    run->add_option("--seed", seed, "seed for scripted reply alternatives");
    run->add_flag("--check", check, "also run the trace property checks");

    auto* serve = app.add_subcommand("serve", "run live and serve the HTTP gateway");
    std::string config;
    std::string host = "127.0.0.1";
    int port = 8080;
    serve->add_option("--config", config, "scenario file with agents, tools and backends");
    serve->add_option("--port", port, "listen port");
    serve->add_option("--host", host, "listen address");

    auto* inspect = app.add_subcommand("inspect", "filter an event log or compute statistics");
    std::string inspect_path;
    mas::InspectQuery query;
    std::string agent, task, executor;
    bool stats = false;
    inspect->add_option("log", inspect_path, "event log")->required();
    inspect->add_option("--agent", agent, "only events mentioning this agent id");
    inspect->add_option("--task", task, "only events of this task id");
    inspect->add_option("--executor", executor, "only events with this executor");
    inspect->add_flag("--stats", stats, "per-stage step counts and lock-wait durations");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? 0 : 2;
    }

    if (*run) return cmd_run(scenario_path, ticks, log_path, seed, check);
    if (*serve) return cmd_serve(config, host, port);
    if (!agent.empty()) query.agent = agent;
    if (!task.empty()) query.task = task;
    if (!executor.empty()) query.executor = executor;
    return cmd_inspect(inspect_path, query, stats);
}
