#pragma once

#include <atomic>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include "mas/engine.hpp"
#include "mas/event_log.hpp"
#include "mas/prompts.hpp"
#include "mas/sync_state.hpp"
#include "mas/tool_client.hpp"

namespace mas {

struct OrchestratorOptions {
    bool deterministic{true};
    std::uint64_t seed{0};
    std::chrono::milliseconds dispatch_period{200};
    ToolClient* tools{nullptr};  // null: the orchestrator owns a private client
    std::size_t tool_threads{8};
};

struct RunResult {
    std::uint64_t ticks{0};
    bool completed{false};  // the stop predicate held before the budget ran out
    std::string status;     // "completed" | "budget_exhausted"
};

/// The system container: agents, tasks, the scheduler and the operator's
/// intervention entry point.
class Orchestrator {
public:
    explicit Orchestrator(OrchestratorOptions options = {});
    ~Orchestrator();
    Orchestrator(const Orchestrator&) = delete;
    Orchestrator& operator=(const Orchestrator&) = delete;

    EventLog& log() { return log_; }
    SyncState& sync() { return sync_; }
    ToolClient& tools() { return *tools_; }
    PromptLibrary& prompts() { return prompts_; }
    MemoryClock& clock() { return clock_; }
    const Services& services() const { return services_; }
    bool deterministic() const { return options_.deterministic; }

    /// Registers a backend under an llm config name ("default" is the fallback).
    void set_backend(const std::string& name, std::shared_ptr<Backend> backend);

    std::string spawn_agent(const json& config);
    std::string start_task(const std::string& instruction, const std::string& manager,
                           const std::vector<std::string>& members);

    /// One scheduler round: every agent acts once in spawn order, then one dispatch.
    void tick();
    std::uint64_t ticks() const { return tick_; }

    /// Deterministic loop. Stops when `until` holds (default: every started
    /// task has left the registry) or after `max_ticks` rounds.
    RunResult run(std::uint64_t max_ticks, std::function<bool()> until = {});
    /// Hook run at the start of every round, before agents act.
    void set_before_tick(std::function<void(std::uint64_t)> fn) { before_tick_ = std::move(fn); }

    /// Live mode: one thread per agent plus the periodic dispatcher.
    void start_live();
    void stop_live();
    bool live() const { return live_.load(); }

    /// Operator commands: {"command": name, ...}. Names: inject_message,
    /// edit_agent_state, pause_agent, resume_agent, end_stage, cancel_task.
    ApplyResult intervene(const json& command);

    json snapshot() const { return sync_.snapshot(); }
    bool all_tasks_done() const;
    /// All started tasks done and no agent has a runnable step left.
    bool settled() const;
    std::vector<std::string> started_tasks() const;

private:
    std::shared_ptr<Backend> backend_for(const AgentState& agent) const;
    void dispatch_all();
    void agent_loop(std::string agent_id);
    void dispatcher_loop();
    void launch_agent_thread(const std::string& agent_id);
    ApplyResult do_intervene(const json& command);

    OrchestratorOptions options_;
    EventLog log_;
    SyncState sync_;
    std::unique_ptr<ToolClient> owned_tools_;
    ToolClient* tools_;
    PromptLibrary prompts_;
    MemoryClock clock_;
    Services services_;

    mutable std::mutex backends_mutex_;
    std::map<std::string, std::shared_ptr<Backend>> backends_;

    mutable std::mutex tasks_mutex_;
    std::vector<std::string> started_tasks_;
    std::atomic<std::uint64_t> tick_{0};
    std::function<void(std::uint64_t)> before_tick_;

    std::atomic<bool> live_{false};
    std::mutex threads_mutex_;
    std::vector<std::thread> threads_;
};

/// Applies the edits an operator (or agent manager) may make to an agent's
/// queue: {remove_steps: [ids], insert_steps: [drafts], append_steps: [drafts]}.
void edit_agent_queue(Registry& registry, AgentState& agent, const json& edits);

}  // namespace mas
