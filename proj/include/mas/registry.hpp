#pragma once

#include <cstdint>
#include <deque>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "mas/event_log.hpp"
#include "mas/types.hpp"

namespace mas {

/// The four-tier state registry: tasks, stages and agents (steps live
/// inside their agent). Not synchronized; SyncState owns the lock.
class Registry {
public:
    explicit Registry(EventLog* log = nullptr) : log_(log) {}

    /// Deterministic per-run identifiers: "task-1", "stage-3", "step-17".
    std::string next_id(std::string_view prefix);

    // -- agents ------------------------------------------------------------
    AgentState& add_agent(AgentState agent);
    /// Removes the agent and every task/stage reference to it.
    void deregister_agent(const std::string& agent_id);

    AgentState* find_agent(std::string_view agent_id);
    const AgentState* find_agent(std::string_view agent_id) const;
    /// Accepts an agent id or a unique agent name.
    std::string resolve_agent(std::string_view id_or_name) const;
    const std::vector<std::string>& agent_order() const { return agent_order_; }

    // -- tasks and stages --------------------------------------------------
    TaskState& new_task(std::string instruction, const std::vector<std::string>& agent_ids,
                        std::string manager_id = {});
    void join_task(const std::string& task_id, const std::string& agent_id);
    StageState& add_stage(const std::string& task_id, std::string objective,
                          std::map<std::string, std::string> allocation);

    /// Starts the next stage. Returns its id, or nullopt when no stages
    /// remain, in which case the task finishes and is cleared.
    std::optional<std::string> advance_stage(const std::string& task_id);

    /// Marks a stage finished (summaries must cover every allocated agent)
    /// and releases the allocated agents' pending steps of that stage.
    void finish_stage(const std::string& stage_id);

    /// Fails the task and its running stage; the task stays registered so a
    /// manager can recover it.
    void fail_task(const std::string& task_id, const std::string& reason);

    struct ClearReport {
        std::size_t stages_removed{0};
        std::map<std::string, std::size_t> steps_released;  // agent -> count
        std::vector<std::string> locks_released;
    };
    ClearReport clear_task(const std::string& task_id, RunStatus outcome = RunStatus::finished);

    TaskState* find_task(std::string_view task_id);
    const TaskState* find_task(std::string_view task_id) const;
    StageState* find_stage(std::string_view stage_id);
    const StageState* find_stage(std::string_view stage_id) const;

    const std::map<std::string, TaskState>& tasks() const { return tasks_; }
    const std::map<std::string, StageState>& stages() const { return stages_; }
    const std::map<std::string, AgentState>& agents() const { return agents_; }
    const std::vector<std::string>& task_order() const { return task_order_; }

    /// Final status of tasks that have left the registry.
    const std::map<std::string, RunStatus>& task_outcomes() const { return outcomes_; }

    // -- message plumbing --------------------------------------------------
    /// Messages from the operator that are not tied to a task.
    std::deque<Message>& operator_queue() { return operator_queue_; }
    const std::deque<Message>& operator_queue() const { return operator_queue_; }

    struct PendingWait {
        std::string task_id;
        std::string sender_id;
        std::string receiver_id;
    };
    std::map<std::string, PendingWait>& pending_waits() { return pending_waits_; }
    const std::map<std::string, PendingWait>& pending_waits() const { return pending_waits_; }

    /// Document with top-level keys tasks, stages, agents.
    json snapshot() const;

    EventLog* log() const { return log_; }
    void emit(std::string type, json fields) const;

private:
    EventLog* log_;
    std::map<std::string, std::uint64_t> counters_;
    std::map<std::string, TaskState> tasks_;
    std::vector<std::string> task_order_;
    std::map<std::string, StageState> stages_;
    std::map<std::string, AgentState> agents_;
    std::vector<std::string> agent_order_;
    std::map<std::string, RunStatus> outcomes_;
    std::deque<Message> operator_queue_;
    std::map<std::string, PendingWait> pending_waits_;
};

struct Violation {
    std::string kind;
    std::string detail;
};

/// Every breach of the cross-reference graph: Task<->Stage, Task<->Agent and
/// Stage<->Agent must agree both ways; live steps point one way at their
/// task, stage and agent and are held only by their agent.
std::vector<Violation> check_references(const Registry& registry);

}  // namespace mas
