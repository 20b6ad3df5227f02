#pragma once

#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <functional>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "mas/agent_config.hpp"
#include "mas/event_log.hpp"
#include "mas/registry.hpp"

namespace mas {

enum class SyncKind {
    send_message,
    update_stage_completion,
    finish_stage,
    next_stage,
    add_stage,
    update_task,
    finish_task,
    create_agent,
    modify_agent,
    query_info,
};

std::string_view to_string(SyncKind kind);
std::optional<SyncKind> sync_kind_from(std::string_view name);

struct SyncInstruction {
    SyncKind kind;
    json payload = json::object();
};

struct ApplyResult {
    SyncKind kind;
    bool ok{false};
    std::string reason;
    json data;  // kind-specific: created ids, deferred flag, ...
};

/// The global synchronization facade. Owns the registry and serializes
/// every mutation of it; executors never touch task-level state directly.
///
/// Payload schemas (keys marked ? are optional; agents may be named by id
/// or name):
///   send_message            {task_id, receivers[], content, need_reply?, waiting?,
///                            stage_relative?, return_waiting_id?, kind?, depth?}
///   update_stage_completion {stage_id, summary}
///   finish_stage            {stage_id, if_complete?, force?}
///   next_stage              {task_id}
///   add_stage               {task_id, objective, allocation{agent: goal}}
///   update_task             {task_id, instruction?, shared_info?{}, status?}
///   finish_task             {task_id}
///   create_agent            {config{}, join_task?}
///   modify_agent            {agent, role?, profile?, llm?, add_skills?[], remove_skills?[],
///                            add_tools?[], remove_tools?[]}
///   query_info              {task_id, query: task|stage|agent, target?}
class SyncState {
public:
    explicit SyncState(EventLog& log);
    SyncState(const SyncState&) = delete;
    SyncState& operator=(const SyncState&) = delete;

    /// Applies in order; each instruction is validated before it mutates
    /// anything, and a rejection does not stop the rest.
    std::vector<ApplyResult> apply(const std::vector<SyncInstruction>& instructions,
                                   const std::string& origin);

    /// Runs `fn(Registry&)` under the facade lock and wakes waiters.
    template <class F>
    decltype(auto) mutate(F&& fn) {
        struct Notify {
            SyncState* self;
            ~Notify() { self->notify(); }
        } notify{this};
        std::lock_guard lock(mutex_);
        return fn(registry_);
    }

    /// Runs `fn(const Registry&)` under the lock without waking waiters.
    template <class F>
    decltype(auto) read(F&& fn) const {
        std::lock_guard lock(mutex_);
        return fn(static_cast<const Registry&>(registry_));
    }

    json snapshot() const;

    /// Blocks until another mutation happens after `version` or timeout.
    std::uint64_t wait_change(std::uint64_t version, std::chrono::milliseconds timeout) const;
    std::uint64_t version() const;
    void notify();

    /// Tool servers an agent may be granted.
    void set_tool_known(ToolKnown fn) { tool_known_ = std::move(fn); }
    const ToolKnown& tool_known() const { return tool_known_; }

    /// Called after apply() returns for every agent created through it.
    void set_on_agent_created(std::function<void(const std::string&)> fn) {
        on_agent_created_ = std::move(fn);
    }

    /// Runs the creation hook for agents made by apply_one calls.
    void fire_agent_created(const std::vector<std::string>& ids) {
        if (!on_agent_created_) return;
        for (const auto& id : ids) on_agent_created_(id);
    }

    /// Replies beyond this chain length are forced to need_reply=false.
    void set_max_dialogue_depth(int depth) { max_dialogue_depth_ = depth; }
    int max_dialogue_depth() const { return max_dialogue_depth_; }

    EventLog& log() { return log_; }

    /// Lock-held variant used by callers already inside mutate().
    ApplyResult apply_one(Registry& registry, const SyncInstruction& instruction,
                          const std::string& origin, std::vector<std::string>& created_agents);

private:
    EventLog& log_;
    mutable std::mutex mutex_;
    Registry registry_;

    mutable std::mutex version_mutex_;
    mutable std::condition_variable version_cv_;
    std::uint64_t version_{0};

    ToolKnown tool_known_;
    std::function<void(const std::string&)> on_agent_created_;
    int max_dialogue_depth_{16};
};

/// Appends a Planning step, carrying the stage objective and the agent's
/// sub-goal, to every agent the stage allocates.
void seed_stage(Registry& registry, const std::string& stage_id);

}  // namespace mas
