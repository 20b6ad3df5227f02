#pragma once

#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "mas/backend.hpp"
#include "mas/memory.hpp"
#include "mas/sync_state.hpp"
#include "mas/types.hpp"

namespace mas {

class ToolClient;
class PromptLibrary;

/// Rewrites the instruction_content of a pending step (instruction generation).
struct StepUpdate {
    std::string step_id;
    json instruction_content;
};

struct ExecutorOutput {
    std::vector<StepDraft> append_steps;
    std::vector<StepDraft> insert_steps;  // placed ahead of all pending steps
    std::vector<SyncInstruction> sync_instructions;
    std::vector<MemoryOp> memory_ops;
    std::string result_text;
    std::optional<StepUpdate> next_step_update;
    bool failed{false};
    std::string error;
    std::vector<std::string> warnings;
};

/// Everything an executor may look at, copied out of the registry so the
/// executor runs without holding the facade lock.
struct ExecutionContext {
    StepState step;
    AgentState agent;                   // queue included, history left empty
    std::vector<StepState> history;     // same stage (or same task for no_stage steps)
    std::optional<StepState> next_todo;
    std::optional<TaskState> task;
    std::optional<StageState> stage;
    std::vector<json> task_members;     // {agent_id, name, role} per member
};

struct Services {
    std::function<std::shared_ptr<Backend>(const AgentState&)> backend_for;
    ToolClient* tools{nullptr};
    const PromptLibrary* prompts{nullptr};
    MemoryClock* clock{nullptr};
    int max_retries{2};
};

/// Routes a skill step to its executor. Backend or parse failures are
/// retried up to services.max_retries times.
ExecutorOutput run_skill(const ExecutionContext& ctx, const Services& services);

/// Executes a tool step: either lists the server's capabilities or calls one.
/// The result goes back to the agent as a tool_result message.
ExecutorOutput run_tool_step(const ExecutionContext& ctx, const Services& services);

}  // namespace mas
