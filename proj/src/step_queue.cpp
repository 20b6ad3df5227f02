#include "mas/step_queue.hpp"

#include <algorithm>

#include "mas/registry.hpp"

namespace mas {

namespace {

std::vector<StepState> materialize(Registry& registry, const AgentState& agent,
                                   std::span<const StepDraft> drafts, const StepState* origin) {
    for (const auto& d : drafts) {
        if (!agent.permits(d.executor, d.step_type))
            throw PermissionError("agent " + agent.agent_id + " lacks permission for " +
                                  std::string(to_string(d.step_type)) + " '" + d.executor + "'");
    }
    std::vector<StepState> steps;
    steps.reserve(drafts.size());
    for (const auto& d : drafts) {
        StepState s;
        s.step_id = registry.next_id("step");
        s.agent_id = agent.agent_id;
        s.task_id = d.task_id ? *d.task_id : (origin ? origin->task_id : std::string{});
        s.stage_id = d.stage_id ? *d.stage_id
                                : (origin ? origin->stage_id : std::string{kNoStage});
        s.step_intent = d.step_intent;
        s.step_type = d.step_type;
        s.executor = d.executor;
        s.text_content = d.text_content;
        s.instruction_content = d.instruction_content;
        steps.push_back(std::move(s));
    }
    return steps;
}

std::vector<std::string> ids_of(const std::vector<StepState>& steps) {
    std::vector<std::string> ids;
    for (const auto& s : steps) ids.push_back(s.step_id);
    return ids;
}

}  // namespace

std::vector<std::string> append_steps(Registry& registry, AgentState& agent,
                                      std::span<const StepDraft> drafts, const StepState* origin) {
    auto steps = materialize(registry, agent, drafts, origin);
    auto ids = ids_of(steps);
    for (auto& s : steps) agent.steps.todo.push_back(std::move(s));
    return ids;
}

std::vector<std::string> insert_steps(Registry& registry, AgentState& agent,
                                      std::span<const StepDraft> drafts, const StepState* origin) {
    auto steps = materialize(registry, agent, drafts, origin);
    auto ids = ids_of(steps);
    agent.steps.todo.insert(agent.steps.todo.begin(), std::make_move_iterator(steps.begin()),
                            std::make_move_iterator(steps.end()));
    return ids;
}

std::size_t release_stage_steps(AgentState& agent, std::string_view stage_id) {
    return std::erase_if(agent.steps.todo,
                         [&](const StepState& s) { return s.stage_id == stage_id; });
}

std::size_t release_task_steps(AgentState& agent, std::string_view task_id) {
    return std::erase_if(agent.steps.todo, [&](const StepState& s) { return s.task_id == task_id; });
}

void acquire_locks(AgentState& agent, std::span<const std::string> wait_ids) {
    for (const auto& id : wait_ids) {
        if (agent.step_locks.contains(id))
            throw ProtocolError("wait id '" + id + "' already held by " + agent.agent_id);
    }
    agent.step_locks.insert(wait_ids.begin(), wait_ids.end());
    agent.refresh_working_state();
}

bool release_lock(AgentState& agent, const std::string& wait_id) {
    if (agent.step_locks.erase(wait_id) == 0) return false;
    agent.refresh_working_state();
    return true;
}

}  // namespace mas
