#pragma once

#include <span>
#include <string>
#include <vector>

#include "mas/types.hpp"

namespace mas {

class Registry;

/// Materializes drafts as init steps at the tail of the agent's todo queue,
/// in draft order. Any unpermitted executor rejects the whole batch.
std::vector<std::string> append_steps(Registry& registry, AgentState& agent,
                                      std::span<const StepDraft> drafts,
                                      const StepState* origin = nullptr);

/// Same as append_steps but places the batch ahead of every pending step.
std::vector<std::string> insert_steps(Registry& registry, AgentState& agent,
                                      std::span<const StepDraft> drafts,
                                      const StepState* origin = nullptr);

/// Drops pending steps tagged with the stage. History and a running step are
/// left alone.
std::size_t release_stage_steps(AgentState& agent, std::string_view stage_id);

/// Drops pending steps belonging to the task.
std::size_t release_task_steps(AgentState& agent, std::string_view task_id);

void acquire_locks(AgentState& agent, std::span<const std::string> wait_ids);

/// Returns false (and changes nothing) for an id the agent does not hold.
bool release_lock(AgentState& agent, const std::string& wait_id);

}  // namespace mas
