#pragma once

#include <optional>
#include <string>
#include <vector>

#include "mas/types.hpp"

namespace mas {

struct InspectQuery {
    std::optional<std::string> agent;
    std::optional<std::string> task;
    std::optional<std::string> executor;
};

/// Events that mention the agent (as actor, sender or receiver), the task,
/// and the executor; unset filters match everything.
std::vector<json> filter_events(const std::vector<json>& log, const InspectQuery& query);

/// {actions, failed_steps, messages_delivered,
///  stages: {stage_id: {task_id, steps, by_agent{}}},
///  lock_waits: [{agent_id, wait_id, acquired_tick, released_tick, ticks}],
///  open_locks: [...], interleaving: {agent_id: switches}}
json compute_stats(const std::vector<json>& log);

}  // namespace mas
