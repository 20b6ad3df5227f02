#pragma once

#include <string>
#include <vector>

#include "mas/executor.hpp"
#include "mas/sync_state.hpp"

namespace mas {

enum class ActionKind { executed, idle, blocked, paused, missing };

std::string_view to_string(ActionKind kind);

struct ActionReport {
    ActionKind kind{ActionKind::idle};
    std::string agent_id;
    std::string step_id;
    std::string executor;
    StepStatus status{StepStatus::init};
    std::vector<std::string> sync_kinds;
    std::string error;
};

/// One action of the agent loop: take the head step, run its executor
/// outside the facade lock, then apply the output and the step's sync
/// instructions in a single locked section.
ActionReport next_action(SyncState& sync, const std::string& agent_id, const Services& services);

}  // namespace mas
