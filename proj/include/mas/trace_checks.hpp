#pragma once

#include <string>
#include <vector>

#include "mas/types.hpp"

namespace mas {

/// Log-level property checks over an event log (entries as written by
/// EventLog). Each returns the violations found; empty means the property holds.
struct TraceIssue {
    std::string check;
    std::string detail;
};

/// Per task, stage running intervals are disjoint and ordered.
std::vector<TraceIssue> check_stage_intervals(const std::vector<json>& log);

/// need_reply deliveries create send_message steps, the rest process_message
/// (tool results tool_decision); created steps run with that executor.
std::vector<TraceIssue> check_message_branching(const std::vector<json>& log);

/// No step starts on an agent while it holds wait locks.
std::vector<TraceIssue> check_lock_protocol(const std::vector<json>& log);

/// Per agent: instruction_generation -> tool -> tool_decision, repeated while
/// the decision is "continue", ending with "stop".
std::vector<TraceIssue> check_tool_grammar(const std::vector<json>& log);

/// Summary steps only follow a finished reflection of the same agent and stage.
std::vector<TraceIssue> check_summary_order(const std::vector<json>& log);

std::vector<TraceIssue> check_trace(const std::vector<json>& log);

}  // namespace mas
