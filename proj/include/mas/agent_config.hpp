#pragma once

#include <functional>
#include <set>
#include <string>

#include "mas/types.hpp"

namespace mas {

/// The thirteen LLM-driven skills a step may route to.
const std::set<std::string>& known_skills();

/// Skills every agent holds so that receive() can always append its
/// message-handling step.
const std::set<std::string>& baseline_skills();

/// Skills whose steps must belong to a real stage.
bool requires_stage(std::string_view skill);

using ToolKnown = std::function<bool(const std::string&)>;

/// Builds an AgentState from a configuration document:
///   {id?, name, role, profile, llm, skills: [...], tools: [...], persistent_memory?}
/// Unknown skills, unconfigured tool servers and a missing name are errors.
AgentState agent_from_config(const json& config, const ToolKnown& tool_known);

/// Inverse of agent_from_config for the inherent attributes (no queue).
json agent_config_of(const AgentState& agent);

}  // namespace mas
