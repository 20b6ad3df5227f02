#include "mas/agent_config.hpp"

#include "mas/memory.hpp"

namespace mas {

const std::set<std::string>& known_skills() {
    static const std::set<std::string> skills{
        "planning",     "reflection",  "summary",         "instruction_generation", "think",
        "quick_think",  "send_message", "process_message", "task_manager",           "agent_manager",
        "ask_info",     "tool_decision", "decision"};
    return skills;
}

const std::set<std::string>& baseline_skills() {
    static const std::set<std::string> skills{"send_message", "process_message"};
    return skills;
}

bool requires_stage(std::string_view skill) {
    return skill == "planning" || skill == "reflection" || skill == "summary";
}

AgentState agent_from_config(const json& config, const ToolKnown& tool_known) {
    if (!config.is_object()) throw RegistrationError("agent config must be an object");
    AgentState a;
    a.name = config.value("name", std::string{});
    if (a.name.empty()) throw RegistrationError("agent config has no name");
    a.agent_id = config.value("id", std::string{});
    a.role = config.value("role", std::string{});
    a.profile = config.value("profile", std::string{});
    a.llm_config_ref = config.value("llm", std::string{"default"});

    if (config.contains("skills")) {
        for (const auto& s : config.at("skills")) {
            auto name = s.get<std::string>();
            if (!known_skills().contains(name))
                throw RegistrationError("agent '" + a.name + "': unknown skill '" + name + "'");
            a.skill_permissions.insert(name);
        }
    }
    a.skill_permissions.insert(baseline_skills().begin(), baseline_skills().end());

    if (config.contains("tools")) {
        for (const auto& t : config.at("tools")) {
            auto name = t.get<std::string>();
            if (!tool_known || !tool_known(name))
                throw RegistrationError("agent '" + a.name + "': tool server '" + name +
                                        "' is not configured");
            a.tool_permissions.insert(name);
        }
    }

    if (config.contains("persistent_memory")) {
        for (const auto& [key, value] : config.at("persistent_memory").items()) {
            if (!is_compact_iso(key))
                throw RegistrationError("agent '" + a.name + "': memory key '" + key +
                                        "' is not a compact ISO timestamp");
            a.persistent_memory.emplace(key, value.get<std::string>());
        }
    }
    return a;
}

json agent_config_of(const AgentState& agent) {
    return json{{"id", agent.agent_id},
                {"name", agent.name},
                {"role", agent.role},
                {"profile", agent.profile},
                {"llm", agent.llm_config_ref},
                {"skills", agent.skill_permissions},
                {"tools", agent.tool_permissions},
                {"persistent_memory", agent.persistent_memory}};
}

}  // namespace mas
