#pragma once

#include <memory>
#include <string>
#include <vector>

#include "mas/agent_config.hpp"
#include "mas/backend.hpp"
#include "mas/orchestrator.hpp"
#include "mas/registry.hpp"
#include "mas/scenario.hpp"

#ifndef MAS_SOURCE_DIR
#define MAS_SOURCE_DIR "."
#endif

namespace testsupport {

using mas::json;

inline std::string source_path(const std::string& rel) { return std::string(MAS_SOURCE_DIR) + "/" + rel; }

inline std::string ctl(const json& j) { return "<control>" + j.dump() + "</control>"; }
inline std::string plan(const json& j) { return "<planned_step>" + j.dump() + "</planned_step>"; }
inline std::string msg(const json& j) { return "<message>" + j.dump() + "</message>"; }
inline std::string mem(const json& j) { return "<persistent_memory>" + j.dump() + "</persistent_memory>"; }

inline json step(const std::string& executor, const std::string& intent, const std::string& text = "",
                 const std::string& type = "skill") {
    return json{{"executor", executor}, {"step_intent", intent}, {"text_content", text.empty() ? intent : text},
                {"type", type}};
}

inline json rule(const std::string& skill, const std::string& match, const std::string& reply,
                 const std::string& agent = "") {
    json r{{"skill", skill}, {"match", match}, {"reply", reply}};
    if (!agent.empty()) r["agent"] = agent;
    return r;
}

inline mas::AgentState agent(const std::string& name, std::vector<std::string> skills,
                             std::vector<std::string> tools = {}) {
    json cfg{{"name", name}, {"role", name}, {"skills", skills}, {"tools", tools}};
    return mas::agent_from_config(cfg, [](const std::string&) { return true; });
}

/// Registry wired to its own log.
struct World {
    mas::EventLog log;
    mas::Registry reg{&log};

    std::string add(const std::string& name, std::vector<std::string> skills = {"planning", "think"},
                    std::vector<std::string> tools = {}) {
        return reg.add_agent(agent(name, std::move(skills), std::move(tools))).agent_id;
    }
};

/// Orchestrator with a scripted default backend built from `rules`.
inline std::unique_ptr<mas::Orchestrator> scripted(const json& rules, const std::string& fallback = "ok") {
    auto orch = std::make_unique<mas::Orchestrator>();
    orch->set_backend("default", mas::ScriptedBackend::from_json(rules, fallback));
    return orch;
}

inline std::size_t count_events(const std::vector<json>& log, const std::string& type, const json& where = nullptr) {
    std::size_t n = 0;
    for (const auto& e : log)
        if (e.value("type", "") == type && mas::event_matches(e, where)) ++n;
    return n;
}

inline std::vector<std::string> bundled_scenarios() {
    return {"two_agent_handoff", "broadcast_wait", "long_tail_kv", "human_intervention", "agent_creation",
            "parallel_tasks"};
}

}  // namespace testsupport
