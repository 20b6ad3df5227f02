#include "mas/types.hpp"

#include <algorithm>

namespace mas {

std::string_view to_string(RunStatus s) {
    switch (s) {
        case RunStatus::init: return "init";
        case RunStatus::running: return "running";
        case RunStatus::finished: return "finished";
        case RunStatus::failed: return "failed";
    }
    return "unknown";
}

std::string_view to_string(StepStatus s) {
    switch (s) {
        case StepStatus::init: return "init";
        case StepStatus::pending: return "pending";
        case StepStatus::running: return "running";
        case StepStatus::finished: return "finished";
        case StepStatus::failed: return "failed";
    }
    return "unknown";
}

std::string_view to_string(StepType t) {
    return t == StepType::skill ? "skill" : "tool";
}

std::string_view to_string(WorkingState w) {
    switch (w) {
        case WorkingState::idle: return "idle";
        case WorkingState::working: return "working";
        case WorkingState::waiting: return "waiting";
    }
    return "unknown";
}

std::string_view to_string(MessageKind k) {
    switch (k) {
        case MessageKind::agent: return "agent";
        case MessageKind::tool_result: return "tool_result";
        case MessageKind::system_info: return "system_info";
    }
    return "unknown";
}

RunStatus run_status_from(std::string_view s) {
    if (s == "init") return RunStatus::init;
    if (s == "running") return RunStatus::running;
    if (s == "finished") return RunStatus::finished;
    if (s == "failed") return RunStatus::failed;
    throw Error("unknown status '" + std::string(s) + "'");
}

StepType step_type_from(std::string_view s) {
    if (s == "skill") return StepType::skill;
    if (s == "tool") return StepType::tool;
    throw Error("unknown step type '" + std::string(s) + "'");
}

MessageKind message_kind_from(std::string_view s) {
    if (s == "agent") return MessageKind::agent;
    if (s == "tool_result") return MessageKind::tool_result;
    if (s == "system_info") return MessageKind::system_info;
    throw Error("unknown message kind '" + std::string(s) + "'");
}

bool AgentState::permits(const std::string& executor, StepType type) const {
    const auto& perms = type == StepType::skill ? skill_permissions : tool_permissions;
    return perms.contains(executor);
}

void AgentState::refresh_working_state() {
    if (!step_locks.empty())
        working_state = WorkingState::waiting;
    else if (steps.current)
        working_state = WorkingState::working;
    else
        working_state = WorkingState::idle;
}

bool StageState::complete() const {
    return std::all_of(agent_allocation.begin(), agent_allocation.end(), [&](const auto& kv) {
        return completion_summaries.contains(kv.first);
    });
}

bool TaskState::has_member(std::string_view agent_id) const {
    return std::find(agent_ids.begin(), agent_ids.end(), agent_id) != agent_ids.end();
}

json to_json(const StepState& s) {
    json j{{"step_id", s.step_id},
           {"task_id", s.task_id},
           {"stage_id", s.stage_id},
           {"agent_id", s.agent_id},
           {"step_intent", s.step_intent},
           {"step_type", to_string(s.step_type)},
           {"executor", s.executor},
           {"text_content", s.text_content},
           {"instruction_content", s.instruction_content},
           {"status", to_string(s.status)}};
    j["execute_result"] = s.execute_result ? json(*s.execute_result) : json();
    return j;
}

json to_json(const StepDraft& d) {
    json j{{"step_intent", d.step_intent},
           {"type", to_string(d.step_type)},
           {"executor", d.executor},
           {"text_content", d.text_content}};
    if (!d.instruction_content.is_null()) j["instruction_content"] = d.instruction_content;
    if (d.task_id) j["task_id"] = *d.task_id;
    if (d.stage_id) j["stage_id"] = *d.stage_id;
    return j;
}

json to_json(const Message& m) {
    json j{{"message_id", m.message_id},
           {"task_id", m.task_id},
           {"sender_id", m.sender_id},
           {"receiver_ids", m.receiver_ids},
           {"content", m.content},
           {"stage_relative", m.stage_relative},
           {"need_reply", m.need_reply},
           {"delivered", m.delivered},
           {"kind", to_string(m.kind)},
           {"depth", m.depth}};
    j["waiting"] = m.waiting ? json(*m.waiting) : json();
    j["return_waiting_id"] = m.return_waiting_id ? json(*m.return_waiting_id) : json();
    return j;
}

json to_json(const AgentState& a) {
    json todo = json::array();
    for (const auto& s : a.steps.todo) todo.push_back(to_json(s));
    json history = json::array();
    for (const auto& s : a.steps.history) history.push_back(to_json(s));
    return json{{"agent_id", a.agent_id},
                {"name", a.name},
                {"role", a.role},
                {"profile", a.profile},
                {"llm_config_ref", a.llm_config_ref},
                {"skill_permissions", a.skill_permissions},
                {"tool_permissions", a.tool_permissions},
                {"persistent_memory", a.persistent_memory},
                {"step_queue",
                 {{"todo", todo},
                  {"current", a.steps.current ? to_json(*a.steps.current) : json()},
                  {"history", history}}},
                {"step_locks", a.step_locks},
                {"task_refs", a.task_refs},
                {"stage_refs", a.stage_refs},
                {"working_state", to_string(a.working_state)},
                {"paused", a.paused}};
}

json to_json(const StageState& s) {
    return json{{"stage_id", s.stage_id},
                {"task_id", s.task_id},
                {"objective", s.objective},
                {"agent_allocation", s.agent_allocation},
                {"completion_summaries", s.completion_summaries},
                {"status", to_string(s.status)}};
}

json to_json(const TaskState& t) {
    json queue = json::array();
    for (const auto& m : t.comm_queue) queue.push_back(to_json(m));
    json j{{"task_id", t.task_id},
           {"instruction", t.instruction},
           {"manager_id", t.manager_id},
           {"agent_ids", t.agent_ids},
           {"stage_ids", t.stage_ids},
           {"comm_queue", queue},
           {"status", to_string(t.status)},
           {"shared_info", t.shared_info}};
    j["current_stage_index"] = t.current_stage_index ? json(*t.current_stage_index) : json();
    return j;
}

StepDraft step_draft_from_json(const json& j) {
    if (!j.is_object()) throw Error("step draft must be an object");
    StepDraft d;
    d.step_intent = j.value("step_intent", std::string{});
    d.step_type = step_type_from(j.value("type", std::string{"skill"}));
    d.executor = j.value("executor", std::string{});
    if (d.executor.empty()) throw Error("step draft has no executor");
    d.text_content = j.value("text_content", std::string{});
    if (j.contains("instruction_content")) d.instruction_content = j.at("instruction_content");
    if (j.contains("task_id")) d.task_id = j.at("task_id").get<std::string>();
    if (j.contains("stage_id")) d.stage_id = j.at("stage_id").get<std::string>();
    return d;
}

Message message_from_json(const json& j) {
    Message m;
    m.message_id = j.value("message_id", std::string{});
    m.task_id = j.value("task_id", std::string{});
    m.sender_id = j.value("sender_id", std::string{});
    m.receiver_ids = j.value("receiver_ids", std::vector<std::string>{});
    m.content = j.value("content", std::string{});
    m.stage_relative = j.value("stage_relative", std::string{kNoStage});
    m.need_reply = j.value("need_reply", false);
    if (j.contains("waiting") && !j.at("waiting").is_null())
        m.waiting = j.at("waiting").get<std::vector<std::string>>();
    if (j.contains("return_waiting_id") && !j.at("return_waiting_id").is_null())
        m.return_waiting_id = j.at("return_waiting_id").get<std::string>();
    m.delivered = j.value("delivered", false);
    m.kind = message_kind_from(j.value("kind", std::string{"agent"}));
    m.depth = j.value("depth", 0);
    return m;
}

}  // namespace mas
