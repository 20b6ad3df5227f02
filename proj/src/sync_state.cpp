#include "mas/sync_state.hpp"

#include <algorithm>

#include "mas/messaging.hpp"
#include "mas/step_queue.hpp"

namespace mas {

namespace {

constexpr std::pair<SyncKind, std::string_view> kKindNames[] = {
    {SyncKind::send_message, "send_message"},
    {SyncKind::update_stage_completion, "update_stage_completion"},
    {SyncKind::finish_stage, "finish_stage"},
    {SyncKind::next_stage, "next_stage"},
    {SyncKind::add_stage, "add_stage"},
    {SyncKind::update_task, "update_task"},
    {SyncKind::finish_task, "finish_task"},
    {SyncKind::create_agent, "create_agent"},
    {SyncKind::modify_agent, "modify_agent"},
    {SyncKind::query_info, "query_info"},
};

bool privileged(const std::string& origin) {
    return origin == kHumanOperator || origin == kSystemSender;
}

void require_skill(const Registry& r, const std::string& origin, const char* skill, const char* label) {
    if (privileged(origin)) return;
    const auto* agent = r.find_agent(origin);
    if (!agent) throw RegistrationError("unknown origin agent '" + origin + "'");
    if (!agent->skill_permissions.contains(skill))
        throw PermissionError(std::string("missing ") + label + " permission");
}

std::string require_string(const json& p, const char* key) {
    if (!p.contains(key) || !p.at(key).is_string() || p.at(key).get<std::string>().empty())
        throw Error(std::string("payload needs string '") + key + "'");
    return p.at(key).get<std::string>();
}

TaskState& require_task(Registry& r, const json& p) {
    auto id = require_string(p, "task_id");
    auto* t = r.find_task(id);
    if (!t) throw RegistrationError("unknown task '" + id + "'");
    return *t;
}

void require_member(const TaskState& t, const std::string& origin) {
    if (!privileged(origin) && !t.has_member(origin))
        throw ProtocolError(origin + " is not a member of " + t.task_id);
}

std::string resolve_receiver(const Registry& r, const std::string& name) {
    if (name == kHumanOperator) return name;
    return r.resolve_agent(name);
}

/// Starts the next stage or finishes the task; returns a description.
json advance(Registry& r, const std::string& task_id) {
    auto next = r.advance_stage(task_id);
    if (!next) return json{{"task_finished", task_id}};
    seed_stage(r, *next);
    return json{{"stage_started", *next}};
}

std::vector<std::string> string_list(const json& p, const char* key) {
    if (!p.contains(key)) return {};
    if (!p.at(key).is_array()) throw Error(std::string("payload '") + key + "' must be a list");
    return p.at(key).get<std::vector<std::string>>();
}

}  // namespace

std::string_view to_string(SyncKind kind) {
    for (auto [k, n] : kKindNames) {
        if (k == kind) return n;
    }
    return "unknown";
}

std::optional<SyncKind> sync_kind_from(std::string_view name) {
    for (auto [k, n] : kKindNames) {
        if (n == name) return k;
    }
    return std::nullopt;
}

SyncState::SyncState(EventLog& log) : log_(log), registry_(&log) {}

json SyncState::snapshot() const {
    std::lock_guard lock(mutex_);
    return registry_.snapshot();
}

std::uint64_t SyncState::version() const {
    std::lock_guard lock(version_mutex_);
    return version_;
}

void SyncState::notify() {
    {
        std::lock_guard lock(version_mutex_);
        ++version_;
    }
    version_cv_.notify_all();
}

std::uint64_t SyncState::wait_change(std::uint64_t version, std::chrono::milliseconds timeout) const {
    std::unique_lock lock(version_mutex_);
    version_cv_.wait_for(lock, timeout, [&] { return version_ != version; });
    return version_;
}

std::vector<ApplyResult> SyncState::apply(const std::vector<SyncInstruction>& instructions,
                                          const std::string& origin) {
    std::vector<ApplyResult> results;
    std::vector<std::string> created;
    mutate([&](Registry& r) {
        for (const auto& ins : instructions) results.push_back(apply_one(r, ins, origin, created));
    });
    if (on_agent_created_) {
        for (const auto& id : created) on_agent_created_(id);
    }
    return results;
}

ApplyResult SyncState::apply_one(Registry& r, const SyncInstruction& ins, const std::string& origin,
                                 std::vector<std::string>& created_agents) {
    ApplyResult res{ins.kind, true, {}, json::object()};
    const json& p = ins.payload;
    try {
        if (!p.is_object()) throw Error("payload must be an object");
        switch (ins.kind) {
            case SyncKind::send_message: {
                Message m;
                m.task_id = p.value("task_id", std::string{});
                m.sender_id = origin;
                for (const auto& name : string_list(p, "receivers"))
                    m.receiver_ids.push_back(resolve_receiver(r, name));
                m.content = p.value("content", std::string{});
                m.need_reply = p.value("need_reply", false);
                m.stage_relative = p.value("stage_relative", std::string{kNoStage});
                m.kind = message_kind_from(p.value("kind", std::string{"agent"}));
                m.depth = p.value("depth", 0);
                if (p.contains("return_waiting_id") && p.at("return_waiting_id").is_string())
                    m.return_waiting_id = p.at("return_waiting_id").get<std::string>();
                bool waiting = p.value("waiting", false) && m.need_reply;
                if (m.need_reply && m.depth >= max_dialogue_depth_) {
                    m.need_reply = false;
                    waiting = false;
                    res.data["depth_guard"] = true;
                    r.emit("dialogue_depth_guard", {{"origin", origin}, {"depth", m.depth}});
                }
                if (waiting) {
                    // validate with placeholders so a rejection consumes no ids
                    Message probe = m;
                    probe.waiting = std::vector<std::string>(m.receiver_ids.size(), "");
                    validate_message(r, probe);
                    m.waiting = make_wait_ids(r, m.receiver_ids);
                }
                m.message_id = r.next_id("msg");
                enqueue(r, m);
                res.data["message_id"] = m.message_id;
                if (m.waiting) res.data["waiting"] = *m.waiting;
                break;
            }
            case SyncKind::update_stage_completion: {
                auto sid = require_string(p, "stage_id");
                auto* stage = r.find_stage(sid);
                if (!stage) throw RegistrationError("unknown stage '" + sid + "'");
                if (stage->status != RunStatus::running)
                    throw SequencingError("stage " + sid + " is not running");
                if (!privileged(origin) && !stage->agent_allocation.contains(origin))
                    throw PermissionError(origin + " is not allocated to " + sid);
                stage->completion_summaries[origin] = p.value("summary", std::string{});
                r.emit("stage_completion", {{"stage_id", sid}, {"agent_id", origin}});
                break;
            }
            case SyncKind::finish_stage: {
                auto sid = require_string(p, "stage_id");
                auto* stage = r.find_stage(sid);
                if (!stage) throw RegistrationError("unknown stage '" + sid + "'");
                const bool force = p.value("force", false);
                if (force && origin != kHumanOperator)
                    throw PermissionError("only the operator may force a stage to end");
                if (!privileged(origin) && !stage->agent_allocation.contains(origin))
                    require_skill(r, origin, "task_manager", "Task Manager");
                if (stage->status != RunStatus::running)
                    throw SequencingError("stage " + sid + " is not running");
                if (!stage->complete()) {
                    if (force) {
                        for (const auto& [aid, goal] : stage->agent_allocation)
                            stage->completion_summaries.try_emplace(aid, "(ended by operator)");
                    } else if (p.value("if_complete", false)) {
                        res.data["deferred"] = true;
                        break;
                    } else {
                        throw SequencingError("stage " + sid + " is missing completion summaries");
                    }
                }
                const std::string tid = stage->task_id;
                r.finish_stage(sid);
                res.data["advance"] = advance(r, tid);
                break;
            }
            case SyncKind::next_stage: {
                require_skill(r, origin, "task_manager", "Task Manager");
                auto& task = require_task(r, p);
                require_member(task, origin);
                res.data["advance"] = advance(r, task.task_id);
                break;
            }
            case SyncKind::add_stage: {
                require_skill(r, origin, "task_manager", "Task Manager");
                auto& task = require_task(r, p);
                require_member(task, origin);
                if (!p.contains("allocation") || !p.at("allocation").is_object())
                    throw Error("payload needs object 'allocation'");
                std::map<std::string, std::string> allocation;
                for (const auto& [name, goal] : p.at("allocation").items())
                    allocation[r.resolve_agent(name)] = goal.is_string() ? goal.get<std::string>() : goal.dump();
                auto& stage = r.add_stage(task.task_id, p.value("objective", std::string{}), std::move(allocation));
                res.data["stage_id"] = stage.stage_id;
                break;
            }
            case SyncKind::update_task: {
                require_skill(r, origin, "task_manager", "Task Manager");
                auto& task = require_task(r, p);
                require_member(task, origin);
                std::optional<RunStatus> status;
                if (p.contains("status")) {
                    status = run_status_from(p.at("status").get<std::string>());
                    if (*status != RunStatus::failed)
                        throw Error("update_task can only set status 'failed'");
                }
                if (p.contains("shared_info") && !p.at("shared_info").is_object())
                    throw Error("shared_info must be an object");
                if (p.contains("instruction")) task.instruction = p.at("instruction").get<std::string>();
                if (p.contains("shared_info")) {
                    for (const auto& [k, v] : p.at("shared_info").items())
                        task.shared_info[k] = v.is_string() ? v.get<std::string>() : v.dump();
                }
                if (status) r.fail_task(task.task_id, p.value("reason", std::string{"failed by manager"}));
                break;
            }
            case SyncKind::finish_task: {
                require_skill(r, origin, "task_manager", "Task Manager");
                auto& task = require_task(r, p);
                require_member(task, origin);
                for (const auto& sid : task.stage_ids) {
                    if (r.find_stage(sid)->status != RunStatus::finished)
                        throw SequencingError("task " + task.task_id + " has unfinished stage " + sid);
                }
                const std::string tid = task.task_id;
                task.status = RunStatus::finished;
                r.emit("task_status", {{"task_id", tid}, {"status", "finished"}});
                r.clear_task(tid, RunStatus::finished);
                break;
            }
            case SyncKind::create_agent: {
                require_skill(r, origin, "agent_manager", "Agent Manager");
                if (!p.contains("config")) throw Error("payload needs 'config'");
                auto agent = agent_from_config(p.at("config"), tool_known_);
                std::optional<std::string> join;
                if (p.contains("join_task") && p.at("join_task").is_string()) {
                    join = p.at("join_task").get<std::string>();
                    const auto* task = r.find_task(*join);
                    if (!task) throw RegistrationError("unknown task '" + *join + "'");
                    require_member(*task, origin);
                }
                auto& stored = r.add_agent(std::move(agent));
                if (join) r.join_task(*join, stored.agent_id);
                created_agents.push_back(stored.agent_id);
                res.data["agent_id"] = stored.agent_id;
                break;
            }
            case SyncKind::modify_agent: {
                require_skill(r, origin, "agent_manager", "Agent Manager");
                auto* agent = r.find_agent(r.resolve_agent(require_string(p, "agent")));
                auto add_skills = string_list(p, "add_skills");
                auto remove_skills = string_list(p, "remove_skills");
                auto add_tools = string_list(p, "add_tools");
                auto remove_tools = string_list(p, "remove_tools");
                for (const auto& s : add_skills) {
                    if (!known_skills().contains(s)) throw RegistrationError("unknown skill '" + s + "'");
                }
                for (const auto& s : remove_skills) {
                    if (baseline_skills().contains(s))
                        throw PermissionError("skill '" + s + "' cannot be removed");
                }
                for (const auto& t : add_tools) {
                    if (!tool_known_ || !tool_known_(t))
                        throw RegistrationError("tool server '" + t + "' is not configured");
                }
                if (p.contains("role")) agent->role = p.at("role").get<std::string>();
                if (p.contains("profile")) agent->profile = p.at("profile").get<std::string>();
                if (p.contains("llm")) agent->llm_config_ref = p.at("llm").get<std::string>();
                for (const auto& s : add_skills) agent->skill_permissions.insert(s);
                for (const auto& s : remove_skills) agent->skill_permissions.erase(s);
                for (const auto& t : add_tools) agent->tool_permissions.insert(t);
                for (const auto& t : remove_tools) agent->tool_permissions.erase(t);
                res.data["agent_id"] = agent->agent_id;
                if (!add_tools.empty()) created_agents.push_back(agent->agent_id);  // sessions refresh
                break;
            }
            case SyncKind::query_info: {
                auto& task = require_task(r, p);
                if (!task.has_member(origin))
                    throw ProtocolError(origin + " cannot query foreign task " + task.task_id);
                const auto query = require_string(p, "query");
                const auto target = p.value("target", std::string{});
                std::string content;
                if (query == "task") {
                    content = "Task " + task.task_id + " status: " + std::string(to_string(task.status)) +
                              "\ninstruction: " + task.instruction + "\nstages:";
                    for (const auto& sid : task.stage_ids) {
                        const auto* s = r.find_stage(sid);
                        content += "\n- " + sid + " [" + std::string(to_string(s->status)) + "] " + s->objective;
                    }
                    for (const auto& [k, v] : task.shared_info) content += "\ninfo " + k + ": " + v;
                } else if (query == "stage") {
                    std::string sid = target;
                    if (sid.empty() && task.current_stage_index) sid = task.stage_ids[*task.current_stage_index];
                    const auto* s = sid.empty() ? nullptr : r.find_stage(sid);
                    if (!s || s->task_id != task.task_id) {
                        content = "error: unknown stage '" + sid + "'";
                    } else {
                        content = "Stage " + sid + " status: " + std::string(to_string(s->status)) +
                                  "\nobjective: " + s->objective;
                        for (const auto& [aid, goal] : s->agent_allocation) content += "\n" + aid + ": " + goal;
                    }
                } else if (query == "agent") {
                    const AgentState* a = nullptr;
                    try {
                        a = r.find_agent(r.resolve_agent(target));
                    } catch (const RegistrationError&) {
                    }
                    if (!a) {
                        content = "error: unknown agent '" + target + "'";
                    } else {
                        content = "Agent " + a->agent_id + " (" + a->name + ")\nrole: " + a->role +
                                  "\nprofile: " + a->profile +
                                  "\nworking_state: " + std::string(to_string(a->working_state));
                    }
                } else {
                    throw Error("unknown query '" + query + "'");
                }
                Message m;
                m.task_id = task.task_id;
                m.sender_id = std::string(kSystemSender);
                m.receiver_ids = {origin};
                m.content = std::move(content);
                m.kind = MessageKind::system_info;
                enqueue(r, m);
                break;
            }
        }
    } catch (const std::exception& e) {
        res.ok = false;
        res.reason = e.what();
    }
    json entry{{"origin", origin}, {"kind", to_string(ins.kind)}, {"ok", res.ok}};
    if (!res.ok) entry["reason"] = res.reason;
    if (!res.data.empty()) entry["data"] = res.data;
    r.emit("sync", std::move(entry));
    return res;
}

void seed_stage(Registry& registry, const std::string& stage_id) {
    const auto* stage = registry.find_stage(stage_id);
    if (!stage) return;
    const auto* task = registry.find_task(stage->task_id);
    for (const auto& [aid, goal] : stage->agent_allocation) {
        auto* agent = registry.find_agent(aid);
        if (!agent) continue;
        StepDraft d;
        d.executor = "planning";
        d.step_intent = "Plan stage " + stage_id;
        d.task_id = stage->task_id;
        d.stage_id = stage_id;
        d.text_content = "Task: " + (task ? task->instruction : std::string{}) +
                         "\nStage objective: " + stage->objective + "\nYour goal: " + goal;
        try {
            append_steps(registry, *agent, std::span(&d, 1));
        } catch (const PermissionError& e) {
            registry.emit("stage_seed_skipped", {{"stage_id", stage_id}, {"agent_id", aid}, {"reason", e.what()}});
        }
    }
}

}  // namespace mas
