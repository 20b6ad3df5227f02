#include "mas/registry.hpp"

#include <algorithm>

#include "mas/step_queue.hpp"

namespace mas {

std::string Registry::next_id(std::string_view prefix) {
    auto& c = counters_[std::string(prefix)];
    return std::string(prefix) + "-" + std::to_string(++c);
}

void Registry::emit(std::string type, json fields) const {
    if (log_) log_->append(std::move(type), std::move(fields));
}

AgentState& Registry::add_agent(AgentState agent) {
    if (agent.name.empty()) throw RegistrationError("agent config has no name");
    if (agent.name == kHumanOperator || agent.name == kSystemSender)
        throw RegistrationError("agent name '" + agent.name + "' is reserved");
    for (const auto& [id, a] : agents_) {
        if (a.name == agent.name)
            throw RegistrationError("duplicate agent name '" + agent.name + "'");
    }
    if (agent.agent_id.empty()) {
        do {
            agent.agent_id = next_id("agent");
        } while (agents_.contains(agent.agent_id));
    } else if (agents_.contains(agent.agent_id)) {
        throw RegistrationError("duplicate agent id '" + agent.agent_id + "'");
    }
    agent.refresh_working_state();
    const std::string id = agent.agent_id;
    agent_order_.push_back(id);
    auto& stored = agents_.emplace(id, std::move(agent)).first->second;
    emit("agent_registered", {{"agent_id", id}, {"name", stored.name}});
    return stored;
}

void Registry::deregister_agent(const std::string& agent_id) {
    auto it = agents_.find(agent_id);
    if (it == agents_.end()) throw RegistrationError("unknown agent '" + agent_id + "'");
    for (auto& [tid, t] : tasks_) std::erase(t.agent_ids, agent_id);
    for (auto& [sid, s] : stages_) {
        s.agent_allocation.erase(agent_id);
        s.completion_summaries.erase(agent_id);
    }
    std::erase_if(pending_waits_, [&](const auto& kv) { return kv.second.sender_id == agent_id; });
    agents_.erase(it);
    std::erase(agent_order_, agent_id);
    emit("agent_deregistered", {{"agent_id", agent_id}});
}

AgentState* Registry::find_agent(std::string_view agent_id) {
    auto it = agents_.find(std::string(agent_id));
    return it == agents_.end() ? nullptr : &it->second;
}

const AgentState* Registry::find_agent(std::string_view agent_id) const {
    auto it = agents_.find(std::string(agent_id));
    return it == agents_.end() ? nullptr : &it->second;
}

std::string Registry::resolve_agent(std::string_view id_or_name) const {
    if (agents_.contains(std::string(id_or_name))) return std::string(id_or_name);
    for (const auto& [id, a] : agents_) {
        if (a.name == id_or_name) return id;
    }
    throw RegistrationError("unknown agent '" + std::string(id_or_name) + "'");
}

TaskState& Registry::new_task(std::string instruction, const std::vector<std::string>& agent_ids,
                              std::string manager_id) {
    if (agent_ids.empty()) throw RegistrationError("task group is empty");
    std::vector<std::string> members;
    auto add_member = [&](const std::string& id) {
        if (!agents_.contains(id)) throw RegistrationError("unknown agent '" + id + "'");
        if (std::find(members.begin(), members.end(), id) == members.end()) members.push_back(id);
    };
    if (!manager_id.empty()) add_member(manager_id);
    for (const auto& id : agent_ids) add_member(id);

    TaskState task;
    task.task_id = next_id("task");
    task.instruction = std::move(instruction);
    task.manager_id = std::move(manager_id);
    task.agent_ids = members;
    for (const auto& id : members) agents_.at(id).task_refs.insert(task.task_id);
    const std::string tid = task.task_id;
    task_order_.push_back(tid);
    auto& stored = tasks_.emplace(tid, std::move(task)).first->second;
    emit("task_created", {{"task_id", tid}, {"agent_ids", members}, {"status", "init"}});
    return stored;
}

void Registry::join_task(const std::string& task_id, const std::string& agent_id) {
    auto* task = find_task(task_id);
    if (!task) throw RegistrationError("unknown task '" + task_id + "'");
    auto* agent = find_agent(agent_id);
    if (!agent) throw RegistrationError("unknown agent '" + agent_id + "'");
    if (task->has_member(agent_id)) return;
    task->agent_ids.push_back(agent_id);
    agent->task_refs.insert(task_id);
    emit("task_joined", {{"task_id", task_id}, {"agent_id", agent_id}});
}

StageState& Registry::add_stage(const std::string& task_id, std::string objective,
                                std::map<std::string, std::string> allocation) {
    auto* task = find_task(task_id);
    if (!task) throw RegistrationError("unknown task '" + task_id + "'");
    if (task->status == RunStatus::finished)
        throw SequencingError("task " + task_id + " is already finished");
    if (allocation.empty()) throw RegistrationError("stage allocates no agents");
    for (const auto& [agent_id, goal] : allocation) {
        if (!task->has_member(agent_id))
            throw RegistrationError("agent '" + agent_id + "' is not a member of " + task_id);
    }
    StageState stage;
    stage.stage_id = next_id("stage");
    stage.task_id = task_id;
    stage.objective = std::move(objective);
    stage.agent_allocation = std::move(allocation);
    for (const auto& [agent_id, goal] : stage.agent_allocation)
        agents_.at(agent_id).stage_refs.insert(stage.stage_id);
    task->stage_ids.push_back(stage.stage_id);
    const std::string sid = stage.stage_id;
    auto& stored = stages_.emplace(sid, std::move(stage)).first->second;
    emit("stage_status", {{"task_id", task_id}, {"stage_id", sid}, {"status", "init"}});
    return stored;
}

std::optional<std::string> Registry::advance_stage(const std::string& task_id) {
    auto* task = find_task(task_id);
    if (!task) throw RegistrationError("unknown task '" + task_id + "'");
    std::size_t next = 0;
    if (task->current_stage_index) {
        const auto& cur = stages_.at(task->stage_ids.at(*task->current_stage_index));
        if (cur.status == RunStatus::running || cur.status == RunStatus::init)
            throw SequencingError("stage " + cur.stage_id + " is not finished");
        next = *task->current_stage_index + 1;
    }
    if (next >= task->stage_ids.size()) {
        task->status = RunStatus::finished;
        emit("task_status", {{"task_id", task_id}, {"status", "finished"}});
        clear_task(task_id, RunStatus::finished);
        return std::nullopt;
    }
    auto& stage = stages_.at(task->stage_ids[next]);
    task->current_stage_index = next;
    stage.status = RunStatus::running;
    if (task->status != RunStatus::running) {
        task->status = RunStatus::running;
        emit("task_status", {{"task_id", task_id}, {"status", "running"}});
    }
    emit("stage_status", {{"task_id", task_id}, {"stage_id", stage.stage_id}, {"status", "running"}});
    return stage.stage_id;
}

void Registry::finish_stage(const std::string& stage_id) {
    auto* stage = find_stage(stage_id);
    if (!stage) throw RegistrationError("unknown stage '" + stage_id + "'");
    if (stage->status != RunStatus::running)
        throw SequencingError("stage " + stage_id + " is not running");
    if (!stage->complete())
        throw SequencingError("stage " + stage_id + " is missing completion summaries");
    stage->status = RunStatus::finished;
    emit("stage_status",
         {{"task_id", stage->task_id}, {"stage_id", stage_id}, {"status", "finished"}});
    for (const auto& [agent_id, goal] : stage->agent_allocation) {
        if (auto* agent = find_agent(agent_id)) {
            if (auto n = release_stage_steps(*agent, stage_id); n > 0)
                emit("steps_released", {{"agent_id", agent_id}, {"stage_id", stage_id}, {"count", n}});
        }
    }
}

void Registry::fail_task(const std::string& task_id, const std::string& reason) {
    auto* task = find_task(task_id);
    if (!task) throw RegistrationError("unknown task '" + task_id + "'");
    if (task->current_stage_index) {
        auto& stage = stages_.at(task->stage_ids.at(*task->current_stage_index));
        if (stage.status == RunStatus::running) {
            stage.status = RunStatus::failed;
            emit("stage_status", {{"task_id", task_id}, {"stage_id", stage.stage_id}, {"status", "failed"}});
            for (const auto& [agent_id, goal] : stage.agent_allocation) {
                if (auto* agent = find_agent(agent_id)) release_stage_steps(*agent, stage.stage_id);
            }
        }
    }
    task->status = RunStatus::failed;
    emit("task_status", {{"task_id", task_id}, {"status", "failed"}, {"reason", reason}});
}

Registry::ClearReport Registry::clear_task(const std::string& task_id, RunStatus outcome) {
    auto it = tasks_.find(task_id);
    if (it == tasks_.end()) throw RegistrationError("unknown task '" + task_id + "'");
    ClearReport report;
    const TaskState& task = it->second;
    for (const auto& sid : task.stage_ids) report.stages_removed += stages_.erase(sid);
    for (auto& [aid, agent] : agents_) {
        if (auto n = release_task_steps(agent, task_id); n > 0) report.steps_released[aid] = n;
        agent.task_refs.erase(task_id);
        for (const auto& sid : task.stage_ids) agent.stage_refs.erase(sid);
    }
    for (auto w = pending_waits_.begin(); w != pending_waits_.end();) {
        if (w->second.task_id == task_id) {
            if (auto* sender = find_agent(w->second.sender_id)) {
                release_lock(*sender, w->first);
                emit("lock_released", {{"agent_id", sender->agent_id},
                                       {"wait_id", w->first},
                                       {"remaining", sender->step_locks.size()},
                                       {"reason", "task_cleared"}});
            }
            report.locks_released.push_back(w->first);
            w = pending_waits_.erase(w);
        } else {
            ++w;
        }
    }
    const std::size_t dropped = task.comm_queue.size();
    for (const auto& m : task.comm_queue) {
        for (const auto& r : m.receiver_ids)
            emit("delivery_failed", {{"message_id", m.message_id}, {"receiver_id", r}, {"reason", "task " + task_id + " cleared"}});
    }
    outcomes_[task_id] = outcome;
    tasks_.erase(it);
    std::erase(task_order_, task_id);
    emit("task_cleared", {{"task_id", task_id},
                          {"outcome", to_string(outcome)},
                          {"stages_removed", report.stages_removed},
                          {"steps_released", report.steps_released},
                          {"messages_dropped", dropped}});
    return report;
}

TaskState* Registry::find_task(std::string_view task_id) {
    auto it = tasks_.find(std::string(task_id));
    return it == tasks_.end() ? nullptr : &it->second;
}

const TaskState* Registry::find_task(std::string_view task_id) const {
    auto it = tasks_.find(std::string(task_id));
    return it == tasks_.end() ? nullptr : &it->second;
}

StageState* Registry::find_stage(std::string_view stage_id) {
    auto it = stages_.find(std::string(stage_id));
    return it == stages_.end() ? nullptr : &it->second;
}

const StageState* Registry::find_stage(std::string_view stage_id) const {
    auto it = stages_.find(std::string(stage_id));
    return it == stages_.end() ? nullptr : &it->second;
}

json Registry::snapshot() const {
    json tasks = json::object();
    for (const auto& [id, t] : tasks_) tasks[id] = to_json(t);
    json stages = json::object();
    for (const auto& [id, s] : stages_) stages[id] = to_json(s);
    json agents = json::object();
    for (const auto& [id, a] : agents_) agents[id] = to_json(a);
    return json{{"tasks", tasks}, {"stages", stages}, {"agents", agents}};
}

std::vector<Violation> check_references(const Registry& registry) {
    std::vector<Violation> out;
    auto report = [&](std::string kind, std::string detail) {
        out.push_back({std::move(kind), std::move(detail)});
    };

    for (const auto& [tid, task] : registry.tasks()) {
        std::size_t running = 0;
        for (const auto& sid : task.stage_ids) {
            const auto* stage = registry.find_stage(sid);
            if (!stage) {
                report("task->stage", tid + " lists missing stage " + sid);
                continue;
            }
            if (stage->task_id != tid) report("task<->stage", sid + " belongs to " + stage->task_id + ", listed by " + tid);
            if (stage->status == RunStatus::running) ++running;
        }
        if (running > 1) report("stage_sequencing", tid + " has " + std::to_string(running) + " running stages");
        for (const auto& aid : task.agent_ids) {
            const auto* agent = registry.find_agent(aid);
            if (!agent)
                report("task->agent", tid + " lists missing agent " + aid);
            else if (!agent->task_refs.contains(tid))
                report("task<->agent", aid + " does not reference " + tid);
        }
        for (const auto& m : task.comm_queue) {
            const bool exempt = m.sender_id == kHumanOperator || m.sender_id == kSystemSender;
            if (!exempt && !task.has_member(m.sender_id))
                report("message->task", m.message_id + " sender " + m.sender_id + " outside " + tid);
            for (const auto& r : m.receiver_ids) {
                if (!exempt && r != kHumanOperator && !task.has_member(r))
                    report("message->task", m.message_id + " receiver " + r + " outside " + tid);
            }
        }
    }

    for (const auto& [sid, stage] : registry.stages()) {
        const auto* task = registry.find_task(stage.task_id);
        if (!task) {
            report("stage->task", sid + " references missing task " + stage.task_id);
            continue;
        }
        if (std::find(task->stage_ids.begin(), task->stage_ids.end(), sid) == task->stage_ids.end())
            report("stage<->task", stage.task_id + " does not list " + sid);
        for (const auto& [aid, goal] : stage.agent_allocation) {
            if (!task->has_member(aid))
                report("stage->agent", sid + " allocates " + aid + " outside task " + stage.task_id);
            const auto* agent = registry.find_agent(aid);
            if (!agent)
                report("stage->agent", sid + " allocates missing agent " + aid);
            else if (!agent->stage_refs.contains(sid))
                report("stage<->agent", aid + " does not reference " + sid);
        }
    }

    auto check_step = [&](const AgentState& agent, const StepState& step) {
        if (step.agent_id != agent.agent_id)
            report("step->agent", step.step_id + " held by " + agent.agent_id + " names " + step.agent_id);
        const TaskState* task = nullptr;
        if (step.task_id.empty()) {
            if (step.has_stage())
                report("step->stage", step.step_id + " has a stage but no task");
        } else {
            task = registry.find_task(step.task_id);
            if (!task)
                report("step->task", step.step_id + " references missing task " + step.task_id);
            else if (!task->has_member(agent.agent_id))
                report("step->task", step.step_id + " of " + agent.agent_id + " in foreign task " + step.task_id);
        }
        if (step.has_stage()) {
            const auto* stage = registry.find_stage(step.stage_id);
            if (!stage)
                report("step->stage", step.step_id + " references missing stage " + step.stage_id);
            else if (stage->task_id != step.task_id)
                report("step->stage", step.step_id + " stage " + step.stage_id + " belongs to " +
                                          stage->task_id + ", step task " + step.task_id);
        }
    };

    for (const auto& [aid, agent] : registry.agents()) {
        for (const auto& tid : agent.task_refs) {
            const auto* task = registry.find_task(tid);
            if (!task)
                report("agent->task", aid + " references missing task " + tid);
            else if (!task->has_member(aid))
                report("agent<->task", tid + " does not list " + aid);
        }
        for (const auto& sid : agent.stage_refs) {
            const auto* stage = registry.find_stage(sid);
            if (!stage)
                report("agent->stage", aid + " references missing stage " + sid);
            else if (!stage->agent_allocation.contains(aid))
                report("agent<->stage", sid + " does not allocate " + aid);
        }
        for (const auto& step : agent.steps.todo) check_step(agent, step);
        if (agent.steps.current) check_step(agent, *agent.steps.current);
        for (const auto& wid : agent.step_locks) {
            auto w = registry.pending_waits().find(wid);
            if (w == registry.pending_waits().end() || w->second.sender_id != aid)
                report("agent->lock", aid + " holds untracked wait id " + wid);
        }
        if ((agent.working_state == WorkingState::waiting) != !agent.step_locks.empty())
            report("agent_state", aid + " working_state disagrees with step_locks");
    }
    return out;
}

}  // namespace mas
