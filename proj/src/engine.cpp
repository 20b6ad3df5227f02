#include "mas/engine.hpp"

#include "mas/messaging.hpp"
#include "mas/step_queue.hpp"

namespace mas {

std::string_view to_string(ActionKind kind) {
    switch (kind) {
        case ActionKind::executed: return "executed";
        case ActionKind::idle: return "idle";
        case ActionKind::blocked: return "blocked";
        case ActionKind::paused: return "paused";
        case ActionKind::missing: return "missing";
    }
    return "unknown";
}

namespace {

ExecutionContext capture(const Registry& r, const AgentState& agent, const StepState& step) {
    ExecutionContext ctx;
    ctx.step = step;
    ctx.agent = agent;
    ctx.agent.steps.history.clear();
    for (const auto& h : agent.steps.history) {
        const bool same = step.has_stage() ? h.stage_id == step.stage_id
                                           : (h.task_id == step.task_id && !h.has_stage());
        if (same) ctx.history.push_back(h);
    }
    if (!agent.steps.todo.empty()) ctx.next_todo = agent.steps.todo.front();
    if (const auto* task = r.find_task(step.task_id)) {
        ctx.task = *task;
        ctx.task->comm_queue.clear();
        for (const auto& id : task->agent_ids) {
            if (const auto* m = r.find_agent(id))
                ctx.task_members.push_back(json{{"agent_id", m->agent_id}, {"name", m->name}, {"role", m->role}});
        }
    }
    if (step.has_stage()) {
        if (const auto* stage = r.find_stage(step.stage_id)) ctx.stage = *stage;
    }
    return ctx;
}

std::optional<std::string> check_drafts(const AgentState& agent, const std::vector<StepDraft>& drafts) {
    for (const auto& d : drafts) {
        if (!agent.permits(d.executor, d.step_type))
            return "executor '" + d.executor + "' (" + std::string(to_string(d.step_type)) + ") not permitted for " +
                   agent.agent_id;
    }
    return std::nullopt;
}

}  // namespace

ActionReport next_action(SyncState& sync, const std::string& agent_id, const Services& services) {
    ActionReport report;
    report.agent_id = agent_id;

    // phase 1: claim the head step
    std::optional<ExecutionContext> ctx;
    std::optional<ExecutorOutput> early;
    sync.mutate([&](Registry& r) {
        auto* agent = r.find_agent(agent_id);
        if (!agent) {
            report.kind = ActionKind::missing;
            return;
        }
        if (agent->paused) {
            report.kind = ActionKind::paused;
            return;
        }
        if (!agent->step_locks.empty()) {
            report.kind = ActionKind::blocked;
            return;
        }
        if (agent->steps.todo.empty() || agent->steps.current) {
            report.kind = ActionKind::idle;
            return;
        }
        StepState step = std::move(agent->steps.todo.front());
        agent->steps.todo.pop_front();
        step.status = StepStatus::running;
        agent->steps.current = step;
        agent->refresh_working_state();
        r.emit("step_started", {{"agent_id", agent_id},
                                {"step_id", step.step_id},
                                {"executor", step.executor},
                                {"task_id", step.task_id},
                                {"stage_id", step.stage_id}});
        report.kind = ActionKind::executed;
        if (!agent->permits(step.executor, step.step_type)) {
            ExecutorOutput out;
            out.failed = true;
            out.error = "permission denied: " + agent_id + " may not run " + std::string(to_string(step.step_type)) +
                        " executor '" + step.executor + "'";
            early = std::move(out);
        }
        ctx = capture(r, *agent, step);
    });
    if (report.kind != ActionKind::executed) return report;

    // phase 2: run the executor without the lock
    ExecutorOutput out;
    if (early) {
        out = std::move(*early);
    } else {
        try {
            out = ctx->step.step_type == StepType::tool ? run_tool_step(*ctx, services) : run_skill(*ctx, services);
        } catch (const std::exception& e) {
            out = ExecutorOutput{};
            out.failed = true;
            out.error = e.what();
        }
    }

    // phase 3: apply the output and invoke the facade once
    std::vector<std::string> created;
    sync.mutate([&](Registry& r) {
        auto* agent = r.find_agent(agent_id);
        if (!agent || !agent->steps.current || agent->steps.current->step_id != ctx->step.step_id) {
            report.kind = ActionKind::missing;
            return;
        }
        StepState done = std::move(*agent->steps.current);
        agent->steps.current.reset();

        const bool task_gone = !done.task_id.empty() && !r.find_task(done.task_id);
        const auto* stage = done.has_stage() ? r.find_stage(done.stage_id) : nullptr;
        const bool stage_over = done.has_stage() && (!stage || stage->status != RunStatus::running);
        const bool dropped = task_gone || stage_over;

        bool failed = out.failed;
        std::string error = out.error;
        if (!failed && !dropped) {
            if (auto bad = check_drafts(*agent, out.insert_steps)) {
                failed = true;
                error = *bad;
            } else if (auto bad2 = check_drafts(*agent, out.append_steps)) {
                failed = true;
                error = *bad2;
            }
        }
        std::deque<StepState>::iterator target = agent->steps.todo.end();
        if (!failed && !dropped && out.next_step_update) {
            target = std::find_if(agent->steps.todo.begin(), agent->steps.todo.end(),
                                  [&](const StepState& s) { return s.step_id == out.next_step_update->step_id; });
            if (target == agent->steps.todo.end()) {
                failed = true;
                error = "step " + out.next_step_update->step_id + " is no longer pending";
            }
        }

        json warnings = out.warnings;
        if (!failed) {
            if (!out.memory_ops.empty() && services.clock) {
                auto rep = apply_memory_ops(agent->persistent_memory, out.memory_ops, *services.clock);
                for (auto& w : rep.warnings) warnings.push_back(std::move(w));
                if (!rep.added_keys.empty() || !rep.removed_keys.empty())
                    r.emit("memory_updated",
                           {{"agent_id", agent_id}, {"added", rep.added_keys}, {"removed", rep.removed_keys}});
            }
            if (!dropped) {
                if (out.next_step_update) target->instruction_content = out.next_step_update->instruction_content;
                if (!out.insert_steps.empty()) insert_steps(r, *agent, out.insert_steps, &done);
                if (!out.append_steps.empty()) append_steps(r, *agent, out.append_steps, &done);
            }
        }

        done.status = failed ? StepStatus::failed : StepStatus::finished;
        done.execute_result = failed ? "error: " + error : out.result_text;
        agent->steps.history.push_back(std::move(done));
        const std::size_t index = agent->steps.history.size() - 1;

        std::vector<ApplyResult> results;
        if (!failed && !dropped) {
            for (const auto& ins : out.sync_instructions) {
                report.sync_kinds.emplace_back(to_string(ins.kind));
                results.push_back(sync.apply_one(r, ins, agent_id, created));
            }
        }
        agent = r.find_agent(agent_id);
        if (!agent) return;
        auto& record = agent->steps.history[index];
        for (const auto& res : results) {
            if (res.ok) continue;
            record.status = StepStatus::failed;
            *record.execute_result += "\nrejected " + std::string(to_string(res.kind)) + ": " + res.reason;
            if (error.empty()) error = res.reason;
        }
        if (record.step_type == StepType::tool) {
            for (const auto& res : results) {
                if (res.ok && res.kind == SyncKind::send_message && res.data.contains("message_id"))
                    dispatch_message(r, record.task_id, res.data.at("message_id").get<std::string>());
            }
        }
        agent->refresh_working_state();

        report.step_id = record.step_id;
        report.executor = record.executor;
        report.status = record.status;
        report.error = record.status == StepStatus::failed ? error : std::string{};
        json entry{{"agent_id", agent_id},
                   {"step_id", record.step_id},
                   {"executor", record.executor},
                   {"step_type", to_string(record.step_type)},
                   {"status", to_string(record.status)},
                   {"sync_instruction_kinds", report.sync_kinds},
                   {"task_id", record.task_id},
                   {"stage_id", record.stage_id}};
        if (record.executor == "tool_decision" && record.status == StepStatus::finished)
            entry["result"] = *record.execute_result;
        if (dropped) entry["dropped"] = true;
        if (!report.error.empty()) entry["error"] = report.error;
        if (!warnings.empty()) entry["warnings"] = warnings;
        r.emit("action", std::move(entry));
    });
    sync.fire_agent_created(created);
    return report;
}

}  // namespace mas
