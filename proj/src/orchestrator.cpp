#include "mas/orchestrator.hpp"

#include <algorithm>

#include "mas/agent_config.hpp"
#include "mas/messaging.hpp"
#include "mas/step_queue.hpp"

namespace mas {

Orchestrator::Orchestrator(OrchestratorOptions options)
    : options_(options),
      sync_(log_),
      owned_tools_(options.tools ? nullptr : std::make_unique<ToolClient>(options.tool_threads)),
      tools_(options.tools ? options.tools : owned_tools_.get()),
      clock_(options.deterministic ? MemoryClock::Mode::logical : MemoryClock::Mode::wall) {
    tools_->set_event_log(&log_, !options_.deterministic);
    sync_.set_tool_known([this](const std::string& name) { return tools_->has_config(name); });
    sync_.set_on_agent_created([this](const std::string& id) {
        auto agent = sync_.read([&](const Registry& r) -> std::optional<AgentState> {
            if (const auto* a = r.find_agent(id)) return *a;
            return std::nullopt;
        });
        if (!agent) return;
        tools_->ensure_sessions(*agent);
        if (live_) launch_agent_thread(id);
    });
    services_.backend_for = [this](const AgentState& a) { return backend_for(a); };
    services_.tools = tools_;
    services_.prompts = &prompts_;
    services_.clock = &clock_;
}

Orchestrator::~Orchestrator() { stop_live(); }

void Orchestrator::set_backend(const std::string& name, std::shared_ptr<Backend> backend) {
    std::lock_guard lock(backends_mutex_);
    backends_[name] = std::move(backend);
}

std::shared_ptr<Backend> Orchestrator::backend_for(const AgentState& agent) const {
    std::lock_guard lock(backends_mutex_);
    if (auto it = backends_.find(agent.llm_config_ref); it != backends_.end()) return it->second;
    if (auto it = backends_.find("default"); it != backends_.end()) return it->second;
    return nullptr;
}

std::string Orchestrator::spawn_agent(const json& config) {
    auto agent = agent_from_config(config, sync_.tool_known());
    std::string id;
    AgentState copy;
    sync_.mutate([&](Registry& r) {
        auto& stored = r.add_agent(std::move(agent));
        id = stored.agent_id;
        copy = stored;
    });
    tools_->ensure_sessions(copy);
    if (live_) launch_agent_thread(id);
    return id;
}

std::string Orchestrator::start_task(const std::string& instruction, const std::string& manager,
                                     const std::vector<std::string>& members) {
    if (instruction.empty()) throw Error("task instruction is empty");
    std::string tid;
    sync_.mutate([&](Registry& r) {
        const auto manager_id = r.resolve_agent(manager);
        auto* m = r.find_agent(manager_id);
        if (!m->skill_permissions.contains("task_manager"))
            throw PermissionError(manager_id + " lacks the task_manager skill");
        std::vector<std::string> ids{manager_id};
        for (const auto& name : members) {
            auto id = r.resolve_agent(name);
            if (std::find(ids.begin(), ids.end(), id) == ids.end()) ids.push_back(id);
        }
        auto& task = r.new_task(instruction, ids, manager_id);
        tid = task.task_id;
        StepDraft d;
        d.executor = "task_manager";
        d.step_intent = "Organize task " + tid;
        d.text_content = "Task: " + instruction;
        d.task_id = tid;
        d.stage_id = std::string(kNoStage);
        append_steps(r, *m, std::span(&d, 1));
    });
    std::lock_guard lock(tasks_mutex_);
    started_tasks_.push_back(tid);
    return tid;
}

std::vector<std::string> Orchestrator::started_tasks() const {
    std::lock_guard lock(tasks_mutex_);
    return started_tasks_;
}

bool Orchestrator::all_tasks_done() const {
    const auto started = started_tasks();
    return sync_.read([&](const Registry& r) {
        return std::all_of(started.begin(), started.end(),
                           [&](const std::string& id) { return r.find_task(id) == nullptr; });
    });
}

bool Orchestrator::settled() const {
    if (!all_tasks_done()) return false;
    return sync_.read([](const Registry& r) {
        for (const auto& id : r.agent_order()) {
            const auto* a = r.find_agent(id);
            if (a && !a->paused && a->step_locks.empty() && !a->steps.todo.empty()) return false;
        }
        return true;
    });
}

void Orchestrator::dispatch_all() {
    sync_.mutate([](Registry& r) {
        const auto order = r.task_order();
        for (const auto& tid : order) {
            if (r.find_task(tid)) dispatch_pending(r, tid);
        }
        dispatch_operator_queue(r);
    });
}

void Orchestrator::tick() {
    ++tick_;
    log_.set_tick(tick_);
    if (before_tick_) before_tick_(tick_);
    const auto order = sync_.read([](const Registry& r) { return r.agent_order(); });
    for (const auto& id : order) next_action(sync_, id, services_);
    dispatch_all();
}

RunResult Orchestrator::run(std::uint64_t max_ticks, std::function<bool()> until) {
    if (!until) until = [this] { return all_tasks_done(); };
    RunResult result;
    while (true) {
        if (until()) {
            result.completed = true;
            break;
        }
        if (result.ticks >= max_ticks) break;
        tick();
        ++result.ticks;
    }
    result.status = result.completed ? "completed" : "budget_exhausted";
    return result;
}

void Orchestrator::launch_agent_thread(const std::string& agent_id) {
    std::lock_guard lock(threads_mutex_);
    threads_.emplace_back([this, agent_id] { agent_loop(agent_id); });
}

void Orchestrator::agent_loop(std::string agent_id) {
    while (live_) {
        const auto version = sync_.version();
        const bool ready = sync_.read([&](const Registry& r) {
            const auto* a = r.find_agent(agent_id);
            return a && !a->paused && a->step_locks.empty() && !a->steps.todo.empty() && !a->steps.current;
        });
        const bool exists = sync_.read([&](const Registry& r) { return r.find_agent(agent_id) != nullptr; });
        if (!exists) return;
        if (!ready) {
            sync_.wait_change(version, std::chrono::milliseconds(100));
            continue;
        }
        next_action(sync_, agent_id, services_);
    }
}

void Orchestrator::dispatcher_loop() {
    auto next = std::chrono::steady_clock::now() + options_.dispatch_period;
    while (live_) {
        if (std::chrono::steady_clock::now() < next) {
            std::this_thread::sleep_for(std::chrono::milliseconds(5));
            continue;
        }
        next += options_.dispatch_period;
        ++tick_;
        log_.set_tick(tick_);
        dispatch_all();
    }
}

void Orchestrator::start_live() {
    if (live_.exchange(true)) return;
    const auto order = sync_.read([](const Registry& r) { return r.agent_order(); });
    for (const auto& id : order) launch_agent_thread(id);
    std::lock_guard lock(threads_mutex_);
    threads_.emplace_back([this] { dispatcher_loop(); });
}

void Orchestrator::stop_live() {
    if (!live_.exchange(false)) return;
    sync_.notify();
    log_.notify_all();
    std::vector<std::thread> threads;
    {
        std::lock_guard lock(threads_mutex_);
        threads.swap(threads_);
    }
    for (auto& t : threads) t.join();
}

void edit_agent_queue(Registry& registry, AgentState& agent, const json& edits) {
    if (!edits.is_object()) throw Error("queue edits must be an object");
    auto drafts_of = [&](const char* key) {
        std::vector<StepDraft> out;
        if (!edits.contains(key)) return out;
        for (const auto& j : edits.at(key)) out.push_back(step_draft_from_json(j));
        return out;
    };
    const auto inserts = drafts_of("insert_steps");
    const auto appends = drafts_of("append_steps");
    std::vector<std::string> removals;
    if (edits.contains("remove_steps")) removals = edits.at("remove_steps").get<std::vector<std::string>>();

    for (const auto& id : removals) {
        auto& todo = agent.steps.todo;
        if (std::none_of(todo.begin(), todo.end(), [&](const StepState& s) { return s.step_id == id; }))
            throw Error("step " + id + " is not pending on " + agent.agent_id);
    }
    for (const auto* batch : {&inserts, &appends}) {
        for (const auto& d : *batch) {
            if (!agent.permits(d.executor, d.step_type))
                throw PermissionError(agent.agent_id + " may not run '" + d.executor + "'");
            const auto tid = d.task_id.value_or("");
            const auto sid = d.stage_id.value_or(std::string(kNoStage));
            if (!tid.empty()) {
                const auto* task = registry.find_task(tid);
                if (!task || !task->has_member(agent.agent_id))
                    throw ProtocolError(agent.agent_id + " is not a member of task '" + tid + "'");
            }
            if (sid != kNoStage) {
                const auto* stage = registry.find_stage(sid);
                if (!stage || stage->task_id != tid) throw ProtocolError("stage '" + sid + "' is not part of '" + tid + "'");
            } else if (requires_stage(d.executor)) {
                throw SequencingError(d.executor + " steps need a stage");
            }
        }
    }

    for (const auto& id : removals) {
        auto& todo = agent.steps.todo;
        todo.erase(std::remove_if(todo.begin(), todo.end(), [&](const StepState& s) { return s.step_id == id; }),
                   todo.end());
    }
    auto normalize = [](std::vector<StepDraft> v) {
        for (auto& d : v) {
            if (!d.task_id) d.task_id = std::string{};
            if (!d.stage_id) d.stage_id = std::string(kNoStage);
        }
        return v;
    };
    if (!inserts.empty()) insert_steps(registry, agent, normalize(inserts));
    if (!appends.empty()) append_steps(registry, agent, normalize(appends));
}

ApplyResult Orchestrator::intervene(const json& command) {
    ApplyResult res = do_intervene(command);
    json entry{{"command", command}, {"ok", res.ok}};
    if (!res.ok) entry["reason"] = res.reason;
    if (!res.data.empty()) entry["data"] = res.data;
    log_.append("intervention", std::move(entry));
    sync_.notify();
    return res;
}

ApplyResult Orchestrator::do_intervene(const json& command) {
    const std::string origin{kHumanOperator};
    ApplyResult res{SyncKind::modify_agent, false, {}, json::object()};
    if (!command.is_object() || !command.contains("command") || !command.at("command").is_string()) {
        res.reason = "intervention needs a 'command' name";
        return res;
    }
    const auto name = command.at("command").get<std::string>();
    try {
        if (name == "inject_message") {
            json payload{{"receivers", command.value("receivers", json::array())},
                         {"content", command.value("content", std::string{})},
                         {"need_reply", command.value("need_reply", false)},
                         {"stage_relative", command.value("stage_relative", std::string(kNoStage))}};
            if (command.contains("task_id")) payload["task_id"] = command.at("task_id");
            if (command.contains("receiver")) payload["receivers"] = json::array({command.at("receiver")});
            return sync_.apply({{SyncKind::send_message, payload}}, origin).front();
        }
        if (name == "end_stage") {
            json payload{{"stage_id", command.value("stage_id", std::string{})}, {"force", true}};
            return sync_.apply({{SyncKind::finish_stage, payload}}, origin).front();
        }
        if (name == "pause_agent" || name == "resume_agent") {
            sync_.mutate([&](Registry& r) {
                auto* agent = r.find_agent(r.resolve_agent(command.value("agent", std::string{})));
                agent->paused = name == "pause_agent";
                r.emit(name == "pause_agent" ? "agent_paused" : "agent_resumed", {{"agent_id", agent->agent_id}});
                res.data["agent_id"] = agent->agent_id;
            });
            res.ok = true;
            return res;
        }
        if (name == "cancel_task") {
            sync_.mutate([&](Registry& r) {
                const auto tid = command.value("task_id", std::string{});
                if (!r.find_task(tid)) throw RegistrationError("unknown task '" + tid + "'");
                auto report = r.clear_task(tid, RunStatus::failed);
                res.data["task_id"] = tid;
                res.data["stages_removed"] = report.stages_removed;
            });
            res.ok = true;
            return res;
        }
        if (name == "edit_agent_state") {
            std::vector<std::string> created;
            sync_.mutate([&](Registry& r) {
                auto* agent = r.find_agent(r.resolve_agent(command.value("agent", std::string{})));
                const AgentState backup = *agent;
                json modify = command;
                modify.erase("command");
                modify.erase("queue");
                try {
                    if (command.contains("queue")) edit_agent_queue(r, *agent, command.at("queue"));
                    if (modify.size() > 1) {
                        auto applied = sync_.apply_one(r, {SyncKind::modify_agent, modify}, origin, created);
                        if (!applied.ok) throw Error(applied.reason);
                    }
                } catch (...) {
                    *r.find_agent(backup.agent_id) = backup;
                    throw;
                }
                agent->refresh_working_state();
                res.data["agent_id"] = agent->agent_id;
                r.emit("agent_edited", {{"agent_id", agent->agent_id}});
            });
            sync_.fire_agent_created(created);
            res.ok = true;
            return res;
        }
        res.reason = "unknown intervention '" + name + "'";
    } catch (const std::exception& e) {
        res.ok = false;
        res.reason = e.what();
    }
    return res;
}

}  // namespace mas
