#include "mas/scenario.hpp"

#include <filesystem>
#include <fstream>

namespace mas {

namespace {

std::string resolve_path(const std::string& base, const std::string& p) {
    if (p.empty() || base.empty() || std::filesystem::path(p).is_absolute()) return p;
    return (std::filesystem::path(base) / p).string();
}

json resolve_store_paths(json config, const std::string& base) {
    if (config.contains("store")) config["store"] = resolve_path(base, config.at("store").get<std::string>());
    if (config.contains("inner")) config["inner"] = resolve_store_paths(config.at("inner"), base);
    return config;
}

const json* lookup(const json& event, const std::string& path) {
    const json* cur = &event;
    std::size_t pos = 0;
    while (pos <= path.size()) {
        auto dot = path.find('.', pos);
        auto key = path.substr(pos, dot == std::string::npos ? std::string::npos : dot - pos);
        if (!cur->is_object() || !cur->contains(key)) return nullptr;
        cur = &cur->at(key);
        if (dot == std::string::npos) break;
        pos = dot + 1;
    }
    return cur;
}

std::string task_ref(const json& a, const std::vector<std::string>& task_ids) {
    const auto& t = a.contains("task") ? a.at("task") : json(0);
    if (t.is_number_integer()) {
        const auto i = t.get<std::size_t>();
        return i < task_ids.size() ? task_ids[i] : std::string{};
    }
    return t.get<std::string>();
}

}  // namespace

bool ScenarioOutcome::passed() const {
    return std::all_of(assertions.begin(), assertions.end(), [](const AssertionResult& a) { return a.ok; });
}

Scenario parse_scenario(const json& doc, std::string base_dir) {
    if (!doc.is_object()) throw ScenarioError("scenario must be an object");
    Scenario s;
    s.base_dir = std::move(base_dir);
    try {
        s.name = doc.value("name", std::string{"scenario"});
        s.max_ticks = doc.value("max_ticks", s.max_ticks);
        s.seed = doc.value("seed", s.seed);
        s.prompts_dir = doc.value("prompts_dir", std::string{});
        if (doc.contains("tool_servers")) s.tool_servers = doc.at("tool_servers");
        if (doc.contains("backends")) s.backends = doc.at("backends");
        if (!s.backends.is_object()) throw ScenarioError("backends must be keyed by llm name");
        if (!s.backends.contains("default")) {
            json def{{"type", "scripted"}};
            if (doc.contains("default_reply")) def["default_reply"] = doc.at("default_reply");
            s.backends["default"] = def;
        }
        if (!doc.contains("agents") || !doc.at("agents").is_array() || doc.at("agents").empty())
            throw ScenarioError("scenario needs a non-empty agents list");
        s.agents = doc.at("agents");
        if (doc.contains("scripted_rules")) s.scripted_rules = doc.at("scripted_rules");
        for (const auto& t : doc.value("tasks", json::array())) {
            ScheduledTask task;
            task.instruction = t.at("instruction").get<std::string>();
            task.manager = t.at("manager").get<std::string>();
            task.members = t.value("members", std::vector<std::string>{});
            task.at_tick = t.value("at_tick", std::uint64_t{0});
            s.tasks.push_back(std::move(task));
        }
        for (const auto& i : doc.value("interventions", json::array())) {
            ScheduledIntervention iv;
            iv.at_tick = i.value("at_tick", std::uint64_t{1});
            iv.command = i.at("command");
            s.interventions.push_back(std::move(iv));
        }
        if (doc.contains("assertions")) s.assertions = doc.at("assertions");
        if (!s.assertions.is_array()) throw ScenarioError("assertions must be a list");
        for (const auto& a : s.assertions) {
            if (!a.is_object() || !a.contains("type")) throw ScenarioError("assertion without type");
        }
    } catch (const json::exception& e) {
        throw ScenarioError(std::string("malformed scenario: ") + e.what());
    }
    return s;
}

Scenario load_scenario(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ScenarioError("cannot open scenario '" + path + "'");
    json doc;
    try {
        doc = json::parse(in);
    } catch (const json::parse_error& e) {
        throw ScenarioError("scenario '" + path + "' is not valid JSON: " + e.what());
    }
    return parse_scenario(doc, std::filesystem::path(path).parent_path().string());
}

void setup_scenario(Orchestrator& orch, const Scenario& s, std::optional<std::uint64_t> seed) {
    const auto use_seed = seed.value_or(s.seed);
    orch.tools().configure(s.tool_servers);
    if (!s.prompts_dir.empty()) orch.prompts().load_dir(resolve_path(s.base_dir, s.prompts_dir));
    for (const auto& [name, cfg] : s.backends.items())
        orch.set_backend(name, make_backend(resolve_store_paths(cfg, s.base_dir), s.scripted_rules, use_seed));
    for (const auto& a : s.agents) orch.spawn_agent(a);
}

ScenarioOutcome run_scenario(Orchestrator& orch, const Scenario& s, std::optional<std::uint64_t> max_ticks) {
    ScenarioOutcome outcome;
    outcome.task_ids.assign(s.tasks.size(), std::string{});
    std::size_t interventions_done = 0;

    auto fire = [&](std::uint64_t tick) {
        for (std::size_t i = 0; i < s.tasks.size(); ++i) {
            if (s.tasks[i].at_tick == tick && outcome.task_ids[i].empty())
                outcome.task_ids[i] = orch.start_task(s.tasks[i].instruction, s.tasks[i].manager, s.tasks[i].members);
        }
        for (const auto& iv : s.interventions) {
            if (iv.at_tick == tick) {
                orch.intervene(iv.command);
                ++interventions_done;
            }
        }
    };
    const auto budget = max_ticks.value_or(s.max_ticks);
    if (budget > 0) fire(0);
    orch.set_before_tick(fire);
    auto until = [&] {
        const bool all_started = std::none_of(outcome.task_ids.begin(), outcome.task_ids.end(),
                                              [](const std::string& id) { return id.empty(); });
        return all_started && interventions_done == s.interventions.size() && orch.settled();
    };
    outcome.run = orch.run(budget, until);
    orch.set_before_tick({});
    outcome.assertions = evaluate_assertions(orch, s, outcome.task_ids);
    return outcome;
}

bool event_matches(const json& event, const json& where) {
    if (where.is_null()) return true;
    for (const auto& [path, expected] : where.items()) {
        const json* v = lookup(event, path);
        if (!v) return false;
        if (expected.is_object() && expected.contains("contains")) {
            const auto needle = expected.at("contains").get<std::string>();
            const auto hay = v->is_string() ? v->get<std::string>() : v->dump();
            if (hay.find(needle) == std::string::npos) return false;
        } else if (*v != expected) {
            return false;
        }
    }
    return true;
}

std::vector<AssertionResult> evaluate_assertions(Orchestrator& orch, const Scenario& s,
                                                 const std::vector<std::string>& task_ids) {
    std::vector<AssertionResult> results;
    const auto events = orch.log().entries();
    for (const auto& a : s.assertions) {
        AssertionResult r;
        const auto type = a.at("type").get<std::string>();
        r.description = a.value("description", type);
        try {
            if (type == "task_status") {
                const auto tid = task_ref(a, task_ids);
                const auto want = a.at("status").get<std::string>();
                std::string got = orch.sync().read([&](const Registry& reg) -> std::string {
                    if (tid.empty()) return "not started";
                    if (const auto* t = reg.find_task(tid)) return std::string(to_string(t->status));
                    auto it = reg.task_outcomes().find(tid);
                    return it == reg.task_outcomes().end() ? "unknown" : std::string(to_string(it->second));
                });
                r.description = a.value("description", "task " + tid + " is " + want);
                r.ok = got == want;
                if (!r.ok) r.detail = "status is " + got;
            } else if (type == "all_tasks_finished") {
                std::vector<std::string> unfinished;
                orch.sync().read([&](const Registry& reg) {
                    for (const auto& tid : task_ids) {
                        auto it = reg.task_outcomes().find(tid);
                        if (tid.empty() || it == reg.task_outcomes().end() || it->second != RunStatus::finished)
                            unfinished.push_back(tid.empty() ? "(not started)" : tid);
                    }
                    return 0;
                });
                r.ok = unfinished.empty();
                for (const auto& u : unfinished) r.detail += (r.detail.empty() ? "unfinished: " : ", ") + u;
            } else if (type == "no_waiting_agents") {
                std::vector<std::string> waiting;
                orch.sync().read([&](const Registry& reg) {
                    for (const auto& [id, agent] : reg.agents())
                        if (!agent.step_locks.empty()) waiting.push_back(id);
                    return 0;
                });
                r.ok = waiting.empty();
                for (const auto& w : waiting) r.detail += (r.detail.empty() ? "waiting: " : ", ") + w;
            } else if (type == "memory_entries") {
                const auto name = a.at("agent").get<std::string>();
                const auto n = orch.sync().read([&](const Registry& reg) {
                    return reg.find_agent(reg.resolve_agent(name))->persistent_memory.size();
                });
                r.ok = true;
                if (a.contains("count")) r.ok = n == a.at("count").get<std::size_t>();
                if (a.contains("min")) r.ok = r.ok && n >= a.at("min").get<std::size_t>();
                r.detail = std::to_string(n) + " entries";
            } else if (type == "agent_exists") {
                const auto name = a.at("name").get<std::string>();
                r.ok = orch.sync().read([&](const Registry& reg) {
                    try {
                        reg.resolve_agent(name);
                        return true;
                    } catch (const Error&) {
                        return false;
                    }
                });
            } else if (type == "event_count") {
                const auto kind = a.at("event").get<std::string>();
                const json where = a.value("where", json());
                std::size_t n = 0;
                for (const auto& e : events) {
                    if (e.value("type", std::string{}) == kind && event_matches(e, where)) ++n;
                }
                r.ok = true;
                if (a.contains("count")) r.ok = n == a.at("count").get<std::size_t>();
                if (a.contains("min")) r.ok = r.ok && n >= a.at("min").get<std::size_t>();
                if (a.contains("max")) r.ok = r.ok && n <= a.at("max").get<std::size_t>();
                r.detail = std::to_string(n) + " matching " + kind + " events";
            } else if (type == "references_consistent") {
                const auto violations = orch.sync().read([](const Registry& reg) { return check_references(reg); });
                r.ok = violations.empty();
                for (const auto& v : violations) r.detail += v.kind + ": " + v.detail + "; ";
            } else {
                r.ok = false;
                r.detail = "unknown assertion type '" + type + "'";
            }
        } catch (const std::exception& e) {
            r.ok = false;
            r.detail = e.what();
        }
        results.push_back(std::move(r));
    }
    return results;
}

}  // namespace mas
