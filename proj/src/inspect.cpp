#include "mas/inspect.hpp"

#include <map>

namespace mas {

namespace {

bool field_is(const json& e, const char* key, const std::string& value) {
    return e.contains(key) && e.at(key).is_string() && e.at(key).get<std::string>() == value;
}

bool mentions_agent(const json& e, const std::string& agent) {
    for (const char* key : {"agent_id", "receiver_id", "sender_id", "origin"}) {
        if (field_is(e, key, agent)) return true;
    }
    if (e.contains("message")) {
        const auto& m = e.at("message");
        if (field_is(m, "sender_id", agent)) return true;
        for (const auto& r : m.value("receiver_ids", json::array()))
            if (r == agent) return true;
    }
    return false;
}

bool mentions_task(const json& e, const std::string& task) {
    if (field_is(e, "task_id", task)) return true;
    if (e.contains("message") && field_is(e.at("message"), "task_id", task)) return true;
    if (e.contains("data") && e.at("data").is_object() && field_is(e.at("data"), "task_id", task)) return true;
    return false;
}

}  // namespace

std::vector<json> filter_events(const std::vector<json>& log, const InspectQuery& q) {
    std::vector<json> out;
    for (const auto& e : log) {
        if (q.agent && !mentions_agent(e, *q.agent)) continue;
        if (q.task && !mentions_task(e, *q.task)) continue;
        if (q.executor && !field_is(e, "executor", *q.executor)) continue;
        out.push_back(e);
    }
    return out;
}

json compute_stats(const std::vector<json>& log) {
    std::size_t actions = 0;
    std::size_t failed = 0;
    std::size_t delivered = 0;
    json stages = json::object();
    json lock_waits = json::array();
    std::map<std::string, json> open;  // wait id -> acquisition
    std::map<std::string, std::string> last_stage;
    json interleaving = json::object();

    for (const auto& e : log) {
        const auto type = e.value("type", std::string{});
        if (type == "action") {
            ++actions;
            if (e.value("status", std::string{}) == "failed") ++failed;
            const auto sid = e.value("stage_id", std::string(kNoStage));
            const auto agent = e.value("agent_id", std::string{});
            if (sid != kNoStage) {
                auto& s = stages[sid];
                if (!s.contains("steps")) s = json{{"task_id", e.value("task_id", std::string{})}, {"steps", 0}, {"by_agent", json::object()}};
                s["steps"] = s["steps"].get<std::size_t>() + 1;
                s["by_agent"][agent] = s["by_agent"].value(agent, 0) + 1;
                auto it = last_stage.find(agent);
                if (it != last_stage.end() && it->second != sid)
                    interleaving[agent] = interleaving.value(agent, 0) + 1;
                last_stage[agent] = sid;
            }
        } else if (type == "message_delivered") {
            ++delivered;
        } else if (type == "lock_acquired") {
            open[e.value("wait_id", std::string{})] = e;
        } else if (type == "lock_released") {
            const auto wid = e.value("wait_id", std::string{});
            auto it = open.find(wid);
            if (it == open.end()) continue;
            const auto t0 = it->second.value("tick", std::uint64_t{0});
            const auto t1 = e.value("tick", std::uint64_t{0});
            lock_waits.push_back(json{{"agent_id", e.value("agent_id", std::string{})},
                                      {"wait_id", wid},
                                      {"acquired_tick", t0},
                                      {"released_tick", t1},
                                      {"ticks", t1 - t0}});
            open.erase(it);
        }
    }
    json open_locks = json::array();
    for (const auto& [wid, e] : open)
        open_locks.push_back(json{{"agent_id", e.value("agent_id", std::string{})}, {"wait_id", wid},
                                  {"acquired_tick", e.value("tick", std::uint64_t{0})}});
    return json{{"actions", actions},
                {"failed_steps", failed},
                {"messages_delivered", delivered},
                {"stages", stages},
                {"lock_waits", lock_waits},
                {"open_locks", open_locks},
                {"interleaving", interleaving}};
}

}  // namespace mas
