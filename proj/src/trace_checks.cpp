#include "mas/trace_checks.hpp"

#include <algorithm>
#include <map>
#include <set>

namespace mas {

namespace {

std::string type_of(const json& e) { return e.value("type", std::string{}); }
std::string str(const json& e, const char* key) { return e.value(key, std::string{}); }

std::vector<json> actions_of(const std::vector<json>& log, const std::string& agent) {
    std::vector<json> out;
    for (const auto& e : log) {
        if (type_of(e) == "action" && str(e, "agent_id") == agent) out.push_back(e);
    }
    return out;
}

std::set<std::string> acting_agents(const std::vector<json>& log) {
    std::set<std::string> out;
    for (const auto& e : log) {
        if (type_of(e) == "action") out.insert(str(e, "agent_id"));
    }
    return out;
}

}  // namespace

std::vector<TraceIssue> check_stage_intervals(const std::vector<json>& log) {
    struct Interval {
        std::uint64_t start;
        std::uint64_t end;
        std::string stage;
    };
    std::vector<TraceIssue> issues;
    std::map<std::string, std::vector<Interval>> per_task;
    std::map<std::string, std::pair<std::string, std::uint64_t>> open;  // stage -> (task, start)
    const auto last = log.empty() ? 0 : log.back().value("seq", std::uint64_t{0}) + 1;
    for (const auto& e : log) {
        if (type_of(e) != "stage_status") continue;
        const auto sid = str(e, "stage_id");
        const auto status = str(e, "status");
        const auto seq = e.value("seq", std::uint64_t{0});
        if (status == "running") {
            if (open.contains(sid)) issues.push_back({"stage_intervals", sid + " started twice"});
            open[sid] = {str(e, "task_id"), seq};
        } else if (status == "finished" || status == "failed") {
            auto it = open.find(sid);
            if (it == open.end()) continue;
            per_task[it->second.first].push_back({it->second.second, seq, sid});
            open.erase(it);
        }
    }
    for (const auto& [sid, ts] : open) per_task[ts.first].push_back({ts.second, last, sid});
    for (auto& [tid, intervals] : per_task) {
        std::sort(intervals.begin(), intervals.end(), [](const Interval& a, const Interval& b) { return a.start < b.start; });
        for (std::size_t i = 1; i < intervals.size(); ++i) {
            if (intervals[i].start < intervals[i - 1].end)
                issues.push_back({"stage_intervals", tid + ": " + intervals[i].stage + " overlaps " + intervals[i - 1].stage});
        }
    }
    return issues;
}

std::vector<TraceIssue> check_message_branching(const std::vector<json>& log) {
    std::vector<TraceIssue> issues;
    std::map<std::string, std::string> executed;  // step id -> executor
    for (const auto& e : log) {
        if (type_of(e) == "step_started") executed[str(e, "step_id")] = str(e, "executor");
    }
    for (const auto& e : log) {
        if (type_of(e) != "message_delivered") continue;
        const auto kind = str(e, "kind");
        std::string want = "process_message";
        if (kind == "tool_result")
            want = "tool_decision";
        else if (e.value("need_reply", false))
            want = "send_message";
        const auto got = str(e, "executor");
        const auto mid = str(e, "message_id");
        if (got != want)
            issues.push_back({"message_branching", mid + " to " + str(e, "receiver_id") + " created " + got +
                                                       ", expected " + want});
        auto it = executed.find(str(e, "step_id"));
        if (it != executed.end() && it->second != want)
            issues.push_back({"message_branching", "step " + it->first + " for " + mid + " ran as " + it->second});
    }
    return issues;
}

std::vector<TraceIssue> check_lock_protocol(const std::vector<json>& log) {
    std::vector<TraceIssue> issues;
    std::map<std::string, std::set<std::string>> held;
    for (const auto& e : log) {
        const auto type = type_of(e);
        const auto agent = str(e, "agent_id");
        if (type == "lock_acquired") {
            held[agent].insert(str(e, "wait_id"));
        } else if (type == "lock_released") {
            held[agent].erase(str(e, "wait_id"));
        } else if (type == "step_started" && !held[agent].empty()) {
            issues.push_back({"lock_protocol", agent + " started " + str(e, "step_id") + " while holding " +
                                                   std::to_string(held[agent].size()) + " locks"});
        }
    }
    return issues;
}

std::vector<TraceIssue> check_tool_grammar(const std::vector<json>& log) {
    std::vector<TraceIssue> issues;
    for (const auto& agent : acting_agents(log)) {
        const auto acts = actions_of(log, agent);
        for (std::size_t i = 0; i < acts.size(); ++i) {
            const auto& a = acts[i];
            const bool ok = str(a, "status") == "finished";
            const auto exec = str(a, "executor");
            if (str(a, "step_type") == "tool") {
                if (i == 0 || str(acts[i - 1], "executor") != "instruction_generation")
                    issues.push_back({"tool_grammar", agent + ": tool step " + str(a, "step_id") +
                                                          " not preceded by instruction_generation"});
                if (ok && (i + 1 >= acts.size() || str(acts[i + 1], "executor") != "tool_decision"))
                    issues.push_back({"tool_grammar", agent + ": tool step " + str(a, "step_id") +
                                                          " not followed by tool_decision"});
            } else if (exec == "instruction_generation" && ok) {
                if (i + 1 >= acts.size() || str(acts[i + 1], "step_type") != "tool")
                    issues.push_back({"tool_grammar", agent + ": instruction_generation " + str(a, "step_id") +
                                                          " not followed by a tool step"});
            } else if (exec == "tool_decision") {
                if (i == 0 || str(acts[i - 1], "step_type") != "tool")
                    issues.push_back({"tool_grammar", agent + ": tool_decision " + str(a, "step_id") +
                                                          " without a preceding tool step"});
                const auto result = str(a, "result");
                if (result == "continue" &&
                    (i + 1 >= acts.size() || str(acts[i + 1], "executor") != "instruction_generation"))
                    issues.push_back({"tool_grammar", agent + ": continue at " + str(a, "step_id") +
                                                          " not followed by instruction_generation"});
                if (result != "continue" && result != "stop")
                    issues.push_back({"tool_grammar", agent + ": tool_decision " + str(a, "step_id") +
                                                          " has no continue/stop result"});
            }
        }
    }
    return issues;
}

std::vector<TraceIssue> check_summary_order(const std::vector<json>& log) {
    std::vector<TraceIssue> issues;
    std::set<std::pair<std::string, std::string>> reflected;
    for (const auto& e : log) {
        if (type_of(e) == "action" && str(e, "executor") == "reflection" && str(e, "status") == "finished")
            reflected.insert({str(e, "agent_id"), str(e, "stage_id")});
        if (type_of(e) == "step_started" && str(e, "executor") == "summary" &&
            !reflected.contains({str(e, "agent_id"), str(e, "stage_id")}))
            issues.push_back({"summary_order", str(e, "agent_id") + " summarized " + str(e, "stage_id") +
                                                   " before any reflection"});
    }
    return issues;
}

std::vector<TraceIssue> check_trace(const std::vector<json>& log) {
    std::vector<TraceIssue> all;
    for (auto* fn : {check_stage_intervals, check_message_branching, check_lock_protocol, check_tool_grammar,
                     check_summary_order}) {
        auto part = fn(log);
        all.insert(all.end(), part.begin(), part.end());
    }
    return all;
}

}  // namespace mas
