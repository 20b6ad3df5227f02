#include "mas/prompts.hpp"

#include <filesystem>
#include <fstream>
#include <sstream>

#include "mas/agent_config.hpp"

namespace mas {

namespace {

const std::map<std::string, std::string>& builtin_directives() {
    static const std::map<std::string, std::string> d{
        {"planning",
         "Skill: planning. Break your stage goal into an ordered list of steps. Reply with "
         "<planned_step>[{\"step_intent\": ..., \"type\": \"skill\"|\"tool\", \"executor\": ..., "
         "\"text_content\": ...}]</planned_step>. Do not plan a summary step; reflection adds it."},
        {"reflection",
         "Skill: reflection. Compare the executed steps with the stage plan. Reply with "
         "<control>{\"verdict\": \"done\"}</control> when the goal is met, or "
         "<control>{\"verdict\": \"adjust\"}</control> plus a <planned_step>[...]</planned_step> block."},
        {"summary",
         "Skill: summary. Conclude your part of the stage. Reply with "
         "<control>{\"summary\": \"...\"}</control>. Do not deliver results to other agents here."},
        {"instruction_generation",
         "Skill: instruction_generation. Write the instruction for the next tool step. Reply with "
         "<control>{\"instruction\": {\"action\": \"list_capabilities\"}}</control> or "
         "<control>{\"instruction\": {\"action\": \"call\", \"capability\": ..., \"arguments\": {...}}}</control>."},
        {"think", "Skill: think. Reason about the step using the recent steps. Reply in plain text."},
        {"quick_think", "Skill: quick_think. Answer the step directly. Reply in plain text."},
        {"send_message",
         "Skill: send_message. If you lack information, reply <control>{\"sufficient\": false}</control>. "
         "Otherwise reply <message>{\"receivers\": [...], \"content\": ..., \"need_reply\": bool, "
         "\"waiting\": bool}</message>."},
        {"process_message",
         "Skill: process_message. Digest the message; no reply is expected. Keep what matters in memory. "
         "To react, reply <control>{\"react\": true, \"decision_intent\": ...}</control>."},
        {"task_manager",
         "Skill: task_manager. Manage the task. Reply with <control>{\"commands\": [{\"cmd\": "
         "\"add_stage\"|\"next_stage\"|\"finish_stage\"|\"update_task\"|\"finish_task\"|\"send_message\", ...}]}</control>."},
        {"agent_manager",
         "Skill: agent_manager. Create or modify agents. Reply with <control>{\"commands\": [{\"cmd\": "
         "\"create_agent\", \"config\": {...}} | {\"cmd\": \"modify_agent\", \"agent\": ..., ...}]}</control>."},
        {"ask_info",
         "Skill: ask_info. Ask the system for details. Reply with <control>{\"query\": \"task\"|\"stage\"|\"agent\", "
         "\"target\": ...}</control>; the answer arrives as a message."},
        {"tool_decision",
         "Skill: tool_decision. Read the tool result. Reply <control>{\"continue\": true}</control> to make "
         "another call or <control>{\"continue\": false}</control> to stop."},
        {"decision",
         "Skill: decision. Plan the immediate next steps. Reply with <planned_step>[...]</planned_step>; "
         "they run before anything else pending."},
    };
    return d;
}

bool sees_history(const std::string& skill) {
    return skill != "quick_think" && skill != "task_manager" && skill != "agent_manager" && skill != "ask_info";
}

bool sees_members(const std::string& skill) {
    return skill == "send_message" || skill == "task_manager" || skill == "agent_manager" || skill == "decision";
}

std::string describe_step(const StepState& s) {
    std::string line = "[" + s.step_id + "] " + s.executor + " (" + std::string(to_string(s.status)) + "): " +
                       s.step_intent;
    if (s.execute_result && !s.execute_result->empty()) line += " => " + *s.execute_result;
    return line;
}

}  // namespace

PromptLibrary::PromptLibrary() : directives_(builtin_directives()) {}

std::size_t PromptLibrary::load_dir(const std::string& dir) {
    std::size_t n = 0;
    for (const auto& skill : known_skills()) {
        std::ifstream in(std::filesystem::path(dir) / (skill + ".txt"));
        if (!in) continue;
        std::stringstream ss;
        ss << in.rdbuf();
        directives_[skill] = ss.str();
        ++n;
    }
    return n;
}

void PromptLibrary::set(const std::string& skill, std::string directive) {
    directives_[skill] = std::move(directive);
}

const std::string& PromptLibrary::directive(const std::string& skill) const {
    static const std::string empty;
    auto it = directives_.find(skill);
    return it == directives_.end() ? empty : it->second;
}

const std::string& memory_contract() {
    static const std::string text =
        "Persistent memory: entries are keyed by compact ISO timestamps such as 20250613T103022. "
        "To change memory, include <persistent_memory>[{\"add\": \"note\"}, {\"delete\": \"<key>\"}]"
        "</persistent_memory>. Omit the block to leave memory unchanged.";
    return text;
}

BackendRequest build_request(const PromptLibrary& prompts, const ExecutionContext& ctx, const std::string& skill,
                             bool with_history) {
    BackendRequest req;
    req.agent_id = ctx.agent.agent_id;
    req.agent_name = ctx.agent.name;
    req.skill_name = skill;

    req.system_text = "You are " + ctx.agent.name + ", " + (ctx.agent.role.empty() ? "an agent" : ctx.agent.role) + ".";
    if (!ctx.agent.profile.empty()) req.system_text += "\n" + ctx.agent.profile;

    std::ostringstream c;
    if (ctx.task) c << "Task " << ctx.task->task_id << ": " << ctx.task->instruction << "\n";
    if (skill == "task_manager" && ctx.task) {
        c << "Stages:\n";
        for (const auto& sid : ctx.task->stage_ids) c << "- " << sid << "\n";
        for (const auto& [k, v] : ctx.task->shared_info) c << "Shared " << k << ": " << v << "\n";
    }
    if (sees_members(skill) && !ctx.task_members.empty()) {
        c << "Members:\n";
        for (const auto& m : ctx.task_members)
            c << "- " << m.value("name", std::string{}) << " (" << m.value("agent_id", std::string{})
              << "): " << m.value("role", std::string{}) << "\n";
    }
    if (skill == "reflection" || skill == "summary") {
        for (const auto& h : ctx.history) {
            if (h.executor != "planning") continue;
            c << "Stage plan:\n" << h.text_content << "\n";
            if (h.execute_result) c << "Planned: " << *h.execute_result << "\n";
            break;
        }
    }
    if (skill == "instruction_generation" && ctx.next_todo) {
        c << "Next tool step: " << ctx.next_todo->step_id << " on " << ctx.next_todo->executor << ": "
          << ctx.next_todo->text_content << "\n";
    }
    if (with_history && sees_history(skill) && !ctx.history.empty()) {
        c << "Recent steps:\n";
        const auto begin = ctx.history.size() > kHistoryWindow ? ctx.history.size() - kHistoryWindow : 0;
        for (std::size_t i = begin; i < ctx.history.size(); ++i) c << describe_step(ctx.history[i]) << "\n";
    }
    c << "Memory:\n";
    if (ctx.agent.persistent_memory.empty()) c << "(empty)\n";
    for (const auto& [k, v] : ctx.agent.persistent_memory) c << k << ": " << v << "\n";
    req.context_text = c.str();

    req.instruction_text = prompts.directive(skill) + "\n\n" + memory_contract() + "\n\nStep intent: " +
                           ctx.step.step_intent + "\nStep content:\n" + ctx.step.text_content;
    return req;
}

}  // namespace mas
