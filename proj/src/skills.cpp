#include <algorithm>

#include "mas/executor.hpp"
#include "mas/messaging.hpp"
#include "mas/prompts.hpp"
#include "mas/skill_output.hpp"

// What each skill sees besides its own step and the agent's memory:
//
//   skill                   task  members  history  other
//   planning                 x              stage
//   reflection               x              stage    planning step of the stage
//   summary                  x              stage    planning step of the stage
//   instruction_generation   x              stage    next pending tool step
//   think                    x              stage
//   quick_think              x
//   send_message             x      x       stage
//   process_message          x              stage
//   task_manager             x      x                stage ids, shared info
//   agent_manager            x      x
//   ask_info                 x
//   tool_decision            x              stage
//   decision                 x      x       stage
//
// Reflection and summary never read StageState; the objective comes from the
// planning step's text.

namespace mas {

namespace {

class PreconditionError : public Error {
public:
    using Error::Error;
};

constexpr std::string_view kRetryMarker = "[retry after information retrieval #";
constexpr int kMaxInformationRounds = 3;

using Interpret = ExecutorOutput (*)(const ExecutionContext&, ParsedSkillOutput&, const std::string& raw);

ExecutorOutput failure(std::string error) {
    ExecutorOutput out;
    out.failed = true;
    out.error = std::move(error);
    return out;
}

std::vector<StepDraft> strip_summaries(std::vector<StepDraft> drafts, std::vector<std::string>& warnings) {
    auto it = std::remove_if(drafts.begin(), drafts.end(), [](const StepDraft& d) { return d.executor == "summary"; });
    if (it != drafts.end()) {
        warnings.push_back("summary steps cannot be planned; dropped " +
                           std::to_string(std::distance(it, drafts.end())));
        drafts.erase(it, drafts.end());
    }
    return drafts;
}

std::string list_executors(const std::vector<StepDraft>& drafts) {
    std::string out;
    for (const auto& d : drafts) out += (out.empty() ? "" : ", ") + d.executor;
    return out;
}

void require_stage(const ExecutionContext& ctx, const char* skill) {
    if (!ctx.step.has_stage()) throw PreconditionError(std::string(skill) + " requires a stage; step is no_stage");
}

const StepState* planning_step(const ExecutionContext& ctx) {
    for (const auto& h : ctx.history) {
        if (h.executor == "planning" && h.stage_id == ctx.step.stage_id) return &h;
    }
    return nullptr;
}

std::string text_or(const ParsedSkillOutput& p, const std::string& raw) {
    return p.free_text.empty() ? raw : p.free_text;
}

// -- interpreters ------------------------------------------------------------

ExecutorOutput planning(const ExecutionContext&, ParsedSkillOutput& p, const std::string&) {
    ExecutorOutput out;
    out.append_steps = strip_summaries(std::move(p.planned_steps), out.warnings);
    out.result_text = "planned " + std::to_string(out.append_steps.size()) + " steps";
    if (!out.append_steps.empty()) out.result_text += ": " + list_executors(out.append_steps);
    return out;
}

ExecutorOutput reflection(const ExecutionContext& ctx, ParsedSkillOutput& p, const std::string&) {
    const auto verdict = p.control.value("verdict", std::string{});
    ExecutorOutput out;
    if (verdict == "done") {
        StepDraft d;
        d.executor = "summary";
        d.step_intent = "Summarize stage " + ctx.step.stage_id;
        d.text_content = "Conclude your part of stage " + ctx.step.stage_id + ".";
        out.append_steps.push_back(std::move(d));
        out.result_text = "verdict: done";
    } else if (verdict == "adjust") {
        out.append_steps = strip_summaries(std::move(p.planned_steps), out.warnings);
        out.result_text = "verdict: adjust, " + std::to_string(out.append_steps.size()) + " steps added";
    } else {
        throw SkillParseError("reflection needs a verdict of done or adjust");
    }
    return out;
}

ExecutorOutput summary(const ExecutionContext& ctx, ParsedSkillOutput& p, const std::string& raw) {
    ExecutorOutput out;
    auto text = p.control.value("summary", std::string{});
    if (text.empty()) text = text_or(p, raw);
    out.sync_instructions.push_back(
        {SyncKind::update_stage_completion, json{{"stage_id", ctx.step.stage_id}, {"summary", text}}});
    out.sync_instructions.push_back(
        {SyncKind::finish_stage, json{{"stage_id", ctx.step.stage_id}, {"if_complete", true}}});
    out.result_text = text;
    return out;
}

json normalize_instruction(const json& control) {
    json ins = control.contains("instruction") ? control.at("instruction") : control;
    if (!ins.is_object()) throw SkillParseError("tool instruction must be an object");
    if (ins.contains("action")) {
        const auto action = ins.at("action").get<std::string>();
        if (action == "list_capabilities" || action == "list") return json{{"action", "list_capabilities"}};
        if (action == "call") {
            if (!ins.contains("capability") || !ins.at("capability").is_string())
                throw SkillParseError("call instruction needs a capability");
            return json{{"action", "call"},
                        {"capability", ins.at("capability")},
                        {"arguments", ins.value("arguments", json::object())}};
        }
        throw SkillParseError("unknown tool action '" + action + "'");
    }
    if (ins.contains("op") && ins.at("op").is_string()) {
        const auto op = ins.at("op").get<std::string>();
        if (op == "list" || op == "list_capabilities") return json{{"action", "list_capabilities"}};
        json args = ins.contains("arguments") ? ins.at("arguments") : ins;
        if (!ins.contains("arguments")) args.erase("op");
        return json{{"action", "call"}, {"capability", op}, {"arguments", args}};
    }
    throw SkillParseError("no tool instruction found");
}

ExecutorOutput instruction_generation(const ExecutionContext& ctx, ParsedSkillOutput& p, const std::string&) {
    ExecutorOutput out;
    auto ins = normalize_instruction(p.control);
    out.result_text = ins.dump();
    out.next_step_update = StepUpdate{ctx.next_todo->step_id, std::move(ins)};
    return out;
}

ExecutorOutput think(const ExecutionContext&, ParsedSkillOutput& p, const std::string& raw) {
    ExecutorOutput out;
    out.result_text = text_or(p, raw);
    return out;
}

std::vector<std::string> receivers_of(const json& draft) {
    if (!draft.contains("receivers")) return {};
    const auto& r = draft.at("receivers");
    if (r.is_string()) return {r.get<std::string>()};
    if (!r.is_array()) throw SkillParseError("message receivers must be a list");
    return r.get<std::vector<std::string>>();
}

ExecutorOutput send_message(const ExecutionContext& ctx, ParsedSkillOutput& p, const std::string&) {
    ExecutorOutput out;
    const auto& step = ctx.step;
    const json meta = step.instruction_content.is_object() ? step.instruction_content : json::object();

    int rounds = 0;
    for (auto pos = step.text_content.find(kRetryMarker); pos != std::string::npos;
         pos = step.text_content.find(kRetryMarker, pos + 1))
        ++rounds;

    if (!p.control.value("sufficient", true) && rounds < kMaxInformationRounds) {
        StepDraft gather;
        gather.executor = "decision";
        gather.step_intent = "Gather what is missing before sending";
        gather.text_content = "Find the information needed for: " + step.step_intent + "\n" + step.text_content;
        StepDraft retry;
        retry.executor = "send_message";
        retry.step_intent = step.step_intent;
        retry.text_content = step.text_content + "\n" + std::string(kRetryMarker) + std::to_string(rounds + 1) + "]";
        retry.instruction_content = step.instruction_content;
        out.insert_steps = {std::move(gather), std::move(retry)};
        out.result_text = "information insufficient; decision step inserted";
        return out;
    }
    if (!p.message_draft) throw SkillParseError("send_message needs a <message> block");
    const json& draft = *p.message_draft;

    auto receivers = receivers_of(draft);
    if (receivers.empty() && meta.contains("reply_to")) receivers.push_back(meta.at("reply_to").get<std::string>());
    if (receivers.empty()) throw SkillParseError("message has no receivers");
    if (!draft.contains("content") || !draft.at("content").is_string())
        throw SkillParseError("message needs string content");

    json payload{{"task_id", step.task_id},
                 {"receivers", receivers},
                 {"content", draft.at("content")},
                 {"need_reply", draft.value("need_reply", false)},
                 {"waiting", draft.value("waiting", false)},
                 {"stage_relative", draft.value("stage_relative", step.stage_id)},
                 {"depth", meta.contains("reply_to") ? meta.value("depth", 0) + 1 : 0}};
    std::optional<std::string> wid;
    if (meta.contains("return_waiting_id") && meta.at("return_waiting_id").is_string())
        wid = meta.at("return_waiting_id").get<std::string>();
    else
        wid = extract_return_waiting_id(step.text_content);
    if (wid) payload["return_waiting_id"] = *wid;

    out.sync_instructions.push_back({SyncKind::send_message, std::move(payload)});
    out.result_text = "sent to " + receivers.front();
    for (std::size_t i = 1; i < receivers.size(); ++i) out.result_text += ", " + receivers[i];
    return out;
}

ExecutorOutput process_message(const ExecutionContext& ctx, ParsedSkillOutput& p, const std::string& raw) {
    ExecutorOutput out;
    if (p.control.value("react", false)) {
        StepDraft d;
        d.executor = "decision";
        d.step_intent = p.control.value("decision_intent", std::string{"React to the message"});
        d.text_content = ctx.step.text_content;
        out.insert_steps.push_back(std::move(d));
    }
    out.result_text = text_or(p, raw);
    return out;
}

json command_list(const json& control, const std::vector<StepDraft>& planned) {
    if (!control.contains("commands") && !planned.empty()) return json::array();
    if (!control.contains("commands") || !control.at("commands").is_array())
        throw SkillParseError("expected <control>{\"commands\": [...]}</control>");
    return control.at("commands");
}

ExecutorOutput task_manager(const ExecutionContext& ctx, ParsedSkillOutput& p, const std::string&) {
    static const std::set<SyncKind> allowed{SyncKind::add_stage,   SyncKind::finish_stage, SyncKind::next_stage,
                                            SyncKind::update_task, SyncKind::finish_task,  SyncKind::send_message};
    ExecutorOutput out;
    for (const auto& cmd : command_list(p.control, p.planned_steps)) {
        if (!cmd.is_object() || !cmd.contains("cmd")) throw SkillParseError("command without 'cmd'");
        const auto name = cmd.at("cmd").get<std::string>();
        auto kind = sync_kind_from(name);
        if (!kind || !allowed.contains(*kind)) throw SkillParseError("task_manager cannot issue '" + name + "'");
        json payload = cmd;
        payload.erase("cmd");
        if (!payload.contains("task_id") && *kind != SyncKind::finish_stage) payload["task_id"] = ctx.step.task_id;
        out.sync_instructions.push_back({*kind, std::move(payload)});
    }
    out.append_steps = strip_summaries(std::move(p.planned_steps), out.warnings);
    out.result_text = std::to_string(out.sync_instructions.size()) + " commands";
    return out;
}

ExecutorOutput agent_manager(const ExecutionContext& ctx, ParsedSkillOutput& p, const std::string&) {
    ExecutorOutput out;
    for (const auto& cmd : command_list(p.control, p.planned_steps)) {
        if (!cmd.is_object() || !cmd.contains("cmd")) throw SkillParseError("command without 'cmd'");
        const auto name = cmd.at("cmd").get<std::string>();
        json payload = cmd;
        payload.erase("cmd");
        if (name == "create_agent") {
            if (!payload.contains("join_task") && !ctx.step.task_id.empty()) payload["join_task"] = ctx.step.task_id;
            out.sync_instructions.push_back({SyncKind::create_agent, std::move(payload)});
        } else if (name == "modify_agent") {
            out.sync_instructions.push_back({SyncKind::modify_agent, std::move(payload)});
        } else {
            throw SkillParseError("agent_manager cannot issue '" + name + "'");
        }
    }
    out.append_steps = strip_summaries(std::move(p.planned_steps), out.warnings);
    out.result_text = std::to_string(out.sync_instructions.size()) + " commands";
    return out;
}

ExecutorOutput ask_info(const ExecutionContext& ctx, ParsedSkillOutput& p, const std::string&) {
    if (!p.control.contains("query") || !p.control.at("query").is_string())
        throw SkillParseError("ask_info needs a query");
    ExecutorOutput out;
    json payload{{"task_id", ctx.step.task_id}, {"query", p.control.at("query")}};
    if (p.control.contains("target")) payload["target"] = p.control.at("target");
    out.sync_instructions.push_back({SyncKind::query_info, std::move(payload)});
    out.result_text = "asked for " + p.control.at("query").get<std::string>() + " info";
    return out;
}

std::optional<std::string> field_line(const std::string& text, std::string_view key) {
    const std::string prefix = std::string(key) + ": ";
    std::size_t pos = 0;
    while (pos < text.size()) {
        auto end = text.find('\n', pos);
        if (end == std::string::npos) end = text.size();
        if (text.compare(pos, prefix.size(), prefix) == 0) return text.substr(pos + prefix.size(), end - pos - prefix.size());
        pos = end + 1;
    }
    return std::nullopt;
}

ExecutorOutput tool_decision(const ExecutionContext& ctx, ParsedSkillOutput& p, const std::string&) {
    if (!p.control.contains("continue") || !p.control.at("continue").is_boolean())
        throw SkillParseError("tool_decision needs continue: true|false");
    ExecutorOutput out;
    if (!p.control.at("continue").get<bool>()) {
        out.result_text = "stop";
        return out;
    }
    auto server = field_line(ctx.step.text_content, "tool_server");
    if (!server) throw PreconditionError("tool result names no tool_server");

    StepDraft ig;
    ig.executor = "instruction_generation";
    ig.step_intent = "Prepare the next call on " + *server;
    ig.text_content = "Prepare the next call on " + *server + ".";
    if (p.control.contains("intent")) ig.text_content += "\nIntent: " + p.control.at("intent").get<std::string>();
    if (auto caps = field_line(ctx.step.text_content, "capabilities_list_description"))
        ig.text_content += "\ncapabilities_list_description: " + *caps;
    StepDraft tool;
    tool.step_type = StepType::tool;
    tool.executor = *server;
    tool.step_intent = "Call " + *server;
    tool.text_content = "Tool call on " + *server;
    out.insert_steps = {std::move(ig), std::move(tool)};
    out.result_text = "continue";
    return out;
}

ExecutorOutput decision(const ExecutionContext&, ParsedSkillOutput& p, const std::string&) {
    ExecutorOutput out;
    out.insert_steps = strip_summaries(std::move(p.planned_steps), out.warnings);
    out.result_text = "inserted " + std::to_string(out.insert_steps.size()) + " steps";
    if (!out.insert_steps.empty()) out.result_text += ": " + list_executors(out.insert_steps);
    return out;
}

struct SkillSpec {
    Interpret interpret;
    void (*precheck)(const ExecutionContext&);
};

void no_check(const ExecutionContext&) {}
void check_planning(const ExecutionContext& ctx) { require_stage(ctx, "planning"); }
void check_summary(const ExecutionContext& ctx) { require_stage(ctx, "summary"); }
void check_reflection(const ExecutionContext& ctx) {
    require_stage(ctx, "reflection");
    if (!planning_step(ctx)) throw PreconditionError("no planning step for " + ctx.step.stage_id + " in history");
}
void check_instruction_generation(const ExecutionContext& ctx) {
    if (!ctx.next_todo) throw PreconditionError("instruction_generation needs a following tool step; queue is empty");
    if (ctx.next_todo->step_type != StepType::tool)
        throw PreconditionError("instruction_generation needs a following tool step; next is " +
                                ctx.next_todo->executor);
}

const std::map<std::string, SkillSpec>& skill_table() {
    static const std::map<std::string, SkillSpec> t{
        {"planning", {planning, check_planning}},
        {"reflection", {reflection, check_reflection}},
        {"summary", {summary, check_summary}},
        {"instruction_generation", {instruction_generation, check_instruction_generation}},
        {"think", {think, no_check}},
        {"quick_think", {think, no_check}},
        {"send_message", {send_message, no_check}},
        {"process_message", {process_message, no_check}},
        {"task_manager", {task_manager, no_check}},
        {"agent_manager", {agent_manager, no_check}},
        {"ask_info", {ask_info, no_check}},
        {"tool_decision", {tool_decision, no_check}},
        {"decision", {decision, no_check}},
    };
    return t;
}

}  // namespace

ExecutorOutput run_skill(const ExecutionContext& ctx, const Services& services) {
    const auto& skill = ctx.step.executor;
    auto it = skill_table().find(skill);
    if (it == skill_table().end()) return failure("unknown executor '" + skill + "'");
    try {
        it->second.precheck(ctx);
    } catch (const PreconditionError& e) {
        return failure(e.what());
    }
    if (!services.backend_for || !services.prompts) return failure("no backend configured");
    auto backend = services.backend_for(ctx.agent);
    if (!backend) return failure("no backend for llm '" + ctx.agent.llm_config_ref + "'");

    const auto request = build_request(*services.prompts, ctx, skill, skill != "quick_think");
    std::string last_error;
    std::vector<std::string> retry_notes;
    for (int attempt = 0; attempt <= services.max_retries; ++attempt) {
        try {
            const auto response = backend->complete(request);
            auto parsed = parse_skill_output(response.text);
            auto out = it->second.interpret(ctx, parsed, response.text);
            out.memory_ops = std::move(parsed.memory_ops);
            out.warnings.insert(out.warnings.begin(), parsed.warnings.begin(), parsed.warnings.end());
            out.warnings.insert(out.warnings.begin(), retry_notes.begin(), retry_notes.end());
            return out;
        } catch (const PreconditionError& e) {
            return failure(e.what());
        } catch (const BackendError& e) {
            last_error = e.what();
        } catch (const SkillParseError& e) {
            last_error = e.what();
        }
        retry_notes.push_back("attempt " + std::to_string(attempt + 1) + " failed: " + last_error);
    }
    if (skill == "tool_decision") {
        ExecutorOutput out;
        out.result_text = "stop";
        out.warnings = std::move(retry_notes);
        out.warnings.push_back("no usable decision; stopping the tool loop");
        return out;
    }
    auto out = failure("skill output unusable after " + std::to_string(services.max_retries + 1) +
                       " attempts: " + last_error);
    out.warnings = std::move(retry_notes);
    return out;
}

}  // namespace mas
