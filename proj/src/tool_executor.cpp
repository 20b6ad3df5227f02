#include "mas/executor.hpp"
#include "mas/tool_client.hpp"

namespace mas {

ExecutorOutput run_tool_step(const ExecutionContext& ctx, const Services& services) {
    ExecutorOutput out;
    const auto& step = ctx.step;
    const auto& server = step.executor;
    if (!step.instruction_content.is_object() || !step.instruction_content.contains("action")) {
        out.failed = true;
        out.error = "tool step " + step.step_id + " has no instruction_content";
        return out;
    }
    if (!services.tools) {
        out.failed = true;
        out.error = "no tool client";
        return out;
    }

    std::string content = "tool_server: " + server + "\ntool_step: " + step.step_id + "\n";
    const auto action = step.instruction_content.value("action", std::string{});
    try {
        services.tools->ensure_sessions(ctx.agent);
        if (action == "list_capabilities") {
            json caps = json::array();
            for (const auto& c : services.tools->list_capabilities(server)) caps.push_back(c.to_json());
            out.result_text = std::to_string(caps.size()) + " capabilities on " + server;
            content += "result: " + out.result_text + "\ncapabilities_list_description: " + caps.dump();
        } else if (action == "call") {
            const auto capability = step.instruction_content.value("capability", std::string{});
            const auto result = services.tools->execute_capability(
                server, capability, step.instruction_content.value("arguments", json::object()));
            out.result_text = result.is_string() ? result.get<std::string>() : result.dump();
            content += "capability: " + capability + "\nresult: " + out.result_text;
        } else {
            out.failed = true;
            out.error = "unknown tool action '" + action + "'";
            return out;
        }
    } catch (const ToolError& e) {
        out.result_text = "error (" + std::string(to_string(e.kind())) + "): " + e.what();
        content += "result: " + out.result_text;
    }

    out.sync_instructions.push_back({SyncKind::send_message,
                                     json{{"task_id", step.task_id},
                                          {"receivers", {ctx.agent.agent_id}},
                                          {"content", content},
                                          {"kind", "tool_result"},
                                          {"stage_relative", step.stage_id}}});
    return out;
}

}  // namespace mas
