#include <doctest.h>

#include <cstdlib>
#include <fstream>
#include <sstream>

#include "mas/executor.hpp"
#include "mas/prompts.hpp"
#include "mas/skill_output.hpp"
#include "support.hpp"

using namespace mas;
using namespace testsupport;

namespace {

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

struct Harness {
    PromptLibrary prompts;
    MemoryClock clock;
    std::shared_ptr<ScriptedBackend> backend;
    Services svc;

    explicit Harness(const json& rules, std::optional<std::string> fallback = std::nullopt)
        : backend(ScriptedBackend::from_json(rules, std::move(fallback))) {
        svc.backend_for = [this](const AgentState&) { return std::static_pointer_cast<Backend>(backend); };
        svc.prompts = &prompts;
        svc.clock = &clock;
    }

    ExecutorOutput run(const ExecutionContext& ctx) { return run_skill(ctx, svc); }
};

/// Reply with `text` for every request.
Harness always(const std::string& text) { return Harness(json::array({rule("*", "", text)})); }

StepState make_step(const std::string& executor, const std::string& text, const std::string& stage = "stage-1") {
    StepState s;
    s.step_id = "step-10";
    s.task_id = "task-1";
    s.stage_id = stage;
    s.agent_id = "agent-1";
    s.executor = executor;
    s.step_intent = executor + " step";
    s.text_content = text;
    s.status = StepStatus::running;
    return s;
}

ExecutionContext context(const std::string& executor, const std::string& text = "do it",
                         const std::string& stage = "stage-1") {
    ExecutionContext ctx;
    ctx.step = make_step(executor, text, stage);
    ctx.agent = agent("writer", {"planning", "reflection", "summary", "think", "quick_think", "instruction_generation",
                                 "tool_decision", "decision", "task_manager", "agent_manager", "ask_info"},
                      {"calc"});
    ctx.agent.agent_id = "agent-1";
    TaskState t;
    t.task_id = "task-1";
    t.instruction = "write a report";
    ctx.task = t;
    return ctx;
}

StepState done_step(const std::string& id, const std::string& executor, const std::string& result,
                    const std::string& stage = "stage-1") {
    auto s = make_step(executor, executor + " text", stage);
    s.step_id = id;
    s.status = StepStatus::finished;
    s.execute_result = result;
    return s;
}

}  // namespace

TEST_SUITE("skill_output") {
    TEST_CASE("memory block with an add") {
        auto ops = parse_memory_ops(R"(<persistent_memory>[{"add":"done X"}]</persistent_memory>)");
        REQUIRE(ops.size() == 1);
        CHECK(ops[0] == MemoryOp{MemoryOp::Kind::add, "done X"});
    }

    TEST_CASE("text without the tag has no ops") { CHECK(parse_memory_ops("nothing to remember").empty()); }

    TEST_CASE("memory block with a delete") {
        auto ops = parse_memory_ops(R"(<persistent_memory>[{"delete":"20250613T103022"}]</persistent_memory>)");
        REQUIRE(ops.size() == 1);
        CHECK(ops[0] == MemoryOp{MemoryOp::Kind::remove, "20250613T103022"});
    }

    TEST_CASE("a malformed memory block warns and yields nothing") {
        std::vector<std::string> warnings;
        CHECK(parse_memory_ops("<persistent_memory>[{add: oops}</persistent_memory>", &warnings).empty());
        CHECK(warnings.size() == 1);
    }

    TEST_CASE("all four blocks and free text") {
        auto p = parse_skill_output("Plan follows. " + plan(json::array({step("think", "t")})) + ctl({{"verdict", "done"}}) +
                                    msg({{"content", "hi"}}) + mem(json::array({{{"add", "x"}}})) + " End.");
        CHECK(p.planned_steps.size() == 1);
        CHECK(p.control.at("verdict") == "done");
        REQUIRE(p.message_draft);
        CHECK(p.message_draft->at("content") == "hi");
        CHECK(p.memory_ops.size() == 1);
        CHECK(p.free_text.find("Plan follows.") != std::string::npos);
        CHECK(p.free_text.find("<control>") == std::string::npos);
    }

    TEST_CASE("bad control JSON is a parse error") {
        CHECK_THROWS_AS(parse_skill_output("<control>{not json</control>"), SkillParseError);
    }
}

TEST_SUITE("skills") {
    TEST_CASE("planning appends the plan in order") {
        auto h = always(plan(json::array({step("think", "a"), step("calc", "b", "", "tool"), step("reflection", "c")})));
        auto out = h.run(context("planning"));
        REQUIRE_FALSE(out.failed);
        REQUIRE(out.append_steps.size() == 3);
        CHECK(out.append_steps[0].executor == "think");
        CHECK(out.append_steps[1].step_type == StepType::tool);
        CHECK(out.append_steps[2].executor == "reflection");
    }

    TEST_CASE("planning drops summary drafts with a warning") {
        auto h = always(plan(json::array({step("think", "a"), step("summary", "s")})));
        auto out = h.run(context("planning"));
        CHECK(out.append_steps.size() == 1);
        CHECK_FALSE(out.warnings.empty());
    }

    TEST_CASE("an empty plan finishes with nothing appended") {
        auto h = always(plan(json::array()));
        auto out = h.run(context("planning"));
        CHECK_FALSE(out.failed);
        CHECK(out.append_steps.empty());
    }

    TEST_CASE("reflection done appends exactly one summary") {
        auto h = always(ctl({{"verdict", "done"}}));
        auto ctx = context("reflection");
        ctx.history.push_back(done_step("step-2", "planning", "planned"));
        auto out = h.run(ctx);
        REQUIRE(out.append_steps.size() == 1);
        CHECK(out.append_steps[0].executor == "summary");
    }

    TEST_CASE("reflection adjust appends the new steps and no summary") {
        auto h = always(ctl({{"verdict", "adjust"}}) + plan(json::array({step("think", "a"), step("think", "b")})));
        auto ctx = context("reflection");
        ctx.history.push_back(done_step("step-2", "planning", "planned"));
        auto out = h.run(ctx);
        CHECK(out.append_steps.size() == 2);
        for (const auto& d : out.append_steps) CHECK(d.executor != "summary");
    }

    TEST_CASE("reflection without a planning step fails") {
        auto h = always(ctl({{"verdict", "done"}}));
        auto out = h.run(context("reflection"));
        CHECK(out.failed);
        CHECK(h.backend->calls() == 0);
    }

    TEST_CASE("summary reports completion and asks to finish the stage") {
        auto h = always(ctl({{"summary", "all good"}}));
        auto out = h.run(context("summary"));
        REQUIRE(out.sync_instructions.size() == 2);
        CHECK(out.sync_instructions[0].kind == SyncKind::update_stage_completion);
        CHECK(out.sync_instructions[0].payload.at("summary") == "all good");
        CHECK(out.sync_instructions[1].kind == SyncKind::finish_stage);
    }

    TEST_CASE("summary on a no_stage step fails") {
        auto h = always(ctl({{"summary", "x"}}));
        CHECK(h.run(context("summary", "x", std::string(kNoStage))).failed);
    }

    TEST_CASE("instruction generation rewrites the next tool step") {
        auto h = always(ctl({{"op", "add"}, {"a", 1}, {"b", 2}}));
        auto ctx = context("instruction_generation");
        auto tool = make_step("calc", "calculator call");
        tool.step_id = "step-11";
        tool.step_type = StepType::tool;
        ctx.next_todo = tool;
        auto out = h.run(ctx);
        REQUIRE_FALSE(out.failed);
        REQUIRE(out.next_step_update);
        CHECK(out.next_step_update->step_id == "step-11");
        const auto& ins = out.next_step_update->instruction_content;
        CHECK(ins.at("action") == "call");
        CHECK(ins.at("capability") == "add");
        CHECK(ins.at("arguments") == json{{"a", 1}, {"b", 2}});
    }

    TEST_CASE("instruction generation needs a following tool step") {
        auto h = always(ctl({{"op", "add"}}));
        CHECK(h.run(context("instruction_generation")).failed);
        auto ctx = context("instruction_generation");
        ctx.next_todo = make_step("think", "x");
        CHECK(h.run(ctx).failed);
    }

    TEST_CASE("quick think returns the backend text") {
        Harness h(json::array({rule("quick_think", "say hi", "hi")}));
        auto out = h.run(context("quick_think", "say hi"));
        CHECK(out.result_text == "hi");
    }

    TEST_CASE("think prompt carries the history results") {
        auto ctx = context("think", "Decide the title");
        ctx.history = {done_step("step-3", "planning", "planned 2 steps: think, reflection"),
                       done_step("step-4", "quick_think", "The title is Orbit")};
        ctx.agent.persistent_memory = {{"20250613T103022", "reader prefers short titles"}};
        PromptLibrary prompts;
        auto req = build_request(prompts, ctx, "think", true);
        CHECK(req.context_text.find("planned 2 steps") != std::string::npos);
        CHECK(req.context_text.find("The title is Orbit") != std::string::npos);

        const auto rendered = "[system]\n" + req.system_text + "\n[context]\n" + req.context_text + "[instruction]\n" +
                              req.instruction_text + "\n";
        const auto golden = source_path("tests/golden/think_prompt.txt");
        if (std::getenv("MAS_UPDATE_GOLDEN")) {
            std::ofstream(golden, std::ios::binary) << rendered;
        }
        CHECK(rendered == read_file(golden));
    }

    TEST_CASE("think with no history matches quick think apart from the directive") {
        auto ctx = context("think", "x");
        PromptLibrary prompts;
        auto think = build_request(prompts, ctx, "think", true);
        auto quick = build_request(prompts, ctx, "quick_think", false);
        CHECK(think.context_text == quick.context_text);
        CHECK(think.instruction_text.substr(prompts.directive("think").size()) ==
              quick.instruction_text.substr(prompts.directive("quick_think").size()));
    }

    TEST_CASE("quick think never sees history") {
        auto ctx = context("quick_think", "x");
        ctx.history = {done_step("step-3", "think", "secret result")};
        PromptLibrary prompts;
        CHECK(build_request(prompts, ctx, "quick_think", false).context_text.find("secret result") == std::string::npos);
    }

    TEST_CASE("history window keeps the last steps only") {
        auto ctx = context("think", "x");
        for (int i = 0; i < 25; ++i) ctx.history.push_back(done_step("step-" + std::to_string(i), "think", "r" + std::to_string(i) + "."));
        PromptLibrary prompts;
        auto c = build_request(prompts, ctx, "think", true).context_text;
        CHECK(c.find("r4.") == std::string::npos);
        CHECK(c.find("r5.") != std::string::npos);
        CHECK(c.find("r24.") != std::string::npos);
    }

    TEST_CASE("send_message one-way gives one instruction") {
        auto h = always(msg({{"receivers", {"reviewer"}}, {"content", "fyi"}, {"need_reply", false}}));
        auto out = h.run(context("send_message"));
        REQUIRE(out.sync_instructions.size() == 1);
        CHECK(out.sync_instructions[0].kind == SyncKind::send_message);
        CHECK(out.sync_instructions[0].payload.at("need_reply") == false);
        CHECK(out.sync_instructions[0].payload.at("waiting") == false);
    }

    TEST_CASE("send_message with waiting asks for locks on both receivers") {
        auto h = always(msg({{"receivers", {"a", "b"}}, {"content", "q"}, {"need_reply", true}, {"waiting", true}}));
        auto out = h.run(context("send_message"));
        REQUIRE(out.sync_instructions.size() == 1);
        CHECK(out.sync_instructions[0].payload.at("receivers").size() == 2);
        CHECK(out.sync_instructions[0].payload.at("waiting") == true);
    }

    TEST_CASE("insufficient information inserts a decision before the retry") {
        auto h = always(ctl({{"sufficient", false}}));
        auto out = h.run(context("send_message", "ask them"));
        REQUIRE(out.insert_steps.size() == 2);
        CHECK(out.insert_steps[0].executor == "decision");
        CHECK(out.insert_steps[1].executor == "send_message");
        CHECK(out.insert_steps[1].text_content.find("#1]") != std::string::npos);
        CHECK(out.sync_instructions.empty());
    }

    TEST_CASE("a reply echoes the wait id it was handed") {
        auto h = always(msg({{"content", "yes"}}));
        auto ctx = context("send_message", "Message from agent-2 (msg-1):\nq?\nreply_to: agent-2\nreturn_waiting_id: wid-1-agent-1");
        ctx.step.instruction_content = {{"reply_to", "agent-2"}, {"depth", 0}, {"return_waiting_id", "wid-1-agent-1"}};
        auto out = h.run(ctx);
        REQUIRE(out.sync_instructions.size() == 1);
        const auto& p = out.sync_instructions[0].payload;
        CHECK(p.at("receivers") == json::array({"agent-2"}));
        CHECK(p.at("return_waiting_id") == "wid-1-agent-1");
        CHECK(p.at("depth") == 1);
    }

    TEST_CASE("process_message variants") {
        SUBCASE("noted") {
            auto out = always("noted").run(context("process_message", "hello", std::string(kNoStage)));
            CHECK_FALSE(out.failed);
            CHECK(out.insert_steps.empty());
            CHECK(out.append_steps.empty());
        }
        SUBCASE("reaction") {
            auto out = always(ctl({{"react", true}})).run(context("process_message", "urgent"));
            REQUIRE(out.insert_steps.size() == 1);
            CHECK(out.insert_steps[0].executor == "decision");
        }
        SUBCASE("memory") {
            auto out = always("ok " + mem(json::array({{{"add", "remember this"}}}))).run(context("process_message"));
            CHECK(out.memory_ops.size() == 1);
        }
    }

    TEST_CASE("task_manager turns commands into instructions") {
        auto h = always(ctl({{"commands", json::array({{{"cmd", "add_stage"}, {"objective", "A"}, {"allocation", {{"w", "x"}}}},
                                                       {{"cmd", "add_stage"}, {"objective", "B"}, {"allocation", {{"w", "y"}}}},
                                                       {{"cmd", "next_stage"}}})}}));
        auto out = h.run(context("task_manager", "Task: t", std::string(kNoStage)));
        REQUIRE(out.sync_instructions.size() == 3);
        CHECK(out.sync_instructions[0].payload.at("objective") == "A");
        CHECK(out.sync_instructions[1].payload.at("objective") == "B");
        CHECK(out.sync_instructions[0].payload.at("task_id") == "task-1");
    }

    TEST_CASE("task_manager refuses commands outside its vocabulary") {
        auto h = always(ctl({{"commands", json::array({{{"cmd", "create_agent"}}})}}));
        CHECK(h.run(context("task_manager", "x", std::string(kNoStage))).failed);
    }

    TEST_CASE("agent_manager create defaults to the current task") {
        auto h = always(ctl({{"commands", json::array({{{"cmd", "create_agent"}, {"config", {{"name", "w9"}, {"skills", {"think"}}}}},
                                                       {{"cmd", "modify_agent"}, {"agent", "w2"}, {"add_tools", {"calc"}}}})}}));
        auto out = h.run(context("agent_manager", "x", std::string(kNoStage)));
        REQUIRE(out.sync_instructions.size() == 2);
        CHECK(out.sync_instructions[0].kind == SyncKind::create_agent);
        CHECK(out.sync_instructions[0].payload.at("join_task") == "task-1");
        CHECK(out.sync_instructions[1].kind == SyncKind::modify_agent);
    }

    TEST_CASE("ask_info becomes a query") {
        auto out = always(ctl({{"query", "stage"}})).run(context("ask_info"));
        REQUIRE(out.sync_instructions.size() == 1);
        CHECK(out.sync_instructions[0].kind == SyncKind::query_info);
        CHECK(out.sync_instructions[0].payload.at("query") == "stage");
    }

    TEST_CASE("tool_decision continue inserts the next call pair and forwards capabilities") {
        const std::string caps = R"([{"name":"add","description":"a+b"}])";
        auto ctx = context("tool_decision", "tool_server: calc\ntool_step: step-4\nresult: 4 capabilities on calc\n"
                                            "capabilities_list_description: " + caps);
        auto out = always(ctl({{"continue", true}, {"intent", "add 1 and 2"}})).run(ctx);
        REQUIRE(out.insert_steps.size() == 2);
        CHECK(out.insert_steps[0].executor == "instruction_generation");
        CHECK(out.insert_steps[0].text_content.find(caps) != std::string::npos);
        CHECK(out.insert_steps[1].step_type == StepType::tool);
        CHECK(out.insert_steps[1].executor == "calc");
        CHECK(out.result_text == "continue");
    }

    TEST_CASE("tool_decision stop adds nothing") {
        auto out = always(ctl({{"continue", false}})).run(context("tool_decision", "tool_server: calc\nresult: 3"));
        CHECK(out.insert_steps.empty());
        CHECK(out.result_text == "stop");
    }

    TEST_CASE("an ambiguous tool_decision defaults to stop") {
        auto h = always("maybe?");
        auto out = h.run(context("tool_decision", "tool_server: calc\nresult: 3"));
        CHECK_FALSE(out.failed);
        CHECK(out.result_text == "stop");
        CHECK(h.backend->calls() == 3);
    }

    TEST_CASE("decision inserts its steps and keeps no_stage") {
        auto out = always(plan(json::array({step("think", "a"), step("quick_think", "b")})))
                       .run(context("decision", "x", std::string(kNoStage)));
        REQUIRE(out.insert_steps.size() == 2);
        CHECK(out.append_steps.empty());
        CHECK_FALSE(out.insert_steps[0].stage_id.has_value());

        auto none = always(plan(json::array())).run(context("decision"));
        CHECK(none.insert_steps.empty());
        CHECK_FALSE(none.failed);
    }

    TEST_CASE("unparseable output is retried, then fails") {
        auto h = always("<control>{broken</control>");
        auto out = h.run(context("reflection"));
        CHECK(out.failed);
        auto ctx = context("reflection");
        ctx.history.push_back(done_step("step-2", "planning", "p"));
        Harness h2(json::array({rule("*", "", "x")}));
        auto out2 = h2.run(ctx);
        CHECK(out2.failed);
        CHECK(h2.backend->calls() == 3);
    }

    TEST_CASE("unknown executors fail without a backend call") {
        auto h = always("x");
        auto out = h.run(context("dance"));
        CHECK(out.failed);
        CHECK(h.backend->calls() == 0);
    }
}

TEST_SUITE("golden") {
    TEST_CASE("the hand-written memory dictionary parses as is") {
        auto m = parse_memory_dict(read_file(source_path("tests/golden/memory_dict.txt")));
        REQUIRE(m.size() == 3);
        CHECK(m.at("20250613T103022") == "I've done...");
        CHECK(m.at("20250613T103523") == "I'm doing...");
        CHECK(m.at("20250613T104023") == "Recording task information...");
    }

    TEST_CASE("the add and delete command blocks parse as is") {
        auto add = parse_memory_ops(read_file(source_path("tests/golden/memory_add_block.txt")));
        REQUIRE(add.size() == 1);
        CHECK(add[0] == MemoryOp{MemoryOp::Kind::add, "Persistent memory content to append"});
        auto del = parse_memory_ops(read_file(source_path("tests/golden/memory_delete_block.txt")));
        REQUIRE(del.size() == 1);
        CHECK(del[0].kind == MemoryOp::Kind::remove);
    }

    TEST_CASE("every scripted reply in the bundled scenarios parses") {
        for (const auto& name : bundled_scenarios()) {
            auto s = load_scenario(source_path("scenarios/" + name + ".json"));
            for (const auto& r : s.scripted_rules) {
                for (const auto& reply : r.value("replies", std::vector<std::string>{r.value("reply", std::string{})})) {
                    CAPTURE(name);
                    CAPTURE(reply);
                    CHECK_NOTHROW(parse_skill_output(reply));
                }
            }
        }
    }
}
