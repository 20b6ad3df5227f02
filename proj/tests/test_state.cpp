#include <doctest.h>

#include "mas/memory.hpp"
#include "mas/registry.hpp"
#include "mas/step_queue.hpp"
#include "support.hpp"

using namespace mas;
using testsupport::World;

namespace {

StepDraft draft(const std::string& executor, const std::string& stage = std::string(kNoStage),
                const std::string& task = "") {
    StepDraft d;
    d.executor = executor;
    d.step_intent = executor;
    d.stage_id = stage;
    if (!task.empty()) d.task_id = task;
    return d;
}

std::vector<std::string> todo_ids(const AgentState& a) {
    std::vector<std::string> ids;
    for (const auto& s : a.steps.todo) ids.push_back(s.step_id);
    return ids;
}

}  // namespace

TEST_SUITE("state") {
    TEST_CASE("new_task builds an init task over the group") {
        World w;
        auto a1 = w.add("a1");
        auto a2 = w.add("a2");
        auto& t = w.reg.new_task("summarize repo", {a1, a2});
        CHECK(t.status == RunStatus::init);
        CHECK(t.agent_ids == std::vector<std::string>{a1, a2});
        CHECK(w.reg.find_agent(a1)->task_refs.contains(t.task_id));
    }

    TEST_CASE("new_task rejects an empty group and unknown agents") {
        World w;
        CHECK_THROWS_AS(w.reg.new_task("x", {}), RegistrationError);
        CHECK_THROWS_AS(w.reg.new_task("x", {"agent-99"}), RegistrationError);
    }

    TEST_CASE("two tasks get distinct ids and both resolve") {
        World w;
        auto a = w.add("a");
        auto t1 = w.reg.new_task("one", {a}).task_id;
        auto t2 = w.reg.new_task("two", {a}).task_id;
        CHECK(t1 != t2);
        CHECK(w.reg.find_task(t1)->instruction == "one");
        CHECK(w.reg.find_task(t2)->instruction == "two");
        CHECK(w.reg.find_agent(a)->task_refs.size() == 2);
    }

    TEST_CASE("advance_stage runs stages in order and disbands the group at the end") {
        World w;
        auto a = w.add("a");
        auto tid = w.reg.new_task("t", {a}).task_id;
        auto s1 = w.reg.add_stage(tid, "first", {{a, "g1"}}).stage_id;
        auto s2 = w.reg.add_stage(tid, "second", {{a, "g2"}}).stage_id;
        CHECK(w.reg.advance_stage(tid) == s1);
        CHECK(w.reg.find_stage(s1)->status == RunStatus::running);

        SUBCASE("running stage blocks the advance") { CHECK_THROWS_AS(w.reg.advance_stage(tid), SequencingError); }

        SUBCASE("finished stage hands over to the next") {
            w.reg.find_stage(s1)->completion_summaries[a] = "done";
            w.reg.finish_stage(s1);
            CHECK(w.reg.advance_stage(tid) == s2);
            CHECK(w.reg.find_stage(s2)->status == RunStatus::running);
            w.reg.find_stage(s2)->completion_summaries[a] = "done";
            w.reg.finish_stage(s2);
            CHECK_FALSE(w.reg.advance_stage(tid).has_value());
            CHECK(w.reg.find_task(tid) == nullptr);
            CHECK(w.reg.task_outcomes().at(tid) == RunStatus::finished);
            CHECK(w.reg.find_stage(s1) == nullptr);
            CHECK(w.reg.find_agent(a)->task_refs.empty());
        }
    }

    TEST_CASE("finish_stage needs a summary from every allocated agent") {
        World w;
        auto a = w.add("a");
        auto b = w.add("b");
        auto tid = w.reg.new_task("t", {a, b}).task_id;
        auto sid = w.reg.add_stage(tid, "o", {{a, "x"}, {b, "y"}}).stage_id;
        w.reg.advance_stage(tid);
        w.reg.find_stage(sid)->completion_summaries[a] = "done";
        CHECK_THROWS_AS(w.reg.finish_stage(sid), SequencingError);
        CHECK(w.reg.find_stage(sid)->status == RunStatus::running);
    }

    TEST_CASE("clear_task releases that task's steps and keeps memory") {
        World w;
        auto a = w.add("a");
        auto tid = w.reg.new_task("t", {a}).task_id;
        auto other = w.reg.new_task("u", {a}).task_id;
        auto sid = w.reg.add_stage(tid, "o", {{a, "x"}}).stage_id;
        auto s2 = w.reg.add_stage(tid, "p", {{a, "y"}}).stage_id;
        auto& ag = *w.reg.find_agent(a);
        ag.persistent_memory = {{"20250613T103022", "one"}, {"20250613T103523", "two"}};
        std::vector<StepDraft> drafts{draft("think", sid, tid), draft("think", sid, tid), draft("planning", kNoStage.data(), tid),
                                      draft("think", kNoStage.data(), other)};
        append_steps(w.reg, ag, drafts);
        auto report = w.reg.clear_task(tid);
        CHECK(report.stages_removed == 2);
        CHECK(report.steps_released.at(a) == 3);
        REQUIRE(ag.steps.todo.size() == 1);
        CHECK(ag.steps.todo.front().task_id == other);
        CHECK(ag.persistent_memory.size() == 2);
        CHECK(w.reg.find_task(tid) == nullptr);
        CHECK(w.reg.find_stage(sid) == nullptr);
        CHECK(w.reg.find_stage(s2) == nullptr);
        CHECK(check_references(w.reg).empty());
    }

    TEST_CASE("check_references on a consistent fixture is empty") {
        World w;
        auto a = w.add("a");
        auto b = w.add("b");
        auto tid = w.reg.new_task("t", {a, b}).task_id;
        w.reg.add_stage(tid, "o", {{a, "x"}, {b, "y"}});
        w.reg.advance_stage(tid);
        CHECK(check_references(w.reg).empty());
    }

    TEST_CASE("check_references flags an allocation outside the group") {
        World w;
        auto a = w.add("a");
        auto c = w.add("c");
        auto tid = w.reg.new_task("t", {a}).task_id;
        auto sid = w.reg.add_stage(tid, "o", {{a, "x"}}).stage_id;
        w.reg.find_stage(sid)->agent_allocation[c] = "intruder";
        auto v = check_references(w.reg);
        CHECK(v.size() >= 1);
    }

    TEST_CASE("check_references flags a step pointing at a foreign task's stage") {
        World w;
        auto a = w.add("a");
        auto t1 = w.reg.new_task("t1", {a}).task_id;
        auto t2 = w.reg.new_task("t2", {a}).task_id;
        auto s2 = w.reg.add_stage(t2, "o", {{a, "x"}}).stage_id;
        (void)t2;
        auto& ag = *w.reg.find_agent(a);
        std::vector<StepDraft> d{draft("think", s2, t1)};
        append_steps(w.reg, ag, d);
        CHECK(check_references(w.reg).size() == 1);
    }

    TEST_CASE("append_steps keeps order and numbers from the shared counter") {
        World w;
        auto a = w.add("a", {"planning", "think", "reflection"}, {"calc"});
        auto& ag = *w.reg.find_agent(a);
        std::vector<StepDraft> warmup{draft("think"), draft("think"), draft("think"), draft("think")};
        append_steps(w.reg, ag, warmup);
        ag.steps.todo.clear();
        std::vector<StepDraft> plan{draft("think"), draft("reflection")};
        CHECK(append_steps(w.reg, ag, plan) == std::vector<std::string>{"step-5", "step-6"});

        std::vector<StepDraft> three{draft("think"), draft("planning"), draft("think")};
        append_steps(w.reg, ag, three);
        CHECK(ag.steps.todo.size() == 5);
        CHECK(ag.steps.todo[3].executor == "planning");
    }

    TEST_CASE("an unpermitted draft rejects the whole batch") {
        World w;
        auto a = w.add("a", {"think"}, {"calc"});
        auto& ag = *w.reg.find_agent(a);
        StepDraft tool = draft("ghost");
        tool.step_type = StepType::tool;
        std::vector<StepDraft> batch{draft("think"), tool};
        CHECK_THROWS_AS(append_steps(w.reg, ag, batch), PermissionError);
        CHECK(ag.steps.todo.empty());
    }

    TEST_CASE("insert_steps puts the batch ahead of pending steps") {
        World w;
        auto a = w.add("a");
        auto& ag = *w.reg.find_agent(a);
        std::vector<StepDraft> ab{draft("think"), draft("think")};
        auto old = append_steps(w.reg, ag, ab);
        std::vector<StepDraft> xy{draft("planning"), draft("planning")};
        auto fresh = insert_steps(w.reg, ag, xy);
        CHECK(todo_ids(ag) == std::vector<std::string>{fresh[0], fresh[1], old[0], old[1]});

        World e;
        auto b = e.add("b");
        auto& bg = *e.reg.find_agent(b);
        auto ids = insert_steps(e.reg, bg, xy);
        CHECK(todo_ids(bg) == ids);
    }

    TEST_CASE("release_stage_steps drops only that stage") {
        World w;
        auto a = w.add("a");
        auto& ag = *w.reg.find_agent(a);
        std::vector<StepDraft> d{draft("think", "stage-1"), draft("think", kNoStage.data()), draft("think", "stage-1")};
        append_steps(w.reg, ag, d);
        CHECK(release_stage_steps(ag, "stage-9") == 0);
        CHECK(ag.steps.todo.size() == 3);
        CHECK(release_stage_steps(ag, "stage-1") == 2);
        REQUIRE(ag.steps.todo.size() == 1);
        CHECK(ag.steps.todo.front().stage_id == kNoStage);

        std::vector<StepDraft> all{draft("think", "stage-2"), draft("think", "stage-2")};
        ag.steps.todo.clear();
        append_steps(w.reg, ag, all);
        CHECK(release_stage_steps(ag, "stage-2") == 2);
        CHECK(ag.steps.todo.empty());
    }

    TEST_CASE("locks block until the last one is released") {
        auto ag = testsupport::agent("a", {"think"});
        std::vector<std::string> ids{"w1", "w2"};
        acquire_locks(ag, ids);
        CHECK(ag.working_state == WorkingState::waiting);
        CHECK(release_lock(ag, "w1"));
        CHECK(ag.working_state == WorkingState::waiting);
        CHECK_FALSE(release_lock(ag, "w9"));
        CHECK(ag.step_locks == std::set<std::string>{"w2"});
        CHECK(release_lock(ag, "w2"));
        CHECK(ag.step_locks.empty());
        CHECK(ag.working_state != WorkingState::waiting);
    }
}

TEST_SUITE("memory") {
    TEST_CASE("compact ISO keys") {
        CHECK(is_compact_iso("20250613T103022"));
        CHECK_FALSE(is_compact_iso("2025-06-13T10:30:22"));
        CHECK_FALSE(is_compact_iso("20251313T103022"));
        CHECK_FALSE(is_compact_iso("20250613T246000"));
        CHECK(format_compact_iso(1735689600) == "20250101T000000");
    }

    TEST_CASE("add then delete round-trips") {
        std::map<std::string, std::string> m;
        MemoryClock clock;
        auto r = apply_memory_ops(m, {{MemoryOp::Kind::add, "done X"}, {MemoryOp::Kind::add, "doing Y"}}, clock);
        REQUIRE(r.added_keys.size() == 2);
        CHECK(is_compact_iso(r.added_keys[0]));
        CHECK(m.at(r.added_keys[0]) == "done X");
        auto d = apply_memory_ops(m, {{MemoryOp::Kind::remove, r.added_keys[0]}}, clock);
        CHECK(d.removed_keys == std::vector<std::string>{r.added_keys[0]});
        CHECK(m.size() == 1);
        CHECK(m.begin()->second == "doing Y");
    }

    TEST_CASE("deleting an unknown key is only a warning") {
        std::map<std::string, std::string> m{{"20250613T103022", "a"}};
        MemoryClock clock;
        auto r = apply_memory_ops(m, {{MemoryOp::Kind::remove, "20990101T000000"}}, clock);
        CHECK(r.warnings.size() == 1);
        CHECK(m.size() == 1);
    }

    TEST_CASE("logical clock never reuses a key") {
        std::map<std::string, std::string> m{{"20250101T000000", "taken"}};
        MemoryClock clock;
        auto k = clock.next_key(m);
        CHECK(k != "20250101T000000");
        CHECK(is_compact_iso(k));
    }
}
