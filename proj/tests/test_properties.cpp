#include <doctest.h>

#include <random>

#include "fuzz.hpp"
#include "mas/step_queue.hpp"
#include "mas/sync_state.hpp"
#include "mas/trace_checks.hpp"
#include "support.hpp"

using namespace mas;
using namespace testsupport;

namespace {

std::string issues_text(const std::vector<TraceIssue>& issues) {
    std::string s;
    for (const auto& i : issues) s += i.check + ": " + i.detail + "\n";
    return s;
}

/// Lead broadcasts one waiting question to k workers who each answer once.
std::unique_ptr<Orchestrator> broadcast_world(int k) {
    json workers = json::array();
    for (int i = 0; i < k; ++i) workers.push_back("w" + std::to_string(i));
    auto o = scripted(json::array({
        rule("task_manager", "Organize task",
             ctl({{"commands", json::array({{{"cmd", "add_stage"}, {"objective", "ask"}, {"allocation", {{"lead", "ask everyone"}}}},
                                            {{"cmd", "next_stage"}}})}})),
        rule("planning", "", plan(json::array({step("send_message", "Ask all"), step("think", "Combine"), step("reflection", "Check")}))),
        rule("send_message", "Ask all", msg({{"receivers", workers}, {"content", "Q?"}, {"need_reply", true}, {"waiting", true}}), "lead"),
        rule("send_message", "", msg({{"content", "A."}})),
        rule("reflection", "", ctl({{"verdict", "done"}})),
        rule("summary", "", ctl({{"summary", "ok"}})),
    }));
    o->spawn_agent(json{{"name", "mgr"}, {"skills", {"task_manager"}}});
    o->spawn_agent(json{{"name", "lead"}, {"skills", {"planning", "reflection", "summary", "think"}}});
    std::vector<std::string> members{"lead"};
    for (const auto& w : workers) {
        o->spawn_agent(json{{"name", w}, {"skills", {"think"}}});
        members.push_back(w);
    }
    o->start_task("broadcast", "mgr", members);
    return o;
}

}  // namespace

TEST_SUITE("properties") {
    TEST_CASE("reference graph holds across random transitions") {
        for (std::uint64_t seed : {1u, 2u, 3u}) {
            CAPTURE(seed);
            Orchestrator o;
            auto res = fuzz::run(o, seed, 600);
            CHECK(res.transitions >= 600);
            CHECK_MESSAGE(res.violations == 0, res.first_violation);

            const auto log = o.log().entries();
            CHECK_MESSAGE(check_stage_intervals(log).empty(), issues_text(check_stage_intervals(log)));
            CHECK_MESSAGE(check_message_branching(log).empty(), issues_text(check_message_branching(log)));
            CHECK_MESSAGE(check_lock_protocol(log).empty(), issues_text(check_lock_protocol(log)));
            CHECK_MESSAGE(check_summary_order(log).empty(), issues_text(check_summary_order(log)));
            auto gaps = fuzz::conservation_gaps(log);
            CHECK_MESSAGE(gaps.empty(), (gaps.empty() ? std::string() : gaps.front()));
        }
    }

    TEST_CASE("random fuzz runs are reproducible") {
        Orchestrator a;
        Orchestrator b;
        fuzz::run(a, 7, 300);
        fuzz::run(b, 7, 300);
        CHECK(a.log().dump() == b.log().dump());
    }

    TEST_CASE("rejected instructions leave the registry untouched") {
        std::mt19937 rng(11);
        EventLog log;
        SyncState sync(log);
        std::string mgr, w1, w2, outsider, tid;
        sync.mutate([&](Registry& r) {
            mgr = r.add_agent(agent("mgr", {"task_manager"})).agent_id;
            w1 = r.add_agent(agent("w1", {"think", "summary"})).agent_id;
            w2 = r.add_agent(agent("w2", {"think"})).agent_id;
            outsider = r.add_agent(agent("out", {"think"})).agent_id;
            tid = r.new_task("t", {mgr, w1, w2}).task_id;
            r.new_task("other", {outsider});
        });
        const std::vector<std::string> origins{mgr, w1, w2, outsider};
        const std::vector<json> payloads{
            {{"task_id", tid}, {"receivers", {"w1"}}, {"content", "x"}, {"need_reply", true}, {"waiting", true}},
            {{"task_id", tid}, {"receivers", {"out"}}, {"content", "x"}},
            {{"task_id", "task-9"}},
            {{"task_id", tid}, {"objective", "o"}, {"allocation", {{"w1", "a"}}}},
            {{"task_id", tid}, {"objective", "o"}, {"allocation", {{"out", "a"}}}},
            {{"stage_id", "stage-1"}, {"summary", "s"}},
            {{"stage_id", "stage-1"}, {"if_complete", true}},
            {{"config", {{"name", "new"}}}},
            {{"agent", "w2"}, {"remove_skills", {"send_message"}}},
            {{"task_id", tid}, {"query", "stage"}},
            {{"task_id", tid}, {"status", "finished"}},
            json::array(),
        };
        int rejected = 0;
        for (int i = 0; i < 400; ++i) {
            const auto kind = static_cast<SyncKind>(rng() % 10);
            const auto& payload = payloads[rng() % payloads.size()];
            const auto& origin = origins[rng() % origins.size()];
            const auto before = sync.snapshot();
            auto res = sync.apply({{kind, payload}}, origin);
            if (!res.front().ok) {
                ++rejected;
                CAPTURE(to_string(kind));
                CAPTURE(payload.dump());
                CHECK(sync.snapshot() == before);
            }
            CHECK(sync.read([](const Registry& r) { return check_references(r).empty(); }));
        }
        CHECK(rejected > 100);
    }

    TEST_CASE("broadcast to k receivers: k deliveries, k steps, and the sender waits for all") {
        for (int k = 1; k <= 5; ++k) {
            CAPTURE(k);
            auto o = broadcast_world(k);
            auto res = o->run(40);
            CHECK(res.completed);
            const auto log = o->log().entries();
            const auto lead = o->sync().read([](const Registry& r) { return r.resolve_agent("lead"); });
            const json ask_delivery{{"sender_id", lead}, {"need_reply", true}};
            CHECK(count_events(log, "message_delivered", ask_delivery) == static_cast<std::size_t>(k));
            CHECK(count_events(log, "message_delivered", {{"receiver_id", lead}}) == static_cast<std::size_t>(k));
            CHECK(count_events(log, "lock_acquired") == static_cast<std::size_t>(k));
            CHECK(count_events(log, "lock_released", {{"reason", "reply"}}) == static_cast<std::size_t>(k));
            CHECK(check_lock_protocol(log).empty());
            // every worker got exactly one receiver-side step from the broadcast
            std::set<std::string> receivers;
            for (const auto& e : log)
                if (e.value("type", "") == "message_delivered" && mas::event_matches(e, ask_delivery))
                    receivers.insert(e.at("receiver_id").get<std::string>());
            CHECK(receivers.size() == static_cast<std::size_t>(k));
            // the lead's first step after the broadcast starts only after the last release
            std::uint64_t last_release = 0, next_start = 0;
            for (const auto& e : log) {
                if (e.value("type", "") == "lock_released") last_release = e.at("seq");
                if (e.value("type", "") == "step_started" && e.at("agent_id") == lead && e.at("executor") == "think")
                    next_start = e.at("seq");
            }
            CHECK(next_start > last_release);
        }
    }

    TEST_CASE("reply chains end with one process_message on the last receiver") {
        for (int depth = 1; depth <= 6; ++depth) {
            CAPTURE(depth);
            auto o = scripted(json::array({
                rule("send_message", "Start", msg({{"receivers", {"b"}}, {"content", "ping"}, {"need_reply", true}}), "a"),
                rule("send_message", "", msg({{"content", "pong"}, {"need_reply", true}})),
                rule("process_message", "", "end"),
            }));
            o->sync().set_max_dialogue_depth(depth);
            o->spawn_agent(json{{"name", "mgr"}, {"skills", {"task_manager"}}});
            auto a = o->spawn_agent(json{{"name", "a"}, {"skills", {"think"}}});
            o->spawn_agent(json{{"name", "b"}, {"skills", {"think"}}});
            auto tid = o->start_task("chat", "mgr", {"a", "b"});
            o->sync().mutate([&](Registry& r) {
                r.find_agent("agent-1")->steps.todo.clear();
                StepDraft d;
                d.executor = "send_message";
                d.step_intent = "Start";
                d.text_content = "Start";
                d.task_id = tid;
                append_steps(r, *r.find_agent(a), std::span(&d, 1));
            });
            o->run(4 * depth + 10, [&] {
                return o->sync().read([](const Registry& r) {
                    for (const auto& [id, ag] : r.agents())
                        if (!ag.steps.todo.empty()) return false;
                    for (const auto& [id, t] : r.tasks())
                        if (!t.comm_queue.empty()) return false;
                    return true;
                });
            });
            const auto log = o->log().entries();
            CHECK(count_events(log, "action", {{"executor", "process_message"}}) == 1);
            CHECK(count_events(log, "action", {{"executor", "send_message"}}) == static_cast<std::size_t>(depth + 1));
            CHECK(count_events(log, "dialogue_depth_guard") == 1);
        }
    }

    TEST_CASE("bundled scenario logs satisfy every trace property") {
        for (const auto& name : bundled_scenarios()) {
            CAPTURE(name);
            auto s = load_scenario(source_path("scenarios/" + name + ".json"));
            Orchestrator o;
            setup_scenario(o, s);
            run_scenario(o, s);
            const auto log = o.log().entries();
            CHECK_MESSAGE(check_trace(log).empty(), issues_text(check_trace(log)));
            auto gaps = fuzz::conservation_gaps(log);
            CHECK_MESSAGE(gaps.empty(), (gaps.empty() ? std::string() : gaps.front()));
        }
    }
}
