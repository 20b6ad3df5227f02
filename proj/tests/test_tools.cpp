#include <doctest.h>

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <thread>

#include "mas/backend.hpp"
#include "mas/tool_client.hpp"
#include "support.hpp"

using namespace mas;
using namespace std::chrono_literals;

namespace {

json calc_config() { return json{{"calc", {{"transport", "in_process"}, {"startup_params", {{"kind", "calculator"}}}}}}; }

std::string temp_path(const std::string& name) {
    return (std::filesystem::temp_directory_path() / ("mas_test_" + name)).string();
}

BackendRequest request(const std::string& skill, const std::string& text) {
    BackendRequest r;
    r.skill_name = skill;
    r.agent_id = "agent-1";
    r.agent_name = "writer";
    r.instruction_text = text;
    return r;
}

}  // namespace

TEST_SUITE("tool_client") {
    TEST_CASE("sessions open for configured permissions and descriptions are cached") {
        ToolClient tc(2);
        tc.configure(calc_config());
        auto a = testsupport::agent("a", {"think"}, {"calc"});
        CHECK(tc.ensure_sessions(a) == std::vector<std::string>{"calc"});
        CHECK(tc.connected("calc"));
        CHECK(tc.description_fetches("calc") == 1);
        tc.ensure_sessions(a);
        tc.list_capabilities("calc");
        CHECK(tc.description_fetches("calc") == 1);
        CHECK(tc.cache_hits("calc") >= 1);
    }

    TEST_CASE("a permission for an unconfigured server is surfaced") {
        ToolClient tc(1);
        tc.configure(calc_config());
        auto a = testsupport::agent("a", {"think"}, {"calc", "ghost"});
        CHECK_FALSE(tc.containment_violations(a).empty());
        CHECK_THROWS(agent_from_config(json{{"name", "b"}, {"tools", {"ghost"}}},
                                       [&](const std::string& s) { return tc.has_config(s); }));
    }

    TEST_CASE("calculator capabilities carry schemas") {
        ToolClient tc(1);
        tc.configure(calc_config());
        auto caps = tc.list_capabilities("calc");
        REQUIRE(caps.size() >= 2);
        CHECK(caps[0].name == "add");
        CHECK(caps[1].name == "sub");
        CHECK(caps[0].input_schema.at("required") == json::array({"a", "b"}));
        CHECK_THROWS_AS(tc.list_capabilities("nope"), ToolError);
    }

    TEST_CASE("the empty server lists nothing") {
        ToolClient tc(1);
        tc.configure(json{{"empty", {{"startup_params", {{"kind", "empty"}}}}}});
        CHECK(tc.list_capabilities("empty").empty());
    }

    TEST_CASE("calls return results and surface server errors") {
        ToolClient tc(2);
        tc.configure(calc_config());
        CHECK(tc.execute_capability("calc", "add", {{"a", 1}, {"b", 2}}) == 3);
        try {
            tc.execute_capability("calc", "div", {{"a", 1}, {"b", 0}});
            FAIL("expected a server error");
        } catch (const ToolError& e) {
            CHECK(e.kind() == ToolError::Kind::server_error);
        }
        try {
            tc.execute_capability("calc", "add", {{"a", "one"}, {"b", 2}});
            FAIL("expected invalid params");
        } catch (const ToolError& e) {
            CHECK(e.kind() == ToolError::Kind::invalid_params);
        }
    }

    TEST_CASE("key-value put then get") {
        ToolClient tc(1);
        tc.configure(json{{"kv", {{"startup_params", {{"kind", "kvstore"}}}}}});
        tc.execute_capability("kv", "put", {{"key", "k"}, {"value", "v"}});
        CHECK(tc.execute_capability("kv", "get", {{"key", "k"}}) == "v");
    }

    TEST_CASE("concurrent callers overlap") {
        ToolClient tc(4);
        tc.configure(json{{"slow", {{"startup_params", {{"kind", "delay"}}}}}});
        tc.list_capabilities("slow");
        const auto t0 = std::chrono::steady_clock::now();
        std::thread a([&] { tc.execute_capability("slow", "sleep", {{"ms", 100}}); });
        std::thread b([&] { tc.execute_capability("slow", "sleep", {{"ms", 100}}); });
        a.join();
        b.join();
        CHECK(std::chrono::steady_clock::now() - t0 < 180ms);
    }

    TEST_CASE("a batch comes back in input order") {
        ToolClient tc(4);
        std::vector<ToolClient::Call> calls;
        for (int i = 0; i < 3; ++i) {
            calls.push_back([i] {
                std::this_thread::sleep_for(std::chrono::milliseconds(30 * (3 - i)));
                return json(i);
            });
        }
        CHECK(tc.submit_batch(std::move(calls)) == json::array({0, 1, 2}).get<std::vector<json>>());
    }

    TEST_CASE("submitting after shutdown fails at once") {
        ToolClient tc(1);
        tc.shutdown();
        try {
            tc.submit([] { return json(1); });
            FAIL("expected scheduler_down");
        } catch (const ToolError& e) {
            CHECK(e.kind() == ToolError::Kind::scheduler_down);
        }
    }

    TEST_CASE("schema subset validation") {
        json schema{{"type", "object"}, {"required", {"a"}}, {"properties", {{"a", {{"type", "number"}}}}}};
        CHECK_FALSE(validate_params(schema, {{"a", 1}}).has_value());
        CHECK(validate_params(schema, json::object()).has_value());
        CHECK(validate_params(schema, {{"a", "x"}}).has_value());
    }
}

TEST_SUITE("backend") {
    TEST_CASE("scripted rules match by skill and substring") {
        ScriptedBackend b({ScriptedRule::from_json({{"skill", "planning"}, {"match", "stage: write"}, {"reply", "PLAN"}})},
                          std::string("<control>{}</control>"));
        CHECK(b.complete(request("planning", "... stage: write ...")).text == "PLAN");
        CHECK(b.complete(request("think", "anything")).text == "<control>{}</control>");
        CHECK(b.complete(request("planning", "x stage: write")).text == b.complete(request("planning", "x stage: write")).text);
    }

    TEST_CASE("no rule and no default is a backend error") {
        ScriptedBackend b({});
        CHECK_THROWS_AS(b.complete(request("think", "x")), BackendError);
    }

    TEST_CASE("request hashes are stable") {
        CHECK(request_hash(request("think", "x")) == request_hash(request("think", "x")));
        CHECK(request_hash(request("think", "x")) != request_hash(request("think", "y")));
        CHECK(request_hash(request("think", "x")).size() == 64);
    }

    TEST_CASE("record then replay makes no live calls") {
        const auto store = temp_path("store.jsonl");
        std::remove(store.c_str());
        auto inner = std::shared_ptr<Backend>(ScriptedBackend::from_json(json::array(), std::string("reply")));
        RecordingBackend rec(inner, store);
        for (const auto* t : {"a", "b", "c"}) rec.complete(request("think", t));
        CHECK(rec.live_calls() == 3);
        ReplayBackend replay(store);
        CHECK(replay.size() == 3);
        for (const auto* t : {"a", "b", "c"}) CHECK(replay.complete(request("think", t)).text == "reply");
        CHECK_THROWS_AS(replay.complete(request("think", "zzz")), BackendError);
        std::remove(store.c_str());
    }

    TEST_CASE("replay of an empty store misses") {
        const auto store = temp_path("empty.jsonl");
        { std::ofstream(store).flush(); }
        ReplayBackend replay(store);
        CHECK_THROWS_AS(replay.complete(request("think", "x")), BackendError);
        std::remove(store.c_str());
    }

    TEST_CASE("an unreachable http backend is a backend error") {
        auto b = make_backend(json{{"type", "http"}, {"endpoint", "http://127.0.0.1:1"}, {"model", "m"},
                                   {"api_key_env", "MAS_TEST_SURELY_UNSET_KEY"}},
                              json::array(), 0);
        CHECK_THROWS_AS(b->complete(request("think", "x")), BackendError);
    }
}
