#include "mas/tool_client.hpp"

#include <algorithm>
#include <cmath>
#include <thread>

#include <boost/asio/post.hpp>
#include <boost/asio/thread_pool.hpp>
#include <httplib.h>

namespace mas {

namespace {

CapabilityDescription cap(std::string name, std::string description, json schema) {
    return {std::move(name), std::move(description), std::move(schema)};
}

json number_pair_schema() {
    return json{{"type", "object"},
                {"properties", {{"a", {{"type", "number"}}}, {"b", {{"type", "number"}}}}},
                {"required", {"a", "b"}}};
}

bool type_matches(const std::string& type, const json& v) {
    if (type == "number") return v.is_number();
    if (type == "integer") return v.is_number_integer() || (v.is_number_float() && std::floor(v.get<double>()) == v.get<double>());
    if (type == "string") return v.is_string();
    if (type == "boolean") return v.is_boolean();
    if (type == "object") return v.is_object();
    if (type == "array") return v.is_array();
    return true;
}

json number_result(double v) {
    if (std::floor(v) == v && std::abs(v) < 9e15) return json(static_cast<long long>(v));
    return json(v);
}

}  // namespace

std::string_view to_string(ToolError::Kind kind) {
    switch (kind) {
        case ToolError::Kind::unknown_server: return "unknown_server";
        case ToolError::Kind::no_session: return "no_session";
        case ToolError::Kind::unknown_capability: return "unknown_capability";
        case ToolError::Kind::invalid_params: return "invalid_params";
        case ToolError::Kind::server_error: return "server_error";
        case ToolError::Kind::scheduler_down: return "scheduler_down";
    }
    return "unknown";
}

json CapabilityDescription::to_json() const {
    return json{{"name", name}, {"description", description}, {"input_schema", input_schema}};
}

CapabilityDescription CapabilityDescription::from_json(const json& j) {
    CapabilityDescription c;
    c.name = j.at("name").get<std::string>();
    c.description = j.value("description", std::string{});
    if (j.contains("input_schema"))
        c.input_schema = j.at("input_schema");
    else if (j.contains("inputSchema"))
        c.input_schema = j.at("inputSchema");
    return c;
}

std::optional<std::string> validate_params(const json& schema, const json& params) {
    if (!params.is_object()) return "parameters must be an object";
    if (!schema.is_object()) return std::nullopt;
    if (schema.contains("required")) {
        for (const auto& key : schema.at("required")) {
            if (!params.contains(key.get<std::string>()))
                return "missing required parameter '" + key.get<std::string>() + "'";
        }
    }
    if (schema.contains("properties")) {
        for (const auto& [key, prop] : schema.at("properties").items()) {
            if (!params.contains(key) || !prop.contains("type")) continue;
            const auto type = prop.at("type").get<std::string>();
            if (!type_matches(type, params.at(key)))
                return "parameter '" + key + "' must be of type " + type;
        }
    }
    return std::nullopt;
}

// -- mock servers ------------------------------------------------------------

std::vector<CapabilityDescription> CalculatorServer::list_capabilities() {
    return {cap("add", "Return a + b", number_pair_schema()),
            cap("sub", "Return a - b", number_pair_schema()),
            cap("mul", "Return a * b", number_pair_schema()),
            cap("div", "Return a / b; b must be non-zero", number_pair_schema())};
}

json CalculatorServer::call(const std::string& capability, const json& params) {
    const double a = params.at("a").get<double>();
    const double b = params.at("b").get<double>();
    if (capability == "add") return number_result(a + b);
    if (capability == "sub") return number_result(a - b);
    if (capability == "mul") return number_result(a * b);
    if (capability == "div") {
        if (b == 0) throw ToolError(ToolError::Kind::server_error, "division by zero");
        return number_result(a / b);
    }
    throw ToolError(ToolError::Kind::unknown_capability, "calculator has no capability '" + capability + "'");
}

std::vector<CapabilityDescription> KeyValueServer::list_capabilities() {
    const json key_only{{"type", "object"}, {"properties", {{"key", {{"type", "string"}}}}}, {"required", {"key"}}};
    return {cap("put", "Store value under key",
                json{{"type", "object"},
                     {"properties", {{"key", {{"type", "string"}}}, {"value", json::object()}}},
                     {"required", {"key", "value"}}}),
            cap("get", "Fetch the value stored under key", key_only),
            cap("delete", "Remove key", key_only),
            cap("keys", "List stored keys", json{{"type", "object"}})};
}

json KeyValueServer::call(const std::string& capability, const json& params) {
    std::lock_guard lock(mutex_);
    if (capability == "put") {
        store_[params.at("key").get<std::string>()] = params.at("value");
        return json{{"stored", params.at("key")}};
    }
    if (capability == "get") {
        auto it = store_.find(params.at("key").get<std::string>());
        if (it == store_.end())
            throw ToolError(ToolError::Kind::server_error, "no such key '" + params.at("key").get<std::string>() + "'");
        return it->second;
    }
    if (capability == "delete") return json{{"deleted", store_.erase(params.at("key").get<std::string>()) > 0}};
    if (capability == "keys") {
        json keys = json::array();
        for (const auto& [k, v] : store_) keys.push_back(k);
        return keys;
    }
    throw ToolError(ToolError::Kind::unknown_capability, "kvstore has no capability '" + capability + "'");
}

std::vector<CapabilityDescription> DelayServer::list_capabilities() {
    return {cap("sleep", "Wait ms milliseconds, then return ms",
                json{{"type", "object"}, {"properties", {{"ms", {{"type", "integer"}}}}}, {"required", {"ms"}}}),
            cap("echo", "Return text unchanged",
                json{{"type", "object"}, {"properties", {{"text", {{"type", "string"}}}}}, {"required", {"text"}}})};
}

json DelayServer::call(const std::string& capability, const json& params) {
    if (base_delay_.count() > 0) std::this_thread::sleep_for(base_delay_);
    if (capability == "sleep") {
        const auto ms = params.at("ms").get<long long>();
        std::this_thread::sleep_for(std::chrono::milliseconds(ms));
        return json(ms);
    }
    if (capability == "echo") return params.at("text");
    throw ToolError(ToolError::Kind::unknown_capability, "delay has no capability '" + capability + "'");
}

json EmptyServer::call(const std::string& capability, const json&) {
    throw ToolError(ToolError::Kind::unknown_capability, "empty server has no capability '" + capability + "'");
}

HttpToolServer::HttpToolServer(std::string endpoint, std::string path)
    : endpoint_(std::move(endpoint)), path_(std::move(path)) {}

json HttpToolServer::rpc(const std::string& method, const json& params) {
    httplib::Client client(endpoint_);
    client.set_connection_timeout(5, 0);
    client.set_read_timeout(60, 0);
    json body{{"jsonrpc", "2.0"}, {"id", next_id_++}, {"method", method}, {"params", params}};
    auto res = client.Post(path_, body.dump(), "application/json");
    if (!res)
        throw ToolError(ToolError::Kind::server_error,
                        "tool server " + endpoint_ + " unreachable: " + httplib::to_string(res.error()));
    if (res->status != 200)
        throw ToolError(ToolError::Kind::server_error, "tool server status " + std::to_string(res->status));
    json reply;
    try {
        reply = json::parse(res->body);
    } catch (const json::parse_error& e) {
        throw ToolError(ToolError::Kind::server_error, std::string("tool server sent invalid JSON: ") + e.what());
    }
    if (reply.contains("error"))
        throw ToolError(ToolError::Kind::server_error, reply.at("error").value("message", reply.at("error").dump()));
    return reply.value("result", json());
}

std::vector<CapabilityDescription> HttpToolServer::list_capabilities() {
    auto result = rpc("tools/list", json::object());
    std::vector<CapabilityDescription> out;
    for (const auto& t : result.value("tools", json::array())) out.push_back(CapabilityDescription::from_json(t));
    return out;
}

json HttpToolServer::call(const std::string& capability, const json& params) {
    auto result = rpc("tools/call", json{{"name", capability}, {"arguments", params}});
    if (result.value("isError", false)) {
        std::string text;
        for (const auto& c : result.value("content", json::array())) text += c.value("text", std::string{});
        throw ToolError(ToolError::Kind::server_error, text.empty() ? "tool reported an error" : text);
    }
    if (result.contains("content") && result.at("content").is_array()) {
        std::string text;
        for (const auto& c : result.at("content")) text += c.value("text", std::string{});
        return json(text);
    }
    return result;
}

ServerConfig ServerConfig::from_json(const json& j) {
    ServerConfig c;
    c.transport = j.value("transport", std::string{"in_process"});
    c.endpoint = j.value("endpoint", std::string{});
    if (j.contains("startup_params")) c.startup_params = j.at("startup_params");
    if (c.transport != "in_process" && c.transport != "http")
        throw Error("unknown tool transport '" + c.transport + "'");
    if (c.transport == "http" && c.endpoint.empty()) throw Error("http tool server needs an endpoint");
    return c;
}

// -- client --------------------------------------------------------------------

ToolClient::ToolClient(std::size_t scheduler_threads)
    : pool_(std::make_unique<boost::asio::thread_pool>(scheduler_threads)) {}

ToolClient::~ToolClient() { shutdown(); }

ToolClient& ToolClient::global() {
    static ToolClient instance;
    return instance;
}

void ToolClient::configure(const json& servers) {
    if (servers.is_null()) return;
    if (!servers.is_object()) throw Error("tool server config must be keyed by server name");
    for (const auto& [name, cfg] : servers.items()) add_server(name, ServerConfig::from_json(cfg));
}

void ToolClient::add_server(const std::string& name, ServerConfig config) {
    std::lock_guard lock(mutex_);
    server_config_[name] = std::move(config);
}

void ToolClient::add_in_process(const std::string& name, std::shared_ptr<ToolServer> server) {
    std::lock_guard lock(mutex_);
    server_config_[name] = ServerConfig{};
    factories_[name] = std::move(server);
}

bool ToolClient::has_config(const std::string& name) const {
    std::lock_guard lock(mutex_);
    return server_config_.contains(name);
}

std::vector<std::string> ToolClient::configured() const {
    std::lock_guard lock(mutex_);
    std::vector<std::string> out;
    for (const auto& [name, cfg] : server_config_) out.push_back(name);
    return out;
}

std::shared_ptr<ToolServer> ToolClient::connect(const std::string& name, const ServerConfig& cfg) {
    if (auto it = factories_.find(name); it != factories_.end()) return it->second;
    if (cfg.transport == "http")
        return std::make_shared<HttpToolServer>(cfg.endpoint, cfg.startup_params.value("path", std::string{"/mcp"}));
    const auto kind = cfg.startup_params.value("kind", name);
    if (kind == "calculator" || kind == "calc") return std::make_shared<CalculatorServer>();
    if (kind == "kvstore" || kind == "kv") return std::make_shared<KeyValueServer>();
    if (kind == "delay")
        return std::make_shared<DelayServer>(std::chrono::milliseconds(cfg.startup_params.value("delay_ms", 0)));
    if (kind == "empty") return std::make_shared<EmptyServer>();
    throw ToolError(ToolError::Kind::unknown_server, "no in-process server kind '" + kind + "'");
}

std::vector<std::string> ToolClient::ensure_sessions(const AgentState& agent) {
    std::vector<std::string> connected;
    std::lock_guard lock(mutex_);
    for (const auto& name : agent.tool_permissions) {
        auto cfg = server_config_.find(name);
        if (cfg == server_config_.end()) {
            connect_errors_[name] = "not configured";
            continue;
        }
        if (server_sessions_.contains(name)) {
            connected.push_back(name);
            continue;
        }
        try {
            auto server = connect(name, cfg->second);
            server_descriptions_[name] = server->list_capabilities();
            ++fetches_[name];
            server_sessions_[name] = std::move(server);
            connect_errors_.erase(name);
            connected.push_back(name);
        } catch (const std::exception& e) {
            connect_errors_[name] = e.what();
            if (log_) log_->append("tool_connect_failed", {{"server", name}, {"reason", e.what()}});
        }
    }
    return connected;
}

bool ToolClient::connected(const std::string& name) const {
    std::lock_guard lock(mutex_);
    return server_sessions_.contains(name);
}

std::shared_ptr<ToolServer> ToolClient::session(const std::string& server) {
    if (auto it = server_sessions_.find(server); it != server_sessions_.end()) return it->second;
    auto cfg = server_config_.find(server);
    if (cfg == server_config_.end())
        throw ToolError(ToolError::Kind::no_session, "no session for tool server '" + server + "'");
    auto s = connect(server, cfg->second);
    server_descriptions_[server] = s->list_capabilities();
    ++fetches_[server];
    server_sessions_[server] = s;
    connect_errors_.erase(server);
    return s;
}

std::vector<CapabilityDescription> ToolClient::list_capabilities(const std::string& server) {
    std::lock_guard lock(mutex_);
    session(server);
    ++hits_[server];
    return server_descriptions_.at(server);
}

void ToolClient::refresh_descriptions(const std::string& server) {
    std::lock_guard lock(mutex_);
    auto s = session(server);
    server_descriptions_[server] = s->list_capabilities();
    ++fetches_[server];
}

std::size_t ToolClient::description_fetches(const std::string& server) const {
    std::lock_guard lock(mutex_);
    auto it = fetches_.find(server);
    return it == fetches_.end() ? 0 : it->second;
}

std::size_t ToolClient::cache_hits(const std::string& server) const {
    std::lock_guard lock(mutex_);
    auto it = hits_.find(server);
    return it == hits_.end() ? 0 : it->second;
}

json ToolClient::execute_capability(const std::string& server, const std::string& capability, const json& params) {
    std::shared_ptr<ToolServer> s;
    {
        std::lock_guard lock(mutex_);
        s = session(server);
        const auto& caps = server_descriptions_.at(server);
        auto it = std::find_if(caps.begin(), caps.end(), [&](const auto& c) { return c.name == capability; });
        if (it == caps.end())
            throw ToolError(ToolError::Kind::unknown_capability,
                            "tool server '" + server + "' has no capability '" + capability + "'");
        if (auto problem = validate_params(it->input_schema, params))
            throw ToolError(ToolError::Kind::invalid_params, *problem);
    }
    const auto start = std::chrono::steady_clock::now();
    json fields{{"server", server}, {"capability", capability}};
    try {
        auto result = submit([s, capability, params] { return s->call(capability, params); });
        fields["ok"] = true;
        if (record_latency_)
            fields["latency_ms"] = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
        if (log_) log_->append("tool_call", fields);
        return result;
    } catch (const std::exception& e) {
        fields["ok"] = false;
        fields["error"] = e.what();
        if (record_latency_)
            fields["latency_ms"] = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
        if (log_) log_->append("tool_call", fields);
        throw;
    }
}

std::future<json> ToolClient::post(Call call) {
    if (!running_) throw ToolError(ToolError::Kind::scheduler_down, "tool client scheduler is shut down");
    auto task = std::make_shared<std::packaged_task<json()>>(std::move(call));
    auto fut = task->get_future();
    boost::asio::post(*pool_, [task] { (*task)(); });
    return fut;
}

json ToolClient::submit(Call call) { return post(std::move(call)).get(); }

std::vector<json> ToolClient::submit_batch(std::vector<Call> calls) {
    std::vector<std::future<json>> futures;
    futures.reserve(calls.size());
    for (auto& c : calls) futures.push_back(post(std::move(c)));
    std::vector<json> results;
    results.reserve(futures.size());
    for (auto& f : futures) results.push_back(f.get());
    return results;
}

void ToolClient::shutdown() {
    if (!running_.exchange(false)) return;
    pool_->join();
}

std::vector<std::string> ToolClient::containment_violations(const AgentState& agent) const {
    std::lock_guard lock(mutex_);
    std::vector<std::string> out;
    for (const auto& t : agent.tool_permissions) {
        if (!server_config_.contains(t)) out.push_back("permission '" + t + "' is not a configured server");
    }
    for (const auto& [name, s] : server_sessions_) {
        if (!server_config_.contains(name)) out.push_back("session '" + name + "' has no config");
    }
    for (const auto& [name, d] : server_descriptions_) {
        if (!server_sessions_.contains(name)) out.push_back("descriptions cached for '" + name + "' without session");
    }
    return out;
}

void ToolClient::set_event_log(EventLog* log, bool record_latency) {
    std::lock_guard lock(mutex_);
    log_ = log;
    record_latency_ = record_latency;
}

}  // namespace mas
