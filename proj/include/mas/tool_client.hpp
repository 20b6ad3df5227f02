#pragma once

#include <atomic>
#include <chrono>
#include <functional>
#include <future>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "mas/event_log.hpp"
#include "mas/types.hpp"

namespace boost::asio {
class thread_pool;
}

namespace mas {

/// Capability descriptor wire shape: {name, description, input_schema}.
struct CapabilityDescription {
    std::string name;
    std::string description;
    json input_schema = json::object();

    json to_json() const;
    static CapabilityDescription from_json(const json& j);
};

class ToolError : public Error {
public:
    enum class Kind { unknown_server, no_session, unknown_capability, invalid_params, server_error, scheduler_down };

    ToolError(Kind kind, const std::string& what) : Error(what), kind_(kind) {}
    Kind kind() const { return kind_; }

private:
    Kind kind_;
};

std::string_view to_string(ToolError::Kind kind);

/// Checks `params` against a minimal JSON schema subset (object type,
/// required keys, primitive property types). Returns the first problem.
std::optional<std::string> validate_params(const json& schema, const json& params);

class ToolServer {
public:
    virtual ~ToolServer() = default;
    virtual std::vector<CapabilityDescription> list_capabilities() = 0;
    /// Throws ToolError{server_error} for failures inside the server.
    virtual json call(const std::string& capability, const json& params) = 0;
};

/// add, sub, mul, div over numbers a and b.
class CalculatorServer : public ToolServer {
public:
    std::vector<CapabilityDescription> list_capabilities() override;
    json call(const std::string& capability, const json& params) override;
};

/// put, get, delete, keys over an in-memory string map.
class KeyValueServer : public ToolServer {
public:
    std::vector<CapabilityDescription> list_capabilities() override;
    json call(const std::string& capability, const json& params) override;

private:
    std::mutex mutex_;
    std::map<std::string, json> store_;
};

/// sleep{ms} and echo{text}; every call also waits `base_delay`.
class DelayServer : public ToolServer {
public:
    explicit DelayServer(std::chrono::milliseconds base_delay = std::chrono::milliseconds{0})
        : base_delay_(base_delay) {}
    std::vector<CapabilityDescription> list_capabilities() override;
    json call(const std::string& capability, const json& params) override;

private:
    std::chrono::milliseconds base_delay_;
};

class EmptyServer : public ToolServer {
public:
    std::vector<CapabilityDescription> list_capabilities() override { return {}; }
    json call(const std::string& capability, const json&) override;
};

/// JSON-RPC 2.0 over HTTP POST using the "tools/list" and "tools/call"
/// methods; accepts inputSchema or input_schema in descriptors.
class HttpToolServer : public ToolServer {
public:
    HttpToolServer(std::string endpoint, std::string path = "/mcp");
    std::vector<CapabilityDescription> list_capabilities() override;
    json call(const std::string& capability, const json& params) override;

private:
    json rpc(const std::string& method, const json& params);
    std::string endpoint_;
    std::string path_;
    std::atomic<int> next_id_{1};
};

struct ServerConfig {
    std::string transport{"in_process"};  // in_process | http
    std::string endpoint;
    json startup_params = json::object();

    static ServerConfig from_json(const json& j);
};

/// Tool-protocol client. Layer 1 is server_config, layer 2 is each agent's
/// tool_permissions, layer 3 the live sessions, layer 4 the cached
/// capability descriptions. All calls run on one shared scheduler; the
/// submit facade blocks only the calling thread.
class ToolClient {
public:
    explicit ToolClient(std::size_t scheduler_threads = 8);
    ~ToolClient();
    ToolClient(const ToolClient&) = delete;
    ToolClient& operator=(const ToolClient&) = delete;

    /// The process-wide instance used by the CLI.
    static ToolClient& global();

    /// Layer 1. `servers` is keyed by server name.
    void configure(const json& servers);
    void add_server(const std::string& name, ServerConfig config);
    /// Registers a ready-made in-process server under `name` (config + factory).
    void add_in_process(const std::string& name, std::shared_ptr<ToolServer> server);
    bool has_config(const std::string& name) const;
    std::vector<std::string> configured() const;

    /// Connects every server the agent may use; descriptions are fetched
    /// once, on first connect. Unreachable servers are skipped and recorded.
    std::vector<std::string> ensure_sessions(const AgentState& agent);
    bool connected(const std::string& name) const;

    std::vector<CapabilityDescription> list_capabilities(const std::string& server);
    json execute_capability(const std::string& server, const std::string& capability, const json& params);

    /// Re-fetches one server's descriptions (the only invalidation path).
    void refresh_descriptions(const std::string& server);
    std::size_t description_fetches(const std::string& server) const;
    std::size_t cache_hits(const std::string& server) const;

    using Call = std::function<json()>;
    json submit(Call call);
    /// Runs the batch concurrently; results come back in input order.
    std::vector<json> submit_batch(std::vector<Call> calls);

    void shutdown();
    bool running() const { return running_.load(); }

    /// Layer containment: permissions and sessions within the configured set.
    std::vector<std::string> containment_violations(const AgentState& agent) const;

    void set_event_log(EventLog* log, bool record_latency);

private:
    std::future<json> post(Call call);
    std::shared_ptr<ToolServer> session(const std::string& server);
    std::shared_ptr<ToolServer> connect(const std::string& name, const ServerConfig& cfg);

    mutable std::mutex mutex_;
    std::map<std::string, ServerConfig> server_config_;
    std::map<std::string, std::shared_ptr<ToolServer>> factories_;  // pre-built in-process servers
    std::map<std::string, std::shared_ptr<ToolServer>> server_sessions_;
    std::map<std::string, std::vector<CapabilityDescription>> server_descriptions_;
    std::map<std::string, std::size_t> fetches_;
    std::map<std::string, std::size_t> hits_;
    std::map<std::string, std::string> connect_errors_;

    std::unique_ptr<boost::asio::thread_pool> pool_;
    std::atomic<bool> running_{true};
    EventLog* log_{nullptr};
    bool record_latency_{false};
};

}  // namespace mas
