#pragma once

#include <atomic>
#include <cstdint>
#include <memory>
#include <mutex>
#include <optional>
#include <regex>
#include <string>
#include <vector>

#include "mas/types.hpp"

namespace mas {

struct BackendRequest {
    std::string system_text;
    std::string context_text;
    std::string instruction_text;
    std::string agent_id;
    std::string agent_name;
    std::string skill_name;

    json to_json() const;
};

struct BackendResponse {
    std::string text;
    std::string usage_note;
};

class BackendError : public Error {
public:
    using Error::Error;
};

class Backend {
public:
    virtual ~Backend() = default;
    virtual BackendResponse complete(const BackendRequest& request) = 0;
};

/// SHA-256 over the canonical JSON of the request (object keys sorted), hex.
std::string request_hash(const BackendRequest& request);

struct ScriptedRule {
    std::string skill;                 // "*" matches any skill
    std::optional<std::string> agent;  // agent id or name
    std::string match;                 // substring of instruction_text, or regex
    bool regex{false};
    std::vector<std::string> replies;  // alternatives; the pick depends on seed

    static ScriptedRule from_json(const json& j);
};

/// Deterministic backend: the first rule (in declaration order) whose
/// skill, agent and pattern match the request supplies the reply.
class ScriptedBackend : public Backend {
public:
    explicit ScriptedBackend(std::vector<ScriptedRule> rules,
                             std::optional<std::string> default_reply = std::nullopt,
                             std::uint64_t seed = 0);

    static std::unique_ptr<ScriptedBackend> from_json(const json& rules,
                                                      std::optional<std::string> default_reply,
                                                      std::uint64_t seed = 0);

    BackendResponse complete(const BackendRequest& request) override;

    std::uint64_t calls() const { return calls_.load(); }

private:
    struct Compiled {
        ScriptedRule rule;
        std::optional<std::regex> pattern;
    };
    std::vector<Compiled> rules_;
    std::optional<std::string> default_reply_;
    std::uint64_t seed_;
    std::atomic<std::uint64_t> calls_{0};
};

/// Chat-completion backend over HTTP(S). The credential is read from the
/// environment variable named in the config, never from the config itself.
class HttpBackend : public Backend {
public:
    struct Config {
        std::string endpoint;  // scheme://host[:port]
        std::string path{"/v1/chat/completions"};
        std::string model;
        std::string api_key_env;
        int timeout_seconds{120};
    };

    explicit HttpBackend(Config config);

    BackendResponse complete(const BackendRequest& request) override;

private:
    Config config_;
};

/// Wraps a live backend and appends every (hash, request, response) to an
/// append-only JSON-lines store.
class RecordingBackend : public Backend {
public:
    RecordingBackend(std::shared_ptr<Backend> inner, std::string store_path);

    BackendResponse complete(const BackendRequest& request) override;

    std::uint64_t live_calls() const { return live_calls_.load(); }

private:
    std::shared_ptr<Backend> inner_;
    std::string store_path_;
    std::mutex mutex_;
    std::atomic<std::uint64_t> live_calls_{0};
};

/// Serves responses from a store written by RecordingBackend; a miss is an
/// error naming the request hash.
class ReplayBackend : public Backend {
public:
    explicit ReplayBackend(const std::string& store_path);

    BackendResponse complete(const BackendRequest& request) override;

    std::size_t size() const { return store_.size(); }

private:
    std::map<std::string, BackendResponse> store_;
};

/// Builds a backend from a config entry:
///   {type: "scripted", default_reply?}
///   {type: "http", endpoint, model, api_key_env?, path?}
///   {type: "record", store, inner: {...}}
///   {type: "replay", store}
std::shared_ptr<Backend> make_backend(const json& config, const json& scripted_rules, std::uint64_t seed);

}  // namespace mas
