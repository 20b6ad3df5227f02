#include "mas/backend.hpp"

#include <cstdlib>
#include <fstream>

#include <httplib.h>
#include <openssl/evp.h>

namespace mas {

json BackendRequest::to_json() const {
    return json{{"system_text", system_text},   {"context_text", context_text},
                {"instruction_text", instruction_text}, {"agent_id", agent_id},
                {"agent_name", agent_name},     {"skill_name", skill_name}};
}

std::string request_hash(const BackendRequest& request) {
    // nlohmann::json objects are key-ordered maps, so dump() is canonical.
    const std::string canonical = request.to_json().dump();
    unsigned char digest[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    if (EVP_Digest(canonical.data(), canonical.size(), digest, &len, EVP_sha256(), nullptr) != 1)
        throw BackendError("sha256 failed");
    static constexpr char kHex[] = "0123456789abcdef";
    std::string hex;
    hex.reserve(len * 2);
    for (unsigned int i = 0; i < len; ++i) {
        hex.push_back(kHex[digest[i] >> 4]);
        hex.push_back(kHex[digest[i] & 0xf]);
    }
    return hex;
}

ScriptedRule ScriptedRule::from_json(const json& j) {
    ScriptedRule r;
    r.skill = j.value("skill", std::string{"*"});
    if (j.contains("agent")) r.agent = j.at("agent").get<std::string>();
    r.match = j.value("match", std::string{});
    r.regex = j.value("regex", false);
    if (j.contains("replies")) {
        r.replies = j.at("replies").get<std::vector<std::string>>();
    } else if (j.contains("reply")) {
        r.replies.push_back(j.at("reply").get<std::string>());
    }
    if (r.replies.empty()) throw Error("scripted rule for skill '" + r.skill + "' has no reply");
    return r;
}

ScriptedBackend::ScriptedBackend(std::vector<ScriptedRule> rules,
                                 std::optional<std::string> default_reply, std::uint64_t seed)
    : default_reply_(std::move(default_reply)), seed_(seed) {
    for (auto& r : rules) {
        Compiled c{std::move(r), std::nullopt};
        if (c.rule.regex) {
            try {
                c.pattern.emplace(c.rule.match, std::regex::ECMAScript);
            } catch (const std::regex_error& e) {
                throw Error("invalid rule pattern '" + c.rule.match + "': " + e.what());
            }
        }
        rules_.push_back(std::move(c));
    }
}

std::unique_ptr<ScriptedBackend> ScriptedBackend::from_json(const json& rules,
                                                            std::optional<std::string> default_reply,
                                                            std::uint64_t seed) {
    std::vector<ScriptedRule> parsed;
    if (!rules.is_null()) {
        if (!rules.is_array()) throw Error("scripted_rules must be a list");
        for (const auto& j : rules) parsed.push_back(ScriptedRule::from_json(j));
    }
    return std::make_unique<ScriptedBackend>(std::move(parsed), std::move(default_reply), seed);
}

BackendResponse ScriptedBackend::complete(const BackendRequest& request) {
    ++calls_;
    for (const auto& c : rules_) {
        const auto& r = c.rule;
        if (r.skill != "*" && r.skill != request.skill_name) continue;
        if (r.agent && *r.agent != request.agent_id && *r.agent != request.agent_name) continue;
        const bool hit = c.pattern ? std::regex_search(request.instruction_text, *c.pattern)
                                   : request.instruction_text.find(r.match) != std::string::npos;
        if (!hit) continue;
        std::size_t pick = 0;
        if (r.replies.size() > 1) {
            const auto h = request_hash(request);
            std::uint64_t x = std::stoull(h.substr(0, 16), nullptr, 16) ^ (seed_ * 0x9e3779b97f4a7c15ULL);
            x ^= x >> 31;
            pick = static_cast<std::size_t>(x % r.replies.size());
        }
        return {r.replies[pick], "scripted"};
    }
    if (default_reply_) return {*default_reply_, "scripted-default"};
    throw BackendError("no scripted rule matches skill '" + request.skill_name + "' for agent " +
                       request.agent_id);
}

HttpBackend::HttpBackend(Config config) : config_(std::move(config)) {
    if (config_.endpoint.empty()) throw Error("http backend needs an endpoint");
}

BackendResponse HttpBackend::complete(const BackendRequest& request) {
    httplib::Client client(config_.endpoint);
    client.set_read_timeout(config_.timeout_seconds, 0);
    client.set_connection_timeout(10, 0);
    httplib::Headers headers;
    if (!config_.api_key_env.empty()) {
        if (const char* key = std::getenv(config_.api_key_env.c_str()))
            headers.emplace("Authorization", std::string("Bearer ") + key);
    }
    json body{{"model", config_.model},
              {"messages",
               json::array({json{{"role", "system"}, {"content", request.system_text}},
                            json{{"role", "user"},
                                 {"content", request.context_text + "\n\n" + request.instruction_text}}})}};
    auto res = client.Post(config_.path, headers, body.dump(), "application/json");
    if (!res) throw BackendError("http backend transport error: " + httplib::to_string(res.error()));
    if (res->status != 200)
        throw BackendError("http backend status " + std::to_string(res->status) + ": " + res->body);
    try {
        auto j = json::parse(res->body);
        BackendResponse out;
        out.text = j.at("choices").at(0).at("message").at("content").get<std::string>();
        if (j.contains("usage")) out.usage_note = j.at("usage").dump();
        return out;
    } catch (const json::exception& e) {
        throw BackendError(std::string("http backend returned an unexpected body: ") + e.what());
    }
}

RecordingBackend::RecordingBackend(std::shared_ptr<Backend> inner, std::string store_path)
    : inner_(std::move(inner)), store_path_(std::move(store_path)) {}

BackendResponse RecordingBackend::complete(const BackendRequest& request) {
    auto response = inner_->complete(request);
    ++live_calls_;
    json line{{"hash", request_hash(request)},
              {"request", request.to_json()},
              {"response", {{"text", response.text}, {"usage_note", response.usage_note}}}};
    std::lock_guard lock(mutex_);
    std::ofstream out(store_path_, std::ios::app);
    if (!out) throw BackendError("cannot append to replay store '" + store_path_ + "'");
    out << line.dump() << '\n';
    return response;
}

ReplayBackend::ReplayBackend(const std::string& store_path) {
    std::ifstream in(store_path);
    if (!in) return;  // empty store: every call misses
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        auto j = json::parse(line);
        store_[j.at("hash").get<std::string>()] =
            BackendResponse{j.at("response").at("text").get<std::string>(),
                            j.at("response").value("usage_note", std::string{})};
    }
}

BackendResponse ReplayBackend::complete(const BackendRequest& request) {
    const auto h = request_hash(request);
    auto it = store_.find(h);
    if (it == store_.end()) throw BackendError("replay miss for request " + h);
    return it->second;
}

std::shared_ptr<Backend> make_backend(const json& config, const json& scripted_rules, std::uint64_t seed) {
    const auto type = config.value("type", std::string{"scripted"});
    if (type == "scripted") {
        std::optional<std::string> def;
        if (config.contains("default_reply")) def = config.at("default_reply").get<std::string>();
        return ScriptedBackend::from_json(scripted_rules, def, seed);
    }
    if (type == "http") {
        HttpBackend::Config c;
        c.endpoint = config.value("endpoint", std::string{});
        c.path = config.value("path", c.path);
        c.model = config.value("model", std::string{});
        c.api_key_env = config.value("api_key_env", std::string{});
        c.timeout_seconds = config.value("timeout_seconds", c.timeout_seconds);
        return std::make_shared<HttpBackend>(std::move(c));
    }
    if (type == "record") {
        if (!config.contains("inner")) throw Error("record backend needs 'inner'");
        return std::make_shared<RecordingBackend>(make_backend(config.at("inner"), scripted_rules, seed),
                                                  config.value("store", std::string{}));
    }
    if (type == "replay") return std::make_shared<ReplayBackend>(config.value("store", std::string{}));
    throw Error("unknown backend type '" + type + "'");
}

}  // namespace mas
