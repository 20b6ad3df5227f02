#include "mas/gateway.hpp"

#include <httplib.h>

namespace mas {

namespace {

void send_json(httplib::Response& res, int status, const json& body) {
    res.status = status;
    res.set_content(body.dump(), "application/json");
}

}  // namespace

Gateway::Gateway(Orchestrator& orch) : orch_(orch), server_(std::make_unique<httplib::Server>()) { routes(); }

Gateway::~Gateway() { stop(); }

void Gateway::routes() {
    server_->Get("/api/snapshot", [this](const httplib::Request&, httplib::Response& res) {
        res.set_content(orch_.snapshot().dump(), "application/json");
    });

    server_->Get(R"(/api/agents/([^/]+))", [this](const httplib::Request& req, httplib::Response& res) {
        const auto key = req.matches[1].str();
        auto doc = orch_.sync().read([&](const Registry& r) -> std::optional<json> {
            try {
                return to_json(*r.find_agent(r.resolve_agent(key)));
            } catch (const Error&) {
                return std::nullopt;
            }
        });
        if (!doc) return send_json(res, 404, json{{"error", "unknown agent '" + key + "'"}});
        res.set_content(doc->dump(), "application/json");
    });

    server_->Post("/api/tasks", [this](const httplib::Request& req, httplib::Response& res) {
        json body;
        try {
            body = json::parse(req.body);
        } catch (const json::parse_error& e) {
            return send_json(res, 400, json{{"error", std::string("invalid JSON: ") + e.what()}});
        }
        try {
            const auto tid = orch_.start_task(body.value("instruction", std::string{}),
                                              body.value("manager", std::string{}),
                                              body.value("members", std::vector<std::string>{}));
            send_json(res, 200, json{{"task_id", tid}});
        } catch (const std::exception& e) {
            send_json(res, 422, json{{"error", e.what()}});
        }
    });

    server_->Post("/api/intervene", [this](const httplib::Request& req, httplib::Response& res) {
        json body;
        try {
            body = json::parse(req.body);
        } catch (const json::parse_error& e) {
            return send_json(res, 400, json{{"error", std::string("invalid JSON: ") + e.what()}});
        }
        auto result = orch_.intervene(body);
        if (!result.ok) return send_json(res, 422, json{{"error", result.reason}});
        send_json(res, 200, json{{"ok", true}, {"data", result.data}});
    });

    server_->Get("/api/events", [this](const httplib::Request& req, httplib::Response& res) {
        std::uint64_t since = 0;
        try {
            if (req.has_param("since")) since = std::stoull(req.get_param_value("since"));
            else if (req.has_header("Last-Event-ID")) since = std::stoull(req.get_header_value("Last-Event-ID"));
        } catch (const std::exception&) {
            res.status = 400;
            res.set_content("bad since", "text/plain");
            return;
        }
        res.set_header("Cache-Control", "no-cache");
        res.set_chunked_content_provider(
            "text/event-stream", [this, last = since](std::size_t, httplib::DataSink& sink) mutable {
                while (!stopping_) {
                    auto batch = orch_.log().wait_since(last, std::chrono::milliseconds(250));
                    if (batch.empty()) {
                        if (!sink.is_writable()) return false;
                        continue;
                    }
                    std::string chunk;
                    for (const auto& e : batch) {
                        last = e.at("seq").get<std::uint64_t>();
                        chunk += "id: " + std::to_string(last) + "\ndata: " + e.dump() + "\n\n";
                    }
                    return sink.write(chunk.data(), chunk.size());
                }
                sink.done();
                return true;
            });
    });
}

int Gateway::start(const std::string& host, int port) {
    port_ = port == 0 ? server_->bind_to_any_port(host) : (server_->bind_to_port(host, port) ? port : -1);
    if (port_ < 0) throw Error("cannot bind " + host + ":" + std::to_string(port));
    thread_ = std::thread([this] { server_->listen_after_bind(); });
    server_->wait_until_ready();
    return port_;
}

bool Gateway::listen(const std::string& host, int port) {
    port_ = port;
    return server_->listen(host, port);
}

void Gateway::stop() {
    stopping_ = true;
    orch_.log().notify_all();
    server_->stop();
    if (thread_.joinable()) thread_.join();
}

}  // namespace mas
