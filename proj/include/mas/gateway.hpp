#pragma once

#include <atomic>
#include <memory>
#include <string>
#include <thread>

#include "mas/orchestrator.hpp"

namespace httplib {
class Server;
}

namespace mas {

/// HTTP gateway for the operator console:
///   GET  /api/snapshot      registry document
///   GET  /api/events        server-sent events, one log entry per event (id = seq)
///   POST /api/tasks         {instruction, manager, members[]}
///   POST /api/intervene     intervention command; 422 with {error} when rejected
///   GET  /api/agents/{id}   one agent (id or name)
class Gateway {
public:
    explicit Gateway(Orchestrator& orch);
    ~Gateway();
    Gateway(const Gateway&) = delete;
    Gateway& operator=(const Gateway&) = delete;

    /// Binds and serves on a background thread. Port 0 picks a free port.
    int start(const std::string& host, int port);
    /// Serves on the calling thread until stop().
    bool listen(const std::string& host, int port);
    void stop();
    int port() const { return port_; }

private:
    void routes();

    Orchestrator& orch_;
    std::unique_ptr<httplib::Server> server_;
    std::thread thread_;
    std::atomic<bool> stopping_{false};
    int port_{0};
};

}  // namespace mas
