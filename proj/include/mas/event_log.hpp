#pragma once

#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <fstream>
#include <mutex>
#include <string>
#include <vector>

#include "mas/types.hpp"

namespace mas {

/// Append-only run log. Every entry carries a sequence number and the
/// scheduler round it was written in; serialized as JSON lines.
class EventLog {
public:
    EventLog() = default;
    EventLog(const EventLog&) = delete;
    EventLog& operator=(const EventLog&) = delete;

    /// Mirrors every subsequent entry to `path` (truncates).
    void open_sink(const std::string& path);

    std::uint64_t append(std::string type, json fields = json::object());

    void set_tick(std::uint64_t tick);
    std::uint64_t tick() const;

    std::size_t size() const;
    std::vector<json> entries() const;
    std::vector<json> entries_since(std::uint64_t seq) const;

    /// Blocks until an entry with sequence > seq exists or the timeout passes.
    std::vector<json> wait_since(std::uint64_t seq, std::chrono::milliseconds timeout) const;

    /// JSON-lines rendering of the whole log.
    std::string dump() const;

    /// Wakes every waiter (used on shutdown).
    void notify_all() const;

private:
    mutable std::mutex mutex_;
    mutable std::condition_variable cv_;
    std::vector<json> entries_;
    std::uint64_t tick_{0};
    std::ofstream sink_;
};

std::vector<json> load_event_log(const std::string& path);

}  // namespace mas
