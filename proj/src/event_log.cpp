#include "mas/event_log.hpp"

#include <sstream>

namespace mas {

void EventLog::open_sink(const std::string& path) {
    std::lock_guard lock(mutex_);
    sink_.open(path, std::ios::trunc);
    if (!sink_) throw Error("cannot open event log '" + path + "'");
}

std::uint64_t EventLog::append(std::string type, json fields) {
    std::uint64_t seq;
    {
        std::lock_guard lock(mutex_);
        seq = entries_.size() + 1;
        json entry{{"seq", seq}, {"tick", tick_}, {"type", std::move(type)}};
        for (auto& [k, v] : fields.items()) entry[k] = std::move(v);
        if (sink_.is_open()) sink_ << entry.dump() << '\n' << std::flush;
        entries_.push_back(std::move(entry));
    }
    cv_.notify_all();
    return seq;
}

void EventLog::set_tick(std::uint64_t tick) {
    std::lock_guard lock(mutex_);
    tick_ = tick;
}

std::uint64_t EventLog::tick() const {
    std::lock_guard lock(mutex_);
    return tick_;
}

std::size_t EventLog::size() const {
    std::lock_guard lock(mutex_);
    return entries_.size();
}

std::vector<json> EventLog::entries() const {
    std::lock_guard lock(mutex_);
    return entries_;
}

std::vector<json> EventLog::entries_since(std::uint64_t seq) const {
    std::lock_guard lock(mutex_);
    if (seq >= entries_.size()) return {};
    return {entries_.begin() + static_cast<std::ptrdiff_t>(seq), entries_.end()};
}

std::vector<json> EventLog::wait_since(std::uint64_t seq, std::chrono::milliseconds timeout) const {
    std::unique_lock lock(mutex_);
    cv_.wait_for(lock, timeout, [&] { return entries_.size() > seq; });
    if (seq >= entries_.size()) return {};
    return {entries_.begin() + static_cast<std::ptrdiff_t>(seq), entries_.end()};
}

std::string EventLog::dump() const {
    std::lock_guard lock(mutex_);
    std::string out;
    for (const auto& e : entries_) {
        out += e.dump();
        out += '\n';
    }
    return out;
}

void EventLog::notify_all() const { cv_.notify_all(); }

std::vector<json> load_event_log(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot read event log '" + path + "'");
    std::vector<json> out;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        try {
            out.push_back(json::parse(line));
        } catch (const json::parse_error& e) {
            throw Error(path + ":" + std::to_string(lineno) + ": " + e.what());
        }
    }
    return out;
}

}  // namespace mas
