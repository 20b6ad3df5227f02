#include "mas/memory.hpp"

#include <cctype>
#include <ctime>

namespace mas {

namespace {

int digits(std::string_view s, std::size_t pos, std::size_t n) {
    int v = 0;
    for (std::size_t i = pos; i < pos + n; ++i) v = v * 10 + (s[i] - '0');
    return v;
}

bool leap(int y) { return (y % 4 == 0 && y % 100 != 0) || y % 400 == 0; }

}  // namespace

bool is_compact_iso(std::string_view key) {
    if (key.size() != 15 || key[8] != 'T') return false;
    for (std::size_t i = 0; i < key.size(); ++i) {
        if (i == 8) continue;
        if (!std::isdigit(static_cast<unsigned char>(key[i]))) return false;
    }
    const int year = digits(key, 0, 4);
    const int month = digits(key, 4, 2);
    const int day = digits(key, 6, 2);
    const int hour = digits(key, 9, 2);
    const int minute = digits(key, 11, 2);
    const int second = digits(key, 13, 2);
    static constexpr int kDays[] = {31, 28, 31, 30, 31, 30, 31, 31, 30, 31, 30, 31};
    if (month < 1 || month > 12 || day < 1) return false;
    const int max_day = kDays[month - 1] + (month == 2 && leap(year) ? 1 : 0);
    return day <= max_day && hour < 24 && minute < 60 && second < 60;
}

std::string format_compact_iso(std::int64_t unix_seconds) {
    const std::time_t t = static_cast<std::time_t>(unix_seconds);
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y%m%dT%H%M%S", &tm);
    return buf;
}

void MemoryClock::set_mode(Mode mode) {
    std::lock_guard lock(mutex_);
    mode_ = mode;
}

std::string MemoryClock::next_key(const std::map<std::string, std::string>& memory) {
    std::lock_guard lock(mutex_);
    std::int64_t t;
    if (mode_ == Mode::logical) {
        t = logical_++;
    } else {
        t = std::chrono::duration_cast<std::chrono::seconds>(
                std::chrono::system_clock::now().time_since_epoch())
                .count();
    }
    // Two adds within one second would collide; step forward to a free key.
    std::string key = format_compact_iso(t);
    while (memory.contains(key)) key = format_compact_iso(++t);
    if (mode_ == Mode::logical && t >= logical_) logical_ = t + 1;
    return key;
}

MemoryApplyReport apply_memory_ops(std::map<std::string, std::string>& memory,
                                   const std::vector<MemoryOp>& ops, MemoryClock& clock) {
    MemoryApplyReport report;
    for (const auto& op : ops) {
        if (op.kind == MemoryOp::Kind::add) {
            auto key = clock.next_key(memory);
            memory.emplace(key, op.value);
            report.added_keys.push_back(std::move(key));
        } else if (memory.erase(op.value) > 0) {
            report.removed_keys.push_back(op.value);
        } else {
            report.warnings.push_back("persistent memory key '" + op.value + "' not found");
        }
    }
    return report;
}

std::map<std::string, std::string> parse_memory_dict(std::string_view text) {
    std::string cleaned;
    cleaned.reserve(text.size());
    bool in_string = false;
    bool escaped = false;
    std::size_t pending_comma = std::string::npos;
    for (char c : text) {
        if (in_string) {
            cleaned += c;
            if (escaped) escaped = false;
            else if (c == '\\') escaped = true;
            else if (c == '"') in_string = false;
            continue;
        }
        if (c == '"') {
            in_string = true;
            pending_comma = std::string::npos;
        } else if (c == ',') {
            pending_comma = cleaned.size();
        } else if (c == '}' || c == ']') {
            if (pending_comma != std::string::npos) cleaned.erase(pending_comma, 1);
            pending_comma = std::string::npos;
        } else if (!std::isspace(static_cast<unsigned char>(c))) {
            pending_comma = std::string::npos;
        }
        cleaned += c;
    }
    json doc;
    try {
        doc = json::parse(cleaned);
    } catch (const json::parse_error& e) {
        throw Error(std::string("memory dictionary is not valid JSON: ") + e.what());
    }
    if (!doc.is_object()) throw Error("memory dictionary must be an object");
    std::map<std::string, std::string> out;
    for (const auto& [key, value] : doc.items()) {
        if (!is_compact_iso(key)) throw Error("memory key '" + key + "' is not a compact ISO timestamp");
        if (!value.is_string()) throw Error("memory entry '" + key + "' must be text");
        out.emplace(key, value.get<std::string>());
    }
    return out;
}

}  // namespace mas
