#pragma once

#include <chrono>
#include <cstdint>
#include <map>
#include <mutex>
#include <string>
#include <vector>

#include "mas/types.hpp"

namespace mas {

struct MemoryOp {
    enum class Kind { add, remove };
    Kind kind{Kind::add};
    std::string value;  // note text for add, timestamp key for remove

    bool operator==(const MemoryOp&) const = default;
};

/// True for keys shaped like "20250613T103022" with in-range fields.
bool is_compact_iso(std::string_view key);

std::string format_compact_iso(std::int64_t unix_seconds);

/// Issues persistent-memory keys. Logical mode starts at a fixed epoch and
/// advances one second per key so replays produce identical memories.
class MemoryClock {
public:
    enum class Mode { logical, wall };

    explicit MemoryClock(Mode mode = Mode::logical) : mode_(mode) {}

    void set_mode(Mode mode);

    /// Returns a key not already present in `memory`.
    std::string next_key(const std::map<std::string, std::string>& memory);

private:
    std::mutex mutex_;
    Mode mode_;
    std::int64_t logical_{kLogicalEpoch};

    static constexpr std::int64_t kLogicalEpoch = 1735689600;  // 2025-01-01T00:00:00Z
};

struct MemoryApplyReport {
    std::vector<std::string> added_keys;
    std::vector<std::string> removed_keys;
    std::vector<std::string> warnings;
};

/// Applies ops in listed order; deleting an unknown key is a warning.
MemoryApplyReport apply_memory_ops(std::map<std::string, std::string>& memory,
                                   const std::vector<MemoryOp>& ops, MemoryClock& clock);

/// Reads a memory dictionary as written by hand: {"<key>": "<note>", ...}.
/// A trailing comma before the closing brace is accepted; keys must be
/// compact ISO timestamps.
std::map<std::string, std::string> parse_memory_dict(std::string_view text);

}  // namespace mas
