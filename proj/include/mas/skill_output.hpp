#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "mas/memory.hpp"
#include "mas/types.hpp"

namespace mas {

/// Raised when a tagged block is present but its JSON does not parse or has
/// the wrong shape; the executor retries the backend call on this.
class SkillParseError : public Error {
public:
    using Error::Error;
};

/// Contents of every <tag>...</tag> block, in order of appearance.
std::vector<std::string> extract_blocks(std::string_view text, std::string_view tag);

/// The memory commands inside <persistent_memory>[...]</persistent_memory>.
/// A malformed block yields no ops and a warning; it never throws.
std::vector<MemoryOp> parse_memory_ops(std::string_view text, std::vector<std::string>* warnings = nullptr);

struct ParsedSkillOutput {
    std::vector<StepDraft> planned_steps;    // <planned_step>[...]</planned_step>
    std::vector<MemoryOp> memory_ops;        // <persistent_memory>[...]</persistent_memory>
    std::optional<json> message_draft;       // <message>{...}</message>
    json control = json::object();           // <control>{...}</control>
    std::string free_text;                   // everything outside the tags
    std::vector<std::string> warnings;
};

ParsedSkillOutput parse_skill_output(std::string_view text);

}  // namespace mas
