#pragma once

#include <map>
#include <string>

#include "mas/backend.hpp"
#include "mas/executor.hpp"

namespace mas {

/// Per-skill directives. Built-in defaults can be overridden by files named
/// "<skill>.txt" in a prompt directory.
class PromptLibrary {
public:
    PromptLibrary();

    /// Returns the number of directives loaded from `dir`.
    std::size_t load_dir(const std::string& dir);
    void set(const std::string& skill, std::string directive);
    const std::string& directive(const std::string& skill) const;

private:
    std::map<std::string, std::string> directives_;
};

/// The contract every skill prompt carries for persistent-memory edits.
const std::string& memory_contract();

inline constexpr std::size_t kHistoryWindow = 20;

/// Assembles the backend request for a skill step. `with_history` is false
/// only for quick_think.
BackendRequest build_request(const PromptLibrary& prompts, const ExecutionContext& ctx,
                             const std::string& skill, bool with_history);

}  // namespace mas
