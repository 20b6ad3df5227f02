#pragma once

#include <optional>
#include <string>
#include <vector>

#include "mas/orchestrator.hpp"

namespace mas {

class ScenarioError : public Error {
public:
    using Error::Error;
};

struct ScheduledTask {
    std::string instruction;
    std::string manager;
    std::vector<std::string> members;
    std::uint64_t at_tick{0};
};

struct ScheduledIntervention {
    std::uint64_t at_tick{1};
    json command;
};

/// A self-contained run description:
///   {name, max_ticks?, seed?, prompts_dir?, tool_servers?{}, backends?{},
///    default_reply?, agents[], scripted_rules[], tasks[], interventions[], assertions[]}
struct Scenario {
    std::string name;
    std::string base_dir;  // relative paths (replay stores, prompts) resolve here
    std::uint64_t max_ticks{200};
    std::uint64_t seed{0};
    std::string prompts_dir;
    json tool_servers = json::object();
    json backends = json::object();
    json agents = json::array();
    json scripted_rules = json::array();
    std::vector<ScheduledTask> tasks;
    std::vector<ScheduledIntervention> interventions;
    json assertions = json::array();
};

Scenario parse_scenario(const json& doc, std::string base_dir = {});
Scenario load_scenario(const std::string& path);

struct AssertionResult {
    std::string description;
    bool ok{false};
    std::string detail;
};

struct ScenarioOutcome {
    RunResult run;
    std::vector<std::string> task_ids;  // in scenario order; empty for tasks never started
    std::vector<AssertionResult> assertions;
    bool passed() const;
};

/// Configures tool servers, backends and agents. `seed` overrides the
/// scenario's own seed when set.
void setup_scenario(Orchestrator& orch, const Scenario& scenario, std::optional<std::uint64_t> seed = std::nullopt);

/// Runs the scenario deterministically: tasks and interventions fire at the
/// start of their tick (tick 0 = before the first round).
ScenarioOutcome run_scenario(Orchestrator& orch, const Scenario& scenario,
                             std::optional<std::uint64_t> max_ticks = std::nullopt);

std::vector<AssertionResult> evaluate_assertions(Orchestrator& orch, const Scenario& scenario,
                                                 const std::vector<std::string>& task_ids);

/// True when `event` satisfies every condition in `where`. Keys are dotted
/// paths into the event; values are literals or {"contains": text}.
bool event_matches(const json& event, const json& where);

}  // namespace mas
