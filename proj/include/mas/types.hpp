#pragma once

#include <deque>
#include <map>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

namespace mas {

using json = nlohmann::json;

inline constexpr std::string_view kNoStage = "no_stage";
inline constexpr std::string_view kHumanOperator = "human-operator";
inline constexpr std::string_view kSystemSender = "sync-state";

// Shared by TaskState and StageState.
enum class RunStatus { init, running, finished, failed };
enum class StepStatus { init, pending, running, finished, failed };
enum class StepType { skill, tool };
enum class WorkingState { idle, working, waiting };

// tool_result messages insert a Tool Decision step on receipt; the other
// kinds follow the reply / no-reply branching.
enum class MessageKind { agent, tool_result, system_info };

std::string_view to_string(RunStatus s);
std::string_view to_string(StepStatus s);
std::string_view to_string(StepType t);
std::string_view to_string(WorkingState w);
std::string_view to_string(MessageKind k);

RunStatus run_status_from(std::string_view s);
StepType step_type_from(std::string_view s);
MessageKind message_kind_from(std::string_view s);

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class RegistrationError : public Error {
public:
    using Error::Error;
};

class SequencingError : public Error {
public:
    using Error::Error;
};

class PermissionError : public Error {
public:
    using Error::Error;
};

class ProtocolError : public Error {
public:
    using Error::Error;
};

struct StepState {
    std::string step_id;
    std::string task_id;
    std::string stage_id{kNoStage};
    std::string agent_id;
    std::string step_intent;
    StepType step_type{StepType::skill};
    std::string executor;
    std::string text_content;
    json instruction_content;  // null when absent
    std::optional<std::string> execute_result;
    StepStatus status{StepStatus::init};

    bool has_stage() const { return stage_id != kNoStage; }
};

/// A step as proposed by an executor or a caller, before it gets an id.
/// Unset task/stage inherit from the step that produced the draft.
struct StepDraft {
    std::string step_intent;
    StepType step_type{StepType::skill};
    std::string executor;
    std::string text_content;
    json instruction_content;
    std::optional<std::string> task_id;
    std::optional<std::string> stage_id;
};

/// The agent's execution step manager: pending queue, the running step,
/// and completed steps in completion order.
struct AgentStep {
    std::deque<StepState> todo;
    std::optional<StepState> current;
    std::vector<StepState> history;
};

struct AgentState {
    std::string agent_id;
    std::string name;
    std::string role;
    std::string profile;
    std::string llm_config_ref{"default"};
    std::set<std::string> skill_permissions;
    std::set<std::string> tool_permissions;
    std::map<std::string, std::string> persistent_memory;  // compact ISO key -> note
    AgentStep steps;
    std::set<std::string> step_locks;
    std::set<std::string> task_refs;
    std::set<std::string> stage_refs;
    WorkingState working_state{WorkingState::idle};
    bool paused{false};

    // message ids already received, for idempotent delivery
    std::set<std::string> received_messages;

    bool permits(const std::string& executor, StepType type) const;
    void refresh_working_state();
};

struct Message {
    std::string message_id;
    std::string task_id;
    std::string sender_id;
    std::vector<std::string> receiver_ids;
    std::string content;
    std::string stage_relative{kNoStage};
    bool need_reply{false};
    std::optional<std::vector<std::string>> waiting;  // one id per receiver
    std::optional<std::string> return_waiting_id;
    bool delivered{false};
    MessageKind kind{MessageKind::agent};
    int depth{0};  // reply-chain length, bounded by the dialogue guard
};

struct StageState {
    std::string stage_id;
    std::string task_id;
    std::string objective;
    std::map<std::string, std::string> agent_allocation;
    std::map<std::string, std::string> completion_summaries;
    RunStatus status{RunStatus::init};

    bool complete() const;
};

struct TaskState {
    std::string task_id;
    std::string instruction;
    std::string manager_id;
    std::vector<std::string> agent_ids;
    std::vector<std::string> stage_ids;
    std::optional<std::size_t> current_stage_index;
    std::deque<Message> comm_queue;
    RunStatus status{RunStatus::init};
    std::map<std::string, std::string> shared_info;

    bool has_member(std::string_view agent_id) const;
};

json to_json(const StepState& s);
json to_json(const StepDraft& d);
json to_json(const Message& m);
json to_json(const AgentState& a);
json to_json(const StageState& s);
json to_json(const TaskState& t);

StepDraft step_draft_from_json(const json& j);
Message message_from_json(const json& j);

}  // namespace mas
