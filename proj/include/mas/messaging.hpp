#pragma once

#include <optional>
#include <string>
#include <vector>

#include "mas/registry.hpp"

namespace mas {

/// Wait ids of the form "wid-<counter>-<receiver>", one per receiver.
std::vector<std::string> make_wait_ids(Registry& registry, const std::vector<std::string>& receivers);

/// Throws unless the envelope is well formed and respects the same-task
/// rule (operator and sync-state senders are exempt).
void validate_message(const Registry& registry, const Message& message);

/// Validates the envelope and appends it to the owning task's queue (or the
/// operator queue for task-less operator messages). A message carrying wait
/// ids locks its sender immediately.
void enqueue(Registry& registry, Message message);

/// Delivers every undelivered message of the task, one receive per
/// receiver. Returns the number of messages taken off the queue.
std::size_t dispatch_pending(Registry& registry, const std::string& task_id);

/// Delivers one queued message ahead of the periodic dispatch.
bool dispatch_message(Registry& registry, const std::string& task_id, const std::string& message_id);

/// Drains task-less operator messages.
std::size_t dispatch_operator_queue(Registry& registry);

/// Receiver-side handling: releases a matching wait lock, then appends a
/// Send Message step (reply required), a Process Message step (no reply) or
/// inserts a Tool Decision step (tool result). Returns the new step id;
/// nullopt for duplicates.
std::optional<std::string> receive(Registry& registry, AgentState& agent, const Message& message);

/// Trailing "return_waiting_id: <id>" line of a reply step's text, if any.
std::optional<std::string> extract_return_waiting_id(std::string_view text_content);

}  // namespace mas
