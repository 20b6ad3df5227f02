#include "mas/messaging.hpp"

#include <algorithm>

#include "mas/step_queue.hpp"

namespace mas {

namespace {

constexpr std::string_view kReturnWaitPrefix = "return_waiting_id: ";

bool is_exempt_sender(std::string_view id) { return id == kHumanOperator || id == kSystemSender; }

void validate_impl(const Registry& registry, const Message& m) {
    if (m.receiver_ids.empty()) throw ProtocolError("message has no receivers");
    if (m.waiting) {
        if (!m.need_reply) throw ProtocolError("waiting ids on a message that needs no reply");
        if (m.waiting->size() != m.receiver_ids.size())
            throw ProtocolError("waiting must hold exactly one id per receiver");
    }
    if (!is_exempt_sender(m.sender_id) && !registry.find_agent(m.sender_id))
        throw RegistrationError("unknown sender '" + m.sender_id + "'");
    if (m.task_id.empty()) {
        const bool to_operator_only = std::all_of(m.receiver_ids.begin(), m.receiver_ids.end(),
                                                  [](const std::string& r) { return r == kHumanOperator; });
        if (!is_exempt_sender(m.sender_id) && !to_operator_only)
            throw ProtocolError("agent messages must belong to a task");
        for (const auto& r : m.receiver_ids) {
            if (r != kHumanOperator && !registry.find_agent(r))
                throw RegistrationError("unknown receiver '" + r + "'");
        }
        return;
    }
    const auto* task = registry.find_task(m.task_id);
    if (!task) throw RegistrationError("unknown task '" + m.task_id + "'");
    if (!is_exempt_sender(m.sender_id) && !task->has_member(m.sender_id))
        throw ProtocolError("sender " + m.sender_id + " is not in task " + m.task_id);
    for (const auto& r : m.receiver_ids) {
        if (r == kHumanOperator) continue;
        if (is_exempt_sender(m.sender_id)) {
            if (!registry.find_agent(r)) throw RegistrationError("unknown receiver '" + r + "'");
            continue;
        }
        if (!task->has_member(r))
            throw ProtocolError("agents can only message members of the same task: " + r +
                                " is not in " + m.task_id);
    }
    if (m.stage_relative != kNoStage) {
        const auto* stage = registry.find_stage(m.stage_relative);
        if (!stage || stage->task_id != m.task_id)
            throw ProtocolError("stage " + m.stage_relative + " is not part of " + m.task_id);
    }
}

std::size_t deliver_all(Registry& registry, std::deque<Message>& queue) {
    // receive() never enqueues, so draining a moved-out batch is safe.
    std::deque<Message> batch;
    batch.swap(queue);
    std::size_t count = 0;
    for (auto& m : batch) {
        if (m.delivered) continue;
        for (std::size_t i = 0; i < m.receiver_ids.size(); ++i) {
            const auto& rid = m.receiver_ids[i];
            if (rid == kHumanOperator) {
                registry.emit("operator_message", {{"message", to_json(m)}});
                continue;
            }
            auto* agent = registry.find_agent(rid);
            if (!agent) {
                registry.emit("delivery_failed", {{"message_id", m.message_id},
                                                  {"receiver_id", rid},
                                                  {"reason", "receiver deregistered"}});
                // The sender would otherwise wait forever on this receiver.
                if (m.waiting) {
                    const auto& wid = (*m.waiting)[i];
                    if (auto* sender = registry.find_agent(m.sender_id); sender && release_lock(*sender, wid)) {
                        registry.pending_waits().erase(wid);
                        registry.emit("lock_released", {{"agent_id", sender->agent_id},
                                                        {"wait_id", wid},
                                                        {"remaining", sender->step_locks.size()},
                                                        {"reason", "delivery_failed"}});
                    }
                }
                continue;
            }
            receive(registry, *agent, m);
        }
        m.delivered = true;
        ++count;
    }
    return count;
}

}  // namespace

void validate_message(const Registry& registry, const Message& message) {
    validate_impl(registry, message);
}

std::vector<std::string> make_wait_ids(Registry& registry, const std::vector<std::string>& receivers) {
    std::vector<std::string> ids;
    ids.reserve(receivers.size());
    for (const auto& r : receivers) {
        auto counter = registry.next_id("wid");  // "wid-<n>"
        ids.push_back(counter + "-" + r);
    }
    return ids;
}

void enqueue(Registry& registry, Message message) {
    validate_message(registry, message);
    if (message.message_id.empty()) message.message_id = registry.next_id("msg");
    message.delivered = false;

    if (message.waiting) {
        auto* sender = registry.find_agent(message.sender_id);
        if (!sender) throw ProtocolError("only agents can wait for replies");
        acquire_locks(*sender, *message.waiting);
        for (std::size_t i = 0; i < message.waiting->size(); ++i) {
            registry.pending_waits()[(*message.waiting)[i]] =
                Registry::PendingWait{message.task_id, message.sender_id, message.receiver_ids[i]};
        }
        for (const auto& wid : *message.waiting) {
            registry.emit("lock_acquired", {{"agent_id", sender->agent_id},
                                            {"wait_id", wid},
                                            {"message_id", message.message_id},
                                            {"held", sender->step_locks.size()}});
        }
    }

    registry.emit("message_enqueued", {{"message", to_json(message)}});
    if (message.task_id.empty()) {
        registry.operator_queue().push_back(std::move(message));
    } else {
        registry.find_task(message.task_id)->comm_queue.push_back(std::move(message));
    }
}

std::size_t dispatch_pending(Registry& registry, const std::string& task_id) {
    auto* task = registry.find_task(task_id);
    if (!task) throw RegistrationError("unknown task '" + task_id + "'");
    return deliver_all(registry, task->comm_queue);
}

bool dispatch_message(Registry& registry, const std::string& task_id, const std::string& message_id) {
    auto* task = registry.find_task(task_id);
    if (!task) return false;
    auto& queue = task->comm_queue;
    auto it = std::find_if(queue.begin(), queue.end(), [&](const Message& m) { return m.message_id == message_id; });
    if (it == queue.end()) return false;
    std::deque<Message> one{std::move(*it)};
    queue.erase(it);
    return deliver_all(registry, one) == 1;
}

std::size_t dispatch_operator_queue(Registry& registry) {
    return deliver_all(registry, registry.operator_queue());
}

std::optional<std::string> receive(Registry& registry, AgentState& agent, const Message& m) {
    if (!agent.received_messages.insert(m.message_id).second) {
        registry.emit("duplicate_delivery", {{"message_id", m.message_id}, {"receiver_id", agent.agent_id}});
        return std::nullopt;
    }

    if (m.return_waiting_id && release_lock(agent, *m.return_waiting_id)) {
        registry.pending_waits().erase(*m.return_waiting_id);
        registry.emit("lock_released", {{"agent_id", agent.agent_id},
                                        {"wait_id", *m.return_waiting_id},
                                        {"remaining", agent.step_locks.size()},
                                        {"reason", "reply"}});
    }

    const auto index = static_cast<std::size_t>(
        std::find(m.receiver_ids.begin(), m.receiver_ids.end(), agent.agent_id) - m.receiver_ids.begin());

    StepDraft draft;
    draft.task_id = m.task_id;
    draft.stage_id = m.stage_relative;
    // operator notes may reach agents outside the task
    if (!m.task_id.empty() && !agent.task_refs.contains(m.task_id)) {
        draft.task_id.reset();
        draft.stage_id = std::string(kNoStage);
    }
    bool insert = false;
    if (m.kind == MessageKind::tool_result) {
        draft.executor = "tool_decision";
        draft.step_intent = "Decide whether to continue the tool call";
        draft.text_content = m.content;
        insert = true;
    } else if (m.need_reply) {
        draft.executor = "send_message";
        draft.step_intent = "Reply to " + m.sender_id;
        draft.text_content = "Message from " + m.sender_id + " (" + m.message_id + "):\n" + m.content +
                             "\nreply_to: " + m.sender_id;
        json meta{{"reply_to", m.sender_id}, {"message_id", m.message_id}, {"depth", m.depth}};
        if (m.waiting && index < m.waiting->size()) {
            const auto& wid = (*m.waiting)[index];
            draft.text_content += "\n" + std::string(kReturnWaitPrefix) + wid;
            meta["return_waiting_id"] = wid;
        }
        draft.instruction_content = std::move(meta);
    } else {
        draft.executor = "process_message";
        draft.step_intent = "Process message from " + m.sender_id;
        draft.text_content = "Message from " + m.sender_id + " (" + m.message_id + "):\n" + m.content;
        draft.instruction_content = json{{"from", m.sender_id}, {"message_id", m.message_id}};
    }

    std::vector<std::string> ids;
    try {
        ids = insert ? insert_steps(registry, agent, std::span(&draft, 1))
                     : append_steps(registry, agent, std::span(&draft, 1));
    } catch (const PermissionError& e) {
        registry.emit("delivery_failed",
                      {{"message_id", m.message_id}, {"receiver_id", agent.agent_id}, {"reason", e.what()}});
        return std::nullopt;
    }
    registry.emit("message_delivered", {{"message_id", m.message_id},
                                        {"task_id", m.task_id},
                                        {"sender_id", m.sender_id},
                                        {"receiver_id", agent.agent_id},
                                        {"kind", to_string(m.kind)},
                                        {"need_reply", m.need_reply},
                                        {"step_id", ids.front()},
                                        {"executor", draft.executor}});
    return ids.front();
}

std::optional<std::string> extract_return_waiting_id(std::string_view text) {
    auto pos = text.rfind(kReturnWaitPrefix);
    if (pos == std::string_view::npos) return std::nullopt;
    if (pos != 0 && text[pos - 1] != '\n') return std::nullopt;
    auto rest = text.substr(pos + kReturnWaitPrefix.size());
    auto end = rest.find_first_of("\r\n");
    auto id = std::string(rest.substr(0, end));
    while (!id.empty() && id.back() == ' ') id.pop_back();
    if (id.empty()) return std::nullopt;
    return id;
}

}  // namespace mas
