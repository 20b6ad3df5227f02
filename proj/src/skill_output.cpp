#include "mas/skill_output.hpp"

#include <algorithm>

namespace mas {

namespace {

struct Span {
    std::size_t begin;
    std::size_t end;  // one past the closing tag
    std::string body;
};

std::vector<Span> find_blocks(std::string_view text, std::string_view tag) {
    const std::string open = "<" + std::string(tag) + ">";
    const std::string close = "</" + std::string(tag) + ">";
    std::vector<Span> out;
    std::size_t pos = 0;
    while ((pos = text.find(open, pos)) != std::string_view::npos) {
        const auto body_begin = pos + open.size();
        const auto close_pos = text.find(close, body_begin);
        if (close_pos == std::string_view::npos) break;
        out.push_back({pos, close_pos + close.size(), std::string(text.substr(body_begin, close_pos - body_begin))});
        pos = close_pos + close.size();
    }
    return out;
}

std::string trim(std::string_view s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(" \t\r\n");
    return std::string(s.substr(b, e - b + 1));
}

json parse_json_block(const std::string& body, std::string_view tag) {
    try {
        return json::parse(body);
    } catch (const json::parse_error& e) {
        throw SkillParseError("<" + std::string(tag) + "> block is not valid JSON: " + e.what());
    }
}

}  // namespace

std::vector<std::string> extract_blocks(std::string_view text, std::string_view tag) {
    std::vector<std::string> out;
    for (auto& s : find_blocks(text, tag)) out.push_back(std::move(s.body));
    return out;
}

std::vector<MemoryOp> parse_memory_ops(std::string_view text, std::vector<std::string>* warnings) {
    std::vector<MemoryOp> ops;
    auto warn = [&](std::string w) {
        if (warnings) warnings->push_back(std::move(w));
    };
    for (const auto& body : extract_blocks(text, "persistent_memory")) {
        json arr;
        try {
            arr = json::parse(body);
        } catch (const json::parse_error&) {
            warn("malformed persistent_memory block ignored");
            continue;
        }
        if (!arr.is_array()) {
            warn("persistent_memory block is not a list");
            continue;
        }
        std::vector<MemoryOp> block;
        bool ok = true;
        for (const auto& item : arr) {
            if (item.is_object() && item.size() == 1 && item.contains("add") && item.at("add").is_string()) {
                block.push_back({MemoryOp::Kind::add, item.at("add").get<std::string>()});
            } else if (item.is_object() && item.size() == 1 && item.contains("delete") &&
                       item.at("delete").is_string()) {
                block.push_back({MemoryOp::Kind::remove, item.at("delete").get<std::string>()});
            } else {
                ok = false;
                break;
            }
        }
        if (!ok) {
            warn("persistent_memory block has an entry that is neither add nor delete");
            continue;
        }
        ops.insert(ops.end(), block.begin(), block.end());
    }
    return ops;
}

ParsedSkillOutput parse_skill_output(std::string_view text) {
    ParsedSkillOutput out;
    out.memory_ops = parse_memory_ops(text, &out.warnings);

    for (const auto& body : extract_blocks(text, "planned_step")) {
        auto arr = parse_json_block(body, "planned_step");
        if (arr.is_object()) arr = json::array({arr});
        if (!arr.is_array()) throw SkillParseError("<planned_step> must hold a list of steps");
        for (const auto& item : arr) {
            try {
                out.planned_steps.push_back(step_draft_from_json(item));
            } catch (const std::exception& e) {
                throw SkillParseError(std::string("bad planned step: ") + e.what());
            }
        }
    }

    auto messages = extract_blocks(text, "message");
    if (!messages.empty()) {
        auto m = parse_json_block(messages.front(), "message");
        if (!m.is_object()) throw SkillParseError("<message> must hold an object");
        out.message_draft = std::move(m);
    }

    for (const auto& body : extract_blocks(text, "control")) {
        auto c = parse_json_block(body, "control");
        if (!c.is_object()) throw SkillParseError("<control> must hold an object");
        out.control.update(c);
    }

    // Free text is whatever remains once the known blocks are cut out.
    std::vector<Span> spans;
    for (auto tag : {"persistent_memory", "planned_step", "message", "control"}) {
        auto found = find_blocks(text, tag);
        spans.insert(spans.end(), found.begin(), found.end());
    }
    std::sort(spans.begin(), spans.end(), [](const Span& a, const Span& b) { return a.begin < b.begin; });
    std::string rest;
    std::size_t pos = 0;
    for (const auto& s : spans) {
        if (s.begin < pos) continue;
        rest.append(text.substr(pos, s.begin - pos));
        pos = s.end;
    }
    rest.append(text.substr(std::min(pos, text.size())));
    out.free_text = trim(rest);
    return out;
}

}  // namespace mas
