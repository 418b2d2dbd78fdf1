#pragma once

// JSON Lines records: {"id": optional string, "messages": [{"role", "content"}, ...]}
// plus optional passthrough fields (e.g. "task_type", "language").

#include <nlohmann/json.hpp>

#include <cstddef>
#include <istream>
#include <optional>
#include <string>
#include <utility>

#include "promptprism/errors.hpp"
#include "promptprism/prompt_model.hpp"

namespace promptprism {

inline Prompt prompt_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw Error(Errc::MalformedRecord, "record must be a JSON object");
  auto it = j.find("messages");
  if (it == j.end() || !it->is_array()) throw Error(Errc::MalformedRecord, "record needs a 'messages' array");
  Prompt p;
  if (auto id = j.find("id"); id != j.end() && !id->is_null()) {
    if (!id->is_string()) throw Error(Errc::MalformedRecord, "'id' must be a string");
    p.id = id->get<std::string>();
  }
  for (const auto& m : *it) {
    if (!m.is_object()) throw Error(Errc::MalformedRecord, "message must be an object");
    auto role = m.find("role");
    auto content = m.find("content");
    if (role == m.end() || !role->is_string()) throw Error(Errc::MalformedRecord, "message needs a string 'role'");
    if (content == m.end() || !(content->is_string() || content->is_null())) {
      throw Error(Errc::MalformedRecord, "message needs a string 'content'");
    }
    p.messages.push_back(Message{role->get<std::string>(), content->is_null() ? "" : content->get<std::string>()});
  }
  return p;
}

inline nlohmann::json prompt_to_json(const Prompt& p) {
  nlohmann::json j;
  if (p.id) j["id"] = *p.id;
  j["messages"] = nlohmann::json::array();
  for (const auto& m : p.messages) j["messages"].push_back({{"role", m.role}, {"content", m.content}});
  return j;
}

/// One line of a JSONL stream.
struct JsonlRecord {
  std::size_t line_number = 0;  // 1-based
  nlohmann::json json;
  Prompt prompt;
};

/// Sequential JSONL reader. Blank lines are skipped; malformed lines throw
/// MalformedRecord with the line number, and the reader stays usable.
class JsonlReader {
 public:
  explicit JsonlReader(std::istream& in) : in_(in) {}

  /// Next record, or nullopt at end of stream.
  std::optional<JsonlRecord> next() {
    std::string line;
    while (std::getline(in_, line)) {
      ++line_;
      if (!line.empty() && line.back() == '\r') line.pop_back();
      if (line.find_first_not_of(" \t") == std::string::npos) continue;
      JsonlRecord rec;
      rec.line_number = line_;
      try {
        rec.json = nlohmann::json::parse(line);
        rec.prompt = prompt_from_json(rec.json);
      } catch (const nlohmann::json::exception& e) {
        throw Error(Errc::MalformedRecord, "line " + std::to_string(line_) + ": " + e.what());
      } catch (const Error& e) {
        throw Error(Errc::MalformedRecord, "line " + std::to_string(line_) + ": " + e.what());
      }
      return rec;
    }
    return std::nullopt;
  }

  std::size_t line() const { return line_; }

 private:
  std::istream& in_;
  std::size_t line_ = 0;
};

}  // namespace promptprism
