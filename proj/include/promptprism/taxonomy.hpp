#pragma once

// Structural roles and the hierarchical semantic tag vocabulary.

#include <nlohmann/json.hpp>

#include <algorithm>
#include <compare>
#include <cstddef>
#include <fstream>
#include <map>
#include <set>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "promptprism/digest.hpp"
#include "promptprism/errors.hpp"
#include "promptprism/unicode.hpp"

namespace promptprism {

inline constexpr std::size_t kMaxTagDepth = 3;

/// True for `[a-z][a-z0-9_]*`.
constexpr bool is_identifier(std::string_view s) {
  if (s.empty() || s[0] < 'a' || s[0] > 'z') return false;
  for (char c : s) {
    const bool ok = (c >= 'a' && c <= 'z') || (c >= '0' && c <= '9') || c == '_';
    if (!ok) return false;
  }
  return true;
}

/// A node of the semantic tag tree, e.g. `instruction:guideline:cot`.
class TagPath {
 public:
  TagPath() = default;

  /// Parses canonical text. Throws InvalidIdentifier or DepthExceeded.
  static TagPath parse(std::string_view text) {
    std::vector<std::string> segments;
    std::size_t start = 0;
    while (true) {
      const auto colon = text.find(':', start);
      const auto seg = text.substr(start, colon == std::string_view::npos ? std::string_view::npos : colon - start);
      if (!is_identifier(seg)) {
        throw Error(Errc::InvalidIdentifier, "tag segment '" + std::string(seg) + "' in '" + std::string(text) +
                                                 "' does not match [a-z][a-z0-9_]*");
      }
      segments.emplace_back(seg);
      if (colon == std::string_view::npos) break;
      start = colon + 1;
    }
    if (segments.size() > kMaxTagDepth) {
      throw Error(Errc::DepthExceeded, "tag '" + std::string(text) + "' has depth " +
                                           std::to_string(segments.size()) + " > " + std::to_string(kMaxTagDepth));
    }
    return TagPath(std::move(segments));
  }

  /// Non-throwing parse; false when `text` is not a well-formed path.
  static bool try_parse(std::string_view text, TagPath& out) {
    try {
      out = parse(text);
      return true;
    } catch (const Error&) {
      return false;
    }
  }

  const std::vector<std::string>& segments() const { return segments_; }
  const std::string& str() const { return text_; }
  std::size_t depth() const { return segments_.size(); }
  bool empty() const { return segments_.empty(); }

  TagPath prefix(std::size_t n) const {
    return TagPath(std::vector<std::string>(segments_.begin(), segments_.begin() + std::min(n, segments_.size())));
  }

  TagPath top() const { return prefix(1); }

  /// Segment-wise prefix test: `tools` is a prefix of `tools:parameters`
  /// but not of `tools_prompt`.
  bool starts_with(const TagPath& other) const {
    if (other.depth() > depth()) return false;
    return std::equal(other.segments_.begin(), other.segments_.end(), segments_.begin());
  }

  friend bool operator==(const TagPath& a, const TagPath& b) { return a.text_ == b.text_; }
  friend std::strong_ordering operator<=>(const TagPath& a, const TagPath& b) { return a.text_ <=> b.text_; }

 private:
  explicit TagPath(std::vector<std::string> segments) : segments_(std::move(segments)) {
    for (std::size_t i = 0; i < segments_.size(); ++i) {
      if (i) text_.push_back(':');
      text_ += segments_[i];
    }
  }

  std::vector<std::string> segments_;
  std::string text_;
};

struct Role {
  std::string name;
  bool builtin = false;

  friend bool operator==(const Role&, const Role&) = default;
};

inline constexpr std::string_view kRoleSystem = "system";
inline constexpr std::string_view kRoleUser = "user";
inline constexpr std::string_view kRoleAssistant = "assistant";
inline constexpr std::string_view kRoleTools = "tools";

/// The built-in semantic tags with their descriptions, in tree order.
inline const std::vector<std::pair<std::string_view, std::string_view>>& builtin_tag_table() {
  static const std::vector<std::pair<std::string_view, std::string_view>> table = {
      {"instruction", "High-level directive component that guides the model's behavior"},
      {"instruction:task", "Task related instruction"},
      {"instruction:guideline", "Non-task specific instructions that shape response behavior"},
      {"instruction:guideline:role", "Directives for the model to assume a specific role (persona)"},
      {"instruction:guideline:scenario", "Context setting for the task environment"},
      {"instruction:guideline:behavioral", "Instructions for model conduct and interaction style"},
      {"instruction:guideline:emotion", "Guidelines for emotional tone"},
      {"instruction:guideline:cot", "Directives for showing reasoning process"},
      {"instruction:guideline:safety", "Guidelines ensuring safe and ethical responses"},
      {"contextual_ref", "Background information and supporting materials"},
      {"contextual_ref:fewshot", "Sample input-output pairs for in-context learning"},
      {"contextual_ref:knowledge_base", "Reference information or facts"},
      {"contextual_ref:context_for_task", "Relevant background information"},
      {"output_const", "Specifications for response format and limitations"},
      {"output_const:label", "Defined set of possible output categories"},
      {"output_const:wordlimit", "Restrictions on response length"},
      {"output_const:format", "Structure requirements for the response"},
      {"output_const:style_tone", "Requirements for writing style"},
      {"tools", "Specifications for tool usage"},
      {"tools:tool_name", "Identifier for specific tool"},
      {"tools:tool_description", "Explanation of tool functionality"},
      {"tools:parameters", "Required inputs and configuration"},
      {"request_query", "The primary query or task from user"},
      {"response", "Semantic component for model's output"},
      {"response:answer", "Direct answer to the request or question"},
      {"response:peripheral_explanation", "Supporting information and clarifications"},
      {"other", "Additional functional elements"},
      {"other:adversarial", "Components designed for adversarial purpose"},
      {"historical_context", "Pointer to the previous conversation history"},
      {"system_prompt", "Pointer to the system prompt"},
      {"tools_prompt", "Pointer to the tools prompt"},
  };
  return table;
}

/// Prefix-closed set of tag paths plus the role vocabulary. Immutable once
/// shared; mutate only while a single owner builds it.
class TagRegistry {
 public:
  struct Entry {
    std::string description;
    bool builtin = false;
  };

  /// Registry with only the built-in roles and no tags.
  static TagRegistry empty() {
    TagRegistry r;
    for (auto name : {kRoleSystem, kRoleUser, kRoleAssistant, kRoleTools}) {
      r.roles_.emplace(std::string(name), Role{std::string(name), true});
    }
    return r;
  }

  /// Registry holding the full built-in taxonomy.
  static TagRegistry builtin() {
    TagRegistry r = empty();
    for (const auto& [tag, description] : builtin_tag_table()) {
      r.entries_.emplace(std::string(tag), Entry{std::string(description), true});
    }
    return r;
  }

  /// Adds `path` and all of its prefixes. Re-adding is a no-op apart from
  /// updating the description of a non-built-in entry.
  void add_tag(const TagPath& path, std::string description) {
    if (path.empty()) throw Error(Errc::InvalidIdentifier, "empty tag path");
    for (std::size_t d = 1; d < path.depth(); ++d) {
      entries_.try_emplace(path.prefix(d).str(), Entry{});
    }
    auto [it, inserted] = entries_.try_emplace(path.str(), Entry{description, false});
    if (!inserted && !it->second.builtin && !description.empty()) it->second.description = std::move(description);
  }

  void add_role(std::string_view name) {
    if (name.empty() || std::any_of(name.begin(), name.end(), [](char c) {
          return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v';
        })) {
      throw Error(Errc::InvalidIdentifier, "role name '" + std::string(name) + "' must be non-empty without whitespace");
    }
    auto it = roles_.find(std::string(name));
    if (it != roles_.end()) {
      if (it->second.builtin) {
        throw Error(Errc::InvalidIdentifier, "role '" + std::string(name) + "' collides with a built-in role");
      }
      return;
    }
    roles_.emplace(std::string(name), Role{std::string(name), false});
  }

  bool contains(std::string_view canonical) const { return entries_.find(std::string(canonical)) != entries_.end(); }
  bool contains(const TagPath& path) const { return contains(path.str()); }
  bool has_role(std::string_view name) const { return roles_.find(std::string(name)) != roles_.end(); }

  /// Lowercases and trims `raw`, then resolves it. Throws UnknownTag.
  TagPath validate(std::string_view raw) const {
    const std::string canonical = unicode::ascii_lower(unicode::trim_ascii(raw));
    TagPath path;
    if (!TagPath::try_parse(canonical, path) || !contains(path)) {
      throw Error(Errc::UnknownTag, "'" + std::string(raw) + "' is not a registered tag");
    }
    return path;
  }

  /// Depth-1 paths sorted by canonical text.
  std::vector<TagPath> top_level_categories() const {
    std::vector<TagPath> out;
    for (const auto& [text, entry] : entries_) {
      if (text.find(':') == std::string::npos) out.push_back(TagPath::parse(text));
    }
    return out;
  }

  std::vector<TagPath> paths() const {
    std::vector<TagPath> out;
    out.reserve(entries_.size());
    for (const auto& [text, entry] : entries_) out.push_back(TagPath::parse(text));
    return out;
  }

  const std::map<std::string, Entry>& entries() const { return entries_; }
  const std::map<std::string, Role>& roles() const { return roles_; }
  std::size_t size() const { return entries_.size(); }

  std::string description(std::string_view canonical) const {
    auto it = entries_.find(std::string(canonical));
    return it == entries_.end() ? std::string() : it->second.description;
  }

  /// Content checksum over tags, descriptions and roles.
  std::string fingerprint() const {
    Sha256 h;
    h.field("tags");
    for (const auto& [text, entry] : entries_) h.field(text).field(entry.description);
    h.field("roles");
    for (const auto& [name, role] : roles_) h.field(name);
    return h.hex();
  }

  /// Merges an overlay object `{ "<canonical tag>": "<description>", ... }`.
  void apply_overlay(const nlohmann::json& overlay) {
    if (!overlay.is_object()) throw Error(Errc::InvalidConfig, "registry overlay must be a JSON object");
    for (const auto& [key, value] : overlay.items()) {
      if (!value.is_string()) throw Error(Errc::InvalidConfig, "overlay value for '" + key + "' must be a string");
      add_tag(TagPath::parse(unicode::ascii_lower(unicode::trim_ascii(key))), value.get<std::string>());
    }
  }

  void load_overlay_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error(Errc::InvalidConfig, "cannot open registry overlay '" + path + "'");
    nlohmann::json j;
    try {
      in >> j;
    } catch (const nlohmann::json::exception& e) {
      throw Error(Errc::InvalidConfig, "registry overlay '" + path + "': " + e.what());
    }
    apply_overlay(j);
  }

  friend bool operator==(const TagRegistry& a, const TagRegistry& b) {
    return a.fingerprint() == b.fingerprint();
  }

 private:
  TagRegistry() = default;

  std::map<std::string, Entry> entries_;
  std::map<std::string, Role> roles_;
};

/// Value-style registration: returns `registry` extended by `path`.
inline TagRegistry register_tag(TagRegistry registry, const TagPath& path, std::string description) {
  registry.add_tag(path, std::move(description));
  return registry;
}

inline TagRegistry register_tag(TagRegistry registry, std::string_view path, std::string description) {
  return register_tag(std::move(registry), TagPath::parse(path), std::move(description));
}

inline TagPath validate_tag(const TagRegistry& registry, std::string_view raw) { return registry.validate(raw); }

inline std::vector<TagPath> top_level_categories(const TagRegistry& registry) {
  return registry.top_level_categories();
}

}  // namespace promptprism
