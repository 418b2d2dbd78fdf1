#pragma once

// Semantic (reorder / insert / delete) and syntactic (delimiter) operators
// over one message of an AnnotatedPrompt.
//
// Operators act on a target message: the given index, or by default the
// last user message that has components, else the last message that has any.

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cstddef>
#include <numeric>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "promptprism/errors.hpp"
#include "promptprism/prompt_model.hpp"
#include "promptprism/taxonomy.hpp"

namespace promptprism {

enum class ReorderPosition { First, Middle, Last };
enum class DelimiterPosition { All, First, Middle, Last };

inline ReorderPosition parse_reorder_position(std::string_view s) {
  if (s == "first") return ReorderPosition::First;
  if (s == "middle") return ReorderPosition::Middle;
  if (s == "last") return ReorderPosition::Last;
  throw Error(Errc::InvalidPosition,
              "invalid position '" + std::string(s) + "'; valid options are first, last, middle");
}

inline DelimiterPosition parse_delimiter_position(std::string_view s) {
  if (s == "all") return DelimiterPosition::All;
  if (s == "first") return DelimiterPosition::First;
  if (s == "middle") return DelimiterPosition::Middle;
  if (s == "last") return DelimiterPosition::Last;
  throw Error(Errc::InvalidPosition,
              "invalid position '" + std::string(s) + "'; valid options are all, first, last, middle");
}

constexpr std::string_view to_string(ReorderPosition p) {
  switch (p) {
    case ReorderPosition::First: return "first";
    case ReorderPosition::Middle: return "middle";
    case ReorderPosition::Last: return "last";
  }
  return "first";
}

constexpr std::string_view to_string(DelimiterPosition p) {
  switch (p) {
    case DelimiterPosition::All: return "all";
    case DelimiterPosition::First: return "first";
    case DelimiterPosition::Middle: return "middle";
    case DelimiterPosition::Last: return "last";
  }
  return "all";
}

inline std::size_t target_message(const AnnotatedPrompt& ap, std::optional<std::size_t> requested = std::nullopt) {
  if (requested) {
    if (*requested >= ap.messages.size()) {
      throw Error(Errc::IndexOutOfRange, "message index " + std::to_string(*requested) + " out of range (" +
                                             std::to_string(ap.messages.size()) + " messages)");
    }
    return *requested;
  }
  std::optional<std::size_t> any;
  for (std::size_t i = ap.messages.size(); i-- > 0;) {
    if (ap.messages[i].components.empty()) continue;
    if (ap.messages[i].role == kRoleUser) return i;
    if (!any) any = i;
  }
  if (any) return *any;
  throw Error(Errc::NoComponentsFound, "prompt has no tagged components");
}

/// Presentation order for moving the `category` block. Computed from
/// document order, so repeated application yields the same order.
inline std::vector<std::size_t> reorder_plan(const AnnotatedMessage& m, const TagPath& category,
                                             ReorderPosition position) {
  std::vector<std::size_t> related;
  std::vector<std::size_t> others;
  for (std::size_t i = 0; i < m.components.size(); ++i) {
    (m.components[i].tag.starts_with(category) ? related : others).push_back(i);
  }
  if (related.empty()) {
    throw Error(Errc::NoComponentsFound, "no components found for category: " + category.str());
  }
  std::vector<std::size_t> order;
  order.reserve(m.components.size());
  switch (position) {
    case ReorderPosition::First:
      order = related;
      order.insert(order.end(), others.begin(), others.end());
      break;
    case ReorderPosition::Last:
      order = others;
      order.insert(order.end(), related.begin(), related.end());
      break;
    case ReorderPosition::Middle: {
      const auto mid = static_cast<std::ptrdiff_t>(others.size() / 2);
      order.assign(others.begin(), others.begin() + mid);
      order.insert(order.end(), related.begin(), related.end());
      order.insert(order.end(), others.begin() + mid, others.end());
      break;
    }
  }
  return order;
}

/// Resolves a reorder category: a registered depth-1 tag.
inline TagPath reorder_category(std::string_view name, const TagRegistry& registry) {
  TagPath path;
  if (!TagPath::try_parse(name, path) || path.depth() != 1 || !registry.contains(path)) {
    std::string valid;
    for (const auto& t : registry.top_level_categories()) valid += (valid.empty() ? "" : ", ") + t.str();
    throw Error(Errc::InvalidComponentName,
                "invalid component name: " + std::string(name) + ". Valid options are: " + valid);
  }
  return path;
}

/// Moves every component under `category` as one block and returns the
/// target message text.
inline std::string reorder_component(AnnotatedPrompt& ap, std::string_view category, ReorderPosition position,
                                     bool remove_tags, const TagRegistry& registry,
                                     std::optional<std::size_t> message = std::nullopt) {
  const TagPath cat = reorder_category(category, registry);
  auto& m = ap.messages[target_message(ap, message)];
  m.tag_order = reorder_plan(m, cat, position);
  return to_text(m, remove_tags);
}

inline std::string reorder_component(AnnotatedPrompt& ap, std::string_view category, std::string_view position,
                                     bool remove_tags, const TagRegistry& registry,
                                     std::optional<std::size_t> message = std::nullopt) {
  reorder_category(category, registry);
  return reorder_component(ap, category, parse_reorder_position(position), remove_tags, registry, message);
}

/// Document indices of the delimiters a position selects among k components.
inline std::vector<std::size_t> delimiter_targets(std::size_t k, DelimiterPosition position) {
  std::vector<std::size_t> out;
  if (k <= 1) return out;
  switch (position) {
    case DelimiterPosition::All:
      out.resize(k - 1);
      std::iota(out.begin(), out.end(), std::size_t{0});
      break;
    case DelimiterPosition::First:
      out.push_back(0);
      break;
    case DelimiterPosition::Last:
      out.push_back(k - 2);
      break;
    case DelimiterPosition::Middle:
      if (k >= 3) out.push_back((k - 1) / 2);
      break;
  }
  return out;
}

inline std::string modify_delimiter(AnnotatedPrompt& ap, std::string_view new_delimiter, DelimiterPosition position,
                                    bool remove_tags, std::optional<std::size_t> message = std::nullopt) {
  auto& m = ap.messages[target_message(ap, message)];
  for (auto idx : delimiter_targets(m.components.size(), position)) {
    m.components[idx].delimiter_after = std::string(new_delimiter);
  }
  reindex(m);
  return to_text(m, remove_tags);
}

inline std::string modify_delimiter(AnnotatedPrompt& ap, std::string_view new_delimiter, std::string_view position,
                                    bool remove_tags, std::optional<std::size_t> message = std::nullopt) {
  return modify_delimiter(ap, new_delimiter, parse_delimiter_position(position), remove_tags, message);
}

/// Sets every inter-component delimiter of the target message to `delimiter`.
inline void normalize_delimiters(AnnotatedPrompt& ap, std::string_view delimiter,
                                 std::optional<std::size_t> message = std::nullopt) {
  modify_delimiter(ap, delimiter, DelimiterPosition::All, false, message);
}

/// Inserts `component` at document index `at`. Its `delimiter_after` is the
/// gap that follows it; when appended at the end, that gap is placed before
/// it instead (empty if absent) and the new component becomes final.
inline AnnotatedPrompt insert_component(AnnotatedPrompt ap, Component component, std::size_t at,
                                        const TagRegistry& registry,
                                        std::optional<std::size_t> message = std::nullopt) {
  if (!registry.contains(component.tag)) {
    throw Error(Errc::UnknownTag, "'" + component.tag.str() + "' is not a registered tag");
  }
  const std::size_t mi = message ? target_message(ap, message) : [&] {
    try {
      return target_message(ap);
    } catch (const Error&) {
      return ap.messages.empty() ? std::size_t{0} : ap.messages.size() - 1;
    }
  }();
  if (mi >= ap.messages.size()) throw Error(Errc::IndexOutOfRange, "prompt has no messages");
  auto& m = ap.messages[mi];
  const std::size_t k = m.components.size();
  if (at > k) {
    throw Error(Errc::IndexOutOfRange,
                "insert position " + std::to_string(at) + " exceeds component count " + std::to_string(k));
  }
  component.metadata.reset();
  if (at == k) {
    if (k > 0) m.components.back().delimiter_after = component.delimiter_after.value_or("");
    component.delimiter_after.reset();
  } else if (!component.delimiter_after) {
    component.delimiter_after = "";
  }
  m.components.insert(m.components.begin() + static_cast<std::ptrdiff_t>(at), std::move(component));
  // Presentation: shift indices, place the new one before the component it displaced.
  std::vector<std::size_t> order;
  order.reserve(k + 1);
  bool placed = false;
  for (auto idx : m.tag_order) {
    if (idx == at && !placed) {
      order.push_back(at);
      placed = true;
    }
    order.push_back(idx >= at ? idx + 1 : idx);
  }
  if (!placed) order.push_back(at);
  m.tag_order = std::move(order);
  reindex(m);
  return ap;
}

/// Removes the component at document index `index` together with the
/// delimiter that follows it. Removing the final component drops the
/// delimiter before it instead, so the new final component has none.
inline AnnotatedPrompt delete_component(AnnotatedPrompt ap, std::size_t index,
                                        std::optional<std::size_t> message = std::nullopt) {
  auto& m = ap.messages[target_message(ap, message)];
  const std::size_t k = m.components.size();
  if (index >= k) {
    throw Error(Errc::IndexOutOfRange,
                "component index " + std::to_string(index) + " out of range (" + std::to_string(k) + " components)");
  }
  if (index + 1 == k && k > 1) m.components[k - 2].delimiter_after.reset();
  m.components.erase(m.components.begin() + static_cast<std::ptrdiff_t>(index));
  std::vector<std::size_t> order;
  order.reserve(k - 1);
  for (auto idx : m.tag_order) {
    if (idx == index) continue;
    order.push_back(idx > index ? idx - 1 : idx);
  }
  m.tag_order = std::move(order);
  reindex(m);
  return ap;
}

/// One named perturbation, as used by experiment configs and the CLI.
struct PerturbationSpec {
  enum class Kind { None, Reorder, Delimiter };
  Kind kind = Kind::None;
  std::string component;         // reorder
  std::string position;          // reorder / delimiter
  std::string delimiter;         // delimiter
  bool remove_tags = false;
  std::optional<std::string> normalize_delimiter;  // reorder post-pass

  static PerturbationSpec none() { return {}; }

  static PerturbationSpec reorder(std::string component, std::string position) {
    PerturbationSpec s;
    s.kind = Kind::Reorder;
    s.component = std::move(component);
    s.position = std::move(position);
    return s;
  }

  static PerturbationSpec delimiter_change(std::string delimiter, std::string position = "all") {
    PerturbationSpec s;
    s.kind = Kind::Delimiter;
    s.delimiter = std::move(delimiter);
    s.position = std::move(position);
    return s;
  }

  static PerturbationSpec from_json(const nlohmann::json& j) {
    PerturbationSpec s;
    const std::string op = j.value("op", "none");
    if (op == "none" || op == "baseline") {
      s.kind = Kind::None;
    } else if (op == "reorder") {
      s.kind = Kind::Reorder;
      s.component = j.at("component").get<std::string>();
      s.position = j.value("position", "first");
      if (j.contains("normalize_delimiter")) s.normalize_delimiter = j.at("normalize_delimiter").get<std::string>();
    } else if (op == "delimiter") {
      s.kind = Kind::Delimiter;
      s.delimiter = j.at("delimiter").get<std::string>();
      s.position = j.value("position", "all");
    } else {
      throw Error(Errc::InvalidConfig, "unknown perturbation op '" + op + "'");
    }
    s.remove_tags = j.value("remove_tags", false);
    return s;
  }

  nlohmann::json to_json() const {
    nlohmann::json j;
    switch (kind) {
      case Kind::None:
        j["op"] = "none";
        break;
      case Kind::Reorder:
        j["op"] = "reorder";
        j["component"] = component;
        j["position"] = position;
        if (normalize_delimiter) j["normalize_delimiter"] = *normalize_delimiter;
        break;
      case Kind::Delimiter:
        j["op"] = "delimiter";
        j["delimiter"] = delimiter;
        j["position"] = position;
        break;
    }
    j["remove_tags"] = remove_tags;
    return j;
  }
};

/// Applies `spec` to a copy of `ap` and returns the full perturbed prompt.
inline Prompt apply_perturbation(const AnnotatedPrompt& ap, const PerturbationSpec& spec, const TagRegistry& registry,
                                 std::optional<std::size_t> message = std::nullopt) {
  AnnotatedPrompt work = ap;
  switch (spec.kind) {
    case PerturbationSpec::Kind::None:
      break;
    case PerturbationSpec::Kind::Reorder:
      if (spec.normalize_delimiter) normalize_delimiters(work, *spec.normalize_delimiter, message);
      reorder_component(work, spec.component, spec.position, spec.remove_tags, registry, message);
      break;
    case PerturbationSpec::Kind::Delimiter:
      modify_delimiter(work, spec.delimiter, spec.position, spec.remove_tags, message);
      break;
  }
  return serialize(work, spec.remove_tags);
}

/// The 3 x 3 ordering suite: each component at first, middle and last.
inline std::vector<std::pair<std::string, PerturbationSpec>> ordering_suite(
    const std::vector<std::string>& components = {"instruction", "request_query", "contextual_ref"}) {
  std::vector<std::pair<std::string, PerturbationSpec>> out;
  for (const auto& c : components) {
    for (auto pos : {"first", "middle", "last"}) {
      out.emplace_back(c + "@" + pos, PerturbationSpec::reorder(c, pos));
    }
  }
  return out;
}

/// Double newline, section separator, tab and a whitespace run.
inline std::vector<std::pair<std::string, PerturbationSpec>> delimiter_suite() {
  return {
      {"double_newline", PerturbationSpec::delimiter_change("\n\n")},
      {"section_separator", PerturbationSpec::delimiter_change("\n#####\n")},
      {"tab", PerturbationSpec::delimiter_change("\t")},
      {"whitespace", PerturbationSpec::delimiter_change(" ")},
  };
}

}  // namespace promptprism
