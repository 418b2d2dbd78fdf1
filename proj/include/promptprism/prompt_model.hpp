#pragma once

// Role/content prompts and their parse into tagged components.
//
// A message's content is a flat sequence of registered tags:
//
//   leading <tag>content</tag> delimiter <tag>content</tag> trailing
//
// Spans are scalar-value offsets into the de-tagged text
// (leading + content_0 + delimiter_0 + ... + trailing).

#include <algorithm>
#include <cstddef>
#include <numeric>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "promptprism/errors.hpp"
#include "promptprism/syntax_types.hpp"
#include "promptprism/taxonomy.hpp"
#include "promptprism/unicode.hpp"

namespace promptprism {

struct Message {
  std::string role;
  std::string content;

  friend bool operator==(const Message&, const Message&) = default;
};

struct Prompt {
  std::vector<Message> messages;
  std::optional<std::string> id;

  friend bool operator==(const Prompt&, const Prompt&) = default;
};

struct Span {
  std::size_t start = 0;
  std::size_t end = 0;

  std::size_t size() const { return end - start; }
  friend bool operator==(const Span&, const Span&) = default;
};

struct ComponentIndex {
  std::string role;
  std::size_t order = 0;

  friend bool operator==(const ComponentIndex&, const ComponentIndex&) = default;
};

struct Component {
  TagPath tag;
  std::string content;
  ComponentIndex index;
  Span span;
  std::optional<std::string> delimiter_after;
  std::optional<ComponentMarkers> metadata;

  friend bool operator==(const Component&, const Component&) = default;
};

struct AnnotatedMessage {
  std::string role;
  std::string leading_text;
  std::string trailing_text;
  std::vector<Component> components;  // document order
  std::vector<std::size_t> tag_order; // presentation order, a permutation of component indices
  std::size_t unknown_tags = 0;

  std::string detagged_text() const {
    std::string out = leading_text;
    for (const auto& c : components) {
      out += c.content;
      if (c.delimiter_after) out += *c.delimiter_after;
    }
    out += trailing_text;
    return out;
  }

  bool order_is_identity() const {
    for (std::size_t i = 0; i < tag_order.size(); ++i) {
      if (tag_order[i] != i) return false;
    }
    return tag_order.size() == components.size();
  }

  friend bool operator==(const AnnotatedMessage&, const AnnotatedMessage&) = default;
};

struct AnnotatedPrompt {
  Prompt source;
  std::vector<AnnotatedMessage> messages;

  std::size_t component_count() const {
    std::size_t n = 0;
    for (const auto& m : messages) n += m.components.size();
    return n;
  }

  std::size_t unknown_tag_count() const {
    std::size_t n = 0;
    for (const auto& m : messages) n += m.unknown_tags;
    return n;
  }

  friend bool operator==(const AnnotatedPrompt&, const AnnotatedPrompt&) = default;
};

/// Problems found (and repaired by demoting tags to plain text) during a lenient parse.
struct ParseDiagnostics {
  std::size_t unclosed = 0;
  std::size_t mismatched = 0;
  std::size_t nested = 0;
  std::size_t stray_close = 0;
  std::vector<std::string> messages;

  std::size_t total() const { return unclosed + mismatched + nested + stray_close; }
  bool clean() const { return total() == 0; }
};

struct LenientParse {
  AnnotatedPrompt prompt;
  ParseDiagnostics diagnostics;
};

namespace detail {

struct TagToken {
  std::size_t begin = 0;  // byte offset of '<'
  std::size_t end = 0;    // one past '>'
  bool closing = false;
  std::string name;
};

inline bool is_tag_name_char(char c) {
  return (c >= 'a' && c <= 'z') || (c >= '0' && c <= '9') || c == '_' || c == ':';
}

/// Registered `<name>` / `</name>` tokens in document order.
inline std::vector<TagToken> scan_tags(std::string_view text, const TagRegistry& registry) {
  std::vector<TagToken> out;
  std::size_t i = text.find('<');
  while (i != std::string_view::npos) {
    std::size_t j = i + 1;
    bool closing = false;
    if (j < text.size() && text[j] == '/') {
      closing = true;
      ++j;
    }
    const std::size_t name_begin = j;
    while (j < text.size() && is_tag_name_char(text[j])) ++j;
    if (j > name_begin && j < text.size() && text[j] == '>') {
      std::string name(text.substr(name_begin, j - name_begin));
      TagPath path;
      if (TagPath::try_parse(name, path) && registry.contains(path)) {
        out.push_back(TagToken{i, j + 1, closing, std::move(name)});
        i = text.find('<', j + 1);
        continue;
      }
    }
    i = text.find('<', i + 1);
  }
  return out;
}

inline bool is_ascii_alpha(char c) { return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z'); }

/// Tag-like markup (`<name ...>` or `</name>`) that is not a registered tag.
inline std::size_t count_unknown_tags(std::string_view text, const TagRegistry& registry) {
  std::size_t n = 0;
  for (std::size_t i = 0; i < text.size(); ++i) {
    if (text[i] != '<') continue;
    std::size_t j = i + 1;
    if (j < text.size() && text[j] == '/') ++j;
    if (j >= text.size() || !is_ascii_alpha(text[j])) continue;
    std::size_t k = j;
    while (k < text.size() && text[k] != '>' && text[k] != '<' && text[k] != '\n') ++k;
    if (k >= text.size() || text[k] != '>') continue;
    const std::string_view name = text.substr(j, k - j);
    TagPath path;
    if (TagPath::try_parse(name, path) && registry.contains(path)) continue;
    ++n;
  }
  return n;
}

struct CoreFailure {
  Errc code;
  std::size_t token = 0;   // offending token
  std::size_t opener = 0;  // currently open token, when relevant
  bool has_opener = false;
};

struct CoreResult {
  std::optional<AnnotatedMessage> message;
  std::optional<CoreFailure> failure;
};

inline void assign_spans(AnnotatedMessage& m) {
  std::size_t offset = unicode::length(m.leading_text);
  for (std::size_t i = 0; i < m.components.size(); ++i) {
    auto& c = m.components[i];
    c.index.role = m.role;
    c.index.order = i;
    const std::size_t len = unicode::length(c.content);
    c.span = Span{offset, offset + len};
    offset += len;
    if (c.delimiter_after) offset += unicode::length(*c.delimiter_after);
  }
}

inline CoreResult parse_core(std::string_view text, const std::vector<TagToken>& tokens,
                             const std::vector<bool>& active, const std::string& role) {
  AnnotatedMessage m;
  m.role = role;
  std::size_t cursor = 0;  // start of pending untagged text
  std::optional<std::size_t> open;
  for (std::size_t t = 0; t < tokens.size(); ++t) {
    if (!active[t]) continue;
    const auto& tok = tokens[t];
    if (!open) {
      if (tok.closing) return {std::nullopt, CoreFailure{Errc::MismatchedTag, t, 0, false}};
      std::string gap(text.substr(cursor, tok.begin - cursor));
      if (m.components.empty()) {
        m.leading_text = std::move(gap);
      } else {
        m.components.back().delimiter_after = std::move(gap);
      }
      open = t;
      cursor = tok.end;
      continue;
    }
    const auto& opener = tokens[*open];
    if (!tok.closing) return {std::nullopt, CoreFailure{Errc::NestedTag, t, *open, true}};
    if (tok.name != opener.name) return {std::nullopt, CoreFailure{Errc::MismatchedTag, t, *open, true}};
    Component c;
    c.tag = TagPath::parse(opener.name);
    c.content = std::string(text.substr(cursor, tok.begin - cursor));
    m.components.push_back(std::move(c));
    cursor = tok.end;
    open.reset();
  }
  if (open) return {std::nullopt, CoreFailure{Errc::UnclosedTag, *open, *open, true}};
  m.trailing_text = std::string(text.substr(cursor));
  m.tag_order.resize(m.components.size());
  std::iota(m.tag_order.begin(), m.tag_order.end(), std::size_t{0});
  assign_spans(m);
  return {std::move(m), std::nullopt};
}

inline std::optional<std::size_t> next_close(const std::vector<TagToken>& tokens, const std::vector<bool>& active,
                                             std::size_t after, const std::string& name) {
  for (std::size_t t = after + 1; t < tokens.size(); ++t) {
    if (active[t] && tokens[t].closing && tokens[t].name == name) return t;
  }
  return std::nullopt;
}

inline void check_role(const Message& msg, const TagRegistry& registry) {
  if (!registry.has_role(msg.role)) {
    throw Error(Errc::UnknownRole, "role '" + msg.role + "' is not registered");
  }
}

inline AnnotatedMessage parse_message_strict(const Message& msg, const TagRegistry& registry) {
  check_role(msg, registry);
  const auto tokens = scan_tags(msg.content, registry);
  const std::vector<bool> active(tokens.size(), true);
  auto r = parse_core(msg.content, tokens, active, msg.role);
  if (r.failure) {
    const auto& f = *r.failure;
    const auto& tok = tokens[f.token];
    std::string what;
    switch (f.code) {
      case Errc::UnclosedTag:
        what = "<" + tok.name + "> opened at byte " + std::to_string(tok.begin) + " is never closed";
        break;
      case Errc::NestedTag:
        what = "<" + tok.name + "> at byte " + std::to_string(tok.begin) + " opens inside <" +
               tokens[f.opener].name + ">";
        break;
      default:
        what = f.has_opener ? "</" + tok.name + "> at byte " + std::to_string(tok.begin) + " closes <" +
                                  tokens[f.opener].name + ">"
                            : "</" + tok.name + "> at byte " + std::to_string(tok.begin) + " has no opening tag";
        break;
    }
    throw TagError(f.code, tok.name, tok.begin, "role " + msg.role + ": " + what);
  }
  r.message->unknown_tags = count_unknown_tags(msg.content, registry);
  return std::move(*r.message);
}

inline AnnotatedMessage parse_message_lenient(const Message& msg, const TagRegistry& registry,
                                              ParseDiagnostics& diag) {
  const auto tokens = scan_tags(msg.content, registry);
  std::vector<bool> active(tokens.size(), true);
  auto note = [&](const std::string& s) { diag.messages.push_back("role " + msg.role + ": " + s); };
  while (true) {
    auto r = parse_core(msg.content, tokens, active, msg.role);
    if (r.message) {
      r.message->unknown_tags = count_unknown_tags(msg.content, registry);
      return std::move(*r.message);
    }
    const auto& f = *r.failure;
    const auto& tok = tokens[f.token];
    switch (f.code) {
      case Errc::UnclosedTag:
        active[f.token] = false;
        ++diag.unclosed;
        note("unclosed <" + tok.name + "> at byte " + std::to_string(tok.begin));
        break;
      case Errc::NestedTag: {
        const auto& opener = tokens[f.opener];
        if (next_close(tokens, active, f.token, opener.name)) {
          active[f.token] = false;
          if (auto close = next_close(tokens, active, f.token, tok.name)) active[*close] = false;
          ++diag.nested;
          note("nested <" + tok.name + "> inside <" + opener.name + "> kept as text");
        } else {
          active[f.opener] = false;
          ++diag.unclosed;
          note("unclosed <" + opener.name + "> at byte " + std::to_string(opener.begin));
        }
        break;
      }
      case Errc::MismatchedTag:
        if (!f.has_opener) {
          active[f.token] = false;
          ++diag.stray_close;
          note("stray </" + tok.name + "> at byte " + std::to_string(tok.begin));
        } else if (next_close(tokens, active, f.token, tokens[f.opener].name)) {
          active[f.token] = false;
          ++diag.mismatched;
          note("mismatched </" + tok.name + "> inside <" + tokens[f.opener].name + ">");
        } else {
          active[f.opener] = false;
          ++diag.unclosed;
          note("unclosed <" + tokens[f.opener].name + "> at byte " + std::to_string(tokens[f.opener].begin));
        }
        break;
      default:
        throw Error(f.code, "unexpected parser state");
    }
  }
}

}  // namespace detail

/// Strict parse. Throws MismatchedTag, UnclosedTag, NestedTag or UnknownRole.
inline AnnotatedPrompt parse_annotated(const Prompt& prompt, const TagRegistry& registry) {
  AnnotatedPrompt ap;
  ap.source = prompt;
  ap.messages.reserve(prompt.messages.size());
  for (const auto& msg : prompt.messages) ap.messages.push_back(detail::parse_message_strict(msg, registry));
  return ap;
}

/// Lenient parse: offending tags are demoted to plain text and reported.
/// Unknown roles still throw.
inline LenientParse parse_annotated_lenient(const Prompt& prompt, const TagRegistry& registry) {
  LenientParse out;
  out.prompt.source = prompt;
  for (const auto& msg : prompt.messages) {
    detail::check_role(msg, registry);
    out.prompt.messages.push_back(detail::parse_message_lenient(msg, registry, out.diagnostics));
  }
  return out;
}

/// Recomputes orders and spans after an edit of the component list.
inline void reindex(AnnotatedMessage& m) { detail::assign_spans(m); }

/// Text of one message in its presentation order.
///
/// A delimiter stays with the component it follows. The component shown
/// last emits no delimiter; if that leaves an earlier component without one
/// (the document-final component moved forward), it takes the delimiter
/// displaced from the last position.
inline std::string to_text(const AnnotatedMessage& m, bool remove_tags) {
  std::string out = m.leading_text;
  const auto& order = m.tag_order;
  std::string_view displaced;
  if (!order.empty()) {
    const auto& last = m.components[order.back()];
    if (last.delimiter_after) displaced = *last.delimiter_after;
  }
  for (std::size_t p = 0; p < order.size(); ++p) {
    const auto& c = m.components[order[p]];
    if (remove_tags) {
      out += c.content;
    } else {
      out += '<';
      out += c.tag.str();
      out += '>';
      out += c.content;
      out += "</";
      out += c.tag.str();
      out += '>';
    }
    if (p + 1 == order.size()) break;
    if (c.delimiter_after) {
      out += *c.delimiter_after;
    } else {
      out += displaced;
    }
  }
  out += m.trailing_text;
  return out;
}

inline Prompt serialize(const AnnotatedPrompt& ap, bool remove_tags) {
  Prompt out;
  out.id = ap.source.id;
  out.messages.reserve(ap.messages.size());
  for (const auto& m : ap.messages) out.messages.push_back(Message{m.role, to_text(m, remove_tags)});
  return out;
}

/// Removes every registered tag token, keeping all other text.
inline std::string strip_tags(std::string_view text, const TagRegistry& registry) {
  std::string out;
  std::size_t cursor = 0;
  for (const auto& tok : detail::scan_tags(text, registry)) {
    out.append(text.substr(cursor, tok.begin - cursor));
    cursor = tok.end;
  }
  out.append(text.substr(cursor));
  return out;
}

inline std::optional<std::size_t> last_user_index(const Prompt& prompt) {
  for (std::size_t i = prompt.messages.size(); i-- > 0;) {
    if (prompt.messages[i].role == kRoleUser) return i;
  }
  return std::nullopt;
}

/// Rendering of earlier turns used as the historical_context content.
inline std::string render_history(const Prompt& prompt, std::size_t upto, const TagRegistry& registry) {
  std::string out;
  for (std::size_t i = 0; i < upto; ++i) {
    if (i) out += '\n';
    out += prompt.messages[i].role;
    out += ": ";
    out += strip_tags(prompt.messages[i].content, registry);
  }
  return out;
}

/// Reduces a conversation to its last user message. Earlier messages become
/// one `historical_context` component placed before the target content,
/// separated by "\n\n". Messages after the target are dropped.
inline Prompt terminal_user_view(const Prompt& prompt, const TagRegistry& registry = TagRegistry::builtin()) {
  const auto target = last_user_index(prompt);
  if (!target) throw Error(Errc::NoUserMessage, "prompt has no user message");
  Prompt out;
  out.id = prompt.id;
  std::string content;
  if (*target > 0) {
    content = "<historical_context>" + render_history(prompt, *target, registry) + "</historical_context>\n\n";
  }
  content += prompt.messages[*target].content;
  out.messages.push_back(Message{std::string(kRoleUser), std::move(content)});
  return out;
}

}  // namespace promptprism
