#pragma once

// Delimiter classification and directive-marker detection.
//
// The detectors reproduce these Python `re` patterns on Unicode scalars,
// first match wins within each list:
//
//   prefix   ^\s*#[^#\n]+   ^\s*//[^\n]+   ^\s*>[^\n]+   ^\s*\d+\.\s   ^\s*[-*+]\s
//   suffix   \s*:\s*$       \s*[.!?]+$     \s*[;]\s*$
//   special  <[^>]+>  \[.*?\]  \$.*?\$  @\w+  #\w+  https?://\S+   (findall each)
//
// `$` also matches before a single trailing newline, as in Python.

#include <nlohmann/json.hpp>

#include <array>
#include <cstddef>
#include <fstream>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "promptprism/errors.hpp"
#include "promptprism/prompt_model.hpp"
#include "promptprism/syntax_types.hpp"
#include "promptprism/unicode.hpp"

namespace promptprism {

inline constexpr std::array<std::string_view, 6> kSpecialTokenKinds = {
    "html_tag", "markdown_link", "math_expression", "mention", "hashtag", "url"};

inline constexpr std::array<PrefixKind, 5> kPrefixKinds = {
    PrefixKind::HashComment, PrefixKind::DoubleSlashComment, PrefixKind::Blockquote, PrefixKind::NumberedList,
    PrefixKind::BulletPoint};

inline constexpr std::array<SuffixKind, 3> kSuffixKinds = {SuffixKind::ColonEnd, SuffixKind::SentenceEnd,
                                                           SuffixKind::SemicolonEnd};

inline constexpr std::array<DelimiterKind, 5> kDelimiterKinds = {
    DelimiterKind::DoubleNewline, DelimiterKind::SingleNewline, DelimiterKind::Tab, DelimiterKind::Whitespace,
    DelimiterKind::Mixed};

/// Optional model-specific literal tokens, e.g. {"llama3": ["<|begin_of_text|>"]}.
/// Counted under `model:<label>`. Empty by default.
struct SyntaxConfig {
  std::map<std::string, std::vector<std::string>> model_tokens;

  static SyntaxConfig from_json(const nlohmann::json& j) {
    if (!j.is_object()) throw Error(Errc::InvalidConfig, "special-token overlay must be a JSON object");
    SyntaxConfig cfg;
    for (const auto& [label, list] : j.items()) {
      if (!list.is_array()) throw Error(Errc::InvalidConfig, "special-token list '" + label + "' must be an array");
      auto& dst = cfg.model_tokens[label];
      for (const auto& lit : list) {
        if (!lit.is_string() || lit.get<std::string>().empty()) {
          throw Error(Errc::InvalidConfig, "special-token literals under '" + label + "' must be non-empty strings");
        }
        dst.push_back(lit.get<std::string>());
      }
    }
    return cfg;
  }

  static SyntaxConfig from_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error(Errc::InvalidConfig, "cannot open special-token overlay '" + path + "'");
    nlohmann::json j;
    try {
      in >> j;
    } catch (const nlohmann::json::exception& e) {
      throw Error(Errc::InvalidConfig, "special-token overlay '" + path + "': " + e.what());
    }
    return from_json(j);
  }
};

inline std::optional<DelimiterInfo> analyze_delimiter(std::optional<std::string_view> raw) {
  if (!raw) return std::nullopt;
  DelimiterInfo info;
  info.raw = std::string(*raw);
  info.length = unicode::length(*raw);
  if (unicode::is_all_space(*raw)) {
    if (raw->find("\n\n") != std::string_view::npos) {
      info.kind = DelimiterKind::DoubleNewline;
      info.pattern = "\\n\\n";
    } else if (raw->find('\n') != std::string_view::npos) {
      info.kind = DelimiterKind::SingleNewline;
      info.pattern = "\\n";
    } else if (raw->find('\t') != std::string_view::npos) {
      info.kind = DelimiterKind::Tab;
      info.pattern = "\\t";
    } else {
      info.kind = DelimiterKind::Whitespace;
      info.pattern = "\\s+";
    }
  } else {
    info.kind = DelimiterKind::Mixed;
    info.pattern = unicode::python_repr_body(*raw);
  }
  return info;
}

inline std::optional<DelimiterInfo> analyze_delimiter(const std::optional<std::string>& raw) {
  return raw ? analyze_delimiter(std::optional<std::string_view>(*raw)) : std::nullopt;
}

namespace detail {

inline std::size_t skip_space(const std::u32string& u, std::size_t i) {
  while (i < u.size() && unicode::is_space(u[i])) ++i;
  return i;
}

inline bool at(const std::u32string& u, std::size_t i, char32_t c) { return i < u.size() && u[i] == c; }

}  // namespace detail

inline PrefixKind detect_prefix(std::string_view content) {
  const std::u32string u = unicode::decode(content);
  const std::size_t i = detail::skip_space(u, 0);
  const std::size_t n = u.size();
  if (detail::at(u, i, '#') && i + 1 < n && u[i + 1] != '#' && u[i + 1] != '\n') return PrefixKind::HashComment;
  if (detail::at(u, i, '/') && detail::at(u, i + 1, '/') && i + 2 < n && u[i + 2] != '\n') {
    return PrefixKind::DoubleSlashComment;
  }
  if (detail::at(u, i, '>') && i + 1 < n && u[i + 1] != '\n') return PrefixKind::Blockquote;
  std::size_t j = i;
  while (j < n && unicode::is_digit(u[j])) ++j;
  if (j > i && detail::at(u, j, '.') && j + 1 < n && unicode::is_space(u[j + 1])) return PrefixKind::NumberedList;
  if (i < n && (u[i] == '-' || u[i] == '*' || u[i] == '+') && i + 1 < n && unicode::is_space(u[i + 1])) {
    return PrefixKind::BulletPoint;
  }
  return PrefixKind::None;
}

inline SuffixKind detect_suffix(std::string_view content) {
  const std::u32string u = unicode::decode(content);
  std::size_t end = u.size();
  while (end > 0 && unicode::is_space(u[end - 1])) --end;
  if (end > 0 && u[end - 1] == ':') return SuffixKind::ColonEnd;
  auto is_terminal = [](char32_t c) { return c == '.' || c == '!' || c == '?'; };
  const std::size_t n = u.size();
  if (n > 0 && is_terminal(u[n - 1])) return SuffixKind::SentenceEnd;
  if (n > 1 && u[n - 1] == '\n' && is_terminal(u[n - 2])) return SuffixKind::SentenceEnd;
  if (end > 0 && u[end - 1] == ';') return SuffixKind::SemicolonEnd;
  return SuffixKind::None;
}

namespace detail {

inline std::size_t count_html_tags(const std::u32string& u) {
  std::size_t count = 0;
  std::size_t i = 0;
  while (i < u.size()) {
    if (u[i] != '<') {
      ++i;
      continue;
    }
    std::size_t k = i + 1;
    while (k < u.size() && u[k] != '>') ++k;
    if (k >= u.size()) break;  // no '>' anywhere further on
    if (k > i + 1) {
      ++count;
      i = k + 1;
    } else {
      ++i;
    }
  }
  return count;
}

/// `open .*? close` where `.` excludes '\n'.
inline std::size_t count_lazy_pairs(const std::u32string& u, char32_t open, char32_t close) {
  std::size_t count = 0;
  std::size_t i = 0;
  while (i < u.size()) {
    if (u[i] != open) {
      ++i;
      continue;
    }
    std::size_t k = i + 1;
    while (k < u.size() && u[k] != close && u[k] != '\n') ++k;
    if (k < u.size() && u[k] == close) {
      ++count;
      i = k + 1;
    } else {
      ++i;
    }
  }
  return count;
}

inline std::size_t count_sigil_words(const std::u32string& u, char32_t sigil) {
  std::size_t count = 0;
  std::size_t i = 0;
  while (i < u.size()) {
    if (u[i] == sigil && i + 1 < u.size() && unicode::is_word(u[i + 1])) {
      std::size_t k = i + 1;
      while (k < u.size() && unicode::is_word(u[k])) ++k;
      ++count;
      i = k;
    } else {
      ++i;
    }
  }
  return count;
}

inline std::size_t count_urls(const std::u32string& u) {
  auto matches_at = [&](std::size_t i, std::u32string_view lit) {
    return u.size() - i >= lit.size() && std::u32string_view(u).substr(i, lit.size()) == lit;
  };
  std::size_t count = 0;
  std::size_t i = 0;
  while (i < u.size()) {
    std::size_t k = 0;
    if (matches_at(i, U"https://")) {
      k = i + 8;
    } else if (matches_at(i, U"http://")) {
      k = i + 7;
    }
    if (k && k < u.size() && !unicode::is_space(u[k])) {
      while (k < u.size() && !unicode::is_space(u[k])) ++k;
      ++count;
      i = k;
    } else {
      ++i;
    }
  }
  return count;
}

inline std::size_t count_literal(std::string_view text, std::string_view lit) {
  std::size_t count = 0;
  std::size_t pos = text.find(lit);
  while (pos != std::string_view::npos) {
    ++count;
    pos = text.find(lit, pos + lit.size());
  }
  return count;
}

}  // namespace detail

/// Count of non-overlapping matches for one built-in special-token pattern.
inline std::size_t count_special_token(std::string_view content, std::string_view kind) {
  const std::u32string u = unicode::decode(content);
  if (kind == "html_tag") return detail::count_html_tags(u);
  if (kind == "markdown_link") return detail::count_lazy_pairs(u, '[', ']');
  if (kind == "math_expression") return detail::count_lazy_pairs(u, '$', '$');
  if (kind == "mention") return detail::count_sigil_words(u, '@');
  if (kind == "hashtag") return detail::count_sigil_words(u, '#');
  if (kind == "url") return detail::count_urls(u);
  return 0;
}

inline SpecialTokenCounts detect_special_tokens(std::string_view content, const SyntaxConfig& config = {}) {
  SpecialTokenCounts out;
  for (auto kind : kSpecialTokenKinds) {
    if (auto n = count_special_token(content, kind)) out[std::string(kind)] = n;
  }
  for (const auto& [label, literals] : config.model_tokens) {
    std::size_t n = 0;
    for (const auto& lit : literals) n += detail::count_literal(content, lit);
    if (n) out["model:" + label] = n;
  }
  return out;
}

inline MarkerProfile detect_markers(std::string_view content, const SyntaxConfig& config = {}) {
  return MarkerProfile{detect_prefix(content), detect_suffix(content), detect_special_tokens(content, config)};
}

/// Fills every component's metadata from its content and delimiter.
inline void annotate_markers_in_place(AnnotatedPrompt& ap, const SyntaxConfig& config = {}) {
  for (auto& m : ap.messages) {
    for (auto& c : m.components) {
      c.metadata = ComponentMarkers{detect_markers(c.content, config), analyze_delimiter(c.delimiter_after)};
    }
  }
}

inline AnnotatedPrompt annotate_markers(AnnotatedPrompt ap, const SyntaxConfig& config = {}) {
  annotate_markers_in_place(ap, config);
  return ap;
}

}  // namespace promptprism
