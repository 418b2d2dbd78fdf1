#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <string>
#include <string_view>

namespace promptprism {

enum class DelimiterKind { DoubleNewline, SingleNewline, Tab, Whitespace, Mixed };

constexpr std::string_view to_string(DelimiterKind k) {
  switch (k) {
    case DelimiterKind::DoubleNewline: return "double_newline";
    case DelimiterKind::SingleNewline: return "single_newline";
    case DelimiterKind::Tab: return "tab";
    case DelimiterKind::Whitespace: return "whitespace";
    case DelimiterKind::Mixed: return "mixed";
  }
  return "mixed";
}

struct DelimiterInfo {
  std::string raw;
  std::size_t length = 0;  // scalar values
  DelimiterKind kind = DelimiterKind::Mixed;
  std::string pattern;

  friend bool operator==(const DelimiterInfo&, const DelimiterInfo&) = default;
};

enum class PrefixKind { HashComment, DoubleSlashComment, Blockquote, NumberedList, BulletPoint, None };

constexpr std::string_view to_string(PrefixKind k) {
  switch (k) {
    case PrefixKind::HashComment: return "hash_comment";
    case PrefixKind::DoubleSlashComment: return "double_slash_comment";
    case PrefixKind::Blockquote: return "blockquote";
    case PrefixKind::NumberedList: return "numbered_list";
    case PrefixKind::BulletPoint: return "bullet_point";
    case PrefixKind::None: return "none";
  }
  return "none";
}

enum class SuffixKind { ColonEnd, SentenceEnd, SemicolonEnd, None };

constexpr std::string_view to_string(SuffixKind k) {
  switch (k) {
    case SuffixKind::ColonEnd: return "colon_end";
    case SuffixKind::SentenceEnd: return "sentence_end";
    case SuffixKind::SemicolonEnd: return "semicolon_end";
    case SuffixKind::None: return "none";
  }
  return "none";
}

/// Special-token counts keyed by kind name (`html_tag`, `url`, ... and
/// `model:<label>` for configured literal lists). Zero counts are omitted.
using SpecialTokenCounts = std::map<std::string, std::size_t>;

struct MarkerProfile {
  PrefixKind prefix = PrefixKind::None;
  SuffixKind suffix = SuffixKind::None;
  SpecialTokenCounts special_tokens;

  friend bool operator==(const MarkerProfile&, const MarkerProfile&) = default;
};

/// Syntactic metadata attached to a component by the syntax pass.
struct ComponentMarkers {
  MarkerProfile markers;
  std::optional<DelimiterInfo> delimiter;

  friend bool operator==(const ComponentMarkers&, const ComponentMarkers&) = default;
};

}  // namespace promptprism
