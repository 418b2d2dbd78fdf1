#pragma once

// UTF-8 helpers and the character classes used by the marker patterns.
// Classes follow the semantics of Python's `re` module on str patterns:
// `\s` is the str.isspace() set, `\d` is a decimal digit, `\w` is a word
// character. `\d` and `\w` are table approximations (no full UCD here).

#include <array>
#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>

namespace promptprism::unicode {

inline constexpr char32_t kReplacement = 0xFFFD;

/// Decodes one scalar starting at `pos`; advances `pos`. Malformed input
/// consumes one byte and yields U+FFFD so that every byte is accounted for.
inline char32_t decode_one(std::string_view s, std::size_t& pos) {
  const auto b0 = static_cast<unsigned char>(s[pos]);
  if (b0 < 0x80) {
    ++pos;
    return b0;
  }
  int extra = 0;
  char32_t cp = 0;
  if ((b0 & 0xE0) == 0xC0) {
    extra = 1;
    cp = b0 & 0x1F;
  } else if ((b0 & 0xF0) == 0xE0) {
    extra = 2;
    cp = b0 & 0x0F;
  } else if ((b0 & 0xF8) == 0xF0) {
    extra = 3;
    cp = b0 & 0x07;
  } else {
    ++pos;
    return kReplacement;
  }
  if (pos + extra >= s.size()) {
    ++pos;
    return kReplacement;
  }
  for (int i = 1; i <= extra; ++i) {
    const auto b = static_cast<unsigned char>(s[pos + i]);
    if ((b & 0xC0) != 0x80) {
      ++pos;
      return kReplacement;
    }
    cp = (cp << 6) | (b & 0x3F);
  }
  pos += extra + 1;
  return cp;
}

inline std::u32string decode(std::string_view s) {
  std::u32string out;
  out.reserve(s.size());
  std::size_t pos = 0;
  while (pos < s.size()) out.push_back(decode_one(s, pos));
  return out;
}

/// Number of scalar values; malformed bytes count one each.
inline std::size_t length(std::string_view s) {
  std::size_t n = 0;
  std::size_t pos = 0;
  while (pos < s.size()) {
    decode_one(s, pos);
    ++n;
  }
  return n;
}

inline void append_utf8(std::string& out, char32_t cp) {
  if (cp < 0x80) {
    out.push_back(static_cast<char>(cp));
  } else if (cp < 0x800) {
    out.push_back(static_cast<char>(0xC0 | (cp >> 6)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
  } else if (cp < 0x10000) {
    out.push_back(static_cast<char>(0xE0 | (cp >> 12)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
  } else {
    out.push_back(static_cast<char>(0xF0 | (cp >> 18)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 12) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
  }
}

inline std::string encode(std::u32string_view s) {
  std::string out;
  out.reserve(s.size());
  for (char32_t cp : s) append_utf8(out, cp);
  return out;
}

/// The str.isspace() set.
constexpr bool is_space(char32_t c) {
  if (c <= 0x20) return c == 0x20 || (c >= 0x09 && c <= 0x0D) || (c >= 0x1C && c <= 0x1F);
  switch (c) {
    case 0x85:
    case 0xA0:
    case 0x1680:
    case 0x2028:
    case 0x2029:
    case 0x202F:
    case 0x205F:
    case 0x3000:
      return true;
    default:
      return c >= 0x2000 && c <= 0x200A;
  }
}

/// True when every scalar is whitespace and the text is non-empty (str.isspace()).
inline bool is_all_space(std::string_view s) {
  if (s.empty()) return false;
  std::size_t pos = 0;
  while (pos < s.size()) {
    if (!is_space(decode_one(s, pos))) return false;
  }
  return true;
}

inline bool has_non_space(std::string_view s) {
  std::size_t pos = 0;
  while (pos < s.size()) {
    if (!is_space(decode_one(s, pos))) return true;
  }
  return false;
}

namespace detail {
// First code point of each contiguous block of ten decimal digits (Nd).
inline constexpr std::array<char32_t, 52> kDigitZeros = {
    0x0030,  0x0660,  0x06F0,  0x07C0,  0x0966,  0x09E6,  0x0A66,  0x0AE6,  0x0B66,
    0x0BE6,  0x0C66,  0x0CE6,  0x0D66,  0x0DE6,  0x0E50,  0x0ED0,  0x0F20,  0x1040,
    0x1090,  0x17E0,  0x1810,  0x1946,  0x19D0,  0x1A80,  0x1A90,  0x1B50,  0x1BB0,
    0x1C40,  0x1C50,  0xA620,  0xA8D0,  0xA900,  0xA9D0,  0xA9F0,  0xAA50,  0xABF0,
    0xFF10,  0x104A0, 0x10D30, 0x11066, 0x110F0, 0x11136, 0x111D0, 0x112F0, 0x11450,
    0x114D0, 0x11650, 0x116C0, 0x11730, 0x118E0, 0x16A60, 0x1E950,
};
}  // namespace detail

constexpr bool is_digit(char32_t c) {
  if (c < 0x80) return c >= '0' && c <= '9';
  for (char32_t zero : detail::kDigitZeros) {
    if (c >= zero && c < zero + 10) return true;
  }
  return c >= 0x1D7CE && c <= 0x1D7FF;
}

/// Punctuation, symbol, separator and control ranges outside ASCII that
/// `\w` rejects. Everything else above U+007F is treated as a word scalar.
constexpr bool is_non_word_above_ascii(char32_t c) {
  if (c <= 0xBF) {
    // Latin-1: ª µ º and the superscript digits are word characters.
    return !(c == 0xAA || c == 0xB5 || c == 0xBA || c == 0xB2 || c == 0xB3 || c == 0xB9 ||
             c == 0xBC || c == 0xBD || c == 0xBE);
  }
  if (c == 0xD7 || c == 0xF7) return true;
  if (c >= 0x2000 && c <= 0x206F) return true;   // general punctuation
  if (c >= 0x20A0 && c <= 0x20CF) return true;   // currency
  if (c >= 0x2100 && c <= 0x214F) return c != 0x2102 && c != 0x2107 && !(c >= 0x210A && c <= 0x2113) &&
                                         c != 0x2115 && !(c >= 0x2119 && c <= 0x211D) && c != 0x2124 &&
                                         c != 0x2126 && c != 0x2128 && !(c >= 0x212A && c <= 0x212D) &&
                                         !(c >= 0x212F && c <= 0x2139);
  if (c >= 0x2190 && c <= 0x2BFF) return true;   // arrows, math operators, boxes, dingbats
  if (c >= 0x2E00 && c <= 0x2E7F) return true;   // supplemental punctuation
  if (c >= 0x3000 && c <= 0x3004) return true;   // CJK symbols
  if (c >= 0x3008 && c <= 0x3020) return true;
  if (c == 0x3030 || c == 0x303D || c == 0x30FB) return true;
  if (c >= 0xFE10 && c <= 0xFE6F) return true;   // vertical / small forms
  if (c >= 0xFF01 && c <= 0xFF0F) return true;   // fullwidth punctuation
  if (c >= 0xFF1A && c <= 0xFF20) return true;
  if (c >= 0xFF3B && c <= 0xFF40 && c != 0xFF3F) return true;
  if (c >= 0xFF5B && c <= 0xFF65) return true;
  if (c >= 0xFFF0 && c <= 0xFFFF) return true;   // specials
  if (c >= 0xE000 && c <= 0xF8FF) return true;   // private use
  if (c >= 0x1F000 && c <= 0x1FAFF) return true; // emoji, pictographs
  if (is_space(c)) return true;
  return false;
}

constexpr bool is_word(char32_t c) {
  if (c < 0x80) {
    return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') || c == '_';
  }
  return !is_non_word_above_ascii(c);
}

namespace detail {
constexpr bool is_printable_above_ascii(char32_t c) {
  if (c <= 0xA0) return false;                 // C1 controls and NBSP
  if (c == 0xAD || c == 0x61C || c == 0x180E || c == 0x1680 || c == 0x3000) return false;
  if (c >= 0x2000 && c <= 0x200F) return false;
  if (c >= 0x2028 && c <= 0x202F) return false;
  if (c >= 0x205F && c <= 0x206F) return false;
  if (c >= 0xD800 && c <= 0xF8FF) return false; // surrogates, private use
  if (c == 0xFEFF || (c >= 0xFFF9 && c <= 0xFFFB) || c == 0xFFFE || c == 0xFFFF) return false;
  if (c > 0x10FFFF) return false;
  return true;
}

inline void append_hex(std::string& out, char32_t value, int digits) {
  static constexpr char kHex[] = "0123456789abcdef";
  for (int i = digits - 1; i >= 0; --i) out.push_back(kHex[(value >> (4 * i)) & 0xF]);
}
}  // namespace detail

/// Body of Python's repr() of a str, i.e. repr(s)[1:-1].
inline std::string python_repr_body(std::string_view s) {
  const bool has_single = s.find('\'') != std::string_view::npos;
  const bool has_double = s.find('"') != std::string_view::npos;
  const char quote = (has_single && !has_double) ? '"' : '\'';
  std::string out;
  std::size_t pos = 0;
  while (pos < s.size()) {
    const char32_t c = decode_one(s, pos);
    if (c == static_cast<char32_t>(quote) || c == '\\') {
      out.push_back('\\');
      out.push_back(static_cast<char>(c));
    } else if (c == '\t') {
      out += "\\t";
    } else if (c == '\n') {
      out += "\\n";
    } else if (c == '\r') {
      out += "\\r";
    } else if (c < 0x20 || c == 0x7F) {
      out += "\\x";
      detail::append_hex(out, c, 2);
    } else if (c < 0x7F) {
      out.push_back(static_cast<char>(c));
    } else if (detail::is_printable_above_ascii(c)) {
      append_utf8(out, c);
    } else if (c <= 0xFF) {
      out += "\\x";
      detail::append_hex(out, c, 2);
    } else if (c <= 0xFFFF) {
      out += "\\u";
      detail::append_hex(out, c, 4);
    } else {
      out += "\\U";
      detail::append_hex(out, c, 8);
    }
  }
  return out;
}

inline std::string ascii_lower(std::string_view s) {
  std::string out(s);
  for (char& ch : out) {
    if (ch >= 'A' && ch <= 'Z') ch = static_cast<char>(ch - 'A' + 'a');
  }
  return out;
}

inline std::string_view trim_ascii(std::string_view s) {
  constexpr std::string_view kWs = " \t\n\r\f\v";
  const auto b = s.find_first_not_of(kWs);
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(kWs);
  return s.substr(b, e - b + 1);
}

}  // namespace promptprism::unicode
