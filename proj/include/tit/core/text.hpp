#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>

namespace tit {

namespace detail {

// Decodes one UTF-8 sequence at s[i]. Returns the code point and advances i,
// or nullopt on a malformed/overlong/surrogate sequence.
inline std::optional<char32_t> decode_utf8(std::string_view s, std::size_t& i) {
  const auto b0 = static_cast<unsigned char>(s[i]);
  if (b0 < 0x80) {
    ++i;
    return b0;
  }
  std::size_t len = 0;
  char32_t cp = 0;
  char32_t min = 0;
  if ((b0 & 0xE0) == 0xC0) {
    len = 2, cp = b0 & 0x1F, min = 0x80;
  } else if ((b0 & 0xF0) == 0xE0) {
    len = 3, cp = b0 & 0x0F, min = 0x800;
  } else if ((b0 & 0xF8) == 0xF0) {
    len = 4, cp = b0 & 0x07, min = 0x10000;
  } else {
    return std::nullopt;
  }
  if (i + len > s.size()) return std::nullopt;
  for (std::size_t k = 1; k < len; ++k) {
    const auto b = static_cast<unsigned char>(s[i + k]);
    if ((b & 0xC0) != 0x80) return std::nullopt;
    cp = (cp << 6) | (b & 0x3F);
  }
  if (cp < min || cp > 0x10FFFF || (cp >= 0xD800 && cp <= 0xDFFF)) return std::nullopt;
  i += len;
  return cp;
}

}  // namespace detail

inline bool is_valid_utf8(std::string_view s) {
  std::size_t i = 0;
  while (i < s.size()) {
    if (!detail::decode_utf8(s, i)) return false;
  }
  return true;
}

/// Unicode White_Space property.
inline bool is_unicode_space(char32_t c) {
  switch (c) {
    case 0x09: case 0x0A: case 0x0B: case 0x0C: case 0x0D: case 0x20:
    case 0x85: case 0xA0: case 0x1680:
    case 0x2028: case 0x2029: case 0x202F: case 0x205F: case 0x3000:
      return true;
    default:
      return c >= 0x2000 && c <= 0x200A;
  }
}

/// Number of non-empty tokens after splitting on Unicode whitespace.
/// Punctuation stays attached to its token ("end." is one word).
/// Input must be valid UTF-8; invalid bytes are treated as non-space.
inline std::size_t count_words(std::string_view text) {
  std::size_t count = 0;
  bool in_word = false;
  std::size_t i = 0;
  while (i < text.size()) {
    std::size_t before = i;
    auto cp = detail::decode_utf8(text, i);
    if (!cp) i = before + 1;
    const bool space = cp && is_unicode_space(*cp);
    if (!space && !in_word) ++count;
    in_word = !space;
  }
  return count;
}

/// True if the text contains a blank line (two line breaks separated only by
/// whitespace), i.e. more than one paragraph.
inline bool has_blank_line(std::string_view text) {
  int newlines = 0;
  for (char ch : text) {
    if (ch == '\n') {
      if (++newlines >= 2) return true;
    } else if (ch != ' ' && ch != '\t' && ch != '\r') {
      newlines = 0;
    }
  }
  return false;
}

/// Collapses paragraph breaks into single spaces and trims the ends, so the
/// result is one paragraph.
inline std::string to_single_paragraph(std::string_view text) {
  std::string out;
  out.reserve(text.size());
  std::size_t i = 0;
  while (i < text.size()) {
    if (text[i] == '\n' || text[i] == '\r') {
      std::size_t j = i;
      while (j < text.size() && (text[j] == '\n' || text[j] == '\r' || text[j] == ' ' || text[j] == '\t')) ++j;
      out.push_back(' ');
      i = j;
    } else {
      out.push_back(text[i++]);
    }
  }
  const auto first = out.find_first_not_of(" \t");
  if (first == std::string::npos) return {};
  const auto last = out.find_last_not_of(" \t");
  return out.substr(first, last - first + 1);
}

inline std::string trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(first, last - first + 1));
}

}  // namespace tit
