#pragma once

// Gendered-marker neutralization: whole-token replacement of pronouns and
// gendered honorifics with neutral forms.

#include <fstream>
#include <map>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "pba/error.hpp"
#include "pba/text.hpp"

namespace pba {

// Lowercase marker -> neutral replacement. An empty replacement removes the
// token.
class MarkerTable {
 public:
  MarkerTable() = default;
  explicit MarkerTable(std::map<std::u32string, std::u32string> entries) : entries_(std::move(entries)) {}

  static MarkerTable defaults() {
    static const std::pair<std::u32string_view, std::u32string_view> kDefaults[] = {
        {U"he", U"they"},        {U"she", U"they"},      {U"him", U"them"},
        {U"her", U"their"},      {U"his", U"their"},     {U"hers", U"theirs"},
        {U"himself", U"themselves"}, {U"herself", U"themselves"},
        {U"mr", U""},            {U"mrs", U""},          {U"ms", U""},
        {U"miss", U""},          {U"sir", U""},          {U"madam", U""},
    };
    std::map<std::u32string, std::u32string> m;
    for (const auto& [k, v] : kDefaults) m.emplace(k, v);
    return MarkerTable(std::move(m));
  }

  // Two tab-separated columns per line; a missing or empty second column
  // means the marker is deleted.
  static MarkerTable load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open marker table: " + path);
    std::map<std::u32string, std::u32string> m;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
      ++line_no;
      if (!line.empty() && line.back() == '\r') line.pop_back();
      if (line.empty()) continue;
      const auto tab = line.find('\t');
      const std::string key = line.substr(0, tab);
      const std::string value = tab == std::string::npos ? std::string() : line.substr(tab + 1);
      if (key.empty()) throw ParseError(line_no, "empty marker in " + path);
      m[to_lower(utf8_decode(key))] = utf8_decode(value);
    }
    return MarkerTable(std::move(m));
  }

  const std::u32string* lookup(std::u32string_view lowered) const {
    auto it = entries_.find(std::u32string(lowered));
    return it == entries_.end() ? nullptr : &it->second;
  }

  bool contains(std::u32string_view token) const { return lookup(to_lower(token)) != nullptr; }

  const std::map<std::u32string, std::u32string>& entries() const noexcept { return entries_; }

 private:
  std::map<std::u32string, std::u32string> entries_;
};

namespace detail {

inline bool is_word_char(char32_t c) { return !is_space(c) && !is_punctuation(c); }

inline std::u32string match_case(std::u32string_view original, std::u32string_view replacement) {
  std::u32string out(replacement);
  bool all_upper = original.size() > 1;
  for (char32_t c : original) all_upper = all_upper && is_upper(c);
  if (all_upper) {
    for (auto& c : out) c = to_upper(c);
  } else if (!original.empty() && is_upper(original.front()) && !out.empty()) {
    out.front() = to_upper(out.front());
  }
  return out;
}

}  // namespace detail

// Replaces every whole-token marker. Tokens are maximal runs of
// non-space, non-punctuation code points. Deleted markers also take one
// trailing period (as in "Mr.") and one adjacent space with them.
inline std::string neutralize_gender_markers(std::string_view text, const MarkerTable& table) {
  const std::u32string in = utf8_decode(text);
  std::u32string out;
  out.reserve(in.size());
  std::size_t i = 0;
  while (i < in.size()) {
    if (!detail::is_word_char(in[i])) {
      out.push_back(in[i++]);
      continue;
    }
    std::size_t j = i;
    while (j < in.size() && detail::is_word_char(in[j])) ++j;
    const std::u32string_view token(in.data() + i, j - i);
    const std::u32string* repl = table.lookup(to_lower(token));
    if (repl == nullptr) {
      out.append(token);
    } else if (!repl->empty()) {
      out += detail::match_case(token, *repl);
    } else {
      if (j < in.size() && in[j] == U'.') ++j;
      if (j < in.size() && is_space(in[j])) {
        ++j;
      } else if (!out.empty() && is_space(out.back())) {
        out.pop_back();
      }
    }
    i = j;
  }
  return utf8_encode(out);
}

}  // namespace pba
