#pragma once

// Entity tagging (PER/LOC), masking with "[PER]"/"[LOC]" placeholders,
// corpus-level anonymization statistics and span-level tagger evaluation.

#include <algorithm>
#include <array>
#include <cctype>
#include <cstddef>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "pba/corpus.hpp"
#include "pba/entity.hpp"
#include "pba/error.hpp"
#include "pba/gazetteer.hpp"
#include "pba/text.hpp"

namespace pba {

using LabelSet = std::set<EntityLabel>;

inline LabelSet all_labels() { return {EntityLabel::PER, EntityLabel::LOC}; }

// Parses "per,loc" style lists (case-insensitive). An empty string is the
// empty set.
inline LabelSet parse_label_set(std::string_view spec) {
  LabelSet out;
  std::size_t i = 0;
  while (i <= spec.size()) {
    const std::size_t comma = std::min(spec.find(',', i), spec.size());
    std::string item(spec.substr(i, comma - i));
    for (auto& c : item) c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
    if (!item.empty()) {
      auto label = parse_label(item);
      if (!label) throw ConfigError("unknown entity label '" + item + "' (expected PER or LOC)");
      out.insert(*label);
    }
    i = comma + 1;
  }
  return out;
}

inline std::string label_set_name(const LabelSet& labels) {
  std::string out;
  for (auto l : labels) {
    if (!out.empty()) out += '+';
    out += label_name(l);
  }
  return out.empty() ? "none" : out;
}

// ---------------------------------------------------------------------------
// Span normalization shared by the built-in and external taggers.

// Produces sorted, non-overlapping spans. Overlapping spans with the same
// label are first merged into their union. Remaining cross-label overlaps
// keep the longer span; on equal length the earlier start, and on an exact
// tie PER.
inline std::vector<EntitySpan> normalize_spans(std::vector<EntitySpan> spans) {
  std::vector<EntitySpan> merged;
  for (EntityLabel label : {EntityLabel::PER, EntityLabel::LOC}) {
    std::vector<EntitySpan> same;
    for (const auto& s : spans)
      if (s.label == label) same.push_back(s);
    std::sort(same.begin(), same.end());
    for (const auto& s : same) {
      if (!merged.empty() && merged.back().label == label && s.start < merged.back().end) {
        merged.back().end = std::max(merged.back().end, s.end);
      } else {
        merged.push_back(s);
      }
    }
  }
  std::sort(merged.begin(), merged.end(), [](const EntitySpan& a, const EntitySpan& b) {
    if (a.length() != b.length()) return a.length() > b.length();
    if (a.start != b.start) return a.start < b.start;
    return a.label == EntityLabel::PER && b.label != EntityLabel::PER;
  });
  std::vector<EntitySpan> kept;
  for (const auto& s : merged) {
    const bool clash = std::any_of(kept.begin(), kept.end(), [&](const EntitySpan& k) { return k.overlaps(s); });
    if (!clash) kept.push_back(s);
  }
  std::sort(kept.begin(), kept.end());
  return kept;
}

// ---------------------------------------------------------------------------
// Built-in rule and gazetteer tagger.

struct TaggerRules {
  std::set<std::u32string> titles = {U"Dr", U"Mr", U"Ms", U"Mrs", U"Prof"};
  std::set<std::u32string> locative_prepositions = {U"in", U"from", U"at", U"near"};
};

class Tagger {
 public:
  virtual ~Tagger() = default;
  virtual std::vector<EntitySpan> tag(std::string_view text) const = 0;
  virtual std::string name() const = 0;
};

class BuiltinTagger final : public Tagger {
 public:
  BuiltinTagger() : BuiltinTagger(Gazetteer::full()) {}
  explicit BuiltinTagger(Gazetteer gazetteer, TaggerRules rules = {})
      : gazetteer_(std::move(gazetteer)), rules_(std::move(rules)) {}

  std::string name() const override { return "builtin"; }

  std::vector<EntitySpan> tag(std::string_view text) const override {
    const std::u32string cps = utf8_decode(text);
    const auto raw = whitespace_tokens(cps);

    struct Token {
      TextRange raw;
      TextRange core;  // raw with surrounding punctuation stripped
      std::u32string word;
      bool capitalized = false;
      bool sentence_initial = false;
      std::optional<EntityLabel> label;
      bool by_rule = false;
    };
    std::vector<Token> tokens;
    tokens.reserve(raw.size());
    for (std::size_t i = 0; i < raw.size(); ++i) {
      Token t;
      t.raw = raw[i];
      t.core = raw[i];
      while (t.core.start < t.core.end && is_punctuation(cps[t.core.start])) ++t.core.start;
      while (t.core.end > t.core.start && is_punctuation(cps[t.core.end - 1])) --t.core.end;
      t.word = cps.substr(t.core.start, t.core.end - t.core.start);
      t.capitalized = !t.word.empty() && is_upper(t.word.front());
      // Mask placeholders are never entities themselves.
      if (t.core.start > t.raw.start && t.core.end < t.raw.end && cps[t.core.start - 1] == U'[' &&
          cps[t.core.end] == U']' && parse_label(utf8_encode(t.word))) {
        t.word.clear();
        t.capitalized = false;
      }
      if (i == 0) {
        t.sentence_initial = true;
      } else {
        const char32_t last = cps[raw[i - 1].end - 1];
        t.sentence_initial = last == U'.' || last == U'!' || last == U'?';
      }
      tokens.push_back(std::move(t));
    }

    // A preceding token only licenses a rule when nothing but whitespace
    // separates it from the candidate.
    auto clean_prev = [&](std::size_t i) { return i > 0 && tokens[i - 1].core.end == tokens[i - 1].raw.end; };

    for (std::size_t i = 0; i < tokens.size(); ++i) {
      Token& t = tokens[i];
      if (t.word.empty()) continue;
      const std::string utf8 = utf8_encode(t.word);
      if (gazetteer_.persons.count(utf8)) {
        t.label = EntityLabel::PER;
      } else if (gazetteer_.locations.count(utf8)) {
        t.label = EntityLabel::LOC;
      } else if (t.capitalized && i > 0) {
        const Token& prev = tokens[i - 1];
        // "Dr." is accepted as a title despite the trailing period.
        const bool after_title = rules_.titles.count(prev.word) &&
                                 (clean_prev(i) || (prev.core.end + 1 == prev.raw.end && cps[prev.core.end] == U'.'));
        if (after_title && prev.core.start == prev.raw.start) {
          t.label = EntityLabel::PER;
          t.by_rule = true;
        } else if (clean_prev(i) && !t.sentence_initial && rules_.locative_prepositions.count(to_lower(prev.word))) {
          t.label = EntityLabel::LOC;
          t.by_rule = true;
        }
      }
    }

    // Capitalized continuation of a rule-tagged token ("Dr Ana Novak",
    // "in New York") inherits its label.
    for (std::size_t i = 1; i < tokens.size(); ++i) {
      Token& t = tokens[i];
      const Token& prev = tokens[i - 1];
      if (!t.label && t.capitalized && !t.sentence_initial && prev.label && prev.by_rule && clean_prev(i) &&
          t.core.start == t.raw.start) {
        t.label = prev.label;
        t.by_rule = true;
      }
    }

    std::vector<EntitySpan> spans;
    for (std::size_t i = 0; i < tokens.size(); ++i) {
      const Token& t = tokens[i];
      if (!t.label) continue;
      const bool joins = !spans.empty() && i > 0 && tokens[i - 1].label == t.label && t.capitalized &&
                         tokens[i - 1].capitalized && clean_prev(i) && t.core.start == t.raw.start &&
                         spans.back().end == tokens[i - 1].core.end;
      if (joins) {
        spans.back().end = t.core.end;
      } else {
        spans.push_back({t.core.start, t.core.end, *t.label});
      }
    }
    return normalize_spans(std::move(spans));
  }

  const Gazetteer& gazetteer() const noexcept { return gazetteer_; }

 private:
  Gazetteer gazetteer_;
  TaggerRules rules_;
};

inline std::vector<EntitySpan> tag_entities_builtin(std::string_view text, const Gazetteer& gazetteer,
                                                    const TaggerRules& rules = {}) {
  return BuiltinTagger(gazetteer, rules).tag(text);
}

// ---------------------------------------------------------------------------
// Masking.

struct AnonymizationResult {
  std::string text_masked;
  std::vector<EntitySpan> spans_removed;
  std::string backend;
};

// Replaces each span whose label is in `labels_to_mask` by its placeholder,
// working right-to-left so earlier offsets stay valid.
inline AnonymizationResult anonymize_text(std::string_view text, std::vector<EntitySpan> spans,
                                          const LabelSet& labels_to_mask, std::string backend = {}) {
  std::u32string cps = utf8_decode(text);
  std::sort(spans.begin(), spans.end());
  for (std::size_t i = 0; i < spans.size(); ++i) {
    const auto& s = spans[i];
    if (s.start >= s.end || s.end > cps.size())
      throw ContractError("span [" + std::to_string(s.start) + "," + std::to_string(s.end) +
                          ") invalid for text of length " + std::to_string(cps.size()));
    if (i > 0 && spans[i - 1].overlaps(s))
      throw ContractError("overlapping spans at [" + std::to_string(spans[i - 1].start) + "," +
                          std::to_string(spans[i - 1].end) + ") and [" + std::to_string(s.start) + "," +
                          std::to_string(s.end) + ")");
  }
  AnonymizationResult result;
  result.backend = std::move(backend);
  for (auto it = spans.rbegin(); it != spans.rend(); ++it) {
    if (!labels_to_mask.count(it->label)) continue;
    const std::u32string ph = utf8_decode(placeholder(it->label));
    cps.replace(it->start, it->length(), ph);
    result.spans_removed.push_back(*it);
  }
  std::reverse(result.spans_removed.begin(), result.spans_removed.end());
  result.text_masked = utf8_encode(cps);
  return result;
}

// ---------------------------------------------------------------------------
// Corpus-level anonymization.

struct AnonymizationStats {
  std::size_t documents = 0;
  std::size_t total_words = 0;
  std::size_t masked_spans = 0;
  std::size_t masked_words = 0;
  double masked_fraction = 0.0;
  std::map<std::string, std::size_t> spans_by_label;

  bool operator==(const AnonymizationStats&) const = default;
};

struct AnonymizedCorpus {
  Corpus corpus;
  BioField field = BioField::Raw;
  std::string backend;
  LabelSet labels;
  // spans_removed per resume, relative to the pre-masking text, id order
  std::vector<std::vector<EntitySpan>> removed;
  AnonymizationStats stats;
};

// Counts words of the original text and the whitespace tokens that overlap
// at least one removed span.
inline AnonymizationStats entity_statistics(const Corpus& before, const AnonymizedCorpus& after) {
  if (before.size() != after.corpus.size() || after.removed.size() != before.size())
    throw AlignmentError("corpora differ in size: " + std::to_string(before.size()) + " vs " +
                         std::to_string(after.corpus.size()));
  AnonymizationStats st;
  st.spans_by_label = {{"PER", 0}, {"LOC", 0}};
  for (std::size_t i = 0; i < before.size(); ++i) {
    if (before.resumes[i].id != after.corpus.resumes[i].id)
      throw AlignmentError("id mismatch at position " + std::to_string(i) + ": " +
                           std::to_string(before.resumes[i].id) + " vs " +
                           std::to_string(after.corpus.resumes[i].id));
    const std::u32string cps = utf8_decode(before.resumes[i].bio(after.field));
    const auto words = whitespace_tokens(cps);
    const auto& spans = after.removed[i];
    st.total_words += words.size();
    st.masked_spans += spans.size();
    for (const auto& s : spans) ++st.spans_by_label[std::string(label_name(s.label))];
    for (const auto& w : words) {
      const bool hit = std::any_of(spans.begin(), spans.end(),
                                   [&](const EntitySpan& s) { return s.start < w.end && w.start < s.end; });
      if (hit) ++st.masked_words;
    }
  }
  st.documents = before.size();
  st.masked_fraction =
      st.total_words == 0 ? 0.0 : static_cast<double>(st.masked_words) / static_cast<double>(st.total_words);
  return st;
}

// Masks `field` of every resume; all other fields are preserved. Backend
// failures abort with the failing resume id.
inline AnonymizedCorpus anonymize_corpus(const Corpus& corpus, const Tagger& tagger, const LabelSet& labels_to_mask,
                                         BioField field = BioField::Raw) {
  AnonymizedCorpus out;
  out.corpus = corpus;
  out.field = field;
  out.backend = tagger.name();
  out.labels = labels_to_mask;
  out.removed.reserve(corpus.size());
  for (auto& r : out.corpus.resumes) {
    if (labels_to_mask.empty()) {
      out.removed.emplace_back();
      continue;
    }
    std::vector<EntitySpan> spans;
    const auto with_id = [&](const Error& e) { return "resume " + std::to_string(r.id) + ": " + e.what(); };
    try {
      spans = tagger.tag(r.bio(field));
    } catch (const BackendUnavailableError& e) {
      throw BackendUnavailableError(with_id(e));
    } catch (const ProtocolError& e) {
      throw ProtocolError(with_id(e));
    }
    auto res = anonymize_text(r.bio(field), std::move(spans), labels_to_mask, tagger.name());
    r.bio(field) = std::move(res.text_masked);
    out.removed.push_back(std::move(res.spans_removed));
  }
  out.stats = entity_statistics(corpus, out);
  return out;
}

// ---------------------------------------------------------------------------
// Span-level evaluation (exact start, end and label match).

struct PrfScore {
  std::size_t tp = 0;
  std::size_t fp = 0;
  std::size_t fn = 0;
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
};

struct TaggerEvaluation {
  PrfScore per;
  PrfScore loc;
  PrfScore micro;
};

namespace detail {

inline void finish_prf(PrfScore& s) {
  const std::size_t predicted = s.tp + s.fp;
  const std::size_t gold = s.tp + s.fn;
  if (predicted == 0) {
    s.precision = gold == 0 ? 1.0 : 0.0;
  } else {
    s.precision = static_cast<double>(s.tp) / static_cast<double>(predicted);
  }
  if (gold == 0) {
    s.recall = predicted == 0 ? 1.0 : 0.0;
  } else {
    s.recall = static_cast<double>(s.tp) / static_cast<double>(gold);
  }
  const double denom = s.precision + s.recall;
  s.f1 = denom == 0.0 ? 0.0 : 2.0 * s.precision * s.recall / denom;
}

}  // namespace detail

inline TaggerEvaluation evaluate_tagger(const std::vector<std::vector<EntitySpan>>& predicted,
                                        const std::vector<std::vector<EntitySpan>>& gold) {
  if (predicted.size() != gold.size())
    throw AlignmentError("predicted has " + std::to_string(predicted.size()) + " documents, gold has " +
                         std::to_string(gold.size()));
  TaggerEvaluation ev;
  auto bucket = [&](EntityLabel l) -> PrfScore& { return l == EntityLabel::PER ? ev.per : ev.loc; };
  for (std::size_t d = 0; d < gold.size(); ++d) {
    const std::set<EntitySpan> g(gold[d].begin(), gold[d].end());
    const std::set<EntitySpan> p(predicted[d].begin(), predicted[d].end());
    for (const auto& s : p) {
      if (g.count(s)) {
        ++bucket(s.label).tp;
      } else {
        ++bucket(s.label).fp;
      }
    }
    for (const auto& s : g)
      if (!p.count(s)) ++bucket(s.label).fn;
  }
  ev.micro.tp = ev.per.tp + ev.loc.tp;
  ev.micro.fp = ev.per.fp + ev.loc.fp;
  ev.micro.fn = ev.per.fn + ev.loc.fn;
  detail::finish_prf(ev.per);
  detail::finish_prf(ev.loc);
  detail::finish_prf(ev.micro);
  return ev;
}

}  // namespace pba
