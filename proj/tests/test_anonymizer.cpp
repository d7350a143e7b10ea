#include <gtest/gtest.h>

#include <set>
#include <string>
#include <vector>

#include "pba/anonymizer.hpp"
#include "oracles.hpp"

using namespace pba;
using pba::oracle::residual_entity_tokens;

namespace {

using Spans = std::vector<EntitySpan>;

std::string slice(std::string_view text, const EntitySpan& s) {
  const auto cps = utf8_decode(text);
  return utf8_encode(cps.substr(s.start, s.end - s.start));
}

Corpus corpus(std::size_t n, std::uint64_t seed = 1) {
  GeneratorConfig c;
  c.n = n;
  c.seed = seed;
  return generate_corpus(c);
}

}  // namespace

TEST(LabelSet, ParsingAndNames) {
  EXPECT_EQ(parse_label_set("per,LOC"), all_labels());
  EXPECT_TRUE(parse_label_set("").empty());
  EXPECT_THROW(parse_label_set("per,org"), ConfigError);
  EXPECT_EQ(label_set_name(all_labels()), "PER+LOC");
  EXPECT_EQ(label_set_name({}), "none");
}

TEST(BuiltinTagger, GazetteerHit) {
  const std::string text = "She works in Madrid";
  const auto spans = tag_entities_builtin(text, Gazetteer::full());
  ASSERT_EQ(spans, (Spans{{13, 19, EntityLabel::LOC}}));
  EXPECT_EQ(slice(text, spans[0]), "Madrid");
}

TEST(BuiltinTagger, TitleRule) {
  const std::string text = "Dr Novak joined the clinic";
  EXPECT_EQ(tag_entities_builtin(text, Gazetteer{}), (Spans{{3, 8, EntityLabel::PER}}));
  EXPECT_EQ(tag_entities_builtin("Dr. Novak joined", Gazetteer{}), (Spans{{4, 9, EntityLabel::PER}}));
}

TEST(BuiltinTagger, EmptyText) { EXPECT_TRUE(tag_entities_builtin("", Gazetteer::full()).empty()); }

TEST(BuiltinTagger, LocativeRuleSkipsSentenceStart) {
  EXPECT_EQ(tag_entities_builtin("She moved to Spain and lives in Cuenca now.", Gazetteer{}),
            (Spans{{32, 38, EntityLabel::LOC}}));
  EXPECT_TRUE(tag_entities_builtin("She stayed in. Later she left.", Gazetteer{}).empty());
}

TEST(BuiltinTagger, AdjacentCapitalizedTokensMerge) {
  const std::string text = "Prof Ana Novak works in New York.";
  const auto spans = tag_entities_builtin(text, Gazetteer{});
  ASSERT_EQ(spans.size(), 2u);
  EXPECT_EQ(slice(text, spans[0]), "Ana Novak");
  EXPECT_EQ(spans[0].label, EntityLabel::PER);
  EXPECT_EQ(slice(text, spans[1]), "New York");
  EXPECT_EQ(spans[1].label, EntityLabel::LOC);
}

TEST(BuiltinTagger, CodePointOffsets) {
  Gazetteer g;
  g.locations.insert("Łódź");
  const std::string text = "Zoë lives in Łódź.";
  const auto spans = tag_entities_builtin(text, g);
  ASSERT_EQ(spans, (Spans{{13, 17, EntityLabel::LOC}}));
}

TEST(NormalizeSpans, OverlapRules) {
  using L = EntityLabel;
  // same label overlaps merge into their union
  EXPECT_EQ(normalize_spans({{0, 4, L::LOC}, {2, 7, L::LOC}}), (Spans{{0, 7, L::LOC}}));
  // cross label: longer wins
  EXPECT_EQ(normalize_spans({{0, 3, L::PER}, {1, 8, L::LOC}}), (Spans{{1, 8, L::LOC}}));
  // equal length: earlier start wins
  EXPECT_EQ(normalize_spans({{2, 6, L::PER}, {0, 4, L::LOC}}), (Spans{{0, 4, L::LOC}}));
  // exact tie: PER
  EXPECT_EQ(normalize_spans({{0, 4, L::LOC}, {0, 4, L::PER}}), (Spans{{0, 4, L::PER}}));
  // disjoint spans come back sorted
  EXPECT_EQ(normalize_spans({{9, 10, L::PER}, {0, 2, L::LOC}}), (Spans{{0, 2, L::LOC}, {9, 10, L::PER}}));
}

TEST(AnonymizeText, SingleReplacement) {
  const std::string text = "John lives in Madrid";
  const Spans spans = {{0, 4, EntityLabel::PER}, {14, 20, EntityLabel::LOC}};
  const auto r = anonymize_text(text, spans, {EntityLabel::PER});
  EXPECT_EQ(r.text_masked, "[PER] lives in Madrid");
  EXPECT_EQ(r.spans_removed, (Spans{{0, 4, EntityLabel::PER}}));
}

TEST(AnonymizeText, EmptyMaskIsIdentity) {
  const std::string text = "John lives in Madrid";
  const auto r = anonymize_text(text, {{0, 4, EntityLabel::PER}}, {});
  EXPECT_EQ(r.text_masked, text);
  EXPECT_TRUE(r.spans_removed.empty());
}

TEST(AnonymizeText, SeveralReplacements) {
  const std::string text = "John met Ana in Madrid";
  const Spans spans = {{0, 4, EntityLabel::PER}, {9, 12, EntityLabel::PER}, {16, 22, EntityLabel::LOC}};
  const auto r = anonymize_text(text, spans, all_labels());
  EXPECT_EQ(r.text_masked, "[PER] met [PER] in [LOC]");
  EXPECT_EQ(r.spans_removed, spans);
}

TEST(AnonymizeText, ContractViolations) {
  EXPECT_THROW(anonymize_text("abcdef", {{0, 3, EntityLabel::PER}, {2, 5, EntityLabel::LOC}}, all_labels()),
               ContractError);
  EXPECT_THROW(anonymize_text("abc", {{1, 9, EntityLabel::PER}}, all_labels()), ContractError);
  EXPECT_THROW(anonymize_text("abc", {{2, 2, EntityLabel::PER}}, all_labels()), ContractError);
}

TEST(AnonymizeText, LengthAndOutsideTextProperties) {
  Rng rng(17);
  const std::u32string alphabet = U"abcdé XYZ.,Ł";
  for (int trial = 0; trial < 300; ++trial) {
    std::u32string cps;
    const auto n = 1 + rng.below(40);
    for (std::uint64_t i = 0; i < n; ++i) cps.push_back(alphabet[rng.below(alphabet.size())]);
    Spans spans;
    std::size_t pos = 0;
    while (pos < cps.size()) {
      pos += rng.below(4);
      const std::size_t len = 1 + rng.below(5);
      if (pos + len > cps.size()) break;
      spans.push_back({pos, pos + len, rng.bernoulli(0.5) ? EntityLabel::PER : EntityLabel::LOC});
      pos += len;
    }
    LabelSet mask;
    if (rng.bernoulli(0.6)) mask.insert(EntityLabel::PER);
    if (rng.bernoulli(0.6)) mask.insert(EntityLabel::LOC);
    const std::string text = utf8_encode(cps);
    const auto r = anonymize_text(text, spans, mask);

    std::size_t removed_len = 0;
    for (const auto& s : r.spans_removed) removed_len += s.length();
    ASSERT_EQ(code_point_length(r.text_masked), cps.size() - removed_len + kPlaceholderLength * r.spans_removed.size());

    // Rebuild by hand: outside text copied verbatim.
    std::u32string expect;
    std::size_t at = 0;
    for (const auto& s : r.spans_removed) {
      ASSERT_TRUE(mask.count(s.label));
      expect += cps.substr(at, s.start - at);
      expect += utf8_decode(placeholder(s.label));
      at = s.end;
    }
    expect += cps.substr(at);
    ASSERT_EQ(utf8_decode(r.text_masked), expect) << text;
  }
}

TEST(AnonymizeText, IdempotentUnderBuiltinTagger) {
  const BuiltinTagger tagger;
  for (const auto& r : corpus(200).resumes) {
    const auto once = anonymize_text(r.bio_raw, tagger.tag(r.bio_raw), all_labels()).text_masked;
    const auto twice = anonymize_text(once, tagger.tag(once), all_labels()).text_masked;
    EXPECT_EQ(once, twice) << r.id;
  }
}

TEST(AnonymizeCorpus, EmptyMaskIsIdentity) {
  const auto c = corpus(50);
  const auto out = anonymize_corpus(c, BuiltinTagger(), {});
  EXPECT_EQ(out.corpus, c);
  EXPECT_EQ(out.stats.masked_words, 0u);
  EXPECT_EQ(out.stats.masked_fraction, 0.0);
}

TEST(AnonymizeCorpus, FullGazetteerLeavesNoEntityTokens) {
  const auto c = corpus(1000);
  ASSERT_GT(residual_entity_tokens(c), 0u);
  const auto out = anonymize_corpus(c, BuiltinTagger(), all_labels());
  EXPECT_EQ(residual_entity_tokens(out.corpus), 0u);
  for (std::size_t i = 0; i < c.size(); ++i) {
    EXPECT_EQ(out.corpus.resumes[i].bio_neutral, c.resumes[i].bio_neutral);
    EXPECT_EQ(out.corpus.resumes[i].competencies, c.resumes[i].competencies);
    EXPECT_EQ(out.corpus.resumes[i].gold_entities, c.resumes[i].gold_entities);
  }
}

TEST(AnonymizeCorpus, DeterministicBytes) {
  const auto c = corpus(200, 4);
  EXPECT_EQ(serialize_corpus(anonymize_corpus(c, BuiltinTagger(), {EntityLabel::LOC}).corpus),
            serialize_corpus(anonymize_corpus(c, BuiltinTagger(), {EntityLabel::LOC}).corpus));
}

TEST(AnonymizeCorpus, FullGazetteerMatchesGold) {
  const auto c = corpus(1000);
  const BuiltinTagger tagger;
  std::vector<Spans> predicted, gold;
  for (const auto& r : c.resumes) {
    predicted.push_back(tagger.tag(r.bio_raw));
    gold.push_back(r.gold_entities);
  }
  EXPECT_EQ(evaluate_tagger(predicted, gold).micro.f1, 1.0);
}

TEST(AnonymizeCorpus, HeldOutNamesStillAboveEightyF1) {
  const auto c = corpus(2000, 2);
  const BuiltinTagger tagger(Gazetteer::with_heldout(0.2));
  std::vector<Spans> predicted, gold;
  for (const auto& r : c.resumes) {
    predicted.push_back(tagger.tag(r.bio_raw));
    gold.push_back(r.gold_entities);
  }
  const auto ev = evaluate_tagger(predicted, gold);
  EXPECT_LT(ev.per.recall, 1.0);
  EXPECT_GE(ev.micro.f1, 0.80);
}

TEST(EntityStatistics, FractionIsExactRatio) {
  const auto c = corpus(500);
  for (const LabelSet& labels : {LabelSet{EntityLabel::PER}, LabelSet{EntityLabel::LOC}, all_labels()}) {
    const auto out = anonymize_corpus(c, BuiltinTagger(), labels);
    const auto st = entity_statistics(c, out);
    EXPECT_EQ(st, out.stats);
    EXPECT_EQ(st.documents, 500u);
    EXPECT_EQ(st.masked_fraction, static_cast<double>(st.masked_words) / static_cast<double>(st.total_words));
    if (labels == all_labels()) {
      EXPECT_GE(st.masked_fraction, 0.02);
      EXPECT_LE(st.masked_fraction, 0.12);
    }
  }
}

TEST(EntityStatistics, EveryWordMasked) {
  Corpus c;
  c.resumes.push_back({});
  c.resumes[0].bio_raw = "Anna Lima";
  const auto out = anonymize_corpus(c, BuiltinTagger(), all_labels());
  EXPECT_EQ(out.corpus.resumes[0].bio_raw, "[PER] [LOC]");
  EXPECT_EQ(out.stats.masked_fraction, 1.0);
}

TEST(EntityStatistics, FourPercentArithmetic) {
  EXPECT_NEAR(56668.0 / 1416693.0, 0.0400, 5e-5);
}

TEST(EntityStatistics, MisalignedCorporaRejected) {
  const auto c = corpus(5);
  auto out = anonymize_corpus(c, BuiltinTagger(), all_labels());
  out.corpus.resumes[2].id = 99;
  EXPECT_THROW(entity_statistics(c, out), AlignmentError);
  out.corpus.resumes.pop_back();
  EXPECT_THROW(entity_statistics(c, out), AlignmentError);
}

TEST(EvaluateTagger, HandCounts) {
  using L = EntityLabel;
  const std::vector<Spans> gold = {{{0, 4, L::PER}, {10, 16, L::LOC}}};
  auto ev = evaluate_tagger(gold, gold);
  EXPECT_EQ(ev.micro.precision, 1.0);
  EXPECT_EQ(ev.micro.recall, 1.0);
  EXPECT_EQ(ev.micro.f1, 1.0);

  ev = evaluate_tagger({{}}, gold);
  EXPECT_EQ(ev.micro.recall, 0.0);
  EXPECT_EQ(ev.micro.f1, 0.0);

  ev = evaluate_tagger({{{0, 4, L::PER}, {10, 15, L::LOC}}}, gold);
  EXPECT_EQ(ev.micro.precision, 0.5);
  EXPECT_EQ(ev.micro.recall, 0.5);
  EXPECT_EQ(ev.micro.f1, 0.5);
  EXPECT_EQ(ev.per.f1, 1.0);
  EXPECT_EQ(ev.loc.f1, 0.0);

  ev = evaluate_tagger({{}}, {{}});
  EXPECT_EQ(ev.micro.precision, 1.0);
  EXPECT_EQ(ev.micro.recall, 1.0);
  EXPECT_THROW(evaluate_tagger({{}, {}}, {{}}), AlignmentError);
}

TEST(Markers, TableLookup) {
  const auto t = MarkerTable::defaults();
  EXPECT_EQ(neutralize_gender_markers("she managed her team", t), "they managed their team");
  EXPECT_EQ(neutralize_gender_markers("The theater", t), "The theater");
  EXPECT_EQ(neutralize_gender_markers("She said her plan was hers", t), "They said their plan was theirs");
  EXPECT_EQ(neutralize_gender_markers("Ask Mr. Smith or HIM.", t), "Ask Smith or THEM.");
}

TEST(Markers, Idempotent) {
  const auto t = MarkerTable::defaults();
  for (const auto& r : corpus(100).resumes) {
    const auto once = neutralize_gender_markers(r.bio_raw, t);
    EXPECT_EQ(neutralize_gender_markers(once, t), once) << r.id;
  }
}
