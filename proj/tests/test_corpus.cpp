#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>
#include <string>

#include "pba/corpus.hpp"

using namespace pba;

namespace {

GeneratorConfig small(std::size_t n, std::uint64_t seed = 1) {
  GeneratorConfig c;
  c.n = n;
  c.seed = seed;
  return c;
}

std::string slice(const std::string& text, const EntitySpan& s) {
  const auto cps = utf8_decode(text);
  return utf8_encode(cps.substr(s.start, s.end - s.start));
}

std::string one_line(const Resume& r) { return resume_to_json(r).dump(); }

}  // namespace

TEST(Generate, FullSizeCorpus) {
  const Corpus c = generate_corpus(GeneratorConfig{});
  ASSERT_EQ(c.size(), 24000u);
  EXPECT_EQ(c.resumes.front().id, 0u);
  EXPECT_EQ(c.resumes.back().id, 23999u);
}

TEST(Generate, ZeroBiasLeavesScoresEqual) {
  auto cfg = small(500);
  cfg.bias_strength = 0.0;
  for (const auto& r : generate_corpus(cfg).resumes) EXPECT_EQ(r.score_biased, r.score_blind) << r.id;
}

TEST(Generate, ScoreOrdering) {
  for (const auto& r : generate_corpus(small(2000)).resumes) {
    EXPECT_LE(0.0, r.score_biased);
    EXPECT_LE(r.score_biased, r.score_blind);
    EXPECT_LE(r.score_blind, 1.0);
    if (r.gender == Gender::F) {
      EXPECT_DOUBLE_EQ(r.score_biased, std::max(0.0, r.score_blind - 0.15));
    }
  }
}

TEST(Generate, ByteIdenticalRegeneration) {
  const auto cfg = small(300, 42);
  EXPECT_EQ(serialize_corpus(generate_corpus(cfg)), serialize_corpus(generate_corpus(cfg)));
  EXPECT_NE(serialize_corpus(generate_corpus(cfg)), serialize_corpus(generate_corpus(small(300, 43))));
}

TEST(Generate, ResumeDependsOnlyOnSeedAndId) {
  const auto big = generate_corpus(small(200, 9));
  EXPECT_EQ(generate_resume(small(5, 9), 150), big.resumes[150]);
}

TEST(Generate, GenderBalanceAtTenThousand) {
  for (std::uint64_t seed : {1, 2, 3}) {
    const auto c = generate_corpus(small(10000, seed));
    const auto males = std::count_if(c.resumes.begin(), c.resumes.end(), [](const Resume& r) { return r.gender == Gender::M; });
    EXPECT_LT(std::abs(static_cast<double>(males) / 10000.0 - 0.5), 0.03) << seed;
  }
}

TEST(Generate, GoldSpansReproduceInjectedStrings) {
  const std::set<std::string> names = [] {
    std::set<std::string> s(lexicon::male_names().begin(), lexicon::male_names().end());
    s.insert(lexicon::female_names().begin(), lexicon::female_names().end());
    return s;
  }();
  const std::set<std::string> cities(lexicon::cities().begin(), lexicon::cities().end());
  for (const auto& r : generate_corpus(small(1000)).resumes) {
    ASSERT_EQ(r.gold_entities.size(), 2u) << r.id;
    for (const auto& s : r.gold_entities) {
      const std::string text = slice(r.bio_raw, s);
      if (s.label == EntityLabel::PER) {
        EXPECT_TRUE(names.count(text)) << r.id << ": " << text;
      } else {
        EXPECT_TRUE(cities.count(text)) << r.id << ": " << text;
      }
    }
  }
}

TEST(Generate, NeutralBioHasNoNameOrMarkers) {
  const auto table = MarkerTable::defaults();
  for (const auto& r : generate_corpus(small(300)).resumes) {
    EXPECT_EQ(neutralize_gender_markers(r.bio_neutral, table), r.bio_neutral) << r.id;
    const std::string name = slice(r.bio_raw, r.gold_entities[0]);
    EXPECT_EQ(r.bio_neutral.find(name + " "), std::string::npos) << r.id;
    EXPECT_EQ(r.bio_neutral.rfind("The candidate", 0), 0u) << r.id;
  }
}

TEST(GeneratorConfig, RejectsInvalidValues) {
  auto c = small(0);
  EXPECT_THROW(c.validate(), ConfigError);
  c = small(10);
  c.bias_strength = 1.0;
  EXPECT_THROW(generate_corpus(c), ConfigError);
  c.bias_strength = -0.1;
  EXPECT_THROW(generate_corpus(c), ConfigError);
  c = small(10);
  c.sector_weights[0][0] += 0.1;
  EXPECT_THROW(c.validate(), ConfigError);
}

TEST(Jsonl, RoundTrip) {
  const auto c = generate_corpus(small(200, 5));
  std::istringstream in(serialize_corpus(c));
  const Corpus back = read_corpus(in);
  EXPECT_EQ(back, c);
  EXPECT_EQ(serialize_corpus(back), serialize_corpus(c));
}

TEST(Jsonl, SixComponentVectorIsSchemaError) {
  auto j = resume_to_json(generate_resume(small(1), 0));
  j["competencies"].erase(6);
  std::istringstream in(j.dump() + "\n");
  try {
    read_corpus(in);
    FAIL() << "expected SchemaError";
  } catch (const SchemaError& e) {
    EXPECT_NE(std::string(e.what()).find("line 1"), std::string::npos);
  }
}

TEST(Jsonl, OutOfRangeScoreIsSchemaError) {
  const auto c = generate_corpus(small(2));
  auto bad = resume_to_json(c.resumes[1]);
  bad["score_blind"] = 1.2;
  std::istringstream in(one_line(c.resumes[0]) + "\n" + bad.dump() + "\n");
  try {
    read_corpus(in);
    FAIL() << "expected SchemaError";
  } catch (const SchemaError& e) {
    EXPECT_NE(std::string(e.what()).find("line 2"), std::string::npos) << e.what();
  }
}

TEST(Jsonl, MalformedLineIsParseError) {
  const auto c = generate_corpus(small(1));
  std::istringstream in(one_line(c.resumes[0]) + "\n{not json\n");
  try {
    read_corpus(in);
    FAIL() << "expected ParseError";
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 2u);
  }
}

TEST(Jsonl, RejectsUnknownFieldsAndUnorderedIds) {
  const auto c = generate_corpus(small(2));
  auto extra = resume_to_json(c.resumes[0]);
  extra["age"] = 30;
  std::istringstream in1(extra.dump() + "\n");
  EXPECT_THROW(read_corpus(in1), SchemaError);
  std::istringstream in2(one_line(c.resumes[1]) + "\n" + one_line(c.resumes[0]) + "\n");
  EXPECT_THROW(read_corpus(in2), SchemaError);
}

TEST(Split, FullScaleArithmetic) {
  Corpus c;
  c.resumes.resize(24000);
  for (std::size_t i = 0; i < c.resumes.size(); ++i) c.resumes[i].id = i;
  const auto s = split_corpus(c, 0.8, 0);
  EXPECT_EQ(s.train.size(), 19200u);
  EXPECT_EQ(s.test.size(), 4800u);
}

TEST(Split, FloorOnSmallCorpus) {
  const auto s = split_corpus(generate_corpus(small(10)), 0.8, 3);
  EXPECT_EQ(s.train.size(), 8u);
  EXPECT_EQ(s.test.size(), 2u);
}

TEST(Split, PartitionInIdOrderAndDeterministic) {
  const auto c = generate_corpus(small(500));
  const auto a = split_corpus(c, 0.8, 11);
  const auto b = split_corpus(c, 0.8, 11);
  EXPECT_EQ(a.train, b.train);
  EXPECT_EQ(a.test, b.test);
  std::set<std::uint64_t> ids;
  for (const auto* part : {&a.train, &a.test}) {
    for (std::size_t i = 1; i < part->size(); ++i) EXPECT_LT(part->resumes[i - 1].id, part->resumes[i].id);
    for (const auto& r : part->resumes) ids.insert(r.id);
  }
  EXPECT_EQ(ids.size(), 500u);
  EXPECT_NE(split_corpus(c, 0.8, 12).test, a.test);
}

TEST(Split, RejectsDegenerateFraction) {
  const auto c = generate_corpus(small(10));
  EXPECT_THROW(split_corpus(c, 0.0, 0), ConfigError);
  EXPECT_THROW(split_corpus(c, 1.0, 0), ConfigError);
}
