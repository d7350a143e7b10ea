#pragma once

// Synthetic multimodal resume corpus: competency vectors, raw and neutral
// biographies, gender, occupational group and blind/biased scores.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <json.hpp>

#include "pba/entity.hpp"
#include "pba/error.hpp"
#include "pba/gazetteer.hpp"
#include "pba/markers.hpp"
#include "pba/random.hpp"
#include "pba/text.hpp"

namespace pba {

inline constexpr std::size_t kNumCompetencies = 7;
inline constexpr std::size_t kNumGroups = 4;

// education, availability, experience, recommendations, language 1..3
using CompetencyVector = std::array<double, kNumCompetencies>;

enum class Gender { M, F };
enum class Group { O1 = 0, O2 = 1, O3 = 2, O4 = 3 };

inline constexpr std::array<Group, kNumGroups> kAllGroups = {Group::O1, Group::O2, Group::O3, Group::O4};

inline constexpr std::string_view gender_name(Gender g) noexcept { return g == Gender::M ? "M" : "F"; }

inline constexpr std::string_view group_name(Group g) noexcept {
  constexpr std::string_view kNames[] = {"O1", "O2", "O3", "O4"};
  return kNames[static_cast<int>(g)];
}

inline constexpr std::size_t group_index(Group g) noexcept { return static_cast<std::size_t>(g); }

inline std::optional<Gender> parse_gender(std::string_view s) {
  if (s == "M") return Gender::M;
  if (s == "F") return Gender::F;
  return std::nullopt;
}

inline std::optional<Group> parse_group(std::string_view s) {
  for (Group g : kAllGroups)
    if (group_name(g) == s) return g;
  return std::nullopt;
}

enum class BioField { Raw, Neutral };

inline constexpr std::string_view field_name(BioField f) noexcept { return f == BioField::Raw ? "bio_raw" : "bio_neutral"; }

struct Resume {
  std::uint64_t id = 0;
  CompetencyVector competencies{};
  std::string bio_raw;
  std::string bio_neutral;
  Gender gender = Gender::M;
  Group group = Group::O1;
  double score_blind = 0.0;
  double score_biased = 0.0;
  std::vector<EntitySpan> gold_entities;

  const std::string& bio(BioField f) const noexcept { return f == BioField::Raw ? bio_raw : bio_neutral; }
  std::string& bio(BioField f) noexcept { return f == BioField::Raw ? bio_raw : bio_neutral; }

  bool operator==(const Resume&) const = default;
};

using SectorWeights = std::array<std::array<double, kNumCompetencies>, kNumGroups>;

inline constexpr SectorWeights kDefaultSectorWeights = {{
    {0.25, 0.10, 0.25, 0.15, 0.10, 0.10, 0.05},  // O1 Health
    {0.30, 0.15, 0.15, 0.10, 0.10, 0.10, 0.10},  // O2 Education and Knowledge
    {0.15, 0.20, 0.20, 0.15, 0.15, 0.10, 0.05},  // O3 Communication and Media
    {0.25, 0.10, 0.20, 0.20, 0.10, 0.10, 0.05},  // O4 Legal
}};

struct GeneratorConfig {
  std::size_t n = 24000;
  std::uint64_t seed = 0;
  double bias_strength = 0.15;
  std::size_t male_names = lexicon::male_names().size();
  std::size_t female_names = lexicon::female_names().size();
  std::size_t cities = lexicon::cities().size();
  SectorWeights sector_weights = kDefaultSectorWeights;

  bool operator==(const GeneratorConfig&) const = default;

  void validate() const {
    if (n < 1) throw ConfigError("corpus size n must be >= 1");
    if (!(bias_strength >= 0.0 && bias_strength < 1.0))
      throw ConfigError("bias_strength must lie in [0, 1), got " + std::to_string(bias_strength));
    if (male_names < 1 || male_names > lexicon::male_names().size() || female_names < 1 ||
        female_names > lexicon::female_names().size())
      throw ConfigError("name pool sizes must lie in [1, lexicon size]");
    if (cities < 1 || cities > lexicon::cities().size())
      throw ConfigError("city pool size must lie in [1, lexicon size]");
    for (const auto& row : sector_weights) {
      double sum = 0.0;
      for (double w : row) {
        if (!(w > 0.0)) throw ConfigError("sector weights must be strictly positive");
        sum += w;
      }
      if (std::abs(sum - 1.0) > 1e-9) throw ConfigError("each sector weight row must sum to 1");
    }
  }
};

// Resumes are ordered by strictly increasing id. Generated corpora have ids
// 0..n-1; splits keep the subset in id order. Equality compares the
// resumes only, since the generator config is not part of the file format.
struct Corpus {
  std::vector<Resume> resumes;
  std::optional<GeneratorConfig> generator;

  std::size_t size() const noexcept { return resumes.size(); }
  bool empty() const noexcept { return resumes.empty(); }
  bool operator==(const Corpus& o) const { return resumes == o.resumes; }
};

namespace detail {

struct GroupTemplates {
  std::vector<std::string_view> roles;
  std::vector<std::string_view> body;
  std::string_view closing;
};

inline const std::array<GroupTemplates, kNumGroups>& group_templates() {
  static const std::array<GroupTemplates, kNumGroups> k = {{
      {{"nurse", "physician", "pharmacist", "physiotherapist", "surgeon", "dentist", "midwife", "paramedic"},
       {"{He} has worked in intensive care units and emergency wards treating patients with complex conditions.",
        "{His} clinical research focuses on chronic disease management and patient recovery.",
        "{He} coordinates a team of nurses and supports doctors during surgery.",
        "{He} completed {his} residency at a regional hospital and holds a certification in pediatric care.",
        "Patients describe {him} as attentive, calm and reassuring during treatment.",
        "{He} regularly volunteers at vaccination campaigns and community health clinics.",
        "{His} daily work involves diagnosis, medication review and monitoring of vital signs.",
        "{He} has published articles on infection prevention in hospital settings."},
       "{He} is seeking a new role in healthcare where {he} can keep caring for patients."},
      {{"teacher", "professor", "librarian", "researcher", "tutor", "lecturer", "school counselor"},
       {"{He} designs curricula and lesson plans for secondary school students.",
        "{His} research explores how students learn mathematics and science.",
        "{He} has supervised several doctoral theses and teaches undergraduate seminars.",
        "{He} manages the university library catalogue and archives.",
        "Students appreciate {his} patience and clear explanations in the classroom.",
        "{He} has led workshops on literacy, pedagogy and academic writing.",
        "{He} grades exams, mentors pupils and organizes school projects.",
        "{His} academic publications cover education policy and learning assessment."},
       "{He} is seeking a teaching or research position at a school or university."},
      {{"journalist", "photographer", "editor", "reporter", "filmmaker", "podcaster", "copywriter", "designer"},
       {"{He} writes feature stories and interviews for a national newspaper.",
        "{His} photographs have appeared in magazines and online media outlets.",
        "{He} edits video content and produces documentaries for television.",
        "{He} manages social media campaigns and brand communication for clients.",
        "Audiences follow {his} weekly podcast on culture and current affairs.",
        "{He} has covered elections, press conferences and breaking news as a reporter.",
        "{He} drafts press releases and coordinates public relations events.",
        "{His} editorial work includes proofreading articles and planning publication schedules."},
       "{He} is seeking a creative role at a media company or communication agency."},
      {{"lawyer", "attorney", "paralegal", "judge", "notary", "legal advisor", "prosecutor"},
       {"{He} drafts contracts and advises companies on corporate law.",
        "{His} practice focuses on criminal defense and litigation in court.",
        "{He} has represented clients in labor disputes and civil lawsuits.",
        "{He} reviews legal documents and prepares briefs for trials.",
        "Clients trust {his} judgment on compliance, regulation and intellectual property.",
        "{He} served as a clerk for an appellate judge before joining a law firm.",
        "{He} negotiates settlements and mediates between opposing parties.",
        "{His} legal research covers tax law, contracts and international arbitration."},
       "{He} is seeking a position at a law firm or in a legal department."},
  }};
  return k;
}

inline constexpr std::array<std::string_view, 3> kOpenings = {
    "{NAME} is {a_role} with {years} years of experience.",
    "{NAME} works as {a_role} and has {years} years of professional experience.",
    "{NAME} has been {a_role} for {years} years.",
};

inline constexpr std::array<std::string_view, 4> kLocationSentences = {
    "{He} currently lives in {CITY} with {his} family.",
    "{He} is based in {CITY} and is open to relocation.",
    "Originally from {CITY}, {he} moved abroad after graduating.",
    "{He} studied at the university of {CITY} before starting {his} career.",
};

inline constexpr std::array<std::string_view, 5> kGenericSentences = {
    "{He} speaks several languages and enjoys working in international teams.",
    "In {his} spare time {he} enjoys hiking, cooking and reading novels.",
    "{He} is known for punctuality, teamwork and a strong work ethic.",
    "{He} is eager to take on new responsibilities and grow professionally.",
    "Colleagues say that {he} is reliable and well organized.",
};

struct Slots {
  Gender gender = Gender::M;
  std::string name;   // empty renders the neutral subject "The candidate"
  std::string title;  // rendered before the name when non-empty
  std::string city;
  std::string a_role;
  std::string years;
};

// Appends `tmpl` with slots filled, tracking the code-point spans of the
// injected name and city.
inline void render(std::string_view tmpl, const Slots& s, std::string& out, std::size_t& cp_len,
                   std::vector<EntitySpan>& spans) {
  const bool male = s.gender == Gender::M;
  auto emit = [&](std::string_view piece) {
    out.append(piece);
    cp_len += code_point_length(piece);
  };
  std::size_t i = 0;
  while (i < tmpl.size()) {
    if (tmpl[i] != '{') {
      const std::size_t next = std::min(tmpl.find('{', i), tmpl.size());
      emit(tmpl.substr(i, next - i));
      i = next;
      continue;
    }
    const std::size_t close = tmpl.find('}', i);
    const std::string_view key = tmpl.substr(i + 1, close - i - 1);
    i = close + 1;
    if (key == "NAME") {
      if (s.name.empty()) {
        emit("The candidate");
      } else {
        if (!s.title.empty()) {
          emit(s.title);
          emit(" ");
        }
        const std::size_t start = cp_len;
        emit(s.name);
        spans.push_back({start, cp_len, EntityLabel::PER});
      }
    } else if (key == "CITY") {
      const std::size_t start = cp_len;
      emit(s.city);
      spans.push_back({start, cp_len, EntityLabel::LOC});
    } else if (key == "He") {
      emit(male ? "He" : "She");
    } else if (key == "he") {
      emit(male ? "he" : "she");
    } else if (key == "His") {
      emit(male ? "His" : "Her");
    } else if (key == "his") {
      emit(male ? "his" : "her");
    } else if (key == "him") {
      emit(male ? "him" : "her");
    } else if (key == "a_role") {
      emit(s.a_role);
    } else if (key == "years") {
      emit(s.years);
    } else {
      throw ContractError("unknown template slot {" + std::string(key) + "}");
    }
  }
}

inline std::string with_article(std::string_view role) {
  const bool vowel = !role.empty() && std::string_view("aeiou").find(role.front()) != std::string_view::npos;
  return std::string(vowel ? "an " : "a ") + std::string(role);
}

inline const std::string& pick(Rng& rng, const std::vector<std::string>& pool, std::size_t limit) {
  return pool[static_cast<std::size_t>(rng.below(std::min(limit, pool.size())))];
}

}  // namespace detail

// Per-resume generation. Randomness is keyed on (seed, id) only, so the
// result does not depend on generation order.
inline Resume generate_resume(const GeneratorConfig& config, std::uint64_t id) {
  Rng rng(mix_seed(config.seed, id, 0x5245534Dull));
  Resume r;
  r.id = id;
  r.gender = rng.bernoulli(0.5) ? Gender::F : Gender::M;
  r.group = static_cast<Group>(rng.below(kNumGroups));
  for (double& c : r.competencies) c = rng.uniform();

  const auto& weights = config.sector_weights[group_index(r.group)];
  double blind = 0.0;
  for (std::size_t k = 0; k < kNumCompetencies; ++k) blind += weights[k] * r.competencies[k];
  r.score_blind = std::clamp(blind, 0.0, 1.0);
  const double penalty = r.gender == Gender::F ? config.bias_strength : 0.0;
  r.score_biased = std::clamp(r.score_blind - penalty, 0.0, 1.0);

  const auto& tpl = detail::group_templates()[group_index(r.group)];
  detail::Slots slots;
  slots.gender = r.gender;
  slots.name = r.gender == Gender::M ? detail::pick(rng, lexicon::male_names(), config.male_names)
                                     : detail::pick(rng, lexicon::female_names(), config.female_names);
  slots.city = detail::pick(rng, lexicon::cities(), config.cities);
  const double title_draw = rng.uniform();
  if (r.group == Group::O1) {
    if (title_draw < 0.5) slots.title = "Dr";
  } else if (title_draw < 0.3) {
    slots.title = r.gender == Gender::M ? "Mr" : "Ms";
  }
  slots.a_role = detail::with_article(tpl.roles[rng.below(tpl.roles.size())]);
  slots.years = std::to_string(2 + rng.below(29));

  const std::string_view opening = detail::kOpenings[rng.below(detail::kOpenings.size())];
  const std::size_t first = rng.below(tpl.body.size());
  std::size_t second = rng.below(tpl.body.size() - 1);
  if (second >= first) ++second;
  const std::string_view location = detail::kLocationSentences[rng.below(detail::kLocationSentences.size())];
  const std::string_view generic = detail::kGenericSentences[rng.below(detail::kGenericSentences.size())];
  const std::array<std::string_view, 6> sentences = {opening, tpl.body[first], tpl.body[second],
                                                     location, generic, tpl.closing};

  auto render_bio = [&](const detail::Slots& s, std::vector<EntitySpan>& spans) {
    std::string out;
    std::size_t cp_len = 0;
    for (std::size_t k = 0; k < sentences.size(); ++k) {
      if (k > 0) {
        out.push_back(' ');
        ++cp_len;
      }
      detail::render(sentences[k], s, out, cp_len, spans);
    }
    return out;
  };

  r.bio_raw = render_bio(slots, r.gold_entities);

  detail::Slots neutral = slots;
  neutral.name.clear();
  neutral.title.clear();
  std::vector<EntitySpan> unused;
  r.bio_neutral = neutralize_gender_markers(render_bio(neutral, unused), MarkerTable::defaults());
  return r;
}

inline Corpus generate_corpus(const GeneratorConfig& config) {
  config.validate();
  Corpus c;
  c.generator = config;
  c.resumes.reserve(config.n);
  for (std::uint64_t id = 0; id < config.n; ++id) c.resumes.push_back(generate_resume(config, id));
  return c;
}

// ---------------------------------------------------------------------------
// Line-delimited JSON records.

inline nlohmann::ordered_json resume_to_json(const Resume& r) {
  nlohmann::ordered_json j;
  j["id"] = r.id;
  j["competencies"] = r.competencies;
  j["bio_raw"] = r.bio_raw;
  j["bio_neutral"] = r.bio_neutral;
  j["gender"] = gender_name(r.gender);
  j["group"] = group_name(r.group);
  j["score_blind"] = r.score_blind;
  j["score_biased"] = r.score_biased;
  auto spans = nlohmann::ordered_json::array();
  for (const auto& s : r.gold_entities)
    spans.push_back({{"start", s.start}, {"end", s.end}, {"label", label_name(s.label)}});
  j["gold_entities"] = std::move(spans);
  return j;
}

namespace detail {

inline const nlohmann::json& require(const nlohmann::json& j, const char* key, std::size_t line) {
  auto it = j.find(key);
  if (it == j.end()) throw SchemaError("line " + std::to_string(line) + ": missing field '" + key + "'");
  return *it;
}

inline double require_unit_real(const nlohmann::json& j, const char* key, std::size_t line) {
  const auto& v = require(j, key, line);
  if (!v.is_number()) throw SchemaError("line " + std::to_string(line) + ": field '" + key + "' must be a number");
  const double x = v.get<double>();
  if (!(x >= 0.0 && x <= 1.0))
    throw SchemaError("line " + std::to_string(line) + ": field '" + key + "' out of [0,1]: " + v.dump());
  return x;
}

}  // namespace detail

inline Resume resume_from_json(const nlohmann::json& j, std::size_t line) {
  static const std::array<std::string_view, 9> kFields = {"id",     "competencies", "bio_raw",     "bio_neutral",
                                                          "gender", "group",        "score_blind", "score_biased",
                                                          "gold_entities"};
  const auto where = [line] { return "line " + std::to_string(line) + ": "; };
  if (!j.is_object()) throw SchemaError(where() + "record must be a JSON object");
  for (const auto& [key, _] : j.items())
    if (std::find(kFields.begin(), kFields.end(), key) == kFields.end())
      throw SchemaError(where() + "unknown field '" + key + "'");

  Resume r;
  const auto& id = detail::require(j, "id", line);
  if (!id.is_number_unsigned()) throw SchemaError(where() + "id must be a non-negative integer");
  r.id = id.get<std::uint64_t>();

  const auto& comp = detail::require(j, "competencies", line);
  if (!comp.is_array() || comp.size() != kNumCompetencies)
    throw SchemaError(where() + "competencies must have exactly 7 components");
  for (std::size_t k = 0; k < kNumCompetencies; ++k) {
    if (!comp[k].is_number()) throw SchemaError(where() + "competency values must be numbers");
    r.competencies[k] = comp[k].get<double>();
    if (!(r.competencies[k] >= 0.0 && r.competencies[k] <= 1.0))
      throw SchemaError(where() + "competency " + std::to_string(k) + " out of [0,1]");
  }

  const auto& raw = detail::require(j, "bio_raw", line);
  const auto& neutral = detail::require(j, "bio_neutral", line);
  if (!raw.is_string() || !neutral.is_string()) throw SchemaError(where() + "biographies must be strings");
  r.bio_raw = raw.get<std::string>();
  r.bio_neutral = neutral.get<std::string>();

  const auto& gender = detail::require(j, "gender", line);
  auto g = gender.is_string() ? parse_gender(gender.get<std::string>()) : std::nullopt;
  if (!g) throw SchemaError(where() + "gender must be \"M\" or \"F\"");
  r.gender = *g;

  const auto& group = detail::require(j, "group", line);
  auto grp = group.is_string() ? parse_group(group.get<std::string>()) : std::nullopt;
  if (!grp) throw SchemaError(where() + "group must be one of O1..O4");
  r.group = *grp;

  r.score_blind = detail::require_unit_real(j, "score_blind", line);
  r.score_biased = detail::require_unit_real(j, "score_biased", line);

  const auto& spans = detail::require(j, "gold_entities", line);
  if (!spans.is_array()) throw SchemaError(where() + "gold_entities must be an array");
  for (const auto& s : spans) {
    if (!s.is_object() || !s.contains("start") || !s.contains("end") || !s.contains("label"))
      throw SchemaError(where() + "gold entity needs start, end and label");
    if (!s["start"].is_number_unsigned() || !s["end"].is_number_unsigned() || !s["label"].is_string())
      throw SchemaError(where() + "gold entity has mistyped fields");
    auto label = parse_label(s["label"].get<std::string>());
    if (!label) throw SchemaError(where() + "gold entity label must be PER or LOC");
    EntitySpan span{s["start"].get<std::size_t>(), s["end"].get<std::size_t>(), *label};
    if (span.start >= span.end) throw SchemaError(where() + "gold entity has start >= end");
    r.gold_entities.push_back(span);
  }
  return r;
}

inline void write_corpus(std::ostream& out, const Corpus& corpus) {
  for (const auto& r : corpus.resumes) out << resume_to_json(r).dump() << '\n';
}

inline Corpus read_corpus(std::istream& in) {
  Corpus c;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      throw ParseError(line_no, std::string("malformed record: ") + e.what());
    }
    Resume r = resume_from_json(j, line_no);
    if (!c.resumes.empty() && r.id <= c.resumes.back().id)
      throw SchemaError("line " + std::to_string(line_no) + ": ids must be strictly increasing");
    c.resumes.push_back(std::move(r));
  }
  return c;
}

inline void save_corpus(const Corpus& corpus, const std::string& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write corpus: " + path);
  write_corpus(out, corpus);
  if (!out) throw IoError("failed writing corpus: " + path);
}

inline Corpus load_corpus(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read corpus: " + path);
  return read_corpus(in);
}

inline std::string serialize_corpus(const Corpus& corpus) {
  std::ostringstream out;
  write_corpus(out, corpus);
  return out.str();
}

// ---------------------------------------------------------------------------

struct CorpusSplit {
  Corpus train;
  Corpus test;
};

// Seeded shuffle, cut at floor(n * fraction); each side is returned in id
// order.
inline CorpusSplit split_corpus(const Corpus& corpus, double train_fraction, std::uint64_t seed) {
  if (!(train_fraction > 0.0 && train_fraction < 1.0))
    throw ConfigError("train_fraction must lie in (0, 1)");
  std::vector<std::size_t> order(corpus.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  Rng rng(mix_seed(seed, 0x53504C4954ull));
  rng.shuffle(std::span<std::size_t>(order));
  // The small offset keeps products such as 100 * 0.29 on the intended side
  // of the floor.
  const auto cut =
      static_cast<std::size_t>(std::floor(static_cast<double>(corpus.size()) * train_fraction + 1e-9));
  std::vector<std::size_t> train_idx(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(cut));
  std::vector<std::size_t> test_idx(order.begin() + static_cast<std::ptrdiff_t>(cut), order.end());
  std::sort(train_idx.begin(), train_idx.end());
  std::sort(test_idx.begin(), test_idx.end());
  CorpusSplit s;
  s.train.generator = corpus.generator;
  s.test.generator = corpus.generator;
  for (auto i : train_idx) s.train.resumes.push_back(corpus.resumes[i]);
  for (auto i : test_idx) s.test.resumes.push_back(corpus.resumes[i]);
  return s;
}

}  // namespace pba
