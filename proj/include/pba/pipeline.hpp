#pragma once

// Config-driven experiment: generate -> anonymize -> embed -> train ->
// evaluate -> report. The non-anonymized baseline always runs; every
// configured backend x entity set is a further row, and each fairness
// variant repeats the whole grid with its suffix.
//
// Intermediates live in <output_dir>/cache under names carrying a hash of
// every setting that can change them, so reruns reuse what is still valid.

#include <array>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <initializer_list>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <json.hpp>

#include "pba/anonymizer.hpp"
#include "pba/corpus.hpp"
#include "pba/embedder.hpp"
#include "pba/error.hpp"
#include "pba/fairness.hpp"
#include "pba/gazetteer.hpp"
#include "pba/remote.hpp"
#include "pba/report.hpp"
#include "pba/scorer.hpp"

namespace pba {

// ---------------------------------------------------------------------------
// Fairness variants.

struct FairnessVariant {
  bool neutral_text = false;
  bool projection = false;

  bool operator==(const FairnessVariant&) const = default;
  bool enabled() const noexcept { return neutral_text || projection; }

  std::string name() const {
    if (neutral_text && projection) return "neutral+projection";
    if (neutral_text) return "neutral";
    if (projection) return "projection";
    return "off";
  }

  // Appended to the anonymizer column of the report.
  std::string suffix() const {
    if (neutral_text && projection) return "+bias-aware";
    if (!enabled()) return "";
    return "+" + name();
  }
};

inline FairnessVariant parse_fairness_variant(std::string_view s) {
  if (s == "neutral") return {true, false};
  if (s == "projection") return {false, true};
  if (s == "neutral+projection") return {true, true};
  throw ConfigError("unknown fairness variant '" + std::string(s) +
                    "' (expected neutral, projection or neutral+projection)");
}

// ---------------------------------------------------------------------------
// Stages.

enum class Stage { Generate, Anonymize, Embed, Train, Evaluate, Report };

inline constexpr std::array<Stage, 6> kAllStages = {Stage::Generate, Stage::Anonymize, Stage::Embed,
                                                    Stage::Train,    Stage::Evaluate,  Stage::Report};

inline constexpr std::string_view stage_name(Stage s) noexcept {
  constexpr std::array<std::string_view, 6> names = {"generate", "anonymize", "embed", "train", "evaluate", "report"};
  return names[static_cast<std::size_t>(s)];
}

// "all" or a comma-separated list of stage names.
inline std::set<Stage> parse_stages(std::string_view spec) {
  if (spec == "all") return {kAllStages.begin(), kAllStages.end()};
  std::set<Stage> out;
  std::size_t i = 0;
  while (i <= spec.size()) {
    const std::size_t comma = std::min(spec.find(',', i), spec.size());
    const auto item = spec.substr(i, comma - i);
    if (!item.empty()) {
      bool found = false;
      for (Stage s : kAllStages)
        if (stage_name(s) == item) {
          out.insert(s);
          found = true;
        }
      if (!found) throw ConfigError("unknown stage '" + std::string(item) + "'");
    }
    i = comma + 1;
  }
  if (out.empty()) throw ConfigError("no stages requested");
  return out;
}

// ---------------------------------------------------------------------------
// Configuration.

struct PipelineConfig {
  struct CorpusSection {
    std::size_t n = 24000;
    double bias_strength = 0.15;
    double train_fraction = 0.8;
  };
  struct AnonymizerSection {
    std::vector<std::string> backends = {"builtin"};
    std::vector<LabelSet> entity_sets = {{EntityLabel::LOC}, {EntityLabel::PER}};
    double heldout_fraction = 0.0;  // share of each name list hidden from the built-in gazetteer
    NerBackendConfig external;
  };
  struct TrainSection {
    std::size_t epochs = 50;
    std::size_t batch_size = 32;
    double dropout = 0.3;
    AdamWHyper optimizer;
    std::size_t hidden1 = 300;
    std::size_t hidden2 = 70;
    FusionMode fusion = FusionMode::All;
    bool freeze_occupancy_head = false;
    ScoreTarget score_target = ScoreTarget::Biased;
  };
  struct FairnessSection {
    std::vector<FairnessVariant> variants = {{true, false}, {false, true}, {true, true}};
    std::size_t projection_iterations = 1;
  };
  struct ReportSection {
    std::size_t k = 100;
    std::vector<ReportFormat> formats = {ReportFormat::Csv, ReportFormat::Json};
    std::string transformer = "hashbag";
  };

  std::uint64_t seed = 0;
  std::string output_dir = "pba-out";
  CorpusSection corpus;
  AnonymizerSection anonymizer;
  EmbedderConfig embedder;  // its seed is replaced by the global seed
  TrainSection train;
  FairnessSection fairness;
  ReportSection report;

  GeneratorConfig generator_config() const {
    GeneratorConfig g;
    g.n = corpus.n;
    g.seed = seed;
    g.bias_strength = corpus.bias_strength;
    return g;
  }

  EmbedderConfig embedder_config() const {
    EmbedderConfig e = embedder;
    e.seed = seed;
    return e;
  }

  Architecture architecture() const {
    Architecture a;
    a.input_dim = embedder.dim;
    a.hidden1 = train.hidden1;
    a.hidden2 = train.hidden2;
    a.fusion = train.fusion;
    return a;
  }

  TrainConfig train_config(Task task) const {
    TrainConfig t;
    t.task = task;
    t.epochs = train.epochs;
    t.batch_size = train.batch_size;
    t.dropout = train.dropout;
    t.seed = seed;
    t.freeze_occupancy_head = train.freeze_occupancy_head;
    t.optimizer = train.optimizer;
    return t;
  }

  NerBackendConfig external_backend() const { return anonymizer.external.with_env_override(kNerEndpointEnv); }

  bool uses_backend(std::string_view b) const {
    return std::find(anonymizer.backends.begin(), anonymizer.backends.end(), b) != anonymizer.backends.end();
  }

  void validate() const {
    generator_config().validate();
    if (!(corpus.train_fraction > 0.0 && corpus.train_fraction < 1.0))
      throw ConfigError("corpus.train_fraction must lie in (0, 1)");
    std::set<std::string> seen_backends;
    for (const auto& b : anonymizer.backends) {
      if (b != "builtin" && b != "external")
        throw ConfigError("anonymizer.backends: unknown backend '" + b + "' (expected builtin or external)");
      if (!seen_backends.insert(b).second) throw ConfigError("anonymizer.backends: duplicate '" + b + "'");
    }
    if (uses_backend("external")) external_backend().validate();
    if (anonymizer.entity_sets.empty()) throw ConfigError("anonymizer.entity_sets must not be empty");
    std::set<LabelSet> seen_sets;
    for (const auto& s : anonymizer.entity_sets) {
      if (s.empty()) throw ConfigError("anonymizer.entity_sets: empty entity set");
      if (!seen_sets.insert(s).second)
        throw ConfigError("anonymizer.entity_sets: duplicate '" + label_set_name(s) + "'");
    }
    if (!(anonymizer.heldout_fraction >= 0.0 && anonymizer.heldout_fraction < 1.0))
      throw ConfigError("anonymizer.heldout_fraction must lie in [0, 1)");
    embedder_config().validate();
    train_config(Task::Occupancy).validate();
    if (train.epochs < 1) throw ConfigError("train.epochs must be >= 1");
    if (train.hidden1 < 1 || train.hidden2 < 1) throw ConfigError("train hidden layer sizes must be >= 1");
    if (!(train.optimizer.learning_rate > 0.0)) throw ConfigError("train.learning_rate must be positive");
    if (!(train.optimizer.beta1 >= 0.0 && train.optimizer.beta1 < 1.0) ||
        !(train.optimizer.beta2 >= 0.0 && train.optimizer.beta2 < 1.0))
      throw ConfigError("train.beta1 and train.beta2 must lie in [0, 1)");
    if (!(train.optimizer.epsilon > 0.0)) throw ConfigError("train.epsilon must be positive");
    for (std::size_t i = 0; i < fairness.variants.size(); ++i)
      for (std::size_t j = 0; j < i; ++j)
        if (fairness.variants[i] == fairness.variants[j])
          throw ConfigError("fairness.variants: duplicate '" + fairness.variants[i].name() + "'");
    if (fairness.projection_iterations < 1) throw ConfigError("fairness.projection_iterations must be >= 1");
    if (report.k < 1) throw ConfigError("report.k must be >= 1");
    if (report.formats.empty()) throw ConfigError("report.formats must not be empty");
    if (report.transformer.empty() || report.transformer.find(',') != std::string::npos)
      throw ConfigError("report.transformer must be a non-empty name without commas");
  }

  // Every setting that can change a number; the output directory is left
  // out so that relocating a run does not change its fingerprint.
  nlohmann::ordered_json to_json(bool include_output_dir = true) const {
    nlohmann::ordered_json j;
    j["seed"] = seed;
    if (include_output_dir) j["output_dir"] = output_dir;
    j["corpus"] = {{"n", corpus.n}, {"bias_strength", corpus.bias_strength}, {"train_fraction", corpus.train_fraction}};
    auto sets = nlohmann::ordered_json::array();
    for (const auto& s : anonymizer.entity_sets) sets.push_back(label_set_name(s));
    const auto ext = external_backend();
    j["anonymizer"] = {{"backends", anonymizer.backends},
                       {"entity_sets", sets},
                       {"heldout_fraction", anonymizer.heldout_fraction},
                       {"external",
                        {{"endpoint", anonymizer.external.endpoint},
                         {"timeout_seconds", ext.timeout_seconds},
                         {"retries", ext.retries}}}};
    j["embedder"] = {{"dim", embedder.dim},
                     {"vocab_buckets", embedder.vocab_buckets},
                     {"max_len", embedder.max_len},
                     {"lowercase", embedder.lowercase}};
    j["train"] = {{"epochs", train.epochs},
                  {"batch_size", train.batch_size},
                  {"dropout", train.dropout},
                  {"learning_rate", train.optimizer.learning_rate},
                  {"beta1", train.optimizer.beta1},
                  {"beta2", train.optimizer.beta2},
                  {"epsilon", train.optimizer.epsilon},
                  {"weight_decay", train.optimizer.weight_decay},
                  {"hidden1", train.hidden1},
                  {"hidden2", train.hidden2},
                  {"fusion", std::string(fusion_name(train.fusion))},
                  {"freeze_occupancy_head", train.freeze_occupancy_head},
                  {"score_target", train.score_target == ScoreTarget::Biased ? "biased" : "blind"}};
    auto variants = nlohmann::ordered_json::array();
    for (const auto& v : fairness.variants) variants.push_back(v.name());
    j["fairness"] = {{"variants", variants}, {"projection_iterations", fairness.projection_iterations}};
    auto formats = nlohmann::ordered_json::array();
    for (auto f : report.formats) formats.push_back(f == ReportFormat::Csv ? "csv" : "json");
    j["report"] = {{"k", report.k}, {"formats", formats}, {"transformer", report.transformer}};
    return j;
  }

  // Fingerprint input: the effective endpoint counts, the output directory
  // does not.
  nlohmann::ordered_json fingerprint_json() const {
    auto j = to_json(false);
    j["anonymizer"]["external"]["endpoint"] = uses_backend("external") ? external_backend().endpoint : "";
    return j;
  }
};

namespace detail {

// Reads keys of one JSON object, rejecting unknown keys and wrong types.
class ConfigReader {
 public:
  ConfigReader(const nlohmann::json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError(where() + " must be an object");
  }

  const nlohmann::json* get(const std::string& key) {
    seen_.insert(key);
    auto it = j_.find(key);
    return it == j_.end() ? nullptr : &*it;
  }

  void read(const std::string& key, std::uint64_t& out) {
    if (auto* v = get(key)) {
      if (!v->is_number_unsigned()) throw ConfigError(where(key) + " must be a non-negative integer");
      out = v->get<std::uint64_t>();
    }
  }
  void read(const std::string& key, int& out) {
    if (auto* v = get(key)) {
      if (!v->is_number_integer()) throw ConfigError(where(key) + " must be an integer");
      out = v->get<int>();
    }
  }
  void read(const std::string& key, double& out) {
    if (auto* v = get(key)) {
      if (!v->is_number()) throw ConfigError(where(key) + " must be a number");
      out = v->get<double>();
    }
  }
  void read(const std::string& key, bool& out) {
    if (auto* v = get(key)) {
      if (!v->is_boolean()) throw ConfigError(where(key) + " must be true or false");
      out = v->get<bool>();
    }
  }
  void read(const std::string& key, std::string& out) {
    if (auto* v = get(key)) {
      if (!v->is_string()) throw ConfigError(where(key) + " must be a string");
      out = v->get<std::string>();
    }
  }
  std::optional<std::vector<std::string>> strings(const std::string& key) {
    auto* v = get(key);
    if (v == nullptr) return std::nullopt;
    if (!v->is_array()) throw ConfigError(where(key) + " must be a list of strings");
    std::vector<std::string> out;
    for (const auto& e : *v) {
      if (!e.is_string()) throw ConfigError(where(key) + " must be a list of strings");
      out.push_back(e.get<std::string>());
    }
    return out;
  }

  // Call after every known key was read.
  void finish() const {
    std::string unknown;
    for (const auto& [k, v] : j_.items())
      if (!seen_.count(k)) unknown += (unknown.empty() ? "" : ", ") + where(k);
    if (!unknown.empty()) throw ConfigError("unknown config key: " + unknown);
  }

  std::string where(const std::string& key = "") const {
    if (key.empty()) return path_.empty() ? "config" : path_;
    return path_.empty() ? key : path_ + "." + key;
  }

 private:
  const nlohmann::json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

}  // namespace detail

inline PipelineConfig pipeline_config_from_json(const nlohmann::json& j) {
  PipelineConfig c;
  detail::ConfigReader top(j, "");
  top.read("seed", c.seed);
  top.read("output_dir", c.output_dir);

  if (auto* s = top.get("corpus")) {
    detail::ConfigReader r(*s, "corpus");
    r.read("n", c.corpus.n);
    r.read("bias_strength", c.corpus.bias_strength);
    r.read("train_fraction", c.corpus.train_fraction);
    r.finish();
  }
  if (auto* s = top.get("anonymizer")) {
    detail::ConfigReader r(*s, "anonymizer");
    if (auto b = r.strings("backends")) c.anonymizer.backends = *b;
    if (auto sets = r.strings("entity_sets")) {
      c.anonymizer.entity_sets.clear();
      for (auto name : *sets) {
        for (auto& ch : name)
          if (ch == '+') ch = ',';
        c.anonymizer.entity_sets.push_back(parse_label_set(name));
      }
    }
    r.read("heldout_fraction", c.anonymizer.heldout_fraction);
    if (auto* e = r.get("external")) {
      detail::ConfigReader x(*e, "anonymizer.external");
      x.read("endpoint", c.anonymizer.external.endpoint);
      x.read("timeout_seconds", c.anonymizer.external.timeout_seconds);
      x.read("retries", c.anonymizer.external.retries);
      x.finish();
    }
    r.finish();
  }
  if (auto* s = top.get("embedder")) {
    detail::ConfigReader r(*s, "embedder");
    r.read("dim", c.embedder.dim);
    r.read("vocab_buckets", c.embedder.vocab_buckets);
    r.read("max_len", c.embedder.max_len);
    r.read("lowercase", c.embedder.lowercase);
    r.finish();
  }
  if (auto* s = top.get("train")) {
    detail::ConfigReader r(*s, "train");
    r.read("epochs", c.train.epochs);
    r.read("batch_size", c.train.batch_size);
    r.read("dropout", c.train.dropout);
    r.read("learning_rate", c.train.optimizer.learning_rate);
    r.read("beta1", c.train.optimizer.beta1);
    r.read("beta2", c.train.optimizer.beta2);
    r.read("epsilon", c.train.optimizer.epsilon);
    r.read("weight_decay", c.train.optimizer.weight_decay);
    r.read("hidden1", c.train.hidden1);
    r.read("hidden2", c.train.hidden2);
    std::string fusion(fusion_name(c.train.fusion));
    r.read("fusion", fusion);
    if (fusion == "g") c.train.fusion = FusionMode::Output;
    else if (fusion == "h2+g") c.train.fusion = FusionMode::LastTwo;
    else if (fusion == "h1+h2+g") c.train.fusion = FusionMode::All;
    else throw ConfigError("train.fusion must be one of g, h2+g, h1+h2+g");
    r.read("freeze_occupancy_head", c.train.freeze_occupancy_head);
    std::string target = "biased";
    r.read("score_target", target);
    if (target == "biased") c.train.score_target = ScoreTarget::Biased;
    else if (target == "blind") c.train.score_target = ScoreTarget::Blind;
    else throw ConfigError("train.score_target must be biased or blind");
    r.finish();
  }
  if (auto* s = top.get("fairness")) {
    detail::ConfigReader r(*s, "fairness");
    if (auto v = r.strings("variants")) {
      c.fairness.variants.clear();
      for (const auto& name : *v) c.fairness.variants.push_back(parse_fairness_variant(name));
    }
    r.read("projection_iterations", c.fairness.projection_iterations);
    r.finish();
  }
  if (auto* s = top.get("report")) {
    detail::ConfigReader r(*s, "report");
    r.read("k", c.report.k);
    if (auto f = r.strings("formats")) {
      c.report.formats.clear();
      for (const auto& name : *f) {
        if (name == "csv") c.report.formats.push_back(ReportFormat::Csv);
        else if (name == "json") c.report.formats.push_back(ReportFormat::Json);
        else throw ConfigError("report.formats: unknown format '" + name + "'");
      }
    }
    r.read("transformer", c.report.transformer);
    r.finish();
  }
  top.finish();
  c.validate();
  return c;
}

inline PipelineConfig load_pipeline_config(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read config: " + path);
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(path + ": " + e.what());
  }
  return pipeline_config_from_json(j);
}

// ---------------------------------------------------------------------------
// Experiment building blocks, also usable without the file-backed pipeline.

struct ExperimentData {
  Dataset train;
  Dataset test;
};

// Optional gender-direction removal is fitted on the training split only
// and then applied to both splits.
inline ExperimentData build_datasets(const CorpusSplit& split, std::vector<EmbeddingVector> train_embeddings,
                                     std::vector<EmbeddingVector> test_embeddings, bool projection,
                                     std::size_t projection_iterations, ScoreTarget target) {
  ExperimentData d{make_dataset(split.train, std::move(train_embeddings), target),
                   make_dataset(split.test, std::move(test_embeddings), target)};
  if (projection) {
    const auto directions = remove_gender_directions(d.train.features, d.train.genders, projection_iterations);
    for (const auto& dir : directions) debias_all(d.test.features, dir);
  }
  return d;
}

inline TrainResult train_occupancy_model(const ExperimentData& data, const TrainConfig& config,
                                         const Architecture& arch) {
  TrainConfig c = config;
  c.task = Task::Occupancy;
  return train(data.train, c, init_params(arch, config.seed), &data.test);
}

// The scoring model starts from the trained occupancy MLP and a freshly
// initialized scoring head.
inline TrainResult train_scoring_model(const ExperimentData& data, const TrainConfig& config,
                                       const ModelParams& occupancy_params) {
  TrainConfig c = config;
  c.task = Task::Scoring;
  ModelParams start = occupancy_params;
  start.score = init_params(occupancy_params.arch, config.seed).score;
  return train(data.train, c, std::move(start), &data.test);
}

// ---------------------------------------------------------------------------
// File-backed pipeline.

struct RunOptions {
  std::set<Stage> stages = {kAllStages.begin(), kAllStages.end()};
  bool use_cache = true;
  std::function<void(const std::string&)> log;
};

struct RunSummary {
  std::filesystem::path report_dir;
  std::vector<std::filesystem::path> report_files;
  std::optional<ExperimentResults> results;
};

namespace detail {

inline std::string hash_hex(const nlohmann::ordered_json& j) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a64(j.dump())));
  return buf;
}

// Text fed to the embedder: a (possibly masked) biography field.
struct TextUnit {
  std::string backend;  // "none" for the unmasked corpus
  LabelSet labels;
  BioField field = BioField::Raw;

  bool masked() const { return backend != "none"; }
  std::string key() const {
    return backend + (masked() ? "__" + label_set_name(labels) : "") + (field == BioField::Raw ? "__raw" : "__neutral");
  }
  auto operator<=>(const TextUnit&) const = default;
};

struct ModelUnit {
  TextUnit text;
  bool projection = false;

  std::string key() const { return text.key() + (projection ? "__proj" : ""); }
  auto operator<=>(const ModelUnit&) const = default;
};

struct Cell {
  GridKey key;
  ModelUnit unit;
  std::string curve_stem;  // shared by the entity columns of the baseline
};

class PipelineRunner {
 public:
  PipelineRunner(PipelineConfig config, RunOptions options)
      : config_(std::move(config)), options_(std::move(options)), root_(config_.output_dir) {
    config_.validate();
    build_cells();
  }

  RunSummary run() {
    std::error_code ec;
    std::filesystem::create_directories(root_ / "cache", ec);
    if (ec) throw IoError("cannot create output directory " + root_.string() + ": " + ec.message());

    stage(Stage::Generate, [&] { ensure_corpus(); });
    stage(Stage::Anonymize, [&] {
      for (const auto& t : text_units_)
        if (t.masked()) ensure_masked(t);
    });
    stage(Stage::Embed, [&] {
      for (const auto& t : text_units_) ensure_embeddings(t);
    });
    stage(Stage::Train, [&] {
      for (const auto& m : model_units_) {
        ensure_model(m, Task::Occupancy);
        ensure_model(m, Task::Scoring);
      }
    });
    RunSummary summary;
    stage(Stage::Evaluate, [&] {
      if (requested(Stage::Evaluate)) summary.results = evaluate();
    });
    stage(Stage::Report, [&] {
      if (!requested(Stage::Report)) return;
      ExperimentResults results = summary.results ? *summary.results : load_results();
      summary.report_dir = root_ / "report";
      log("report: writing " + summary.report_dir.string());
      summary.report_files = emit_report(results, summary.report_dir, config_.report.formats);
      summary.results = std::move(results);
    });
    return summary;
  }

  const std::vector<Cell>& cells() const { return cells_; }

 private:
  PipelineConfig config_;
  RunOptions options_;
  std::filesystem::path root_;
  std::vector<Cell> cells_;
  std::vector<TextUnit> text_units_;
  std::vector<ModelUnit> model_units_;
  std::optional<Corpus> corpus_;
  std::optional<CorpusSplit> split_;

  void log(const std::string& msg) const {
    if (options_.log) options_.log(msg);
  }

  bool requested(Stage s) const { return options_.stages.count(s) > 0; }

  // Upstream stages run (or load their persisted outputs) only when a later
  // computing stage needs them; the report stage reads the results file.
  bool active(Stage s) const {
    for (Stage r : options_.stages)
      if (r != Stage::Report && s <= r) return true;
    return s == Stage::Report && requested(Stage::Report);
  }

  template <class F>
  void stage(Stage s, F&& body) {
    if (!active(s)) return;
    try {
      body();
    } catch (const StageError&) {
      throw;
    } catch (const std::exception& e) {
      throw StageError(std::string(stage_name(s)), e.what());
    }
  }

  // True when the artifacts at `paths` must be computed; false to load them.
  bool must_compute(Stage s, std::initializer_list<std::filesystem::path> paths) const {
    for (const auto& p : paths) {
      if (std::filesystem::exists(p)) continue;
      if (requested(s)) return true;
      throw StageError(std::string(stage_name(s)),
                       "no persisted output at " + p.string() + "; include this stage in --stages");
    }
    return requested(s) && !options_.use_cache;
  }

  std::filesystem::path cache(const std::string& name) const { return root_ / "cache" / name; }

  void build_cells() {
    std::vector<FairnessVariant> variants = {FairnessVariant{}};
    variants.insert(variants.end(), config_.fairness.variants.begin(), config_.fairness.variants.end());
    std::vector<std::string> rows = {"none"};
    rows.insert(rows.end(), config_.anonymizer.backends.begin(), config_.anonymizer.backends.end());
    std::set<TextUnit> texts;
    std::set<ModelUnit> models;
    for (const auto& v : variants) {
      for (const auto& row : rows) {
        for (const auto& labels : config_.anonymizer.entity_sets) {
          const std::string entity = label_set_name(labels);
          TextUnit t{row, row == "none" ? LabelSet{} : labels, v.neutral_text ? BioField::Neutral : BioField::Raw};
          ModelUnit m{t, v.projection};
          const std::string anonymizer = row + v.suffix();
          cells_.push_back({{anonymizer, entity}, m, anonymizer + (t.masked() ? "__" + entity : "")});
          if (texts.insert(t).second) text_units_.push_back(t);
          if (models.insert(m).second) model_units_.push_back(m);
        }
      }
    }
  }

  // -- tags: hashes of everything upstream of an artifact

  std::string corpus_tag() const {
    return hash_hex({{"seed", config_.seed}, {"corpus", config_.to_json()["corpus"]}});
  }

  std::string text_tag(const TextUnit& t) const {
    nlohmann::ordered_json j = {{"corpus", corpus_tag()}, {"unit", t.key()}};
    if (t.masked()) {
      j["heldout_fraction"] = config_.anonymizer.heldout_fraction;
      if (t.backend == "external") j["endpoint"] = config_.external_backend().endpoint;
    }
    return hash_hex(j);
  }

  std::string embed_tag(const TextUnit& t) const {
    return hash_hex({{"text", text_tag(t)}, {"embedder", config_.to_json()["embedder"]}, {"seed", config_.seed}});
  }

  std::string model_tag(const ModelUnit& m, Task task) const {
    const auto cfg = config_.to_json();
    return hash_hex({{"embeddings", embed_tag(m.text)},
                     {"train", cfg["train"]},
                     {"train_fraction", config_.corpus.train_fraction},
                     {"projection", m.projection},
                     {"projection_iterations", m.projection ? config_.fairness.projection_iterations : 0},
                     {"task", std::string(task_name(task))}});
  }

  std::filesystem::path corpus_path() const { return cache("corpus-" + corpus_tag() + ".jsonl"); }
  std::filesystem::path masked_path(const TextUnit& t) const {
    return cache("masked-" + t.key() + "-" + text_tag(t) + ".jsonl");
  }
  std::filesystem::path stats_path(const TextUnit& t) const {
    return cache("masked-" + t.key() + "-" + text_tag(t) + ".stats.json");
  }
  std::filesystem::path embed_path(const TextUnit& t) const {
    return cache("emb-" + t.key() + "-" + embed_tag(t) + ".bin");
  }
  std::filesystem::path model_path(const ModelUnit& m, Task task) const {
    return cache("model-" + std::string(task_name(task)) + "-" + m.key() + "-" + model_tag(m, task) + ".bin");
  }
  std::filesystem::path curve_path(const ModelUnit& m, Task task) const {
    return cache("curve-" + std::string(task_name(task)) + "-" + m.key() + "-" + model_tag(m, task) + ".csv");
  }
  std::filesystem::path results_path() const { return root_ / "results.json"; }

  // -- generate

  const Corpus& ensure_corpus() {
    if (corpus_) return *corpus_;
    const auto path = corpus_path();
    if (must_compute(Stage::Generate, {path})) {
      log("generate: " + std::to_string(config_.corpus.n) + " resumes -> " + path.string());
      corpus_ = generate_corpus(config_.generator_config());
      save_corpus(*corpus_, path.string());
    } else {
      corpus_ = load_corpus(path.string());
    }
    return *corpus_;
  }

  const CorpusSplit& split() {
    if (!split_) split_ = split_corpus(ensure_corpus(), config_.corpus.train_fraction, config_.seed);
    return *split_;
  }

  // -- anonymize

  std::unique_ptr<Tagger> make_tagger(const std::string& backend) const {
    if (backend == "builtin")
      return std::make_unique<BuiltinTagger>(Gazetteer::with_heldout(config_.anonymizer.heldout_fraction));
    return std::make_unique<ExternalTagger>(config_.external_backend());
  }

  void ensure_masked(const TextUnit& t) {
    const auto path = masked_path(t);
    if (!must_compute(Stage::Anonymize, {path, stats_path(t)})) return;
    log("anonymize: " + t.key() + " -> " + path.string());
    const auto tagger = make_tagger(t.backend);
    const auto masked = anonymize_corpus(ensure_corpus(), *tagger, t.labels, t.field);
    nlohmann::ordered_json stats = detail::stats_to_json(masked.stats);
    save_corpus(masked.corpus, path.string());
    detail::write_file(stats_path(t), stats.dump(2) + "\n");
  }

  Corpus text_corpus(const TextUnit& t) {
    if (!t.masked()) return ensure_corpus();
    return load_corpus(masked_path(t).string());
  }

  AnonymizationStats load_stats(const TextUnit& t) const {
    std::ifstream in(stats_path(t), std::ios::binary);
    if (!in) throw IoError("cannot read " + stats_path(t).string());
    const auto s = nlohmann::json::parse(in);
    AnonymizationStats st;
    st.documents = s.at("documents").get<std::size_t>();
    st.total_words = s.at("total_words").get<std::size_t>();
    st.masked_spans = s.at("masked_spans").get<std::size_t>();
    st.masked_words = s.at("masked_words").get<std::size_t>();
    st.masked_fraction = s.at("masked_fraction").get<double>();
    st.spans_by_label = s.at("spans_by_label").get<std::map<std::string, std::size_t>>();
    return st;
  }

  // -- embed

  void ensure_embeddings(const TextUnit& t) {
    const auto path = embed_path(t);
    if (!must_compute(Stage::Embed, {path})) return;
    log("embed: " + t.key() + " -> " + path.string());
    const Corpus text = text_corpus(t);
    const EmbedderConfig ec = config_.embedder_config();
    const EmbeddingTable table(ec);
    save_embedding_cache(make_embedding_cache(text, embed_corpus(text, t.field, table), ec), path.string());
  }

  ExperimentData datasets(const ModelUnit& m) {
    const auto cache_file = load_embedding_cache(embed_path(m.text).string());
    if (cache_file.dim != config_.embedder.dim)
      throw AlignmentError(embed_path(m.text).string() + ": cached dimension " + std::to_string(cache_file.dim) +
                           " differs from the configured " + std::to_string(config_.embedder.dim));
    const auto& s = split();
    return build_datasets(s, align_embeddings(cache_file, s.train), align_embeddings(cache_file, s.test),
                          m.projection, config_.fairness.projection_iterations, config_.train.score_target);
  }

  // -- train

  void ensure_model(const ModelUnit& m, Task task) {
    const auto path = model_path(m, task);
    const auto curve = curve_path(m, task);
    if (!must_compute(Stage::Train, {path, curve})) return;
    log("train: " + std::string(task_name(task)) + " " + m.key());
    const ExperimentData data = datasets(m);
    const TrainConfig tc = config_.train_config(task);
    TrainResult result;
    if (task == Task::Occupancy) {
      result = train_occupancy_model(data, tc, config_.architecture());
    } else {
      ensure_model(m, Task::Occupancy);
      result = train_scoring_model(data, tc, load_snapshot(model_path(m, Task::Occupancy).string()).params);
    }
    save_snapshot({result.params, config_.seed, config_.train.optimizer.weight_decay}, path.string());
    save_curve_csv(result.curve, curve.string());
  }

  // -- evaluate

  ExperimentResults evaluate() {
    ExperimentResults r;
    r.transformer = config_.report.transformer;
    r.config = config_.fingerprint_json();
    std::map<ModelUnit, std::pair<SectorAccuracy, ShortlistReport>> computed;
    for (const auto& m : model_units_) {
      log("evaluate: " + m.key());
      const ExperimentData data = datasets(m);
      const auto occupancy = load_snapshot(model_path(m, Task::Occupancy).string());
      const auto scoring = load_snapshot(model_path(m, Task::Scoring).string());
      computed[m] = {sector_accuracy(data.test, occupancy.params),
                     top_k_shortlist(split().test, predict_scores(data.test, scoring.params), config_.report.k)};
    }
    for (const auto& cell : cells_) {
      r.expected_cells.push_back(cell.key);
      r.occupancy[cell.key] = computed.at(cell.unit).first;
      r.shortlists[cell.key] = computed.at(cell.unit).second;
      if (cell.unit.text.masked()) r.anonymization[cell.key] = load_stats(cell.unit.text);
      for (Task task : {Task::Occupancy, Task::Scoring}) {
        const std::string stem = std::string(task_name(task)) + "__" + cell.curve_stem;
        if (!r.curves.count(stem)) r.curves[stem] = load_curve_csv(curve_path(cell.unit, task).string());
      }
    }
    detail::write_file(results_path(), results_to_json(r).dump(2) + "\n");
    return r;
  }

  ExperimentResults load_results() const {
    std::ifstream in(results_path(), std::ios::binary);
    if (!in)
      throw StageError("evaluate", "no persisted output at " + results_path().string() +
                                       "; include this stage in --stages");
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(in);
    } catch (const nlohmann::json::parse_error& e) {
      throw SchemaError(results_path().string() + ": " + e.what());
    }
    auto r = results_from_json(j);
    if (config_fingerprint(r.config) != config_fingerprint(config_.fingerprint_json()))
      throw StageError("evaluate", results_path().string() + " was produced by a different configuration");
    return r;
  }
};

}  // namespace detail

inline RunSummary run_pipeline(const PipelineConfig& config, const RunOptions& options = {}) {
  return detail::PipelineRunner(config, options).run();
}

}  // namespace pba
