// Command-line front end: one subcommand per pipeline stage plus `run`.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "pba/pba.hpp"

namespace {

using namespace pba;

BioField parse_field(const std::string& s) {
  if (s == "raw" || s == "bio_raw") return BioField::Raw;
  if (s == "neutral" || s == "bio_neutral") return BioField::Neutral;
  throw ConfigError("unknown field '" + s + "' (expected raw or neutral)");
}

Task parse_task(const std::string& s) {
  if (s == "occupancy") return Task::Occupancy;
  if (s == "scoring") return Task::Scoring;
  throw ConfigError("unknown task '" + s + "' (expected occupancy or scoring)");
}

FusionMode parse_fusion(const std::string& s) {
  if (s == "g") return FusionMode::Output;
  if (s == "h2+g") return FusionMode::LastTwo;
  if (s == "h1+h2+g") return FusionMode::All;
  throw ConfigError("unknown fusion '" + s + "' (expected g, h2+g or h1+h2+g)");
}

void write_text(const std::string& path, const std::string& text) {
  if (path.empty() || path == "-") {
    std::cout << text;
    return;
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out || !(out << text)) throw IoError("cannot write " + path);
}

struct GenerateArgs {
  std::size_t n = 24000;
  std::uint64_t seed = 0;
  double bias_strength = 0.15;
  std::string out;
};

struct AnonymizeArgs {
  std::string in, out, stats_out;
  std::string entities = "per,loc";
  std::string backend = "builtin";
  std::string field = "raw";
  double heldout_fraction = 0.0;
  std::string persons_file, locations_file;
  std::string endpoint;
  double timeout = 30.0;
  int retries = 2;
};

struct EmbedArgs {
  std::string in, out;
  std::string field = "raw";
  EmbedderConfig config;
  std::string backend = "builtin";
  std::string endpoint;
};

struct TrainArgs {
  std::string corpus, embeddings, snapshot_out, curve_out, init_from;
  std::string task = "occupancy";
  std::size_t epochs = 50;
  std::size_t batch_size = 32;
  double dropout = 0.3;
  std::uint64_t seed = 0;
  double lr = 1e-3;
  double weight_decay = 0.01;
  double train_fraction = 0.8;
  std::size_t hidden1 = 300;
  std::size_t hidden2 = 70;
  std::string fusion = "h1+h2+g";
  bool freeze_occupancy_head = false;
  std::string score_target = "biased";
  bool projection = false;
  std::size_t projection_iterations = 1;
};

struct EvaluateArgs {
  std::string corpus, embeddings, snapshot, out;
  std::string task = "occupancy";
  std::uint64_t seed = 0;
  double train_fraction = 0.8;
  bool projection = false;
  std::size_t projection_iterations = 1;
  std::size_t k = 100;
};

struct ReportArgs {
  std::string results, out;
  std::string formats = "csv,json";
};

struct RunArgs {
  std::string config_path;
  std::string stages = "all";
  std::optional<std::uint64_t> seed;
  std::string out;
  bool no_cache = false;
  bool quiet = false;
};

int cmd_generate(const GenerateArgs& a) {
  GeneratorConfig g;
  g.n = a.n;
  g.seed = a.seed;
  g.bias_strength = a.bias_strength;
  save_corpus(generate_corpus(g), a.out);
  return 0;
}

int cmd_anonymize(const AnonymizeArgs& a) {
  const BioField field = parse_field(a.field);
  const LabelSet labels = parse_label_set(a.entities);
  std::unique_ptr<Tagger> tagger;
  if (a.backend == "builtin") {
    Gazetteer gaz = Gazetteer::with_heldout(a.heldout_fraction);
    if (!a.persons_file.empty()) gaz.persons = load_gazetteer_file(a.persons_file);
    if (!a.locations_file.empty()) gaz.locations = load_gazetteer_file(a.locations_file);
    tagger = std::make_unique<BuiltinTagger>(std::move(gaz));
  } else if (a.backend == "external") {
    NerBackendConfig cfg;
    cfg.endpoint = a.endpoint;
    cfg.timeout_seconds = a.timeout;
    cfg.retries = a.retries;
    tagger = std::make_unique<ExternalTagger>(cfg.with_env_override(kNerEndpointEnv));
  } else {
    throw ConfigError("unknown backend '" + a.backend + "' (expected builtin or external)");
  }
  const Corpus corpus = load_corpus(a.in);
  const auto masked = anonymize_corpus(corpus, *tagger, labels, field);
  save_corpus(masked.corpus, a.out);
  const auto& st = masked.stats;
  std::fprintf(stderr, "masked %zu spans, %zu of %zu words (%.4f)\n", st.masked_spans, st.masked_words,
               st.total_words, st.masked_fraction);
  if (!a.stats_out.empty()) write_text(a.stats_out, detail::stats_to_json(st).dump(2) + "\n");
  return 0;
}

int cmd_embed(const EmbedArgs& a) {
  const BioField field = parse_field(a.field);
  const Corpus corpus = load_corpus(a.in);
  std::vector<EmbeddingVector> vectors;
  if (a.backend == "builtin") {
    vectors = embed_corpus(corpus, field, EmbeddingTable(a.config));
  } else if (a.backend == "external") {
    ServiceConfig cfg;
    cfg.endpoint = a.endpoint;
    cfg = cfg.with_env_override(kEmbedEndpointEnv);
    cfg.validate();
    for (const auto& r : corpus.resumes) {
      try {
        vectors.push_back(embed_external(r.bio(field), a.config.dim, cfg));
      } catch (const Error& e) {
        throw Error("resume " + std::to_string(r.id) + ": " + e.what());
      }
    }
  } else {
    throw ConfigError("unknown backend '" + a.backend + "' (expected builtin or external)");
  }
  save_embedding_cache(make_embedding_cache(corpus, std::move(vectors), a.config), a.out);
  return 0;
}

ExperimentData load_experiment(const std::string& corpus_path, const std::string& embeddings_path,
                               double train_fraction, std::uint64_t seed, bool projection,
                               std::size_t iterations, ScoreTarget target) {
  const Corpus corpus = load_corpus(corpus_path);
  const auto cache = load_embedding_cache(embeddings_path);
  const auto split = split_corpus(corpus, train_fraction, seed);
  return build_datasets(split, align_embeddings(cache, split.train), align_embeddings(cache, split.test), projection,
                        iterations, target);
}

int cmd_train(const TrainArgs& a) {
  const Task task = parse_task(a.task);
  ScoreTarget target = ScoreTarget::Biased;
  if (a.score_target == "blind") target = ScoreTarget::Blind;
  else if (a.score_target != "biased") throw ConfigError("score target must be biased or blind");
  const auto data =
      load_experiment(a.corpus, a.embeddings, a.train_fraction, a.seed, a.projection, a.projection_iterations, target);

  TrainConfig tc;
  tc.task = task;
  tc.epochs = a.epochs;
  tc.batch_size = a.batch_size;
  tc.dropout = a.dropout;
  tc.seed = a.seed;
  tc.freeze_occupancy_head = a.freeze_occupancy_head;
  tc.optimizer.learning_rate = a.lr;
  tc.optimizer.weight_decay = a.weight_decay;

  Architecture arch;
  arch.input_dim = data.train.features.front().size();
  arch.hidden1 = a.hidden1;
  arch.hidden2 = a.hidden2;
  arch.fusion = parse_fusion(a.fusion);

  TrainResult result;
  if (task == Task::Scoring && !a.init_from.empty()) {
    const auto init = load_snapshot(a.init_from);
    if (!(init.params.arch == arch)) throw ShapeError(a.init_from + ": architecture differs from the requested one");
    result = train_scoring_model(data, tc, init.params);
  } else if (task == Task::Scoring) {
    result = train(data.train, tc, init_params(arch, a.seed), &data.test);
  } else {
    result = train_occupancy_model(data, tc, arch);
  }
  if (!a.snapshot_out.empty()) save_snapshot({result.params, a.seed, a.weight_decay}, a.snapshot_out);
  if (!a.curve_out.empty()) save_curve_csv(result.curve, a.curve_out);
  for (const auto& p : result.curve.points)
    if (p.epoch == a.epochs && p.metric == (task == Task::Occupancy ? "mean_accuracy" : "rmse"))
      std::fprintf(stderr, "epoch %zu %s %s %.4f\n", p.epoch, p.split.c_str(), p.metric.c_str(), p.value);
  return 0;
}

int cmd_evaluate(const EvaluateArgs& a) {
  const Task task = parse_task(a.task);
  const auto snap = load_snapshot(a.snapshot);
  const auto data = load_experiment(a.corpus, a.embeddings, a.train_fraction, a.seed, a.projection,
                                    a.projection_iterations, ScoreTarget::Biased);
  nlohmann::ordered_json out;
  if (task == Task::Occupancy) {
    const auto acc = sector_accuracy(data.test, snap.params);
    for (Group g : kAllGroups) {
      const auto& v = acc[group_index(g)];
      out["accuracy"][std::string(group_name(g))] = v ? nlohmann::ordered_json(*v) : nlohmann::ordered_json(nullptr);
    }
    out["mean_accuracy"] = mean_sector_accuracy(acc);
  } else {
    const Corpus corpus = load_corpus(a.corpus);
    const auto split = split_corpus(corpus, a.train_fraction, a.seed);
    out = shortlist_to_json(top_k_shortlist(split.test, predict_scores(data.test, snap.params), a.k));
  }
  write_text(a.out, out.dump(2) + "\n");
  return 0;
}

int cmd_report(const ReportArgs& a) {
  std::ifstream in(a.results, std::ios::binary);
  if (!in) throw IoError("cannot read " + a.results);
  std::vector<ReportFormat> formats;
  for (const auto& f : {std::string("csv"), std::string("json")})
    if (a.formats.find(f) != std::string::npos) formats.push_back(f == "csv" ? ReportFormat::Csv : ReportFormat::Json);
  if (formats.empty()) throw ConfigError("--formats must name csv and/or json");
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw SchemaError(a.results + ": " + e.what());
  }
  for (const auto& p : emit_report(results_from_json(j), a.out, formats)) std::cout << (a.out / p).string() << "\n";
  return 0;
}

int cmd_run(const RunArgs& a) {
  PipelineConfig config = a.config_path.empty() ? PipelineConfig{} : load_pipeline_config(a.config_path);
  if (a.seed) config.seed = *a.seed;
  if (!a.out.empty()) config.output_dir = a.out;
  config.validate();
  RunOptions options;
  options.stages = parse_stages(a.stages);
  options.use_cache = !a.no_cache;
  if (!a.quiet) options.log = [](const std::string& m) { std::fprintf(stderr, "%s\n", m.c_str()); };
  const auto summary = run_pipeline(config, options);
  for (const auto& p : summary.report_files) std::cout << (summary.report_dir / p).string() << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Resume-screening bias experiments: synthetic corpus, anonymization, embeddings, scoring, fairness."};
  app.option_defaults()->always_capture_default();
  app.require_subcommand(1);
  int status = 0;

  GenerateArgs gen;
  auto* generate = app.add_subcommand("generate", "Generate a synthetic resume corpus (JSON lines)");
  generate->add_option("--n", gen.n, "Number of resumes");
  generate->add_option("--seed", gen.seed, "Generator seed");
  generate->add_option("--bias-strength", gen.bias_strength, "Score penalty applied to female candidates");
  generate->add_option("--out", gen.out, "Output corpus file")->required();
  generate->callback([&] { status = cmd_generate(gen); });

  AnonymizeArgs an;
  auto* anonymize = app.add_subcommand("anonymize", "Mask named entities in a corpus");
  anonymize->add_option("--in", an.in, "Input corpus file")->required();
  anonymize->add_option("--out", an.out, "Output corpus file")->required();
  anonymize->add_option("--entities", an.entities, "Entity labels to mask (comma-separated: per, loc)");
  anonymize->add_option("--backend", an.backend, "Tagger: builtin or external");
  anonymize->add_option("--field", an.field, "Biography field: raw or neutral");
  anonymize->add_option("--heldout-fraction", an.heldout_fraction, "Share of each name list hidden from the gazetteer");
  anonymize->add_option("--persons-file", an.persons_file, "Person gazetteer, one entry per line");
  anonymize->add_option("--locations-file", an.locations_file, "Location gazetteer, one entry per line");
  anonymize->add_option("--endpoint", an.endpoint, "External NER service URL (env PBA_NER_ENDPOINT overrides)");
  anonymize->add_option("--timeout", an.timeout, "External request timeout in seconds");
  anonymize->add_option("--retries", an.retries, "External request retries");
  anonymize->add_option("--stats-out", an.stats_out, "Write masking statistics as JSON");
  anonymize->callback([&] { status = cmd_anonymize(an); });

  EmbedArgs em;
  auto* embed = app.add_subcommand("embed", "Embed biographies into an embedding cache");
  embed->add_option("--in", em.in, "Input corpus file")->required();
  embed->add_option("--out", em.out, "Output embedding cache")->required();
  embed->add_option("--field", em.field, "Biography field: raw or neutral");
  embed->add_option("--dim", em.config.dim, "Embedding dimension L");
  embed->add_option("--vocab-buckets", em.config.vocab_buckets, "Hash buckets including the padding id");
  embed->add_option("--max-len", em.config.max_len, "Maximum tokens per text");
  embed->add_option("--seed", em.config.seed, "Embedding table seed");
  embed->add_flag("--lowercase,!--no-lowercase", em.config.lowercase, "Lowercase before hashing");
  embed->add_option("--backend", em.backend, "Embedder: builtin or external");
  embed->add_option("--endpoint", em.endpoint, "External embedding service URL (env PBA_EMBED_ENDPOINT overrides)");
  embed->callback([&] { status = cmd_embed(em); });

  TrainArgs tr;
  auto* trn = app.add_subcommand("train", "Train the occupancy or scoring model");
  trn->add_option("--corpus", tr.corpus, "Corpus file")->required();
  trn->add_option("--embeddings", tr.embeddings, "Embedding cache for the corpus")->required();
  trn->add_option("--task", tr.task, "occupancy or scoring");
  trn->add_option("--epochs", tr.epochs, "Training epochs");
  trn->add_option("--batch-size", tr.batch_size, "Mini-batch size");
  trn->add_option("--dropout", tr.dropout, "Dropout rate after each hidden layer");
  trn->add_option("--seed", tr.seed, "Seed for split, initialization, shuffling and dropout");
  trn->add_option("--lr", tr.lr, "AdamW learning rate");
  trn->add_option("--weight-decay", tr.weight_decay, "AdamW decoupled weight decay");
  trn->add_option("--train-fraction", tr.train_fraction, "Share of resumes in the training split");
  trn->add_option("--hidden1", tr.hidden1, "First hidden layer width");
  trn->add_option("--hidden2", tr.hidden2, "Second hidden layer width");
  trn->add_option("--fusion", tr.fusion, "Occupancy outputs fed to the scoring head: g, h2+g or h1+h2+g");
  trn->add_flag("--freeze-occupancy-head", tr.freeze_occupancy_head, "Scoring: train only the scoring head");
  trn->add_option("--score-target", tr.score_target, "Scoring target: biased or blind");
  trn->add_flag("--projection", tr.projection, "Remove the gender direction from embeddings");
  trn->add_option("--projection-iterations", tr.projection_iterations, "Gender directions to remove");
  trn->add_option("--init-from", tr.init_from, "Scoring: start from this occupancy snapshot");
  trn->add_option("--snapshot-out", tr.snapshot_out, "Write the trained model snapshot");
  trn->add_option("--curve-out", tr.curve_out, "Write the learning curve CSV");
  trn->callback([&] { status = cmd_train(tr); });

  EvaluateArgs ev;
  auto* evaluate = app.add_subcommand("evaluate", "Per-sector accuracy or top-k shortlist on the test split");
  evaluate->add_option("--corpus", ev.corpus, "Corpus file")->required();
  evaluate->add_option("--embeddings", ev.embeddings, "Embedding cache for the corpus")->required();
  evaluate->add_option("--snapshot", ev.snapshot, "Model snapshot")->required();
  evaluate->add_option("--task", ev.task, "occupancy or scoring");
  evaluate->add_option("--seed", ev.seed, "Split seed (the training seed)");
  evaluate->add_option("--train-fraction", ev.train_fraction, "Share of resumes in the training split");
  evaluate->add_flag("--projection", ev.projection, "Remove the gender direction from embeddings");
  evaluate->add_option("--projection-iterations", ev.projection_iterations, "Gender directions to remove");
  evaluate->add_option("--k", ev.k, "Shortlist size");
  evaluate->add_option("--out", ev.out, "Output JSON file (stdout when empty)");
  evaluate->callback([&] { status = cmd_evaluate(ev); });

  ReportArgs rp;
  auto* report = app.add_subcommand("report", "Write report files from a results bundle");
  report->add_option("--results", rp.results, "results.json written by the evaluate stage")->required();
  report->add_option("--out", rp.out, "Report directory")->required();
  report->add_option("--formats", rp.formats, "csv, json or both");
  report->callback([&] { status = cmd_report(rp); });

  RunArgs rn;
  auto* run = app.add_subcommand("run", "Run pipeline stages from a config file");
  run->add_option("config,--config", rn.config_path, "Pipeline config (JSON); defaults apply when omitted");
  run->add_option("--stages", rn.stages, "all, or a comma-separated subset of generate,anonymize,embed,train,evaluate,report");
  run->add_option("--seed", rn.seed, "Override the global seed");
  run->add_option("--out", rn.out, "Override the output directory");
  run->add_flag("--no-cache", rn.no_cache, "Recompute intermediates of the requested stages");
  run->add_flag("--quiet", rn.quiet, "Suppress progress messages");
  run->callback([&] { status = cmd_run(rn); });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 2;  // --help exits 0
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "configuration error: %s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return status;
}
