// Acceptance suite: one PASS/FAIL line per criterion, exit status 1 if any
// criterion fails. Tolerances are fixed here and never adjusted to a run.
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "oracles.hpp"
#include "pba/pipeline.hpp"

using namespace pba;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass;
  std::string detail;
};

int failures = 0;

void criterion(int number, const char* name, const std::function<Outcome()>& check) {
  const auto t0 = std::chrono::steady_clock::now();
  Outcome o;
  try {
    o = check();
  } catch (const std::exception& e) {
    o = {false, std::string("exception: ") + e.what()};
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  if (!o.pass) ++failures;
  std::printf("%s %2d %-28s %s (%.1fs)\n", o.pass ? "PASS" : "FAIL", number, name, o.detail.c_str(), secs);
  std::fflush(stdout);
}

std::string fmt(const char* f, double a) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, a);
  return buf;
}

// Desk-scale experiment: n=2000, L=64, 50 epochs, 80/20 split.
PipelineConfig desk_config(std::uint64_t seed) {
  PipelineConfig c;
  c.seed = seed;
  c.corpus.n = 2000;
  c.embedder.dim = 64;
  return c;
}

struct Trained {
  ExperimentData data;
  TrainResult occupancy;
};

Trained train_occupancy(const PipelineConfig& cfg, const Corpus& corpus, BioField field, bool projection) {
  const auto split = split_corpus(corpus, cfg.corpus.train_fraction, cfg.seed);
  const EmbeddingTable table(cfg.embedder_config());
  auto data = build_datasets(split, embed_corpus(split.train, field, table), embed_corpus(split.test, field, table),
                             projection, 1, cfg.train.score_target);
  auto occ = train_occupancy_model(data, cfg.train_config(Task::Occupancy), cfg.architecture());
  return {std::move(data), std::move(occ)};
}

double top100_male(const PipelineConfig& cfg, const Corpus& corpus, BioField field, bool projection) {
  const auto split = split_corpus(corpus, cfg.corpus.train_fraction, cfg.seed);
  const auto t = train_occupancy(cfg, corpus, field, projection);
  const auto score = train_scoring_model(t.data, cfg.train_config(Task::Scoring), t.occupancy.params);
  return top_k_shortlist(split.test, predict_scores(t.data.test, score.params), 100).male_fraction;
}

const std::uint64_t kSeeds[] = {1, 2, 3};

std::map<std::string, std::string> snapshot(const fs::path& dir) {
  std::map<std::string, std::string> out;
  for (const auto& e : fs::recursive_directory_iterator(dir)) {
    if (!e.is_regular_file()) continue;
    std::ifstream in(e.path(), std::ios::binary);
    std::ostringstream s;
    s << in.rdbuf();
    out[fs::relative(e.path(), dir).generic_string()] = s.str();
  }
  return out;
}

}  // namespace

int main() {
  criterion(1, "anonymization-parity", [] {
    double worst = 0.0;
    std::string detail;
    for (const LabelSet& labels : {LabelSet{EntityLabel::LOC}, LabelSet{EntityLabel::PER}}) {
      double base = 0.0, anon = 0.0;
      for (auto seed : kSeeds) {
        const auto cfg = desk_config(seed);
        const Corpus corpus = generate_corpus(cfg.generator_config());
        const auto b = train_occupancy(cfg, corpus, BioField::Raw, false);
        base += mean_sector_accuracy(sector_accuracy(b.data.test, b.occupancy.params)) / 3.0;
        const auto masked = anonymize_corpus(corpus, BuiltinTagger(), labels).corpus;
        const auto a = train_occupancy(cfg, masked, BioField::Raw, false);
        anon += mean_sector_accuracy(sector_accuracy(a.data.test, a.occupancy.params)) / 3.0;
      }
      worst = std::max(worst, std::abs(anon - base));
      detail += label_set_name(labels) + " base=" + fmt("%.4f", base) + " anon=" + fmt("%.4f", anon) + " ";
    }
    return Outcome{worst <= 0.05, detail + "max|diff|=" + fmt("%.4f", worst) + " (tol 0.05)"};
  });

  criterion(2, "bias-mitigation", [] {
    double base = 0.0, mitigated = 0.0;
    for (auto seed : kSeeds) {
      const auto cfg = desk_config(seed);
      const Corpus corpus = generate_corpus(cfg.generator_config());
      base += top100_male(cfg, corpus, BioField::Raw, false) / 3.0;
      mitigated += top100_male(cfg, corpus, BioField::Neutral, true) / 3.0;
    }
    const bool ok = base >= 0.60 && mitigated >= 0.47 && mitigated <= 0.53;
    return Outcome{ok, "baseline male=" + fmt("%.4f", base) + " (>=0.60) mitigated male=" + fmt("%.4f", mitigated) +
                           " (in [0.47,0.53])"};
  });

  criterion(3, "gradient-check", [] {
    const auto r = oracle::finite_difference_sweep(4242);
    return Outcome{r.instances >= 20 && r.worst <= 1e-4, std::to_string(r.instances) +
                                                             " instances, max rel err=" + fmt("%.3g", r.worst) +
                                                             " (tol 1e-4)"};
  });

  criterion(4, "adamw-oracle", [] {
    const auto r = oracle::adamw_oracle_sweep(2024);
    return Outcome{r.trials == 1000 && r.worst <= 1e-12,
                   std::to_string(r.trials) + " trials, max abs err=" + fmt("%.3g", r.worst) + " (tol 1e-12)"};
  });

  criterion(5, "anonymizer-exactness", [] {
    GeneratorConfig g;
    g.n = 2000;
    const Corpus corpus = generate_corpus(g);
    const auto residual = oracle::residual_entity_tokens(anonymize_corpus(corpus, BuiltinTagger(), all_labels()).corpus);
    const BuiltinTagger heldout(Gazetteer::with_heldout(0.2));
    std::vector<std::vector<EntitySpan>> predicted, gold;
    for (const auto& r : corpus.resumes) {
      predicted.push_back(heldout.tag(r.bio_raw));
      gold.push_back(r.gold_entities);
    }
    const double f1 = evaluate_tagger(predicted, gold).micro.f1;
    return Outcome{residual == 0 && f1 >= 0.80,
                   "residual tokens=" + std::to_string(residual) + " held-out micro F1=" + fmt("%.4f", f1) + " (>=0.80)"};
  });

  criterion(6, "entity-mass", [] {
    GeneratorConfig g;
    g.n = 2000;
    const Corpus corpus = generate_corpus(g);
    const auto st = entity_statistics(corpus, anonymize_corpus(corpus, BuiltinTagger(), all_labels()));
    const bool exact = st.masked_fraction == static_cast<double>(st.masked_words) / static_cast<double>(st.total_words);
    return Outcome{exact && st.masked_fraction >= 0.02 && st.masked_fraction <= 0.12,
                   "PER+LOC fraction=" + fmt("%.4f", st.masked_fraction) + " (in [0.02,0.12]) exact=" +
                       (exact ? "yes" : "no")};
  });

  criterion(7, "determinism", [] {
    const auto root = fs::temp_directory_path() / "pba_acceptance_determinism";
    fs::remove_all(root);
    std::map<std::string, std::string> reports[2];
    for (int i = 0; i < 2; ++i) {
      PipelineConfig c;
      c.corpus.n = 400;
      c.embedder.dim = 32;
      c.train.epochs = 3;
      c.train.hidden1 = 32;
      c.train.hidden2 = 8;
      c.output_dir = (root / std::to_string(i)).string();
      run_pipeline(c);
      reports[i] = snapshot(root / std::to_string(i) / "report");
    }
    fs::remove_all(root);
    return Outcome{!reports[0].empty() && reports[0] == reports[1],
                   std::to_string(reports[0].size()) + " report files, byte-identical=" +
                       (reports[0] == reports[1] ? "yes" : "no")};
  });

  criterion(8, "embedding-contracts", [] {
    EmbedderConfig e;
    e.dim = 32;
    e.max_len = 64;
    GeneratorConfig g;
    g.n = 200;
    const Corpus corpus = generate_corpus(g);
    bool padding = true, permutation = true;
    Rng rng(11);
    for (std::size_t len : {64, 128, 1024}) {
      auto wide = e;
      wide.max_len = len;
      const EmbeddingTable a(e), b(wide);
      for (const auto& r : corpus.resumes)
        if (preprocess(r.bio_raw, e).tokens.size() < 64 && embed_text(r.bio_raw, a) != embed_text(r.bio_raw, b))
          padding = false;
    }
    const EmbeddingTable t(e);
    for (const auto& r : corpus.resumes) {
      auto pre = preprocess(r.bio_raw, e);
      auto toks = pre.tokens;
      rng.shuffle(std::span<std::string>(toks));
      std::string shuffled;
      for (const auto& w : toks) shuffled += w + " ";
      if (embed_text(shuffled, t) != embed(pre, t)) permutation = false;
    }
    const std::vector<double> before(t.data().begin(), t.data().end());
    const auto data = make_dataset(corpus, embed_corpus(corpus, BioField::Raw, t));
    Architecture arch;
    arch.input_dim = 32;
    arch.hidden1 = 16;
    arch.hidden2 = 8;
    TrainConfig tc;
    tc.epochs = 2;
    const auto occ = train(data, tc, init_params(arch, 1));
    tc.task = Task::Scoring;
    train(data, tc, occ.params);
    const bool frozen = std::memcmp(before.data(), t.data().data(), before.size() * sizeof(double)) == 0;
    return Outcome{padding && permutation && frozen, std::string("padding=") + (padding ? "exact" : "differs") +
                                                         " permutation=" + (permutation ? "exact" : "differs") +
                                                         " frozen table=" + (frozen ? "identical" : "changed")};
  });

  criterion(9, "debias-properties", [] {
    Rng rng(9);
    double orth = 0.0, idem = 0.0;
    for (int trial = 0; trial < 500; ++trial) {
      const std::size_t n = 1 + rng.below(128);
      std::vector<double> u(n), f(n);
      for (auto& x : u) x = rng.uniform(-1.0, 1.0);
      for (auto& x : f) x = rng.uniform(-2.0, 2.0);
      double norm = 0.0;
      for (double x : u) norm += x * x;
      for (auto& x : u) x /= std::sqrt(norm);
      const DebiasDirection d{u, 1, 1};
      const auto once = debias_embedding(f, d);
      const auto twice = debias_embedding(once, d);
      double dot = 0.0;
      for (std::size_t k = 0; k < n; ++k) {
        dot += once[k] * u[k];
        idem = std::max(idem, std::abs(twice[k] - once[k]));
      }
      orth = std::max(orth, std::abs(dot));
    }
    bool invariant = true;
    for (int trial = 0; trial < 100; ++trial) {
      Corpus c;
      std::vector<double> s, affine, expo, cube;
      for (std::size_t i = 0; i < 400; ++i) {
        Resume r;
        r.id = i;
        r.gender = rng.bernoulli(0.5) ? Gender::F : Gender::M;
        c.resumes.push_back(r);
        const double x = static_cast<double>(rng.below(60)) / 60.0;
        s.push_back(x);
        affine.push_back(2.5 * x - 0.3);
        expo.push_back(std::exp(x));
        cube.push_back(x * x * x + x);
      }
      const auto base = top_k_shortlist(c, s, 100).member_ids;
      for (const auto* v : {&affine, &expo, &cube})
        if (top_k_shortlist(c, *v, 100).member_ids != base) invariant = false;
    }
    return Outcome{orth <= 1e-12 && idem <= 1e-12 && invariant,
                   "max |<f',u>|=" + fmt("%.3g", orth) + " max idempotence err=" + fmt("%.3g", idem) +
                       " (tol 1e-12) shortlist invariance=" + (invariant ? "exact" : "broken")};
  });

  criterion(10, "split-arithmetic", [] {
    GeneratorConfig g;
    g.n = 24000;
    const auto split = split_corpus(generate_corpus(g), 0.8, 1);
    return Outcome{split.train.size() == 19200 && split.test.size() == 4800,
                   "train=" + std::to_string(split.train.size()) + " test=" + std::to_string(split.test.size())};
  });

  std::printf("%d criteria failed\n", failures);
  return failures == 0 ? 0 : 1;
}
