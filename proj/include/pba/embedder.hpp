#pragma once

// Frozen text encoder: punctuation stripping, lowercasing, hash-bucket token
// ids, and mask-aware mean pooling over a fixed random embedding table.

#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "pba/corpus.hpp"
#include "pba/detail/binary_io.hpp"
#include "pba/error.hpp"
#include "pba/random.hpp"
#include "pba/text.hpp"

namespace pba {

using EmbeddingVector = std::vector<double>;

struct EmbedderConfig {
  std::size_t dim = 768;
  std::size_t vocab_buckets = 32768;
  std::uint64_t seed = 0;
  std::size_t max_len = 256;
  bool lowercase = true;

  bool operator==(const EmbedderConfig&) const = default;

  void validate() const {
    if (dim < 1) throw ConfigError("embedding dimension must be >= 1");
    if (vocab_buckets < 2) throw ConfigError("vocab_buckets must be >= 2");
    if (max_len < 1) throw ConfigError("max_len must be >= 1");
  }
};

inline constexpr std::uint32_t kPadId = 0;

struct PreprocessedText {
  std::vector<std::string> tokens;          // at most max_len
  std::vector<std::uint32_t> token_ids;     // max_len, kPadId after the tokens
  std::vector<std::uint8_t> attention_mask;  // max_len, 1 then 0
  bool empty = true;
};

inline std::uint32_t token_id(std::string_view token, std::size_t vocab_buckets) {
  return static_cast<std::uint32_t>(1 + fnv1a64(token) % (vocab_buckets - 1));
}

inline PreprocessedText preprocess(std::string_view text, const EmbedderConfig& config) {
  config.validate();
  std::u32string cps;
  for (char32_t c : utf8_decode(text)) {
    if (is_punctuation(c)) continue;
    cps.push_back(config.lowercase ? to_lower(c) : c);
  }
  PreprocessedText out;
  out.token_ids.assign(config.max_len, kPadId);
  out.attention_mask.assign(config.max_len, 0);
  for (const auto& r : whitespace_tokens(cps)) {
    if (out.tokens.size() == config.max_len) break;
    const std::size_t pos = out.tokens.size();
    out.tokens.push_back(utf8_encode(std::u32string_view(cps).substr(r.start, r.end - r.start)));
    out.token_ids[pos] = token_id(out.tokens.back(), config.vocab_buckets);
    out.attention_mask[pos] = 1;
  }
  out.empty = out.tokens.empty();
  return out;
}

// Row `id` holds `dim` values uniform in [-1/sqrt(dim), 1/sqrt(dim)), drawn
// from a generator keyed on (seed, id). Immutable after construction.
class EmbeddingTable {
 public:
  explicit EmbeddingTable(const EmbedderConfig& config) : config_(config) {
    config_.validate();
    const double bound = 1.0 / std::sqrt(static_cast<double>(config_.dim));
    values_.resize(config_.vocab_buckets * config_.dim);
    for (std::size_t id = 0; id < config_.vocab_buckets; ++id) {
      Rng rng(mix_seed(config_.seed, id, 0x454D4244ull));
      double* row = values_.data() + id * config_.dim;
      for (std::size_t j = 0; j < config_.dim; ++j) row[j] = rng.uniform(-bound, bound);
    }
  }

  std::span<const double> row(std::uint32_t id) const {
    return {values_.data() + static_cast<std::size_t>(id) * config_.dim, config_.dim};
  }

  const EmbedderConfig& config() const noexcept { return config_; }
  std::size_t dim() const noexcept { return config_.dim; }
  std::span<const double> data() const noexcept { return values_; }

  std::uint64_t fingerprint() const noexcept {
    return fnv1a64({reinterpret_cast<const char*>(values_.data()), values_.size() * sizeof(double)});
  }

 private:
  EmbedderConfig config_;
  std::vector<double> values_;
};

// Mask-aware mean pooling. Rows are accumulated per distinct id in
// ascending id order, weighted by occurrence share, so the result is exactly
// invariant to token order and to the amount of padding.
inline EmbeddingVector embed(const PreprocessedText& pre, const EmbeddingTable& table) {
  if (pre.token_ids.size() != pre.attention_mask.size())
    throw ShapeError("token_ids and attention_mask differ in length");
  std::map<std::uint32_t, std::size_t> counts;
  std::size_t total = 0;
  for (std::size_t j = 0; j < pre.token_ids.size(); ++j) {
    if (pre.attention_mask[j] == 0) continue;
    if (pre.token_ids[j] >= table.config().vocab_buckets)
      throw ShapeError("token id " + std::to_string(pre.token_ids[j]) + " outside the table");
    ++counts[pre.token_ids[j]];
    ++total;
  }
  if (total == 0) throw EmptyTextError("cannot embed a text with no unmasked tokens");
  EmbeddingVector f(table.dim(), 0.0);
  for (const auto& [id, count] : counts) {
    const double weight = static_cast<double>(count) / static_cast<double>(total);
    const auto e = table.row(id);
    for (std::size_t k = 0; k < f.size(); ++k) f[k] += weight * e[k];
  }
  return f;
}

inline EmbeddingVector embed_text(std::string_view text, const EmbeddingTable& table) {
  return embed(preprocess(text, table.config()), table);
}

// One vector per resume, in corpus order.
inline std::vector<EmbeddingVector> embed_corpus(const Corpus& corpus, BioField field, const EmbeddingTable& table) {
  if (corpus.empty()) throw EmptyTextError("cannot embed an empty corpus");
  std::vector<EmbeddingVector> out;
  out.reserve(corpus.size());
  for (const auto& r : corpus.resumes) {
    const auto pre = preprocess(r.bio(field), table.config());
    if (pre.empty)
      throw EmptyTextError("resume " + std::to_string(r.id) + ": " + std::string(field_name(field)) + " is empty");
    out.push_back(embed(pre, table));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Embedding cache: "PBAEMB01", u64 dim, u64 seed, u64 vocab_buckets, u64
// count, then per record u64 id followed by dim f64 values. All little-endian.

struct EmbeddingCache {
  std::size_t dim = 0;
  std::uint64_t seed = 0;
  std::size_t vocab_buckets = 0;
  std::vector<std::uint64_t> ids;
  std::vector<EmbeddingVector> vectors;

  bool operator==(const EmbeddingCache&) const = default;
};

inline constexpr char kEmbeddingMagic[9] = "PBAEMB01";

inline EmbeddingCache make_embedding_cache(const Corpus& corpus, std::vector<EmbeddingVector> vectors,
                                           const EmbedderConfig& config) {
  if (vectors.size() != corpus.size()) throw AlignmentError("embedding count does not match corpus size");
  EmbeddingCache c{config.dim, config.seed, config.vocab_buckets, {}, std::move(vectors)};
  for (const auto& r : corpus.resumes) c.ids.push_back(r.id);
  return c;
}

inline void save_embedding_cache(const EmbeddingCache& cache, const std::string& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write embedding cache: " + path);
  detail::write_magic(out, kEmbeddingMagic);
  detail::write_u64(out, cache.dim);
  detail::write_u64(out, cache.seed);
  detail::write_u64(out, cache.vocab_buckets);
  detail::write_u64(out, cache.ids.size());
  for (std::size_t i = 0; i < cache.ids.size(); ++i) {
    if (cache.vectors[i].size() != cache.dim) throw ShapeError("cached vector has wrong dimension");
    detail::write_u64(out, cache.ids[i]);
    for (double x : cache.vectors[i]) detail::write_f64(out, x);
  }
  if (!out) throw IoError("failed writing embedding cache: " + path);
}

inline EmbeddingCache load_embedding_cache(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read embedding cache: " + path);
  detail::expect_magic(in, kEmbeddingMagic, path);
  EmbeddingCache c;
  c.dim = detail::read_u64(in, "dim");
  c.seed = detail::read_u64(in, "seed");
  c.vocab_buckets = detail::read_u64(in, "vocab_buckets");
  const std::uint64_t count = detail::read_u64(in, "count");
  for (std::uint64_t i = 0; i < count; ++i) {
    c.ids.push_back(detail::read_u64(in, "id"));
    EmbeddingVector v(c.dim);
    for (double& x : v) x = detail::read_f64(in, "vector");
    c.vectors.push_back(std::move(v));
  }
  return c;
}

// Vectors from `cache` reordered to follow `corpus`; every resume id must be
// present.
inline std::vector<EmbeddingVector> align_embeddings(const EmbeddingCache& cache, const Corpus& corpus) {
  std::vector<EmbeddingVector> out;
  out.reserve(corpus.size());
  std::size_t cursor = 0;
  for (const auto& r : corpus.resumes) {
    // Both sides are id-sorted, so a forward scan suffices.
    while (cursor < cache.ids.size() && cache.ids[cursor] < r.id) ++cursor;
    if (cursor == cache.ids.size() || cache.ids[cursor] != r.id)
      throw AlignmentError("no cached embedding for resume " + std::to_string(r.id));
    out.push_back(cache.vectors[cursor]);
  }
  return out;
}

}  // namespace pba
