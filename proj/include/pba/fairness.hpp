#pragma once

// Bias-aware branch: marker neutralization (see markers.hpp), removal of a
// mean-difference gender direction from embeddings, and top-K shortlist
// gender proportions.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "pba/corpus.hpp"
#include "pba/embedder.hpp"
#include "pba/error.hpp"
#include "pba/markers.hpp"

namespace pba {

struct DebiasDirection {
  std::vector<double> u;  // unit length
  std::size_t n_male = 0;
  std::size_t n_female = 0;
};

inline constexpr double kDegenerateNorm = 1e-12;

// u = (mean_M - mean_F) / ||mean_M - mean_F||, accumulated in input order.
inline DebiasDirection compute_gender_direction(const std::vector<EmbeddingVector>& embeddings,
                                                const std::vector<Gender>& genders) {
  if (embeddings.size() != genders.size()) throw AlignmentError("embeddings and genders differ in length");
  if (embeddings.empty()) throw ContractError("no embeddings to compute a direction from");
  const std::size_t dim = embeddings.front().size();
  std::vector<double> sum_m(dim, 0.0), sum_f(dim, 0.0);
  DebiasDirection d;
  for (std::size_t i = 0; i < embeddings.size(); ++i) {
    if (embeddings[i].size() != dim) throw ShapeError("embeddings have inconsistent dimensions");
    auto& acc = genders[i] == Gender::M ? sum_m : sum_f;
    (genders[i] == Gender::M ? d.n_male : d.n_female) += 1;
    for (std::size_t k = 0; k < dim; ++k) acc[k] += embeddings[i][k];
  }
  if (d.n_male == 0 || d.n_female == 0) throw ContractError("gender direction needs samples of both genders");
  d.u.resize(dim);
  double norm2 = 0.0;
  for (std::size_t k = 0; k < dim; ++k) {
    d.u[k] = sum_m[k] / static_cast<double>(d.n_male) - sum_f[k] / static_cast<double>(d.n_female);
    norm2 += d.u[k] * d.u[k];
  }
  const double norm = std::sqrt(norm2);
  if (norm < kDegenerateNorm) throw DegenerateDirectionError("gender means coincide; no direction to remove");
  for (double& x : d.u) x /= norm;
  return d;
}

// f - (f . u) u
inline EmbeddingVector debias_embedding(std::span<const double> f, const DebiasDirection& direction) {
  if (f.size() != direction.u.size())
    throw ShapeError("embedding has " + std::to_string(f.size()) + " components, direction has " +
                     std::to_string(direction.u.size()));
  double dot = 0.0;
  for (std::size_t k = 0; k < f.size(); ++k) dot += f[k] * direction.u[k];
  EmbeddingVector out(f.begin(), f.end());
  for (std::size_t k = 0; k < f.size(); ++k) out[k] -= dot * direction.u[k];
  return out;
}

inline void debias_all(std::vector<EmbeddingVector>& embeddings, const DebiasDirection& direction) {
  for (auto& f : embeddings) f = debias_embedding(f, direction);
}

// Removes `iterations` successive mean-difference directions, each computed
// on the already projected embeddings. Returns the directions used.
inline std::vector<DebiasDirection> remove_gender_directions(std::vector<EmbeddingVector>& fit_embeddings,
                                                             const std::vector<Gender>& genders,
                                                             std::size_t iterations) {
  std::vector<DebiasDirection> used;
  for (std::size_t it = 0; it < iterations; ++it) {
    used.push_back(compute_gender_direction(fit_embeddings, genders));
    debias_all(fit_embeddings, used.back());
  }
  return used;
}

// ---------------------------------------------------------------------------

struct ShortlistReport {
  std::size_t k = 0;
  double male_fraction = 0.0;
  double female_fraction = 0.0;
  std::vector<std::uint64_t> member_ids;

  bool operator==(const ShortlistReport&) const = default;
};

// Highest scores first, ties by ascending id; the female fraction is the
// complement of the male fraction.
inline ShortlistReport top_k_shortlist(const Corpus& corpus, const std::vector<double>& scores, std::size_t k) {
  if (k < 1) throw ConfigError("shortlist size k must be >= 1");
  if (scores.size() != corpus.size()) throw AlignmentError("one score per resume required");
  for (std::size_t i = 0; i < scores.size(); ++i)
    if (!std::isfinite(scores[i]))
      throw NumericError("non-finite score for resume " + std::to_string(corpus.resumes[i].id));
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (scores[a] != scores[b]) return scores[a] > scores[b];
    return corpus.resumes[a].id < corpus.resumes[b].id;
  });
  ShortlistReport r;
  r.k = k;
  const std::size_t take = std::min(k, order.size());
  std::size_t males = 0;
  for (std::size_t i = 0; i < take; ++i) {
    const Resume& res = corpus.resumes[order[i]];
    r.member_ids.push_back(res.id);
    if (res.gender == Gender::M) ++males;
  }
  r.male_fraction = take == 0 ? 0.0 : static_cast<double>(males) / static_cast<double>(take);
  r.female_fraction = take == 0 ? 0.0 : 1.0 - r.male_fraction;
  return r;
}

inline nlohmann::ordered_json shortlist_to_json(const ShortlistReport& r) {
  nlohmann::ordered_json j;
  j["k"] = r.k;
  j["male_fraction"] = r.male_fraction;
  j["female_fraction"] = r.female_fraction;
  j["member_ids"] = r.member_ids;
  return j;
}

inline ShortlistReport shortlist_from_json(const nlohmann::json& j) {
  ShortlistReport r;
  try {
    r.k = j.at("k").get<std::size_t>();
    r.male_fraction = j.at("male_fraction").get<double>();
    r.female_fraction = j.at("female_fraction").get<double>();
    r.member_ids = j.at("member_ids").get<std::vector<std::uint64_t>>();
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError(std::string("shortlist report: ") + e.what());
  }
  return r;
}

}  // namespace pba
