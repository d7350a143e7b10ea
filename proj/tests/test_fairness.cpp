#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "pba/fairness.hpp"

using namespace pba;

namespace {

double dot(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

std::vector<double> random_vector(Rng& rng, std::size_t n, double scale = 1.0) {
  std::vector<double> v(n);
  for (double& x : v) x = rng.uniform(-scale, scale);
  return v;
}

DebiasDirection random_direction(Rng& rng, std::size_t n) {
  auto u = random_vector(rng, n);
  const double norm = std::sqrt(dot(u, u));
  for (double& x : u) x /= norm;
  return {u, 1, 1};
}

Corpus corpus_with(const std::vector<Gender>& genders) {
  Corpus c;
  for (std::size_t i = 0; i < genders.size(); ++i) {
    Resume r;
    r.id = 10 * i;
    r.gender = genders[i];
    c.resumes.push_back(r);
  }
  return c;
}

}  // namespace

TEST(Direction, HandExample) {
  const auto d = compute_gender_direction({{1.0, 0.0}, {0.0, 0.0}}, {Gender::M, Gender::F});
  EXPECT_EQ(d.u, (std::vector<double>{1.0, 0.0}));
  EXPECT_EQ(d.n_male, 1u);
  EXPECT_EQ(d.n_female, 1u);
}

TEST(Direction, SingleCoordinateDifferenceIsSignedBasisVector) {
  const std::vector<EmbeddingVector> e = {{0.3, 0.5, 0.1}, {0.3, 0.9, 0.1}, {0.3, 0.2, 0.1}, {0.3, 0.4, 0.1}};
  const std::vector<Gender> g = {Gender::M, Gender::F, Gender::M, Gender::F};
  EXPECT_EQ(compute_gender_direction(e, g).u, (std::vector<double>{0.0, -1.0, 0.0}));
}

TEST(Direction, Errors) {
  EXPECT_THROW(compute_gender_direction({{1.0, 2.0}, {1.0, 2.0}}, {Gender::M, Gender::F}), DegenerateDirectionError);
  EXPECT_THROW(compute_gender_direction({{1.0}, {2.0}}, {Gender::M, Gender::M}), ContractError);
  EXPECT_THROW(compute_gender_direction({{1.0}}, {Gender::M, Gender::F}), AlignmentError);
  EXPECT_THROW(compute_gender_direction({}, {}), ContractError);
  EXPECT_THROW(compute_gender_direction({{1.0}, {2.0, 3.0}}, {Gender::M, Gender::F}), ShapeError);
}

TEST(Debias, OrthogonalAndIdempotent) {
  Rng rng(1);
  double worst_dot = 0.0, worst_idem = 0.0;
  for (int trial = 0; trial < 500; ++trial) {
    const std::size_t n = 1 + rng.below(128);
    const auto d = random_direction(rng, n);
    const auto f = random_vector(rng, n, 2.0);
    const auto once = debias_embedding(f, d);
    const auto twice = debias_embedding(once, d);
    worst_dot = std::max(worst_dot, std::abs(dot(once, d.u)));
    for (std::size_t k = 0; k < n; ++k) worst_idem = std::max(worst_idem, std::abs(twice[k] - once[k]));
  }
  EXPECT_LE(worst_dot, 1e-12);
  EXPECT_LE(worst_idem, 1e-12);
}

TEST(Debias, PerpendicularVectorUnchanged) {
  const DebiasDirection d{{0.0, 1.0, 0.0}, 1, 1};
  const std::vector<double> f = {0.25, 0.0, -3.5};
  EXPECT_EQ(debias_embedding(f, d), f);
}

TEST(Debias, ParallelVectorVanishes) {
  Rng rng(2);
  for (int trial = 0; trial < 100; ++trial) {
    const auto d = random_direction(rng, 16);
    const double c = rng.uniform(-5.0, 5.0);
    std::vector<double> f(16);
    for (std::size_t k = 0; k < 16; ++k) f[k] = c * d.u[k];
    for (double x : debias_embedding(f, d)) EXPECT_LE(std::abs(x), 1e-12);
  }
}

TEST(Debias, PreservesOrthogonalComponents) {
  Rng rng(3);
  const auto d = random_direction(rng, 8);
  const auto f = random_vector(rng, 8);
  const auto out = debias_embedding(f, d);
  for (int trial = 0; trial < 20; ++trial) {
    // Project a random probe onto the complement of u.
    auto probe = debias_embedding(random_vector(rng, 8), d);
    EXPECT_NEAR(dot(out, probe), dot(f, probe), 1e-12);
  }
  EXPECT_THROW(debias_embedding(std::vector<double>(7, 0.0), d), ShapeError);
}

TEST(Debias, IterativeRemovalRemovesMeanGap) {
  Rng rng(4);
  std::vector<EmbeddingVector> e;
  std::vector<Gender> g;
  for (int i = 0; i < 200; ++i) {
    g.push_back(i % 2 ? Gender::F : Gender::M);
    auto v = random_vector(rng, 6);
    if (g.back() == Gender::M) v[2] += 0.5;
    e.push_back(v);
  }
  const auto used = remove_gender_directions(e, g, 1);
  ASSERT_EQ(used.size(), 1u);
  // One projection closes the mean gap exactly; a second has nothing left.
  EXPECT_THROW(compute_gender_direction(e, g), DegenerateDirectionError);
}

TEST(Shortlist, TopOneAndTies) {
  const auto c = corpus_with({Gender::M, Gender::F, Gender::F, Gender::M});
  auto r = top_k_shortlist(c, {0.2, 0.9, 0.5, 0.1}, 1);
  EXPECT_EQ(r.member_ids, (std::vector<std::uint64_t>{10}));
  EXPECT_EQ(r.male_fraction, 0.0);
  EXPECT_EQ(r.female_fraction, 1.0);

  r = top_k_shortlist(c, {0.7, 0.7, 0.7, 0.1}, 2);
  EXPECT_EQ(r.member_ids, (std::vector<std::uint64_t>{0, 10}));
  EXPECT_EQ(r.male_fraction, 0.5);
}

TEST(Shortlist, KLargerThanPool) {
  const auto c = corpus_with({Gender::M, Gender::F, Gender::F});
  const auto r = top_k_shortlist(c, {0.1, 0.2, 0.3}, 100);
  EXPECT_EQ(r.k, 100u);
  EXPECT_EQ(r.member_ids.size(), 3u);
  EXPECT_EQ(r.male_fraction + r.female_fraction, 1.0);
}

TEST(Shortlist, FractionsAreComplements) {
  Rng rng(5);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<Gender> g(50);
    for (auto& x : g) x = rng.bernoulli(0.5) ? Gender::F : Gender::M;
    const auto scores = random_vector(rng, 50);
    const auto r = top_k_shortlist(corpus_with(g), scores, 1 + rng.below(50));
    EXPECT_EQ(r.male_fraction + r.female_fraction, 1.0);
    EXPECT_EQ(r.female_fraction, 1.0 - r.male_fraction);
  }
}

TEST(Shortlist, InvariantUnderIncreasingTransforms) {
  Rng rng(6);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<Gender> g(400);
    for (auto& x : g) x = rng.bernoulli(0.5) ? Gender::F : Gender::M;
    const auto c = corpus_with(g);
    std::vector<double> s(400);
    for (auto& x : s) x = static_cast<double>(rng.below(60)) / 60.0;  // plenty of ties
    const auto base = top_k_shortlist(c, s, 100);
    const double a = rng.uniform(0.5, 3.0), b = rng.uniform(-1.0, 1.0);
    std::vector<double> affine(s), expo(s), cube(s);
    for (std::size_t i = 0; i < s.size(); ++i) {
      affine[i] = a * s[i] + b;
      expo[i] = std::exp(s[i]);
      cube[i] = s[i] * s[i] * s[i] + s[i];
    }
    EXPECT_EQ(top_k_shortlist(c, affine, 100).member_ids, base.member_ids);
    EXPECT_EQ(top_k_shortlist(c, expo, 100).member_ids, base.member_ids);
    EXPECT_EQ(top_k_shortlist(c, cube, 100).member_ids, base.member_ids);
  }
}

TEST(Shortlist, Errors) {
  const auto c = corpus_with({Gender::M, Gender::F});
  EXPECT_THROW(top_k_shortlist(c, {0.1, 0.2}, 0), ConfigError);
  EXPECT_THROW(top_k_shortlist(c, {0.1}, 1), AlignmentError);
  EXPECT_THROW(top_k_shortlist(c, {0.1, std::nan("")}, 1), NumericError);
}

TEST(Shortlist, JsonRoundTrip) {
  const auto c = corpus_with({Gender::M, Gender::F, Gender::M});
  const auto r = top_k_shortlist(c, {0.3, 0.2, 0.1}, 2);
  EXPECT_EQ(shortlist_from_json(nlohmann::json::parse(shortlist_to_json(r).dump())), r);
  EXPECT_THROW(shortlist_from_json(nlohmann::json::object()), SchemaError);
}
