#pragma once

// Trainable heads over frozen text embeddings.
//
//   f --W1--> h1 (sigmoid, dropout) --W2--> h2 (sigmoid, dropout) --W3--> g
//   u = concat(h1, h2, g, v) --ws--> y_hat (sigmoid)
//
// g holds four independent sigmoid outputs, one per occupational group.
// Both tasks are trained on RMSE with AdamW.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <functional>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "pba/corpus.hpp"
#include "pba/detail/binary_io.hpp"
#include "pba/embedder.hpp"
#include "pba/error.hpp"
#include "pba/random.hpp"

namespace pba {

inline double sigmoid(double x) noexcept { return 1.0 / (1.0 + std::exp(-x)); }

enum class Task { Occupancy, Scoring };

inline constexpr std::string_view task_name(Task t) noexcept { return t == Task::Occupancy ? "occupancy" : "scoring"; }

// Which occupancy-MLP outputs feed the scoring head besides v.
enum class FusionMode { Output, LastTwo, All };

inline constexpr std::string_view fusion_name(FusionMode m) noexcept {
  return m == FusionMode::Output ? "g" : m == FusionMode::LastTwo ? "h2+g" : "h1+h2+g";
}

struct Architecture {
  std::size_t input_dim = 768;
  std::size_t hidden1 = 300;
  std::size_t hidden2 = 70;
  std::size_t groups = kNumGroups;
  FusionMode fusion = FusionMode::All;

  bool operator==(const Architecture&) const = default;

  std::size_t fusion_dim() const noexcept {
    std::size_t d = groups + kNumCompetencies;
    if (fusion == FusionMode::All) d += hidden1;
    if (fusion != FusionMode::Output) d += hidden2;
    return d;
  }
};

// Fully connected layer, weights row-major (out x in).
struct DenseLayer {
  std::size_t in = 0;
  std::size_t out = 0;
  std::vector<double> weights;
  std::vector<double> bias;

  DenseLayer() = default;
  DenseLayer(std::size_t in_dim, std::size_t out_dim)
      : in(in_dim), out(out_dim), weights(in_dim * out_dim, 0.0), bias(out_dim, 0.0) {}

  bool operator==(const DenseLayer&) const = default;

  // Four interleaved partial sums in a fixed order: deterministic, and short
  // enough dependency chains for the loop to pipeline.
  void affine(std::span<const double> x, std::span<double> z) const {
    const std::size_t blocked = in - in % 4;
    for (std::size_t o = 0; o < out; ++o) {
      const double* w = weights.data() + o * in;
      double a0 = 0.0, a1 = 0.0, a2 = 0.0, a3 = 0.0;
      for (std::size_t i = 0; i < blocked; i += 4) {
        a0 += w[i] * x[i];
        a1 += w[i + 1] * x[i + 1];
        a2 += w[i + 2] * x[i + 2];
        a3 += w[i + 3] * x[i + 3];
      }
      for (std::size_t i = blocked; i < in; ++i) a0 += w[i] * x[i];
      z[o] = bias[o] + ((a0 + a1) + (a2 + a3));
    }
  }
};

// Trainable parameters: the occupancy MLP (hidden1, hidden2, occupancy) and
// the scoring head. Also used as the gradient and moment container.
struct ModelParams {
  Architecture arch;
  DenseLayer hidden1;
  DenseLayer hidden2;
  DenseLayer occupancy;
  DenseLayer score;

  ModelParams() = default;
  explicit ModelParams(const Architecture& a)
      : arch(a),
        hidden1(a.input_dim, a.hidden1),
        hidden2(a.hidden1, a.hidden2),
        occupancy(a.hidden2, a.groups),
        score(a.fusion_dim(), 1) {}

  bool operator==(const ModelParams&) const = default;

  static constexpr std::size_t kTensorCount = 8;
  static constexpr std::array<std::string_view, kTensorCount> kTensorNames = {
      "hidden1.weights",   "hidden1.bias", "hidden2.weights", "hidden2.bias",
      "occupancy.weights", "occupancy.bias", "score.weights",  "score.bias"};

  std::array<std::span<double>, kTensorCount> tensors() {
    return {hidden1.weights, hidden1.bias, hidden2.weights, hidden2.bias,
            occupancy.weights, occupancy.bias, score.weights, score.bias};
  }
  std::array<std::span<const double>, kTensorCount> tensors() const {
    return {hidden1.weights, hidden1.bias, hidden2.weights, hidden2.bias,
            occupancy.weights, occupancy.bias, score.weights, score.bias};
  }

  // Tensors 0..5 belong to the occupancy MLP.
  static constexpr bool is_occupancy_tensor(std::size_t index) noexcept { return index < 6; }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (auto t : tensors()) n += t.size();
    return n;
  }
};

// Glorot-uniform weights, zero biases.
inline ModelParams init_params(const Architecture& arch, std::uint64_t seed) {
  if (arch.input_dim < 1) throw ConfigError("input dimension must be >= 1");
  ModelParams p(arch);
  DenseLayer* layers[] = {&p.hidden1, &p.hidden2, &p.occupancy, &p.score};
  for (std::size_t l = 0; l < 4; ++l) {
    DenseLayer& layer = *layers[l];
    const double bound = std::sqrt(6.0 / static_cast<double>(layer.in + layer.out));
    Rng rng(mix_seed(seed, l, 0x494E4954ull));
    for (double& w : layer.weights) w = rng.uniform(-bound, bound);
  }
  return p;
}

inline ModelParams init_params(std::size_t input_dim, std::uint64_t seed) {
  Architecture a;
  a.input_dim = input_dim;
  return init_params(a, seed);
}

enum class Mode { Train, Eval };

struct ForwardCache {
  std::vector<double> h1;       // sigmoid outputs before dropout
  std::vector<double> h2;
  std::vector<double> h1_out;   // after dropout (equal to h1 in eval mode)
  std::vector<double> h2_out;
  std::vector<double> mask1;    // per-unit scale: 0 or 1/(1-p); empty in eval mode
  std::vector<double> mask2;
  std::vector<double> g;
  std::vector<double> u;        // fusion input, scoring only
  double y = 0.0;
};

namespace detail {

inline void check_input(std::span<const double> f, const ModelParams& params) {
  if (f.size() != params.arch.input_dim)
    throw ShapeError("embedding has " + std::to_string(f.size()) + " components, model expects " +
                     std::to_string(params.arch.input_dim));
}

// Inverted dropout; p = 0 yields an all-ones mask.
inline std::vector<double> dropout_mask(std::size_t n, double rate, Rng& rng) {
  std::vector<double> mask(n, 1.0);
  if (rate <= 0.0) return mask;
  const double keep_scale = 1.0 / (1.0 - rate);
  for (double& m : mask) m = rng.uniform() < rate ? 0.0 : keep_scale;
  return mask;
}

}  // namespace detail

inline ForwardCache forward_occupancy(std::span<const double> f, const ModelParams& params, Mode mode,
                                      double dropout_rate = 0.0, std::uint64_t dropout_seed = 0) {
  detail::check_input(f, params);
  if (!(dropout_rate >= 0.0 && dropout_rate < 1.0)) throw ConfigError("dropout rate must lie in [0, 1)");
  const Architecture& a = params.arch;
  ForwardCache c;
  c.h1.resize(a.hidden1);
  params.hidden1.affine(f, c.h1);
  for (double& x : c.h1) x = sigmoid(x);
  c.h1_out = c.h1;
  std::optional<Rng> rng;
  if (mode == Mode::Train) {
    rng.emplace(dropout_seed);
    c.mask1 = detail::dropout_mask(a.hidden1, dropout_rate, *rng);
    for (std::size_t i = 0; i < a.hidden1; ++i) c.h1_out[i] *= c.mask1[i];
  }
  c.h2.resize(a.hidden2);
  params.hidden2.affine(c.h1_out, c.h2);
  for (double& x : c.h2) x = sigmoid(x);
  c.h2_out = c.h2;
  if (mode == Mode::Train) {
    c.mask2 = detail::dropout_mask(a.hidden2, dropout_rate, *rng);
    for (std::size_t i = 0; i < a.hidden2; ++i) c.h2_out[i] *= c.mask2[i];
  }
  c.g.resize(a.groups);
  params.occupancy.affine(c.h2_out, c.g);
  for (double& x : c.g) x = sigmoid(x);
  return c;
}

inline ForwardCache forward_score(std::span<const double> f, const CompetencyVector& v, const ModelParams& params,
                                  Mode mode, double dropout_rate = 0.0, std::uint64_t dropout_seed = 0) {
  ForwardCache c = forward_occupancy(f, params, mode, dropout_rate, dropout_seed);
  const Architecture& a = params.arch;
  c.u.reserve(a.fusion_dim());
  if (a.fusion == FusionMode::All) c.u.insert(c.u.end(), c.h1_out.begin(), c.h1_out.end());
  if (a.fusion != FusionMode::Output) c.u.insert(c.u.end(), c.h2_out.begin(), c.h2_out.end());
  c.u.insert(c.u.end(), c.g.begin(), c.g.end());
  c.u.insert(c.u.end(), v.begin(), v.end());
  double z = 0.0;
  params.score.affine(c.u, std::span<double>(&z, 1));
  c.y = sigmoid(z);
  return c;
}

// sqrt of the mean squared error over every sample and output component.
inline double rmse_loss(const std::vector<std::vector<double>>& predictions,
                        const std::vector<std::vector<double>>& targets) {
  if (predictions.size() != targets.size()) throw ShapeError("rmse: sample counts differ");
  if (predictions.empty()) throw ShapeError("rmse: no samples");
  double sum = 0.0;
  std::size_t count = 0;
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    if (predictions[i].size() != targets[i].size()) throw ShapeError("rmse: component counts differ");
    for (std::size_t k = 0; k < predictions[i].size(); ++k) {
      const double d = predictions[i][k] - targets[i][k];
      sum += d * d;
    }
    count += predictions[i].size();
  }
  if (count == 0) throw ShapeError("rmse: no components");
  return std::sqrt(sum / static_cast<double>(count));
}

// ---------------------------------------------------------------------------
// Datasets: embeddings aligned with corpus rows.

enum class ScoreTarget { Biased, Blind };

struct Dataset {
  std::vector<std::uint64_t> ids;
  std::vector<EmbeddingVector> features;
  std::vector<CompetencyVector> competencies;
  std::vector<Group> groups;
  std::vector<Gender> genders;
  std::vector<double> scores;

  std::size_t size() const noexcept { return ids.size(); }
  bool empty() const noexcept { return ids.empty(); }

  // Training target for sample i: one-hot group, or the score.
  std::vector<double> target(Task task, std::size_t i, std::size_t groups = kNumGroups) const {
    if (task == Task::Scoring) return {scores[i]};
    std::vector<double> t(groups, 0.0);
    t[group_index(this->groups[i])] = 1.0;
    return t;
  }
};

inline Dataset make_dataset(const Corpus& corpus, std::vector<EmbeddingVector> embeddings,
                            ScoreTarget target = ScoreTarget::Biased) {
  if (embeddings.size() != corpus.size())
    throw AlignmentError("have " + std::to_string(embeddings.size()) + " embeddings for " +
                         std::to_string(corpus.size()) + " resumes");
  Dataset d;
  d.features = std::move(embeddings);
  for (const auto& r : corpus.resumes) {
    d.ids.push_back(r.id);
    d.competencies.push_back(r.competencies);
    d.groups.push_back(r.group);
    d.genders.push_back(r.gender);
    d.scores.push_back(target == ScoreTarget::Biased ? r.score_biased : r.score_blind);
  }
  return d;
}

// ---------------------------------------------------------------------------
// Backward pass.

struct BatchGradients {
  ModelParams grads;
  double loss = 0.0;
};

// RMSE below this is treated as exactly zero; the square root has no
// derivative there.
inline constexpr double kZeroLossGuard = 1e-12;

// Exact gradient of the batch RMSE given the caches of the matching
// train-mode forward passes (one per index, same order). With
// `skip_occupancy` only the scoring head receives gradient.
inline BatchGradients backward(Task task, const Dataset& data, std::span<const std::size_t> batch,
                               const ModelParams& params, const std::vector<ForwardCache>& caches,
                               bool skip_occupancy = false) {
  if (caches.size() != batch.size()) throw ContractError("backward: one cache per batch sample required");
  if (batch.empty()) throw ContractError("backward: empty batch");
  const Architecture& a = params.arch;
  const std::size_t outputs = task == Task::Occupancy ? a.groups : 1;
  for (const auto& c : caches) {
    if (c.h1.size() != a.hidden1 || c.h2.size() != a.hidden2 || c.g.size() != a.groups ||
        c.mask1.size() != a.hidden1 || c.mask2.size() != a.hidden2)
      throw ContractError("backward: cache does not match parameters or was not recorded in train mode");
    if (task == Task::Scoring && c.u.size() != a.fusion_dim())
      throw ContractError("backward: scoring cache lacks the fusion input");
  }

  BatchGradients out{ModelParams(a), 0.0};
  double sum = 0.0;
  for (std::size_t s = 0; s < batch.size(); ++s) {
    const auto t = data.target(task, batch[s], a.groups);
    for (std::size_t k = 0; k < outputs; ++k) {
      const double p = task == Task::Occupancy ? caches[s].g[k] : caches[s].y;
      sum += (p - t[k]) * (p - t[k]);
    }
  }
  const double count = static_cast<double>(batch.size() * outputs);
  out.loss = std::sqrt(sum / count);
  if (out.loss < kZeroLossGuard) return out;
  const double scale = 1.0 / (count * out.loss);

  ModelParams& g = out.grads;
  std::vector<double> dg(a.groups), dz3(a.groups), dh2(a.hidden2), dz2(a.hidden2), dh1(a.hidden1), dz1(a.hidden1);
  for (std::size_t s = 0; s < batch.size(); ++s) {
    const ForwardCache& c = caches[s];
    const auto& f = data.features[batch[s]];
    const auto t = data.target(task, batch[s], a.groups);
    std::fill(dh2.begin(), dh2.end(), 0.0);
    std::fill(dh1.begin(), dh1.end(), 0.0);

    if (task == Task::Occupancy) {
      for (std::size_t k = 0; k < a.groups; ++k) dg[k] = scale * (c.g[k] - t[k]);
    } else {
      const double dzs = scale * (c.y - t[0]) * c.y * (1.0 - c.y);
      for (std::size_t i = 0; i < c.u.size(); ++i) g.score.weights[i] += dzs * c.u[i];
      g.score.bias[0] += dzs;
      if (skip_occupancy) continue;
      std::size_t off = 0;
      if (a.fusion == FusionMode::All) {
        for (std::size_t i = 0; i < a.hidden1; ++i) dh1[i] = dzs * params.score.weights[off + i];
        off += a.hidden1;
      }
      if (a.fusion != FusionMode::Output) {
        for (std::size_t i = 0; i < a.hidden2; ++i) dh2[i] = dzs * params.score.weights[off + i];
        off += a.hidden2;
      }
      for (std::size_t k = 0; k < a.groups; ++k) dg[k] = dzs * params.score.weights[off + k];
    }

    for (std::size_t k = 0; k < a.groups; ++k) {
      dz3[k] = dg[k] * c.g[k] * (1.0 - c.g[k]);
      double* row = g.occupancy.weights.data() + k * a.hidden2;
      for (std::size_t i = 0; i < a.hidden2; ++i) row[i] += dz3[k] * c.h2_out[i];
      g.occupancy.bias[k] += dz3[k];
      const double* w = params.occupancy.weights.data() + k * a.hidden2;
      for (std::size_t i = 0; i < a.hidden2; ++i) dh2[i] += w[i] * dz3[k];
    }
    for (std::size_t j = 0; j < a.hidden2; ++j) {
      dz2[j] = dh2[j] * c.mask2[j] * c.h2[j] * (1.0 - c.h2[j]);
      if (dz2[j] == 0.0) continue;
      double* row = g.hidden2.weights.data() + j * a.hidden1;
      const double* w = params.hidden2.weights.data() + j * a.hidden1;
      for (std::size_t i = 0; i < a.hidden1; ++i) {
        row[i] += dz2[j] * c.h1_out[i];
        dh1[i] += w[i] * dz2[j];
      }
      g.hidden2.bias[j] += dz2[j];
    }
    for (std::size_t j = 0; j < a.hidden1; ++j) {
      dz1[j] = dh1[j] * c.mask1[j] * c.h1[j] * (1.0 - c.h1[j]);
      if (dz1[j] == 0.0) continue;
      double* row = g.hidden1.weights.data() + j * a.input_dim;
      for (std::size_t i = 0; i < a.input_dim; ++i) row[i] += dz1[j] * f[i];
      g.hidden1.bias[j] += dz1[j];
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// AdamW with decoupled weight decay.

struct AdamWHyper {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 2e-8;
  double weight_decay = 0.01;

  bool operator==(const AdamWHyper&) const = default;
};

struct OptimizerState {
  AdamWHyper hyper;
  ModelParams m;
  ModelParams v;
  std::uint64_t step = 0;

  OptimizerState() = default;
  OptimizerState(const Architecture& arch, AdamWHyper h) : hyper(h), m(arch), v(arch) {}
};

// One update of every tensor. Tensors excluded by `frozen` (indexed like
// ModelParams::tensors()) are left untouched, moments included.
inline void adamw_step(ModelParams& params, const ModelParams& grads, OptimizerState& state,
                       const std::array<bool, ModelParams::kTensorCount>& frozen = {}) {
  if (!(grads.arch == params.arch) || !(state.m.arch == params.arch))
    throw ShapeError("adamw: gradient/state shapes do not match the parameters");
  auto p_t = params.tensors();
  auto g_t = grads.tensors();
  for (std::size_t t = 0; t < ModelParams::kTensorCount; ++t) {
    for (std::size_t i = 0; i < g_t[t].size(); ++i)
      if (!std::isfinite(g_t[t][i]))
        throw NumericError("non-finite gradient in " + std::string(ModelParams::kTensorNames[t]) + "[" +
                           std::to_string(i) + "]");
  }
  const AdamWHyper& h = state.hyper;
  ++state.step;
  const double step = static_cast<double>(state.step);
  const double bias1 = 1.0 - std::pow(h.beta1, step);
  const double bias2 = 1.0 - std::pow(h.beta2, step);
  auto m_t = state.m.tensors();
  auto v_t = state.v.tensors();
  for (std::size_t t = 0; t < ModelParams::kTensorCount; ++t) {
    if (frozen[t]) continue;
    for (std::size_t i = 0; i < p_t[t].size(); ++i) {
      const double grad = g_t[t][i];
      double& m = m_t[t][i];
      double& v = v_t[t][i];
      m = h.beta1 * m + (1.0 - h.beta1) * grad;
      v = h.beta2 * v + (1.0 - h.beta2) * grad * grad;
      const double m_hat = m / bias1;
      const double v_hat = v / bias2;
      double& w = p_t[t][i];
      w -= h.learning_rate * (m_hat / (std::sqrt(v_hat) + h.epsilon) + h.weight_decay * w);
    }
  }
}

// ---------------------------------------------------------------------------
// Prediction and metrics.

// Argmax of g; ties resolve to the lowest group index.
inline Group predict_group(std::span<const double> g) {
  std::size_t best = 0;
  for (std::size_t k = 1; k < g.size(); ++k)
    if (g[k] > g[best]) best = k;
  return static_cast<Group>(best);
}

inline Group predict_occupancy(std::span<const double> f, const ModelParams& params) {
  return predict_group(forward_occupancy(f, params, Mode::Eval).g);
}

// Per-class recall; a group with no test samples is reported as absent.
using SectorAccuracy = std::array<std::optional<double>, kNumGroups>;

inline SectorAccuracy sector_accuracy(const Dataset& data, const ModelParams& params) {
  std::array<std::size_t, kNumGroups> total{}, correct{};
  for (std::size_t i = 0; i < data.size(); ++i) {
    const auto k = group_index(data.groups[i]);
    ++total[k];
    if (predict_occupancy(data.features[i], params) == data.groups[i]) ++correct[k];
  }
  SectorAccuracy acc;
  for (std::size_t k = 0; k < kNumGroups; ++k)
    if (total[k] > 0) acc[k] = static_cast<double>(correct[k]) / static_cast<double>(total[k]);
  return acc;
}

inline double mean_sector_accuracy(const SectorAccuracy& acc) {
  double sum = 0.0;
  std::size_t n = 0;
  for (const auto& a : acc)
    if (a) {
      sum += *a;
      ++n;
    }
  return n == 0 ? 0.0 : sum / static_cast<double>(n);
}

inline std::vector<double> predict_scores(const Dataset& data, const ModelParams& params) {
  std::vector<double> out;
  out.reserve(data.size());
  for (std::size_t i = 0; i < data.size(); ++i)
    out.push_back(forward_score(data.features[i], data.competencies[i], params, Mode::Eval).y);
  return out;
}

// Eval-mode RMSE of the task output over the whole dataset.
inline double dataset_rmse(Task task, const Dataset& data, const ModelParams& params) {
  std::vector<std::vector<double>> pred, target;
  pred.reserve(data.size());
  target.reserve(data.size());
  for (std::size_t i = 0; i < data.size(); ++i) {
    if (task == Task::Occupancy) {
      pred.push_back(forward_occupancy(data.features[i], params, Mode::Eval).g);
    } else {
      pred.push_back({forward_score(data.features[i], data.competencies[i], params, Mode::Eval).y});
    }
    target.push_back(data.target(task, i, params.arch.groups));
  }
  return rmse_loss(pred, target);
}

// ---------------------------------------------------------------------------
// Training loop.

struct TrainConfig {
  Task task = Task::Occupancy;
  std::size_t epochs = 50;
  std::size_t batch_size = 32;
  double dropout = 0.3;
  std::uint64_t seed = 0;
  bool freeze_occupancy_head = false;  // scoring only: train ws alone
  AdamWHyper optimizer;

  bool operator==(const TrainConfig&) const = default;

  void validate() const {
    if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
    if (!(dropout >= 0.0 && dropout < 1.0)) throw ConfigError("dropout must lie in [0, 1)");
    if (optimizer.weight_decay < 0.0) throw ConfigError("weight_decay must be >= 0");
  }
};

struct CurvePoint {
  std::size_t epoch = 0;
  std::string split;
  std::string metric;
  double value = 0.0;

  bool operator==(const CurvePoint&) const = default;
};

struct LearningCurve {
  std::vector<CurvePoint> points;

  bool operator==(const LearningCurve&) const = default;

  std::optional<double> value(std::size_t epoch, std::string_view split, std::string_view metric) const {
    for (const auto& p : points)
      if (p.epoch == epoch && p.split == split && p.metric == metric) return p.value;
    return std::nullopt;
  }
};

struct TrainResult {
  ModelParams params;
  LearningCurve curve;
  std::uint64_t optimizer_steps = 0;
};

namespace detail {

inline void record_metrics(LearningCurve& curve, std::size_t epoch, const char* split, Task task,
                           const Dataset& data, const ModelParams& params) {
  if (task != Task::Occupancy) {
    curve.points.push_back({epoch, split, "rmse", dataset_rmse(task, data, params)});
    return;
  }
  // One forward pass per sample serves both metrics; the RMSE sums in the
  // same order as rmse_loss.
  double sum = 0.0;
  std::array<std::size_t, kNumGroups> total{}, correct{};
  for (std::size_t i = 0; i < data.size(); ++i) {
    const auto g = forward_occupancy(data.features[i], params, Mode::Eval).g;
    const auto t = data.target(task, i, params.arch.groups);
    for (std::size_t k = 0; k < g.size(); ++k) sum += (g[k] - t[k]) * (g[k] - t[k]);
    const auto k = group_index(data.groups[i]);
    ++total[k];
    if (predict_group(g) == data.groups[i]) ++correct[k];
  }
  curve.points.push_back(
      {epoch, split, "rmse", std::sqrt(sum / static_cast<double>(data.size() * params.arch.groups))});
  SectorAccuracy acc;
  for (std::size_t k = 0; k < kNumGroups; ++k)
    if (total[k] > 0) acc[k] = static_cast<double>(correct[k]) / static_cast<double>(total[k]);
  for (Group grp : kAllGroups) {
    if (acc[group_index(grp)])
      curve.points.push_back({epoch, split, "accuracy_" + std::string(group_name(grp)), *acc[group_index(grp)]});
  }
  curve.points.push_back({epoch, split, "mean_accuracy", mean_sector_accuracy(acc)});
}

}  // namespace detail

// Per epoch: seeded shuffle, mini-batches (the last may be short), one
// AdamW step per batch, then train/test metrics. Dropout masks are keyed on
// (seed, epoch, resume id) so results depend only on inputs.
inline TrainResult train(const Dataset& train_set, const TrainConfig& config, ModelParams params,
                         const Dataset* test_set = nullptr,
                         const std::function<void(std::size_t epoch)>& on_epoch = {}) {
  config.validate();
  if (train_set.empty()) throw ContractError("cannot train on an empty corpus");
  for (const auto& f : train_set.features) detail::check_input(f, params);
  if (test_set != nullptr)
    for (const auto& f : test_set->features) detail::check_input(f, params);

  const bool skip_occupancy = config.task == Task::Scoring && config.freeze_occupancy_head;
  std::array<bool, ModelParams::kTensorCount> frozen{};
  for (std::size_t t = 0; t < frozen.size(); ++t)
    frozen[t] = skip_occupancy ? ModelParams::is_occupancy_tensor(t)
                               : config.task == Task::Occupancy && !ModelParams::is_occupancy_tensor(t);

  OptimizerState state(params.arch, config.optimizer);
  TrainResult result;
  std::vector<std::size_t> order(train_set.size());
  std::vector<ForwardCache> caches;
  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    Rng shuffle_rng(mix_seed(config.seed, epoch, 0x53485546ull));
    shuffle_rng.shuffle(std::span<std::size_t>(order));

    for (std::size_t begin = 0; begin < order.size(); begin += config.batch_size) {
      const std::size_t end = std::min(begin + config.batch_size, order.size());
      const std::span<const std::size_t> batch(order.data() + begin, end - begin);
      caches.clear();
      for (std::size_t idx : batch) {
        const std::uint64_t dseed = mix_seed(config.seed, epoch, train_set.ids[idx]);
        if (config.task == Task::Occupancy) {
          caches.push_back(forward_occupancy(train_set.features[idx], params, Mode::Train, config.dropout, dseed));
        } else {
          caches.push_back(forward_score(train_set.features[idx], train_set.competencies[idx], params, Mode::Train,
                                         config.dropout, dseed));
        }
      }
      const auto grads = backward(config.task, train_set, batch, params, caches, skip_occupancy);
      adamw_step(params, grads.grads, state, frozen);
    }

    detail::record_metrics(result.curve, epoch, "train", config.task, train_set, params);
    if (test_set != nullptr && !test_set->empty())
      detail::record_metrics(result.curve, epoch, "test", config.task, *test_set, params);
    if (on_epoch) on_epoch(epoch);
  }
  result.params = std::move(params);
  result.optimizer_steps = state.step;
  return result;
}

// ---------------------------------------------------------------------------
// Persistence.

inline std::string curve_to_csv(const LearningCurve& curve) {
  std::ostringstream out;
  out << "epoch,split,metric,value\n";
  char buf[64];
  for (const auto& p : curve.points) {
    std::snprintf(buf, sizeof buf, "%.17g", p.value);
    out << p.epoch << ',' << p.split << ',' << p.metric << ',' << buf << '\n';
  }
  return out.str();
}

inline void save_curve_csv(const LearningCurve& curve, const std::string& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write learning curve: " + path);
  out << curve_to_csv(curve);
}

inline LearningCurve parse_curve_csv(const std::string& csv) {
  std::istringstream in(csv);
  std::string line;
  std::size_t line_no = 0;
  LearningCurve curve;
  while (std::getline(in, line)) {
    ++line_no;
    if (line_no == 1) {
      if (line != "epoch,split,metric,value") throw ParseError(1, "unexpected learning-curve header");
      continue;
    }
    if (line.empty()) continue;
    std::istringstream fields(line);
    std::string epoch, split, metric, value;
    if (!std::getline(fields, epoch, ',') || !std::getline(fields, split, ',') || !std::getline(fields, metric, ',') ||
        !std::getline(fields, value))
      throw ParseError(line_no, "expected 4 fields");
    try {
      curve.points.push_back({std::stoull(epoch), split, metric, std::stod(value)});
    } catch (const std::exception&) {
      throw ParseError(line_no, "bad number in '" + line + "'");
    }
  }
  return curve;
}

inline LearningCurve load_curve_csv(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read learning curve: " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_curve_csv(buf.str());
}

// "PBAMDL01", u64 input_dim, hidden1, hidden2, groups, fusion mode, seed,
// f64 weight decay, then every tensor in ModelParams::tensors() order as f64.
inline constexpr char kSnapshotMagic[9] = "PBAMDL01";

struct Snapshot {
  ModelParams params;
  std::uint64_t seed = 0;
  double weight_decay = 0.0;
};

inline void save_snapshot(const Snapshot& snap, const std::string& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write snapshot: " + path);
  const Architecture& a = snap.params.arch;
  detail::write_magic(out, kSnapshotMagic);
  detail::write_u64(out, a.input_dim);
  detail::write_u64(out, a.hidden1);
  detail::write_u64(out, a.hidden2);
  detail::write_u64(out, a.groups);
  detail::write_u64(out, static_cast<std::uint64_t>(a.fusion));
  detail::write_u64(out, snap.seed);
  detail::write_f64(out, snap.weight_decay);
  for (auto t : snap.params.tensors())
    for (double x : t) detail::write_f64(out, x);
  if (!out) throw IoError("failed writing snapshot: " + path);
}

inline Snapshot load_snapshot(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read snapshot: " + path);
  detail::expect_magic(in, kSnapshotMagic, path);
  Architecture a;
  a.input_dim = detail::read_u64(in, "input_dim");
  a.hidden1 = detail::read_u64(in, "hidden1");
  a.hidden2 = detail::read_u64(in, "hidden2");
  a.groups = detail::read_u64(in, "groups");
  const auto fusion = detail::read_u64(in, "fusion");
  if (fusion > 2) throw SchemaError(path + ": unknown fusion mode");
  a.fusion = static_cast<FusionMode>(fusion);
  if (a.groups != kNumGroups) throw SchemaError(path + ": occupancy head must have 4 outputs");
  Snapshot s;
  s.seed = detail::read_u64(in, "seed");
  s.weight_decay = detail::read_f64(in, "weight_decay");
  s.params = ModelParams(a);
  for (auto t : s.params.tensors())
    for (double& x : t) x = detail::read_f64(in, "parameters");
  return s;
}

}  // namespace pba
