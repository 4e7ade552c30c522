#pragma once

// Shallow node-embedding models trained on link prediction, with the
// debiasing regimes: importance-weighted edges, the group-score
// regularizer, both combined, Fairwalk-style positive sampling, and random
// embeddings.

#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "uge/common.hpp"
#include "uge/debias.hpp"
#include "uge/graph.hpp"
#include "uge/group_index.hpp"
#include "uge/split.hpp"

namespace uge {

enum class ModelKind { dot_bce, mf_bpr };
enum class Regime { none, uge_w, uge_r, uge_c, fairwalk, random };
enum class Resample { epoch, step };

inline std::string_view to_string(ModelKind k) { return k == ModelKind::dot_bce ? "dot-bce" : "mf-bpr"; }

inline std::string_view to_string(Regime r) {
  switch (r) {
    case Regime::none: return "none";
    case Regime::uge_w: return "uge-w";
    case Regime::uge_r: return "uge-r";
    case Regime::uge_c: return "uge-c";
    case Regime::fairwalk: return "fairwalk";
    case Regime::random: return "random";
  }
  return "?";
}

inline Regime parse_regime(std::string_view s) {
  for (auto r : {Regime::none, Regime::uge_w, Regime::uge_r, Regime::uge_c, Regime::fairwalk, Regime::random})
    if (to_string(r) == s) return r;
  throw ValidationError("unknown regime '" + std::string(s) + "'");
}

inline ModelKind parse_model_kind(std::string_view s) {
  if (s == "dot-bce") return ModelKind::dot_bce;
  if (s == "mf-bpr") return ModelKind::mf_bpr;
  throw ValidationError("unknown model kind '" + std::string(s) + "'");
}

inline bool uses_weights(Regime r) { return r == Regime::uge_w || r == Regime::uge_c; }
inline bool uses_regularizer(Regime r) { return r == Regime::uge_r || r == Regime::uge_c; }

/// N x d embedding matrix; score(u, v) = z_u . z_v for both model kinds.
class EmbeddingModel {
 public:
  EmbeddingModel() = default;
  EmbeddingModel(std::size_t n_nodes, std::size_t dim, ModelKind kind = ModelKind::dot_bce)
      : n_(n_nodes), d_(dim), kind_(kind), z_(n_nodes * dim, 0.0) {}

  std::size_t n_nodes() const noexcept { return n_; }
  std::size_t dim() const noexcept { return d_; }
  ModelKind kind() const noexcept { return kind_; }

  std::span<double> row(NodeId u) { return {z_.data() + u * d_, d_}; }
  std::span<const double> row(NodeId u) const { return {z_.data() + u * d_, d_}; }
  std::span<double> data() noexcept { return z_; }
  std::span<const double> data() const noexcept { return z_; }

  double score(NodeId u, NodeId v) const {
    if (u >= n_ || v >= n_) throw ValidationError("score: node index out of range");
    return dot(u, v);
  }

  /// Unchecked dot product for inner loops.
  double dot(NodeId u, NodeId v) const noexcept {
    const double* a = z_.data() + u * d_;
    const double* b = z_.data() + v * d_;
    double s = 0.0;
    for (std::size_t i = 0; i < d_; ++i) s += a[i] * b[i];
    return s;
  }

  bool operator==(const EmbeddingModel&) const = default;

 private:
  std::size_t n_ = 0, d_ = 0;
  ModelKind kind_ = ModelKind::dot_bce;
  std::vector<double> z_;
};

inline double score(const EmbeddingModel& m, NodeId u, NodeId v) { return m.score(u, v); }

// -----------------------------------------------------------------------------
// Losses
// -----------------------------------------------------------------------------

inline double softplus(double x) noexcept {
  return x > 0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

inline double sigmoid(double x) noexcept {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

struct LossGrad {
  double loss = 0.0;
  double grad = 0.0;  // d loss / d score
};

/// Binary cross-entropy on a logit: softplus(s) - label * s.
inline LossGrad bce_edge_loss(double score, int label) noexcept {
  return {softplus(score) - label * score, sigmoid(score) - label};
}

struct PairLossGrad {
  double loss = 0.0;
  double d_pos = 0.0;
  double d_neg = 0.0;
};

/// Pairwise logistic (BPR) loss softplus(-(pos - neg)).
inline PairLossGrad bpr_loss(double pos_score, double neg_score) noexcept {
  const double margin = pos_score - neg_score;
  const double g = -sigmoid(-margin);
  return {softplus(-margin), g, -g};
}

// -----------------------------------------------------------------------------
// Optimizer
// -----------------------------------------------------------------------------

struct AdamState {
  std::vector<double> m, v;
  double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;

  AdamState() = default;
  explicit AdamState(std::size_t n) : m(n, 0.0), v(n, 0.0) {}
};

/// Bias-corrected Adam with coupled L2 decay (decay * param added to the
/// gradient). `t` is the 1-based step index.
inline void adam_step(std::span<double> params, AdamState& state, std::span<const double> grads,
                      double learning_rate, double weight_decay, std::size_t t) {
  if (t < 1) throw ValidationError("adam_step: step index starts at 1");
  if (grads.size() != params.size() || state.m.size() != params.size())
    throw ValidationError("adam_step: size mismatch");
  for (std::size_t i = 0; i < grads.size(); ++i)
    if (!std::isfinite(grads[i]))
      throw RuntimeError("adam_step: non-finite gradient at parameter " + std::to_string(i) + " (step " +
                         std::to_string(t) + ")");
  const double c1 = 1.0 - std::pow(state.beta1, static_cast<double>(t));
  const double c2 = 1.0 - std::pow(state.beta2, static_cast<double>(t));
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double g = grads[i] + weight_decay * params[i];
    state.m[i] = state.beta1 * state.m[i] + (1.0 - state.beta1) * g;
    state.v[i] = state.beta2 * state.v[i] + (1.0 - state.beta2) * g * g;
    const double m_hat = state.m[i] / c1;
    const double v_hat = state.v[i] / c2;
    params[i] -= learning_rate * m_hat / (std::sqrt(v_hat) + state.eps);
  }
}

// -----------------------------------------------------------------------------
// Objective
// -----------------------------------------------------------------------------

struct PointTerm {
  NodeId u = 0, v = 0;
  int label = 0;
  double weight = 1.0;
};

struct RankTerm {
  NodeId u = 0, pos = 0, neg = 0;
  double weight = 1.0;
};

struct TrainingBatch {
  std::vector<PointTerm> points;  // dot-bce terms
  std::vector<RankTerm> ranks;    // mf-bpr terms
  std::size_t positives = 0;      // positive edges behind the terms; 0 averages over terms instead
  std::size_t size() const noexcept { return points.size() + ranks.size(); }
  double normalizer() const noexcept { return static_cast<double>(positives > 0 ? positives : size()); }
};

struct RegularizerInput {
  const GroupHierarchy* groups = nullptr;
  std::span<const GroupPair> pairs;
  std::size_t pairs_per_group = 128;
  std::uint64_t seed = 0;
  bool squared = false;
  double lambda = 0.5;
};

struct ObjectiveValue {
  double edge_loss = 0.0;  // weighted loss per positive edge, negatives summed
  double reg_value = 0.0;  // regularizer term before lambda
  double total = 0.0;
};

/// Loss of one batch and its gradient with respect to the embedding matrix.
/// `grad` must have n_nodes * dim entries and is overwritten.
inline ObjectiveValue evaluate_objective(const EmbeddingModel& model, const TrainingBatch& batch,
                                         const RegularizerInput* reg, std::span<double> grad) {
  const std::size_t d = model.dim();
  if (grad.size() != model.data().size()) throw ValidationError("gradient buffer has the wrong size");
  std::fill(grad.begin(), grad.end(), 0.0);
  const auto z = model.data();
  auto accumulate = [&](NodeId u, NodeId v, double coeff) {
    for (std::size_t i = 0; i < d; ++i) {
      grad[u * d + i] += coeff * z[v * d + i];
      grad[v * d + i] += coeff * z[u * d + i];
    }
  };

  ObjectiveValue out;
  if (batch.size() > 0) {
    const double inv = 1.0 / batch.normalizer();
    for (const auto& t : batch.points) {
      const auto lg = bce_edge_loss(model.dot(t.u, t.v), t.label);
      out.edge_loss += t.weight * lg.loss * inv;
      accumulate(t.u, t.v, t.weight * lg.grad * inv);
    }
    for (const auto& t : batch.ranks) {
      const auto lg = bpr_loss(model.dot(t.u, t.pos), model.dot(t.u, t.neg));
      out.edge_loss += t.weight * lg.loss * inv;
      accumulate(t.u, t.pos, t.weight * lg.d_pos * inv);
      accumulate(t.u, t.neg, t.weight * lg.d_neg * inv);
    }
  }
  out.total = out.edge_loss;
  if (reg && reg->groups && reg->lambda != 0.0) {
    auto r = regularizer_term([&](NodeId u, NodeId v) { return model.dot(u, v); }, *reg->groups, reg->pairs,
                              reg->pairs_per_group, reg->seed, reg->squared);
    out.reg_value = r.value;
    out.total += reg->lambda * r.value;
    for (const auto& pg : r.gradients) accumulate(pg.u, pg.v, reg->lambda * pg.coeff);
  }
  return out;
}

// -----------------------------------------------------------------------------
// Fairwalk sampling
// -----------------------------------------------------------------------------

/// Two-level draw from `candidates`: pick one of the sensitive-value groups
/// present among them uniformly, then a member of that group uniformly.
/// `sensitive` groups nodes by their sensitive attribute values.
class FairwalkSampler {
 public:
  FairwalkSampler(std::span<const NodeId> candidates, const Grouping& sensitive) {
    for (NodeId v : candidates) {
      const auto p = sensitive.profile_of(v);
      auto it = std::find(profiles_.begin(), profiles_.end(), p);
      if (it == profiles_.end()) {
        profiles_.push_back(p);
        buckets_.emplace_back();
        it = profiles_.end() - 1;
      }
      buckets_[static_cast<std::size_t>(it - profiles_.begin())].push_back(v);
    }
  }

  bool empty() const noexcept { return buckets_.empty(); }

  NodeId draw(Rng& rng) const {
    const auto& bucket = buckets_[rng.below(buckets_.size())];
    return bucket[rng.below(bucket.size())];
  }

 private:
  std::vector<ProfileId> profiles_;
  std::vector<std::vector<NodeId>> buckets_;
};

inline NodeId fairwalk_positive_sampler(const AttributedGraph& g, const Grouping& sensitive, NodeId u, Rng& rng) {
  if (g.degree(u) == 0) throw ValidationError("fairwalk: node has no neighbors");
  return FairwalkSampler(g.neighbors(u), sensitive).draw(rng);
}

inline NodeId fairwalk_positive_sampler(const AttributedGraph& g, NodeId u, Rng& rng) {
  return fairwalk_positive_sampler(g, Grouping(g, g.schema().sensitive_attributes()), u, rng);
}

// -----------------------------------------------------------------------------
// Training
// -----------------------------------------------------------------------------

struct TrainConfig {
  Regime regime = Regime::none;
  ModelKind model = ModelKind::dot_bce;
  std::size_t dim = 16;
  std::size_t epochs = 800;
  double learning_rate = 0.01;
  double weight_decay = 0.0005;
  double lambda = 0.5;
  double reg_fraction = 0.1;
  std::uint32_t neg_ratio = 20;
  std::uint64_t seed = 0;
  bool weight_negatives = false;
  bool factorized = false;
  std::size_t pairs_per_group = 128;
  bool reg_squared = false;
  Resample reg_resample = Resample::epoch;
  std::size_t batch_nodes = 0;  // nodes per Adam step; 0 takes every node in one step

  void validate() const {
    if (!(lambda >= 0.0)) throw ValidationError("lambda must be >= 0");
    if (epochs < 1) throw ValidationError("epochs must be >= 1");
    if (!(learning_rate > 0.0)) throw ValidationError("learning_rate must be > 0");
    if (!(weight_decay >= 0.0)) throw ValidationError("weight_decay must be >= 0");
    if (dim < 1) throw ValidationError("dim must be >= 1");
    if (!(reg_fraction > 0.0 && reg_fraction <= 1.0)) throw ValidationError("reg_fraction must be in (0, 1]");
    if (pairs_per_group < 1) throw ValidationError("pairs_per_group must be >= 1");
  }
};

struct TrainLogEntry {
  std::size_t epoch = 0;
  double loss = 0.0;  // edge loss per positive, averaged over the epoch's steps
  double reg = 0.0;   // mean regularizer term
};

/// Terms contributed by one node's training examples.
inline void append_node_terms(TrainingBatch& batch, const NodeExamples& e, std::span<const NodeId> positives,
                              const RatioTable* table, const TrainConfig& cfg) {
  const bool weighted = uses_weights(cfg.regime) && table;
  auto w = [&](NodeId v) { return weighted ? table->weight(e.node, v) : 1.0; };
  batch.positives += positives.size();
  if (cfg.model == ModelKind::dot_bce) {
    for (NodeId v : positives) batch.points.push_back({e.node, v, 1, w(v)});
    for (NodeId v : e.train_neg) batch.points.push_back({e.node, v, 0, cfg.weight_negatives ? w(v) : 1.0});
  } else {
    if (positives.empty()) return;
    // Negative j is ranked against positive j mod |positives|.
    for (std::size_t j = 0; j < e.train_neg.size(); ++j) {
      const NodeId pos = positives[j % positives.size()];
      const NodeId neg = e.train_neg[j];
      batch.ranks.push_back({e.node, pos, neg, w(pos) * (cfg.weight_negatives ? w(neg) : 1.0)});
    }
  }
}

/// Trains embeddings on the training portion of `splits`. `table` is
/// required for the weighted regimes.
inline EmbeddingModel train(const AttributedGraph& g, const EdgeSplits& splits, const RatioTable* table,
                            const TrainConfig& cfg, std::vector<TrainLogEntry>* log = nullptr) {
  cfg.validate();
  if (uses_weights(cfg.regime) && !table)
    throw ValidationError("regime " + std::string(to_string(cfg.regime)) + " needs a ratio table");
  const std::size_t n = g.n_nodes();
  const std::size_t d = cfg.dim;
  EmbeddingModel model(n, d, cfg.model);

  if (cfg.regime == Regime::random) {
    Rng rng(stream_seed(cfg.seed, stream::kInit, 1));
    for (auto& x : model.data()) x = rng.uniform();
    return model;
  }
  {
    Rng rng(stream_seed(cfg.seed, stream::kInit, 0));
    const double bound = 1.0 / std::sqrt(static_cast<double>(d));
    for (auto& x : model.data()) x = rng.uniform(-bound, bound);
  }

  const bool regularize = uses_regularizer(cfg.regime) && cfg.lambda > 0.0;
  std::optional<GroupHierarchy> own_groups;
  const GroupHierarchy* groups = nullptr;
  if (regularize) {
    if (table) {
      groups = &table->groups;
    } else {
      own_groups.emplace(g);
      groups = &*own_groups;
    }
  }
  std::optional<Grouping> sensitive;
  if (cfg.regime == Regime::fairwalk) sensitive.emplace(g, g.schema().sensitive_attributes());

  AdamState adam(model.data().size());
  std::vector<double> grad(model.data().size());
  std::vector<std::size_t> order(splits.nodes.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::vector<GroupPair> group_pairs;
  std::vector<NodeId> drawn;
  std::size_t step = 0;

  const std::size_t batch_size = cfg.batch_nodes == 0 ? std::max<std::size_t>(order.size(), 1) : cfg.batch_nodes;
  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    Rng order_rng(stream_seed(cfg.seed, stream::kOrder, epoch));
    order_rng.shuffle(order);
    if (regularize && cfg.reg_resample == Resample::epoch)
      group_pairs = sample_group_pairs(*groups, cfg.reg_fraction, stream_seed(cfg.seed, stream::kGroups, epoch));

    double loss_sum = 0.0, reg_sum = 0.0;
    std::size_t batches = 0;
    for (std::size_t start = 0; start < order.size(); start += batch_size) {
      ++step;
      TrainingBatch batch;
      const std::size_t stop = std::min(order.size(), start + batch_size);
      for (std::size_t i = start; i < stop; ++i) {
        const auto& e = splits.nodes[order[i]];
        if (cfg.regime == Regime::fairwalk && !e.train_pos.empty()) {
          FairwalkSampler sampler(e.train_pos, *sensitive);
          Rng rng(stream_seed(cfg.seed, stream::kFairwalk, epoch, e.node));
          drawn.clear();
          for (std::size_t j = 0; j < e.train_pos.size(); ++j) drawn.push_back(sampler.draw(rng));
          append_node_terms(batch, e, drawn, table, cfg);
        } else {
          append_node_terms(batch, e, e.train_pos, table, cfg);
        }
      }

      RegularizerInput reg;
      if (regularize) {
        if (cfg.reg_resample == Resample::step)
          group_pairs =
              sample_group_pairs(*groups, cfg.reg_fraction, stream_seed(cfg.seed, stream::kGroups, epoch, step));
        reg.groups = groups;
        reg.pairs = group_pairs;
        reg.pairs_per_group = cfg.pairs_per_group;
        reg.seed = stream_seed(cfg.seed, stream::kRegularizer, epoch,
                               cfg.reg_resample == Resample::step ? step : 0);
        reg.squared = cfg.reg_squared;
        reg.lambda = cfg.lambda;
      }
      const auto obj = evaluate_objective(model, batch, regularize ? &reg : nullptr, grad);
      if (!std::isfinite(obj.total))
        throw RuntimeError("non-finite loss at epoch " + std::to_string(epoch) + ", step " + std::to_string(step));
      adam_step(model.data(), adam, grad, cfg.learning_rate, cfg.weight_decay, step);
      if (!all_finite(model.data()))
        throw RuntimeError("non-finite embedding after step " + std::to_string(step));
      loss_sum += obj.edge_loss;
      reg_sum += obj.reg_value;
      ++batches;
    }
    if (log && batches > 0)
      log->push_back({epoch, loss_sum / static_cast<double>(batches), reg_sum / static_cast<double>(batches)});
  }
  return model;
}

}  // namespace uge
