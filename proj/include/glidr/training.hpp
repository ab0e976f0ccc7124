#pragma once

#include <cstdint>
#include <functional>
#include <random>
#include <span>
#include <stdexcept>
#include <unordered_set>
#include <vector>

#include "glidr/autodiff.hpp"
#include "glidr/inference.hpp"
#include "glidr/kg_store.hpp"
#include "glidr/rule_model.hpp"

namespace glidr {

struct TrainConfig {
  std::size_t steps = 2048;
  std::size_t batch_size = 64;
  double learning_rate = 0.15;
  double weight_decay = 0.1;
  std::size_t n_vars = 4;
  std::size_t bodies = 8;
  std::size_t r_max = 3;
  std::uint64_t seed = 0;
  std::size_t workers = 1;  // threads sharing the bodies of one relation

  void validate() const;
};

struct OptimizerState {
  std::vector<double> m;
  std::vector<double> v;
  std::uint64_t step = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;

  explicit OptimizerState(std::size_t n = 0) : m(n, 0.0), v(n, 0.0) {}
};

class NonFiniteGradient : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Decoupled weight decay Adam: p -= lr * (m_hat / (sqrt(v_hat) + eps) + wd * p).
void adamw_step(std::span<double> params, std::span<const double> grads, OptimizerState& state,
                double lr, double wd);

struct LabeledBatch {
  RelationId relation = 0;
  std::vector<Query> queries;
  std::vector<std::uint8_t> labels;
};

class NoPositives : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Closed-world sampler for one relation: positives from `positive_split`, negatives by
/// corrupting the head or tail of a known positive until the pair is unknown in `forbidden`.
class BatchSampler {
 public:
  BatchSampler(const KnowledgeBase& kb, RelationId relation, Split positive_split,
               std::span<const Split> forbidden);

  bool has_positives() const { return !positives_.empty(); }
  const std::vector<Triple>& positives() const { return positives_; }
  bool is_known(EntityId h, EntityId t) const;

  LabeledBatch sample(std::size_t batch_size, std::mt19937_64& rng) const;
  /// A negative for the relation; the fallback after 100 rejections is a uniform random pair.
  Query negative(std::mt19937_64& rng) const;

  static constexpr int kRejectionBudget = 100;

 private:
  RelationId relation_;
  std::size_t n_entities_;
  std::vector<Triple> positives_;
  std::vector<Triple> corruption_base_;
  std::unordered_set<std::uint64_t> known_;
};

/// Training batch: train-split positives, negatives absent from train and facts.
LabeledBatch sample_batch(const KnowledgeBase& kb, RelationId relation, std::size_t batch_size,
                          std::mt19937_64& rng);

struct TrainResult {
  RuleEnsemble ensemble;
  std::vector<double> loss_trace;
};

using StepCallback = std::function<void(std::size_t step, double loss)>;

/// Trains `bodies` independent rule bodies for one relation on the train-stage background.
TrainResult train_relation(const KnowledgeBase& kb, RelationId relation, const TrainConfig& cfg,
                           const AdjacencyTensor& train_background,
                           const StepCallback& on_step = {});
TrainResult train_relation(const KnowledgeBase& kb, RelationId relation, const TrainConfig& cfg);

/// Per-body weights l_min / l_i from the mean validation loss of each body.
std::vector<double> validation_weights(const RuleEnsemble& ensemble, const KnowledgeBase& kb,
                                       RelationId relation, const AdjacencyTensor& eval_background,
                                       std::size_t batch_size, std::size_t r_max,
                                       std::uint64_t seed);

/// Turns mean losses into ratio weights, handling zero losses.
std::vector<double> loss_ratio_weights(std::span<const double> mean_losses);

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t a, std::uint64_t b = 0);

}  // namespace glidr
