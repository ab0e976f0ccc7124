#include "glidr/training.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <thread>

namespace glidr {

namespace {

std::uint64_t pair_key(EntityId h, EntityId t) {
  return (static_cast<std::uint64_t>(h) << 32) | t;
}

std::uint64_t splitmix(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

}  // namespace

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t a, std::uint64_t b) {
  return splitmix(splitmix(splitmix(seed) ^ a) ^ (b * 0x2545f4914f6cdd1dULL));
}

void TrainConfig::validate() const {
  if (steps == 0 || batch_size == 0 || n_vars < 2 || bodies == 0 || r_max == 0 || workers == 0)
    throw std::invalid_argument("training configuration values must be positive");
  if (!(learning_rate > 0.0) || !(weight_decay >= 0.0))
    throw std::invalid_argument("learning rate must be positive and weight decay non-negative");
}

void adamw_step(std::span<double> params, std::span<const double> grads, OptimizerState& st,
                double lr, double wd) {
  if (params.size() != grads.size() || st.m.size() != params.size() ||
      st.v.size() != params.size())
    throw std::invalid_argument("optimizer shape mismatch");
  for (std::size_t i = 0; i < grads.size(); ++i)
    if (!std::isfinite(grads[i]))
      throw NonFiniteGradient("non-finite gradient at parameter " + std::to_string(i));
  ++st.step;
  const double c1 = 1.0 - std::pow(st.beta1, static_cast<double>(st.step));
  const double c2 = 1.0 - std::pow(st.beta2, static_cast<double>(st.step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    st.m[i] = st.beta1 * st.m[i] + (1.0 - st.beta1) * grads[i];
    st.v[i] = st.beta2 * st.v[i] + (1.0 - st.beta2) * grads[i] * grads[i];
    const double mhat = st.m[i] / c1;
    const double vhat = st.v[i] / c2;
    params[i] -= lr * (mhat / (std::sqrt(vhat) + st.eps) + wd * params[i]);
  }
}

BatchSampler::BatchSampler(const KnowledgeBase& kb, RelationId relation, Split positive_split,
                           std::span<const Split> forbidden)
    : relation_(relation), n_entities_(kb.num_entities()) {
  for (const auto& t : kb.split(positive_split))
    if (t.relation == relation) positives_.push_back(t);
  for (Split s : forbidden)
    for (const auto& t : kb.split(s))
      if (t.relation == relation && known_.insert(pair_key(t.head, t.tail)).second)
        corruption_base_.push_back(t);
  for (const auto& t : positives_)
    if (known_.insert(pair_key(t.head, t.tail)).second) corruption_base_.push_back(t);
}

bool BatchSampler::is_known(EntityId h, EntityId t) const {
  return known_.contains(pair_key(h, t));
}

Query BatchSampler::negative(std::mt19937_64& rng) const {
  std::uniform_int_distribution<std::size_t> pick_base(0, corruption_base_.size() - 1);
  std::uniform_int_distribution<EntityId> pick_entity(0, static_cast<EntityId>(n_entities_ - 1));
  std::bernoulli_distribution coin(0.5);
  for (int attempt = 0; attempt < kRejectionBudget; ++attempt) {
    const auto& base = corruption_base_[pick_base(rng)];
    Query q{base.head, base.tail, relation_};
    if (coin(rng))
      q.head = pick_entity(rng);
    else
      q.tail = pick_entity(rng);
    if (!is_known(q.head, q.tail)) return q;
  }
  return Query{pick_entity(rng), pick_entity(rng), relation_};
}

LabeledBatch BatchSampler::sample(std::size_t batch_size, std::mt19937_64& rng) const {
  if (positives_.empty()) throw NoPositives("relation has no positives to sample");
  LabeledBatch batch;
  batch.relation = relation_;
  batch.queries.reserve(batch_size);
  batch.labels.reserve(batch_size);
  std::bernoulli_distribution coin(0.5);
  std::uniform_int_distribution<std::size_t> pick(0, positives_.size() - 1);
  for (std::size_t i = 0; i < batch_size; ++i) {
    if (coin(rng)) {
      const auto& t = positives_[pick(rng)];
      batch.queries.push_back(Query{t.head, t.tail, relation_});
      batch.labels.push_back(1);
    } else {
      batch.queries.push_back(negative(rng));
      batch.labels.push_back(0);
    }
  }
  return batch;
}

LabeledBatch sample_batch(const KnowledgeBase& kb, RelationId relation, std::size_t batch_size,
                          std::mt19937_64& rng) {
  const Split forbidden[] = {Split::facts, Split::train};
  return BatchSampler(kb, relation, Split::train, forbidden).sample(batch_size, rng);
}

namespace {

// Mean loss and gradients over all bodies, optionally splitting bodies across threads.
// Per-body lanes are independent, so the result does not depend on the split.
std::pair<double, Gradients> batch_objective(const AdjacencyTensor& B,
                                             std::span<const RuleWeights> bodies,
                                             const LabeledBatch& batch, std::size_t r_max,
                                             std::size_t workers) {
  const std::size_t nb = bodies.size();
  workers = std::clamp<std::size_t>(workers, 1, nb);
  if (workers == 1) {
    auto tape = Tape::record(B, bodies, batch.queries, batch.labels, r_max);
    return {tape.loss(), backward(tape)};
  }
  std::vector<double> losses(workers, 0.0);
  std::vector<Gradients> parts(workers);
  std::vector<std::pair<std::size_t, std::size_t>> ranges;
  for (std::size_t w = 0; w < workers; ++w)
    ranges.emplace_back(w * nb / workers, (w + 1) * nb / workers);
  {
    std::vector<std::jthread> pool;
    for (std::size_t w = 0; w < workers; ++w) {
      pool.emplace_back([&, w] {
        auto [lo, hi] = ranges[w];
        auto tape = Tape::record(B, bodies.subspan(lo, hi - lo), batch.queries, batch.labels, r_max);
        // each group averages over its own bodies; rescale to the global mean
        const double share = static_cast<double>(hi - lo) / static_cast<double>(nb);
        losses[w] = tape.loss() * share;
        parts[w] = backward(tape, share);
      });
    }
  }
  Gradients all;
  double loss = 0.0;
  for (std::size_t w = 0; w < workers; ++w) {
    loss += losses[w];
    for (auto& g : parts[w].per_body) all.per_body.push_back(std::move(g));
  }
  return {loss, std::move(all)};
}

}  // namespace

TrainResult train_relation(const KnowledgeBase& kb, RelationId relation, const TrainConfig& cfg,
                           const AdjacencyTensor& B, const StepCallback& on_step) {
  cfg.validate();
  const Split forbidden[] = {Split::facts, Split::train};
  BatchSampler sampler(kb, relation, Split::train, forbidden);
  if (!sampler.has_positives())
    throw NoPositives("relation '" + kb.relations.name(relation) + "' has no train positives");

  const RuleSchema schema(cfg.n_vars);
  const auto& ext = B.predicates();
  TrainResult res;
  res.ensemble.target_relation = relation;
  for (std::size_t b = 0; b < cfg.bodies; ++b)
    res.ensemble.bodies.push_back(init_weights(schema, ext, relation,
                                               derive_seed(cfg.seed, relation, b + 1)));

  const std::size_t per_body = res.ensemble.bodies[0].logits.size();
  OptimizerState opt(per_body * cfg.bodies);
  std::vector<double> params(per_body * cfg.bodies), grads(per_body * cfg.bodies);
  std::mt19937_64 rng(derive_seed(cfg.seed, relation, 0));
  res.loss_trace.reserve(cfg.steps);

  for (std::size_t step = 0; step < cfg.steps; ++step) {
    const auto batch = sampler.sample(cfg.batch_size, rng);
    auto [loss, g] = batch_objective(B, res.ensemble.bodies, batch, cfg.r_max, cfg.workers);
    for (std::size_t b = 0; b < cfg.bodies; ++b) {
      std::copy(res.ensemble.bodies[b].logits.begin(), res.ensemble.bodies[b].logits.end(),
                params.begin() + b * per_body);
      std::copy(g.per_body[b].begin(), g.per_body[b].end(), grads.begin() + b * per_body);
    }
    adamw_step(params, grads, opt, cfg.learning_rate, cfg.weight_decay);
    for (std::size_t b = 0; b < cfg.bodies; ++b)
      std::copy(params.begin() + b * per_body, params.begin() + (b + 1) * per_body,
                res.ensemble.bodies[b].logits.begin());
    res.loss_trace.push_back(loss);
    if (on_step) on_step(step, loss);
  }
  return res;
}

TrainResult train_relation(const KnowledgeBase& kb, RelationId relation, const TrainConfig& cfg) {
  const auto ext = build_extended(kb);
  const auto bg = background_for(Stage::train, kb);
  const auto B = build_adjacency(bg, kb.num_entities(), ext);
  return train_relation(kb, relation, cfg, B);
}

std::vector<double> loss_ratio_weights(std::span<const double> losses) {
  std::vector<double> w(losses.size(), 1.0);
  double min_nonzero = std::numeric_limits<double>::infinity();
  for (double l : losses)
    if (l > 0.0) min_nonzero = std::min(min_nonzero, l);
  if (!std::isfinite(min_nonzero)) return w;
  for (std::size_t i = 0; i < losses.size(); ++i)
    w[i] = losses[i] > 0.0 ? min_nonzero / losses[i] : 1.0;
  return w;
}

std::vector<double> validation_weights(const RuleEnsemble& ensemble, const KnowledgeBase& kb,
                                       RelationId relation, const AdjacencyTensor& B,
                                       std::size_t batch_size, std::size_t r_max,
                                       std::uint64_t seed) {
  const std::size_t nb = ensemble.bodies.size();
  const Split forbidden[] = {Split::facts, Split::train, Split::valid};
  BatchSampler sampler(kb, relation, Split::valid, forbidden);
  if (!sampler.has_positives() || nb == 0) return std::vector<double>(nb, 1.0);

  std::mt19937_64 rng(derive_seed(seed, relation, 0x7a11d));
  const std::size_t per_batch = std::max<std::size_t>(1, batch_size / 2);
  const auto& pos = sampler.positives();
  std::vector<double> sums(nb, 0.0);
  std::size_t batches = 0;
  for (std::size_t start = 0; start < pos.size(); start += per_batch) {
    LabeledBatch batch;
    const auto end = std::min(pos.size(), start + per_batch);
    for (std::size_t i = start; i < end; ++i) {
      batch.queries.push_back(Query{pos[i].head, pos[i].tail, relation});
      batch.labels.push_back(1);
    }
    for (std::size_t i = start; i < end; ++i) {
      batch.queries.push_back(sampler.negative(rng));
      batch.labels.push_back(0);
    }
    auto tape = Tape::record(B, ensemble.bodies, batch.queries, batch.labels, r_max);
    for (std::size_t b = 0; b < nb; ++b) sums[b] += tape.body_losses()[b];
    ++batches;
  }
  for (auto& s : sums) s /= static_cast<double>(batches);
  return loss_ratio_weights(sums);
}

}  // namespace glidr
