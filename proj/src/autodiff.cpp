#include "glidr/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace glidr {

namespace {

// log(1 + exp(-x)) without overflow
double softplus_neg(double x) {
  return x > 0 ? std::log1p(std::exp(-x)) : -x + std::log1p(std::exp(x));
}

// d/dx log(1 + exp(-x)) = -1 / (1 + exp(x))
double softplus_neg_grad(double x) {
  if (x >= 0) {
    const double e = std::exp(-x);
    return -e / (1.0 + e);
  }
  return -1.0 / (1.0 + std::exp(x));
}

}  // namespace

double loss_pairwise_logistic(std::span<const double> s, std::span<const std::uint8_t> y) {
  if (s.size() != y.size()) throw std::invalid_argument("scores and labels differ in length");
  double total = 0.0;
  for (std::size_t i = 0; i < s.size(); ++i)
    for (std::size_t j = 0; j < s.size(); ++j)
      if (y[i] > y[j]) total += softplus_neg(s[i] - s[j]);
  return total;
}

std::vector<double> loss_pairwise_logistic_grad(std::span<const double> s,
                                                std::span<const std::uint8_t> y) {
  if (s.size() != y.size()) throw std::invalid_argument("scores and labels differ in length");
  std::vector<double> g(s.size(), 0.0);
  for (std::size_t i = 0; i < s.size(); ++i)
    for (std::size_t j = 0; j < s.size(); ++j)
      if (y[i] > y[j]) {
        const double d = softplus_neg_grad(s[i] - s[j]);
        g[i] += d;
        g[j] -= d;
      }
  return g;
}

std::size_t ordered_pair_count(std::span<const std::uint8_t> y) {
  std::size_t pos = 0, neg = 0;
  for (auto v : y) (v ? pos : neg) += 1;
  return pos * neg;
}

Tape Tape::record(const AdjacencyTensor& B, std::span<const RuleWeights> bodies,
                  std::span<const Query> queries, std::span<const std::uint8_t> labels,
                  std::size_t r_max, LossReduction reduction) {
  if (queries.size() != labels.size()) throw std::invalid_argument("labels/queries mismatch");
  Tape t;
  t.B_ = &B;
  t.weights_ = gather_weights(bodies);
  t.labels_.assign(labels.begin(), labels.end());
  t.reduction_ = reduction;
  t.out_ = run_soft_batch(B, t.weights_, queries, r_max, &t.trace_);
  const auto pairs = ordered_pair_count(labels);
  const double scale =
      reduction == LossReduction::sum ? 1.0 : (pairs ? 1.0 / static_cast<double>(pairs) : 0.0);
  const auto Q = queries.size();
  t.body_losses_.resize(t.weights_.n_bodies);
  t.loss_ = 0.0;
  for (std::size_t b = 0; b < t.weights_.n_bodies; ++b) {
    std::span<const double> sb(t.out_.scores.data() + b * Q, Q);
    t.body_losses_[b] = scale * loss_pairwise_logistic(sb, labels);
    t.loss_ += t.body_losses_[b];
  }
  t.loss_ /= static_cast<double>(t.weights_.n_bodies);
  return t;
}

std::uint64_t Tape::branch_signature() const {
  std::uint64_t h = 1469598103934665603ULL;
  auto mix = [&h](std::uint64_t v) {
    h ^= v;
    h *= 1099511628211ULL;
  };
  for (const auto& r : trace_.routing)
    for (auto v : r) mix(v);
  for (const auto& c : trace_.clamped)
    for (auto v : c) mix(v);
  for (auto v : trace_.final_argmax) mix(v);
  for (auto v : trace_.final_argmin) mix(v);
  return h;
}

Gradients backward(const Tape& tape, double loss_adjoint) {
  const auto& W = tape.weights_;
  const auto Q = tape.out_.n_queries;
  const auto nb = W.n_bodies;
  if (tape.trace_.n_bodies != nb || tape.trace_.n_queries != Q)
    throw std::invalid_argument("tape does not match its weights");

  const auto pairs = ordered_pair_count(tape.labels_);
  const double scale = tape.reduction_ == LossReduction::sum
                           ? 1.0
                           : (pairs ? 1.0 / static_cast<double>(pairs) : 0.0);
  std::vector<double> score_bar(Q * nb, 0.0);
  for (std::size_t b = 0; b < nb; ++b) {
    std::span<const double> sb(tape.out_.scores.data() + b * Q, Q);
    auto g = loss_pairwise_logistic_grad(sb, tape.labels_);
    for (std::size_t q = 0; q < Q; ++q)
      score_bar[b * Q + q] = loss_adjoint * scale * g[q] / static_cast<double>(nb);
  }

  const auto wbar = backprop_trace(tape.trace_, *tape.B_, W, score_bar);

  // softargmax Jacobian: dtheta_k = w_k (dw_k - <w, dw>)
  const auto S = W.schema.n_slots(), P = W.n_predicates;
  Gradients grads;
  grads.per_body.assign(nb, std::vector<double>(S * P, 0.0));
  for (std::size_t b = 0; b < nb; ++b)
    for (std::size_t s = 0; s < S; ++s) {
      double inner = 0.0;
      for (std::size_t k = 0; k < P; ++k)
        inner += W.w[(s * P + k) * nb + b] * wbar[(s * P + k) * nb + b];
      for (std::size_t k = 0; k < P; ++k) {
        const double wk = W.w[(s * P + k) * nb + b];
        grads.per_body[b][s * P + k] = wk * (wbar[(s * P + k) * nb + b] - inner);
      }
    }
  return grads;
}

GradCheckReport grad_check(std::span<const RuleWeights> bodies, std::span<const Query> queries,
                           std::span<const std::uint8_t> labels, const AdjacencyTensor& B,
                           std::size_t r_max, double h, double tol,
                           const GradientTamper& tamper) {
  const auto base = Tape::record(B, bodies, queries, labels, r_max);
  auto analytic = backward(base);
  if (tamper) tamper(analytic);
  const auto base_sig = base.branch_signature();

  std::vector<RuleWeights> probe(bodies.begin(), bodies.end());
  GradCheckReport rep;
  for (std::size_t b = 0; b < probe.size(); ++b) {
    for (std::size_t i = 0; i < probe[b].logits.size(); ++i) {
      const double orig = probe[b].logits[i];
      probe[b].logits[i] = orig + h;
      const auto plus = Tape::record(B, probe, queries, labels, r_max);
      probe[b].logits[i] = orig - h;
      const auto minus = Tape::record(B, probe, queries, labels, r_max);
      probe[b].logits[i] = orig;
      if (plus.branch_signature() != base_sig || minus.branch_signature() != base_sig) {
        ++rep.skipped_ties;
        continue;
      }
      const double numeric = (plus.loss() - minus.loss()) / (2.0 * h);
      const double a = analytic.per_body[b][i];
      const double rel = std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), 1e-8});
      rep.max_rel_error = std::max(rep.max_rel_error, rel);
      ++rep.checked;
    }
  }
  rep.passed = rep.checked > 0 && rep.max_rel_error < tol;
  return rep;
}

}  // namespace glidr
