#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "glidr/inference.hpp"
#include "glidr/soft_engine.hpp"

namespace glidr {

/// Pairwise logistic ranking loss: sum over pairs with y_i > y_j of log(1 + exp(-(s_i - s_j))).
double loss_pairwise_logistic(std::span<const double> scores, std::span<const std::uint8_t> labels);

/// dL/ds for the summed pairwise logistic loss.
std::vector<double> loss_pairwise_logistic_grad(std::span<const double> scores,
                                                std::span<const std::uint8_t> labels);

std::size_t ordered_pair_count(std::span<const std::uint8_t> labels);

enum class LossReduction : std::uint8_t {
  sum,             // the plain sum over ordered pairs
  mean_over_pairs  // divided by the number of ordered pairs (0 when there are none)
};

/// Gradients with respect to the logits of every body, each laid out like RuleWeights::logits.
struct Gradients {
  std::vector<std::vector<double>> per_body;
};

/// One recorded forward pass of a labeled batch through every body, plus the loss stage.
/// The batch objective is the mean over bodies of each body's pairwise loss.
class Tape {
 public:
  static Tape record(const AdjacencyTensor& B, std::span<const RuleWeights> bodies,
                     std::span<const Query> queries, std::span<const std::uint8_t> labels,
                     std::size_t r_max, LossReduction reduction = LossReduction::mean_over_pairs);

  double loss() const { return loss_; }
  std::span<const double> body_losses() const { return body_losses_; }
  double score(std::size_t body, std::size_t query) const { return out_.score(body, query); }
  std::size_t n_bodies() const { return weights_.n_bodies; }
  std::size_t n_queries() const { return out_.n_queries; }
  const ForwardTrace& trace() const { return trace_; }
  const AdjacencyTensor& adjacency() const { return *B_; }

  /// Hash of every min/max routing decision and clamp activation; equal signatures mean
  /// the forward pass took the same piecewise-smooth branch.
  std::uint64_t branch_signature() const;

  friend Gradients backward(const Tape& tape, double loss_adjoint);

 private:
  const AdjacencyTensor* B_ = nullptr;
  BodyWeights weights_;
  ForwardTrace trace_;
  SoftBatchOutput out_;
  std::vector<std::uint8_t> labels_;
  LossReduction reduction_ = LossReduction::mean_over_pairs;
  std::vector<double> body_losses_;
  double loss_ = 0.0;
};

/// Exact reverse-mode adjoints of the recorded batch objective. Subgradients of min/max route
/// to the first extremal operand; the clamp at 1 passes no gradient where it was active.
Gradients backward(const Tape& tape, double loss_adjoint = 1.0);

struct GradCheckReport {
  double max_rel_error = 0.0;
  std::size_t checked = 0;
  std::size_t skipped_ties = 0;
  bool passed = false;
};

using GradientTamper = std::function<void(Gradients&)>;

/// Compares analytic gradients with central differences on every logit. Logits whose +-h
/// perturbation changes a min/max/clamp branch are treated as tie points and skipped.
GradCheckReport grad_check(std::span<const RuleWeights> bodies, std::span<const Query> queries,
                           std::span<const std::uint8_t> labels, const AdjacencyTensor& B,
                           std::size_t r_max, double h = 1e-5, double tol = 1e-3,
                           const GradientTamper& tamper = {});

}  // namespace glidr
