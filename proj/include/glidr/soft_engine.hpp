#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "glidr/inference.hpp"
#include "glidr/kg_store.hpp"
#include "glidr/rule_model.hpp"

namespace glidr {

/// Softargmax weights of several bodies sharing one schema, laid out [slot][predicate][body]
/// so that one edge visit serves every body.
struct BodyWeights {
  RuleSchema schema;
  std::size_t n_predicates = 0;
  std::size_t n_bodies = 0;
  std::vector<double> w;

  const double* at(std::size_t slot, std::size_t pred) const {
    return w.data() + (slot * n_predicates + pred) * n_bodies;
  }
};

BodyWeights gather_weights(std::span<const RuleWeights> bodies);

/// Record of one batched soft forward pass, sufficient to replay adjoints.
///
/// Lane layout is body-major: lane = body * n_queries + query. Every state and message is an
/// |E| x lanes row-major array.
struct ForwardTrace {
  enum class Kind : std::uint8_t { update, emit };
  struct Event {
    Kind kind;
    std::uint32_t var;       // updated variable, or message source
    std::uint32_t target;    // message destination (emit only)
    std::uint32_t slot;      // emit only
    Direction dir;           // emit only
    std::uint32_t snapshot;  // update: routing index; emit: source state snapshot
    std::uint32_t message;   // emit only
    std::vector<std::uint32_t> inputs;  // update only: message ids in operand order
  };

  std::size_t n_entities = 0;
  std::size_t n_queries = 0;
  std::size_t n_bodies = 0;
  std::size_t n_vars = 0;
  std::vector<Event> events;
  std::vector<std::vector<double>> snapshots;          // state values used as message sources
  std::vector<std::vector<std::uint8_t>> routing;      // argmin operand per (entity, lane)
  std::vector<std::vector<std::uint8_t>> clamped;      // per message: pre-clamp value > 1
  std::vector<std::uint32_t> final_argmax;             // [var][lane] entity
  std::vector<std::uint32_t> final_argmin;             // [lane] variable

  std::size_t lanes() const { return n_queries * n_bodies; }
};

struct SoftBatchOutput {
  std::size_t n_queries = 0;
  std::size_t n_bodies = 0;
  std::vector<double> scores;  // [body][query]
  std::vector<double> final_states;  // only filled on request: [var][entity][lane]

  double score(std::size_t body, std::size_t query) const {
    return scores[body * n_queries + query];
  }
};

/// Batched soft inference of many (head, tail) pairs under every body at once.
/// When `trace` is non-null the pass is recorded for differentiation.
SoftBatchOutput run_soft_batch(const AdjacencyTensor& B, const BodyWeights& weights,
                               std::span<const Query> queries, std::size_t r_max,
                               ForwardTrace* trace = nullptr, bool keep_states = false);

/// Adjoints of the slot weights w (same layout as BodyWeights::w) given dL/dscore per lane.
std::vector<double> backprop_trace(const ForwardTrace& trace, const AdjacencyTensor& B,
                                   const BodyWeights& weights,
                                   std::span<const double> score_adjoint);

}  // namespace glidr
