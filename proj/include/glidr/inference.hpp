#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "glidr/kg_store.hpp"
#include "glidr/rule_model.hpp"

namespace glidr {

enum class Direction : std::uint8_t { forward, backward };

struct Query {
  EntityId head = 0;
  EntityId tail = 0;
  RelationId relation = 0;
};

struct InferenceConfig {
  std::size_t r_max = 3;
  double convergence_tol = 1e-9;
  double wipeout_tol = 1e-12;
};

/// Soft domains phi_1..phi_N, one length-|E| vector per variable.
struct VariableStates {
  std::vector<std::vector<double>> phi;

  std::size_t n_vars() const { return phi.size(); }
};

/// phi_1 = one-hot(head), phi_N = one-hot(tail), interior variables unconstrained.
VariableStates init_states(const Query& q, std::size_t n_vars, std::size_t n_entities);

/// psi = clamp_[0,1]( sum_k w_k B_k phi + w_true ), with B_k transposed for backward messages.
/// Evaluated as a weighted sum of per-predicate sparse products.
std::vector<double> soft_message(std::span<const double> phi_src,
                                 std::span<const double> slot_weights, const AdjacencyTensor& B,
                                 Direction dir);

/// Boolean OR of the selected predicates' products; {P_true} yields all ones.
std::vector<std::uint8_t> hard_message(std::span<const std::uint8_t> phi_src,
                                       std::span<const std::uint32_t> subset,
                                       const AdjacencyTensor& B, Direction dir);

/// Element-wise minimum of the previous state and every incoming message.
std::vector<double> state_update(std::span<const double> phi_old,
                                 std::span<const std::vector<double>> messages);

/// min over variables of the max entry of each state.
double entailment_score(const VariableStates& states);

struct SoftResult {
  double score = 0.0;
  VariableStates states;
};

/// Reference single-query soft inference over exactly cfg.r_max alternating rounds.
SoftResult run_soft(const Query& q, const RuleWeights& weights, const AdjacencyTensor& B,
                    const InferenceConfig& cfg = {});
SoftResult run_soft(const Query& q, const SlotDistribution& dist, const AdjacencyTensor& B,
                    const InferenceConfig& cfg = {});

class RoundCapExceeded : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct HardResult {
  bool entailed = false;
  bool wiped_out = false;
  /// Fixed point reached on a rule whose active slots form a cycle: local consistency only.
  bool fixed_point_uncertain = false;
  std::size_t rounds = 0;
  std::vector<std::vector<std::uint8_t>> domains;
};

/// Binary propagation until a fixed point or a wipeout. Default cap is N * |E| rounds.
HardResult run_hard(const HardRule& rule, const Query& q, const AdjacencyTensor& B,
                    std::optional<std::size_t> max_rounds = std::nullopt);

enum class QueryDirection : std::uint8_t { head, tail };

/// Generate-and-test scoring of an open query: one soft inference per candidate and body,
/// combined as sum_b body_score_b * score_b.
std::vector<double> score_open_query(QueryDirection dir, EntityId fixed, RelationId relation,
                                     std::span<const EntityId> candidates,
                                     const RuleEnsemble& ensemble, const AdjacencyTensor& B,
                                     std::size_t r_max);

/// Hard-setting variant over extracted rules: sum_b body_score_b * [entailed_b].
std::vector<double> score_open_query_hard(QueryDirection dir, EntityId fixed,
                                          RelationId relation,
                                          std::span<const EntityId> candidates,
                                          std::span<const HardRule> rules,
                                          std::span<const double> body_scores,
                                          const AdjacencyTensor& B);

}  // namespace glidr
