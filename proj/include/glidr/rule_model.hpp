#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "glidr/kg_store.hpp"

namespace glidr {

/// One body-literal position (i, j), 0-based with i < j.
struct Slot {
  std::size_t from = 0;
  std::size_t to = 0;
  friend bool operator==(const Slot&, const Slot&) = default;
};

/// N-variable graph-like schema: one slot per ordered pair i < j, listed lexicographically.
class RuleSchema {
 public:
  explicit RuleSchema(std::size_t n_vars = 2);

  std::size_t n_vars() const { return n_vars_; }
  std::size_t n_slots() const { return slots_.size(); }
  const std::vector<Slot>& slots() const { return slots_; }
  const Slot& slot(std::size_t s) const { return slots_[s]; }
  std::size_t slot_index(std::size_t i, std::size_t j) const;

  friend bool operator==(const RuleSchema& a, const RuleSchema& b) {
    return a.n_vars_ == b.n_vars_;
  }

 private:
  std::size_t n_vars_;
  std::vector<Slot> slots_;
};

/// Learnable logits, row-major [slot][predicate].
struct RuleWeights {
  RuleSchema schema;
  std::size_t n_predicates = 0;
  RelationId target_relation = 0;
  std::vector<double> logits;

  std::span<double> slot_logits(std::size_t s) {
    return {logits.data() + s * n_predicates, n_predicates};
  }
  std::span<const double> slot_logits(std::size_t s) const {
    return {logits.data() + s * n_predicates, n_predicates};
  }
};

/// Per-slot probability vectors, same layout as RuleWeights::logits.
struct SlotDistribution {
  RuleSchema schema;
  std::size_t n_predicates = 0;
  std::vector<double> weights;

  std::span<const double> slot(std::size_t s) const {
    return {weights.data() + s * n_predicates, n_predicates};
  }
};

/// Extracted symbolic rule. Each slot holds a nonempty ascending predicate subset read as a
/// disjunction; {P_true} marks an unconstrained slot.
struct HardRule {
  RuleSchema schema;
  ExtendedPredicates predicates;
  RelationId target_relation = 0;
  std::vector<std::vector<std::uint32_t>> slots;

  bool is_masked(std::size_t s) const {
    return slots[s].size() == 1 && slots[s][0] == predicates.true_index();
  }
  /// True when the non-masked slots, seen as undirected edges, contain a cycle.
  bool has_cycle() const;
  /// Throws std::invalid_argument when a slot subset is empty, out of range, or mixes P_true.
  void validate() const;

  friend bool operator==(const HardRule& a, const HardRule& b) {
    return a.schema == b.schema && a.target_relation == b.target_relation &&
           a.slots == b.slots && a.predicates.base_count() == b.predicates.base_count();
  }
};

/// All-P_true rule over the schema.
HardRule unconstrained_rule(const RuleSchema& schema, const ExtendedPredicates& ext,
                            RelationId target);

/// Bodies learned for one target relation plus optional validation weights.
struct RuleEnsemble {
  RelationId target_relation = 0;
  std::vector<RuleWeights> bodies;
  std::vector<double> body_scores;  // empty means all 1

  double body_score(std::size_t b) const { return body_scores.empty() ? 1.0 : body_scores[b]; }
};

inline constexpr double kInitLogitStddev = 0.1;

RuleWeights init_weights(const RuleSchema& schema, const ExtendedPredicates& ext,
                         RelationId target, std::uint64_t seed);

/// Numerically stable softargmax applied to every slot.
SlotDistribution slot_distributions(const RuleWeights& weights);

/// Writes the softargmax of `logits` into `out` (same length).
void softargmax(std::span<const double> logits, std::span<double> out);

HardRule extract_top_p(const SlotDistribution& dist, const ExtendedPredicates& ext,
                       RelationId target, double p);
HardRule extract_argmax(const SlotDistribution& dist, const ExtendedPredicates& ext,
                        RelationId target);

/// Renders `head(X,Y) :- lit ∧ ...`. Z_1 is X, Z_N is Y, interior variables are Z2..Z{N-1}.
std::string render_rule(const HardRule& rule, const KnowledgeBase& kb);
std::string render_rule(const HardRule& rule, std::span<const std::string> relation_names);
std::string variable_name(std::size_t var, std::size_t n_vars);

// Checkpoint and rule files. Checkpoints are JSON documents tagged with a format version.
inline constexpr int kCheckpointFormatVersion = 1;

void save_weights(const RuleWeights& w, const std::string& relation_name,
                  const std::filesystem::path& file);
RuleWeights load_weights(const std::filesystem::path& file);

std::string hard_rule_to_json(const HardRule& rule, double body_score);
std::pair<HardRule, double> hard_rule_from_json(const std::string& text);

}  // namespace glidr
