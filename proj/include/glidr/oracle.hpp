#pragma once

#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_set>
#include <vector>

#include "glidr/inference.hpp"
#include "glidr/kg_store.hpp"
#include "glidr/rule_model.hpp"

// Reference machinery kept independent of the message-passing engine: it reads raw triples,
// never the adjacency tensor.
namespace glidr::oracle {

/// Membership test over the extended predicate set built straight from base triples.
class FactSet {
 public:
  FactSet(std::span<const Triple> triples, const ExtendedPredicates& ext);

  /// Does extended predicate k hold from a to b? P_true always holds.
  bool holds(std::size_t k, EntityId a, EntityId b) const;
  const ExtendedPredicates& predicates() const { return ext_; }

 private:
  ExtendedPredicates ext_;
  std::unordered_set<Triple, TripleHash> facts_;
};

class InstanceTooLarge : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline constexpr double kMaxAssignments = 1e8;

/// Exhaustive search for a grounding of Z_2..Z_{N-1} satisfying every non-masked slot.
bool brute_force_entailment(const HardRule& rule, const Query& q, const FactSet& facts,
                            std::size_t n_entities);

struct Domains {
  std::vector<std::vector<EntityId>> values;  // ascending per variable
};

struct Ac3Result {
  Domains domains;
  bool wipeout = false;
};

/// Worklist arc consistency over the binary constraints of the non-masked slots.
Ac3Result ac3_propagate(const HardRule& rule, const Query& q, const FactSet& facts,
                        std::size_t n_entities);

struct CounterexampleFixture {
  KnowledgeBase kb;  // facts split holds every edge under one relation "r"
  HardRule rule;
  Query query;
  std::vector<std::vector<EntityId>> expected_domains;  // arc-consistent D(Z_1)..D(Z_5)
};

/// The 8-entity locally-consistent-but-unsatisfiable counterexample.
CounterexampleFixture counterexample_fixture();

class RuleParseError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Parses the text produced by render_rule back into a HardRule over an N-variable schema.
HardRule parse_rule(std::string_view text, std::size_t n_vars, const KnowledgeBase& kb);
HardRule parse_rule(std::string_view text, std::size_t n_vars,
                    std::span<const std::string> relation_names);

}  // namespace glidr::oracle
