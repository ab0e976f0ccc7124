#pragma once

#include <cstdint>
#include <random>
#include <vector>

#include "glidr/inference.hpp"
#include "glidr/kg_store.hpp"
#include "glidr/rule_model.hpp"

// Small generated datasets and random instances used by the self-check command and the tests.
namespace glidr::synthetic {

struct PlantedChain {
  KnowledgeBase kb;
  RelationId target = 0;  // "h"
  RelationId first = 0;   // "r1"
  RelationId second = 0;  // "r2"
  std::vector<Triple> planted;  // every (x, h, y) with r1(x,z), r2(z,y) for some z
};

/// h(X,Y) <- r1(X,Z) & r2(Z,Y) over random r1/r2 edges plus two distractor relations.
/// Base relations live in facts; h pairs are split 60/20/20 into train/valid/test.
PlantedChain planted_chain(std::size_t n_entities, std::uint64_t seed);

/// Hinton's two isomorphic 12-person family trees with the 12 kinship relations, split per
/// relation into facts/train/valid/test.
KnowledgeBase hinton_family(std::uint64_t seed);

/// Single-target task on the family trees: facts hold every triple of the other relations,
/// the target's own triples are split 50/25/25 into train/valid/test.
KnowledgeBase hinton_task(RelationId target, std::uint64_t seed);

/// All (a, r, b) facts of the two family trees, in a fixed order.
KnowledgeBase hinton_family_complete();

struct RandomGraph {
  std::size_t n_entities = 0;
  std::size_t n_relations = 0;
  std::vector<Triple> facts;
};

RandomGraph random_graph(std::mt19937_64& rng, std::size_t max_entities,
                         std::size_t max_relations, double density);

/// Random hard rule; with `acyclic` the active slots form a forest.
HardRule random_rule(std::mt19937_64& rng, std::size_t n_vars, const ExtendedPredicates& ext,
                     bool acyclic, double active_prob = 0.5);

/// Chain rule over a strictly increasing variable path from Z_1 to Z_N, other slots masked.
HardRule random_chain_rule(std::mt19937_64& rng, std::size_t n_vars,
                           const ExtendedPredicates& ext);

/// Logits that put all of each slot's mass (up to exp(-inf) = 0) on the rule's predicates.
RuleWeights one_hot_weights(const HardRule& rule);

}  // namespace glidr::synthetic
