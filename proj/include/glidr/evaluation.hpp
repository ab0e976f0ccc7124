#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <random>
#include <span>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "glidr/inference.hpp"
#include "glidr/kg_store.hpp"
#include "glidr/rule_model.hpp"

namespace glidr {

struct RankRecord {
  QueryDirection direction = QueryDirection::tail;
  EntityId entity = 0;  // the fixed end of the query
  RelationId relation = 0;
  EntityId target = 0;
  std::size_t rank = 1;
};

struct MetricsReport {
  double mrr = 0.0;
  double hits1 = 0.0;
  double hits3 = 0.0;
  double hits10 = 0.0;
  std::size_t count = 0;
};

/// Known-true completions per (direction, fixed entity, relation) over all four splits.
class FilterIndex {
 public:
  explicit FilterIndex(const KnowledgeBase& kb);
  const std::unordered_set<EntityId>& answers(QueryDirection dir, EntityId fixed,
                                              RelationId relation) const;

 private:
  std::unordered_map<std::uint64_t, std::unordered_set<EntityId>> index_;
  std::unordered_set<EntityId> empty_;
};

/// Filtered rank with random tie-breaking: candidates are shuffled, then stably sorted by
/// descending score; known-true answers other than the target are dropped first.
std::size_t filtered_rank(std::span<const double> scores, EntityId target,
                          const std::unordered_set<EntityId>& known_true, std::mt19937_64& rng);

/// Scores every candidate completion of an open query.
using OpenQueryScorer = std::function<std::vector<double>(
    QueryDirection, EntityId fixed, RelationId, std::span<const EntityId> candidates)>;

RankRecord rank_query(const OpenQueryScorer& scorer, QueryDirection dir, const Triple& truth,
                      std::size_t n_entities, const std::unordered_set<EntityId>& known_true,
                      std::mt19937_64& rng);

/// Soft-setting ranking of one test triple using a trained ensemble.
RankRecord rank_query(const RuleEnsemble& ensemble, QueryDirection dir, const Triple& truth,
                      const AdjacencyTensor& B_eval,
                      const std::unordered_set<EntityId>& known_true, std::mt19937_64& rng,
                      std::size_t r_max = 3);

MetricsReport summarize(std::span<const RankRecord> records);

struct EvalConfig {
  std::uint64_t seed = 0;
  std::size_t workers = 1;
  Split split = Split::test;
};

struct EvalResult {
  MetricsReport metrics;
  std::vector<RankRecord> records;
  std::vector<std::string> warnings;
};

/// Head- and tail-direction ranking for every triple of the evaluation split. Relations
/// without a scorer entry rank against all-zero scores.
EvalResult evaluate(const std::map<RelationId, OpenQueryScorer>& scorers, const KnowledgeBase& kb,
                    const EvalConfig& cfg);

/// Scorers backed by soft ensembles on the given background.
std::map<RelationId, OpenQueryScorer> soft_scorers(const std::map<RelationId, RuleEnsemble>& ens,
                                                   const AdjacencyTensor& B, std::size_t r_max);

/// Scorers backed by extracted hard rules (propagation until fixed point).
struct HardBodies {
  std::vector<HardRule> rules;
  std::vector<double> scores;
};
std::map<RelationId, OpenQueryScorer> hard_scorers(const std::map<RelationId, HardBodies>& rules,
                                                   const AdjacencyTensor& B);

std::string direction_name(QueryDirection d);

}  // namespace glidr
