#include "glidr/evaluation.hpp"

#include <algorithm>
#include <atomic>
#include <numeric>
#include <stdexcept>
#include <thread>

#include "glidr/training.hpp"

namespace glidr {

namespace {

std::uint64_t filter_key(QueryDirection dir, EntityId fixed, RelationId relation) {
  return (static_cast<std::uint64_t>(dir) << 63) | (static_cast<std::uint64_t>(relation) << 32) |
         fixed;
}

}  // namespace

std::string direction_name(QueryDirection d) { return d == QueryDirection::head ? "head" : "tail"; }

FilterIndex::FilterIndex(const KnowledgeBase& kb) {
  for (Split s : kAllSplits)
    for (const auto& t : kb.split(s)) {
      index_[filter_key(QueryDirection::tail, t.head, t.relation)].insert(t.tail);
      index_[filter_key(QueryDirection::head, t.tail, t.relation)].insert(t.head);
    }
}

const std::unordered_set<EntityId>& FilterIndex::answers(QueryDirection dir, EntityId fixed,
                                                         RelationId relation) const {
  auto it = index_.find(filter_key(dir, fixed, relation));
  return it == index_.end() ? empty_ : it->second;
}

std::size_t filtered_rank(std::span<const double> scores, EntityId target,
                          const std::unordered_set<EntityId>& known_true, std::mt19937_64& rng) {
  if (target >= scores.size()) throw std::out_of_range("target entity not among candidates");
  // shuffling before filtering keeps tie order independent of the filter, so a larger
  // filter can only lift the target
  std::vector<EntityId> pool(scores.size());
  std::iota(pool.begin(), pool.end(), EntityId{0});
  std::shuffle(pool.begin(), pool.end(), rng);
  std::erase_if(pool, [&](EntityId e) { return e != target && known_true.contains(e); });
  std::stable_sort(pool.begin(), pool.end(),
                   [&](EntityId a, EntityId b) { return scores[a] > scores[b]; });
  return static_cast<std::size_t>(std::find(pool.begin(), pool.end(), target) - pool.begin()) + 1;
}

RankRecord rank_query(const OpenQueryScorer& scorer, QueryDirection dir, const Triple& truth,
                      std::size_t n_entities, const std::unordered_set<EntityId>& known_true,
                      std::mt19937_64& rng) {
  std::vector<EntityId> candidates(n_entities);
  std::iota(candidates.begin(), candidates.end(), EntityId{0});
  const EntityId fixed = dir == QueryDirection::tail ? truth.head : truth.tail;
  const EntityId target = dir == QueryDirection::tail ? truth.tail : truth.head;
  std::vector<double> scores =
      scorer ? scorer(dir, fixed, truth.relation, candidates) : std::vector<double>(n_entities, 0.0);
  return RankRecord{dir, fixed, truth.relation, target,
                    filtered_rank(scores, target, known_true, rng)};
}

RankRecord rank_query(const RuleEnsemble& ensemble, QueryDirection dir, const Triple& truth,
                      const AdjacencyTensor& B_eval,
                      const std::unordered_set<EntityId>& known_true, std::mt19937_64& rng,
                      std::size_t r_max) {
  OpenQueryScorer scorer = [&](QueryDirection d, EntityId fixed, RelationId r,
                               std::span<const EntityId> cands) {
    return score_open_query(d, fixed, r, cands, ensemble, B_eval, r_max);
  };
  return rank_query(scorer, dir, truth, B_eval.num_entities(), known_true, rng);
}

MetricsReport summarize(std::span<const RankRecord> records) {
  MetricsReport m;
  m.count = records.size();
  if (records.empty()) return m;
  for (const auto& r : records) {
    m.mrr += 1.0 / static_cast<double>(r.rank);
    m.hits1 += r.rank <= 1;
    m.hits3 += r.rank <= 3;
    m.hits10 += r.rank <= 10;
  }
  const auto n = static_cast<double>(records.size());
  m.mrr /= n;
  m.hits1 /= n;
  m.hits3 /= n;
  m.hits10 /= n;
  return m;
}

EvalResult evaluate(const std::map<RelationId, OpenQueryScorer>& scorers, const KnowledgeBase& kb,
                    const EvalConfig& cfg) {
  const auto& triples = kb.split(cfg.split);
  if (triples.empty()) throw std::invalid_argument("evaluation split is empty");
  EvalResult res;
  for (RelationId r = 0; r < kb.num_relations(); ++r) {
    bool used = std::any_of(triples.begin(), triples.end(),
                            [r](const Triple& t) { return t.relation == r; });
    if (used && !scorers.contains(r))
      res.warnings.push_back("no trained model for relation '" + kb.relations.name(r) +
                             "'; its queries rank against all-zero scores");
  }
  const FilterIndex filter(kb);
  const std::size_t n_queries = triples.size() * 2;
  res.records.resize(n_queries);
  std::atomic<std::size_t> next{0};
  auto work = [&] {
    for (std::size_t id = next++; id < n_queries; id = next++) {
      const auto& t = triples[id / 2];
      const auto dir = id % 2 == 0 ? QueryDirection::head : QueryDirection::tail;
      std::mt19937_64 rng(derive_seed(cfg.seed, id, 0xe7a1));
      auto it = scorers.find(t.relation);
      const OpenQueryScorer none;
      const auto fixed = dir == QueryDirection::tail ? t.head : t.tail;
      res.records[id] = rank_query(it == scorers.end() ? none : it->second, dir, t,
                                   kb.num_entities(), filter.answers(dir, fixed, t.relation), rng);
    }
  };
  const auto workers = std::max<std::size_t>(1, cfg.workers);
  if (workers == 1) {
    work();
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(work);
  }
  res.metrics = summarize(res.records);
  return res;
}

std::map<RelationId, OpenQueryScorer> soft_scorers(const std::map<RelationId, RuleEnsemble>& ens,
                                                   const AdjacencyTensor& B, std::size_t r_max) {
  std::map<RelationId, OpenQueryScorer> out;
  for (const auto& [r, e] : ens) {
    const RuleEnsemble* ensemble = &e;
    out[r] = [ensemble, &B, r_max](QueryDirection d, EntityId fixed, RelationId rel,
                                   std::span<const EntityId> cands) {
      return score_open_query(d, fixed, rel, cands, *ensemble, B, r_max);
    };
  }
  return out;
}

std::map<RelationId, OpenQueryScorer> hard_scorers(const std::map<RelationId, HardBodies>& rules,
                                                   const AdjacencyTensor& B) {
  std::map<RelationId, OpenQueryScorer> out;
  for (const auto& [r, hb] : rules) {
    const HardBodies* bodies = &hb;
    out[r] = [bodies, &B](QueryDirection d, EntityId fixed, RelationId rel,
                          std::span<const EntityId> cands) {
      return score_open_query_hard(d, fixed, rel, cands, bodies->rules, bodies->scores, B);
    };
  }
  return out;
}

}  // namespace glidr
