#include "glidr/inference.hpp"

#include <algorithm>
#include <limits>
#include <stdexcept>

#include "glidr/soft_engine.hpp"

namespace glidr {

VariableStates init_states(const Query& q, std::size_t n_vars, std::size_t n_entities) {
  if (n_vars < 2) throw std::invalid_argument("need at least two variables");
  if (q.head >= n_entities || q.tail >= n_entities)
    throw std::out_of_range("query entity out of range");
  VariableStates st;
  st.phi.assign(n_vars, std::vector<double>(n_entities, 1.0));
  std::fill(st.phi.front().begin(), st.phi.front().end(), 0.0);
  std::fill(st.phi.back().begin(), st.phi.back().end(), 0.0);
  st.phi.front()[q.head] = 1.0;
  st.phi.back()[q.tail] = 1.0;
  return st;
}

std::vector<double> soft_message(std::span<const double> phi_src,
                                 std::span<const double> slot_weights, const AdjacencyTensor& B,
                                 Direction dir) {
  const auto E = B.num_entities();
  if (phi_src.size() != E || slot_weights.size() != B.num_predicates())
    throw std::invalid_argument("soft_message dimension mismatch");
  std::vector<double> psi(E, 0.0);
  const auto true_k = B.predicates().true_index();
  for (std::size_t k = 0; k < B.num_predicates(); ++k) {
    const double w = slot_weights[k];
    if (k == true_k || w == 0.0) continue;
    // forward: psi_j += w * sum_i B[j][i] phi_i; backward uses B^T.
    const auto& m = dir == Direction::forward ? B.by_column(k) : B.by_row(k);
    for (std::size_t a = 0; a < E; ++a) {
      if (phi_src[a] == 0.0) continue;
      for (auto c : m.at(a)) psi[c] += w * phi_src[a];
    }
  }
  for (auto& x : psi) x = std::clamp(x + slot_weights[true_k], 0.0, 1.0);
  return psi;
}

std::vector<std::uint8_t> hard_message(std::span<const std::uint8_t> phi_src,
                                       std::span<const std::uint32_t> subset,
                                       const AdjacencyTensor& B, Direction dir) {
  const auto E = B.num_entities();
  const auto true_k = B.predicates().true_index();
  if (std::find(subset.begin(), subset.end(), true_k) != subset.end())
    return std::vector<std::uint8_t>(E, 1);
  std::vector<std::uint8_t> psi(E, 0);
  for (auto k : subset) {
    const auto& m = dir == Direction::forward ? B.by_column(k) : B.by_row(k);
    for (std::size_t a = 0; a < E; ++a) {
      if (!phi_src[a]) continue;
      for (auto c : m.at(a)) psi[c] = 1;
    }
  }
  return psi;
}

std::vector<double> state_update(std::span<const double> phi_old,
                                 std::span<const std::vector<double>> messages) {
  std::vector<double> out(phi_old.begin(), phi_old.end());
  for (const auto& m : messages) {
    if (m.size() != out.size()) throw std::invalid_argument("state_update length mismatch");
    for (std::size_t l = 0; l < out.size(); ++l) out[l] = std::min(out[l], m[l]);
  }
  return out;
}

double entailment_score(const VariableStates& states) {
  double y = std::numeric_limits<double>::infinity();
  for (const auto& p : states.phi) y = std::min(y, *std::max_element(p.begin(), p.end()));
  return y;
}

SoftResult run_soft(const Query& q, const SlotDistribution& dist, const AdjacencyTensor& B,
                    const InferenceConfig& cfg) {
  if (cfg.r_max < 1) throw std::invalid_argument("r_max must be at least 1");
  const auto N = dist.schema.n_vars();
  SoftResult res{0.0, init_states(q, N, B.num_entities())};
  auto& phi = res.states.phi;
  for (std::size_t round = 0; round < cfg.r_max; ++round) {
    const Direction dir = round % 2 == 0 ? Direction::forward : Direction::backward;
    std::vector<std::vector<std::vector<double>>> inbox(N);
    for (std::size_t t = 0; t < N; ++t) {
      const std::size_t v = dir == Direction::forward ? t : N - 1 - t;
      phi[v] = state_update(phi[v], inbox[v]);
      for (std::size_t u = 0; u < N; ++u) {
        const bool later = dir == Direction::forward ? u > v : u < v;
        if (!later) continue;
        inbox[u].push_back(soft_message(phi[v], dist.slot(dist.schema.slot_index(v, u)), B, dir));
      }
    }
  }
  res.score = entailment_score(res.states);
  return res;
}

SoftResult run_soft(const Query& q, const RuleWeights& weights, const AdjacencyTensor& B,
                    const InferenceConfig& cfg) {
  return run_soft(q, slot_distributions(weights), B, cfg);
}

HardResult run_hard(const HardRule& rule, const Query& q, const AdjacencyTensor& B,
                    std::optional<std::size_t> max_rounds) {
  rule.validate();
  const auto N = rule.schema.n_vars();
  const auto E = B.num_entities();
  if (q.head >= E || q.tail >= E) throw std::out_of_range("query entity out of range");
  const std::size_t cap = max_rounds.value_or(std::max<std::size_t>(N * E, 2));

  HardResult res;
  auto& dom = res.domains;
  dom.assign(N, std::vector<std::uint8_t>(E, 1));
  std::fill(dom.front().begin(), dom.front().end(), 0);
  std::fill(dom.back().begin(), dom.back().end(), 0);
  dom.front()[q.head] = 1;
  dom.back()[q.tail] = 1;

  auto wiped = [](const std::vector<std::uint8_t>& d) {
    return std::none_of(d.begin(), d.end(), [](std::uint8_t x) { return x != 0; });
  };

  for (std::size_t round = 0; round < cap; ++round) {
    const Direction dir = round % 2 == 0 ? Direction::forward : Direction::backward;
    bool changed = false;
    std::vector<std::vector<std::vector<std::uint8_t>>> inbox(N);
    for (std::size_t t = 0; t < N; ++t) {
      const std::size_t v = dir == Direction::forward ? t : N - 1 - t;
      for (const auto& m : inbox[v])
        for (std::size_t l = 0; l < E; ++l)
          if (dom[v][l] && !m[l]) {
            dom[v][l] = 0;
            changed = true;
          }
      if (wiped(dom[v])) {
        res.wiped_out = true;
        res.rounds = round + 1;
        return res;
      }
      for (std::size_t u = 0; u < N; ++u) {
        const bool later = dir == Direction::forward ? u > v : u < v;
        if (!later) continue;
        const auto s = rule.schema.slot_index(v, u);
        if (rule.is_masked(s)) continue;  // all-ones message cannot shrink anything
        inbox[u].push_back(hard_message(dom[v], rule.slots[s], B, dir));
      }
    }
    // A quiet round after at least one round in each direction means every arc is consistent.
    if (!changed && round >= 1) {
      res.rounds = round + 1;
      res.entailed = true;
      res.fixed_point_uncertain = rule.has_cycle();
      return res;
    }
  }
  throw RoundCapExceeded("hard inference did not reach a fixed point within the round cap");
}

namespace {

constexpr std::size_t kOpenQueryChunk = 256;

std::vector<Query> candidate_queries(QueryDirection dir, EntityId fixed, RelationId relation,
                                     std::span<const EntityId> candidates) {
  std::vector<Query> qs;
  qs.reserve(candidates.size());
  for (auto c : candidates)
    qs.push_back(dir == QueryDirection::tail ? Query{fixed, c, relation}
                                             : Query{c, fixed, relation});
  return qs;
}

}  // namespace

std::vector<double> score_open_query(QueryDirection dir, EntityId fixed, RelationId relation,
                                     std::span<const EntityId> candidates,
                                     const RuleEnsemble& ensemble, const AdjacencyTensor& B,
                                     std::size_t r_max) {
  std::vector<double> scores(candidates.size(), 0.0);
  if (ensemble.bodies.empty()) return scores;
  const auto W = gather_weights(ensemble.bodies);
  const auto qs = candidate_queries(dir, fixed, relation, candidates);
  for (std::size_t start = 0; start < qs.size(); start += kOpenQueryChunk) {
    const auto n = std::min(kOpenQueryChunk, qs.size() - start);
    auto out = run_soft_batch(B, W, std::span<const Query>(qs).subspan(start, n), r_max);
    for (std::size_t b = 0; b < W.n_bodies; ++b)
      for (std::size_t i = 0; i < n; ++i)
        scores[start + i] += ensemble.body_score(b) * out.score(b, i);
  }
  return scores;
}

std::vector<double> score_open_query_hard(QueryDirection dir, EntityId fixed,
                                          RelationId relation,
                                          std::span<const EntityId> candidates,
                                          std::span<const HardRule> rules,
                                          std::span<const double> body_scores,
                                          const AdjacencyTensor& B) {
  std::vector<double> scores(candidates.size(), 0.0);
  const auto qs = candidate_queries(dir, fixed, relation, candidates);
  for (std::size_t r = 0; r < rules.size(); ++r) {
    const double w = body_scores.empty() ? 1.0 : body_scores[r];
    for (std::size_t i = 0; i < qs.size(); ++i)
      if (run_hard(rules[r], qs[i], B).entailed) scores[i] += w;
  }
  return scores;
}

}  // namespace glidr
