#include "glidr/self_check.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>

#include "glidr/autodiff.hpp"
#include "glidr/inference.hpp"
#include "glidr/oracle.hpp"
#include "glidr/synthetic.hpp"

namespace glidr::self_check {

namespace {

struct Instance {
  synthetic::RandomGraph graph;
  ExtendedPredicates ext;
  AdjacencyTensor B;
  Query query;
};

Instance random_instance(std::mt19937_64& rng, std::size_t max_entities) {
  Instance in;
  std::uniform_real_distribution<double> density(0.08, 0.3);
  in.graph = synthetic::random_graph(rng, max_entities, 4, density(rng));
  in.ext = ExtendedPredicates(in.graph.n_relations);
  in.B = build_adjacency(in.graph.facts, in.graph.n_entities, in.ext);
  std::uniform_int_distribution<EntityId> ent(0, static_cast<EntityId>(in.graph.n_entities - 1));
  in.query = Query{ent(rng), ent(rng), 0};
  return in;
}

std::vector<EntityId> members(const std::vector<std::uint8_t>& d) {
  std::vector<EntityId> out;
  for (EntityId e = 0; e < d.size(); ++e)
    if (d[e]) out.push_back(e);
  return out;
}

}  // namespace

Outcome gradients(std::size_t instances, std::uint64_t seed, double tol) {
  std::mt19937_64 rng(seed);
  Outcome out{"gradient check", true, ""};
  double worst = 0.0;
  std::size_t checked = 0, skipped = 0, failures = 0;
  for (std::size_t i = 0; i < instances; ++i) {
    auto in = random_instance(rng, 20);
    const std::size_t N = 3 + rng() % 3, r_max = 2 + rng() % 2;
    const std::size_t n_bodies = 1 + rng() % 2;
    std::vector<RuleWeights> bodies;
    for (std::size_t b = 0; b < n_bodies; ++b) {
      bodies.push_back(init_weights(RuleSchema(N), in.ext, 0, rng()));
      // sharpen the distributions so that messages are far from uniform
      const double scale = std::uniform_real_distribution<double>(1.0, 30.0)(rng);
      for (auto& x : bodies.back().logits) x *= scale;
    }
    std::vector<Query> qs;
    std::vector<std::uint8_t> ys;
    std::uniform_int_distribution<EntityId> ent(0, static_cast<EntityId>(in.graph.n_entities - 1));
    for (std::size_t q = 0; q < 8; ++q) {
      qs.push_back(Query{ent(rng), ent(rng), 0});
      ys.push_back(q % 2 == 0);
    }
    auto rep = grad_check(bodies, qs, ys, in.B, r_max, 1e-5, tol);
    worst = std::max(worst, rep.max_rel_error);
    checked += rep.checked;
    skipped += rep.skipped_ties;
    if (!rep.passed) ++failures;
  }
  out.passed = failures == 0;
  std::ostringstream d;
  d << instances << " instances, " << failures << " failed, max rel err " << worst << ", "
    << checked << " logits checked, " << skipped << " skipped at ties";
  out.detail = d.str();
  return out;
}

Outcome acyclic_equivalence(std::size_t instances, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::size_t agree = 0, entailed = 0;
  for (std::size_t i = 0; i < instances; ++i) {
    auto in = random_instance(rng, 12);
    const std::size_t N = 2 + rng() % 4;
    auto rule = synthetic::random_rule(rng, N, in.ext, true,
                                       std::uniform_real_distribution<double>(0.3, 0.9)(rng));
    oracle::FactSet fs(in.graph.facts, in.ext);
    const bool truth = oracle::brute_force_entailment(rule, in.query, fs, in.graph.n_entities);
    const bool prop = run_hard(rule, in.query, in.B).entailed;
    agree += truth == prop;
    entailed += truth;
  }
  std::ostringstream d;
  d << agree << "/" << instances << " agree (" << entailed << " entailed by the oracle)";
  return Outcome{"hard inference equals brute force on acyclic rules", agree == instances,
                 d.str()};
}

Outcome cyclic_soundness(std::size_t instances, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::size_t unsound = 0, false_pos = 0, cyclic = 0, ac3_mismatch = 0;
  for (std::size_t i = 0; i < instances; ++i) {
    auto in = random_instance(rng, 12);
    const std::size_t N = 3 + rng() % 3;
    auto rule = synthetic::random_rule(rng, N, in.ext, false,
                                       std::uniform_real_distribution<double>(0.4, 1.0)(rng));
    cyclic += rule.has_cycle();
    oracle::FactSet fs(in.graph.facts, in.ext);
    const bool truth = oracle::brute_force_entailment(rule, in.query, fs, in.graph.n_entities);
    const auto hard = run_hard(rule, in.query, in.B);
    if (hard.wiped_out && truth) ++unsound;
    if (hard.entailed && !truth) ++false_pos;
    const auto ac3 = oracle::ac3_propagate(rule, in.query, fs, in.graph.n_entities);
    bool same = ac3.wipeout == hard.wiped_out;
    if (same && !ac3.wipeout)
      for (std::size_t v = 0; v < N; ++v) same = same && ac3.domains.values[v] == members(hard.domains[v]);
    ac3_mismatch += !same;
  }
  std::ostringstream d;
  d << instances << " instances (" << cyclic << " cyclic): " << unsound
    << " wipeouts on entailed queries, " << false_pos << " propagation false positives, "
    << ac3_mismatch << " disagreements with AC-3";
  return Outcome{"hard inference is sound on cyclic rules", unsound == 0 && ac3_mismatch == 0,
                 d.str()};
}

Outcome counterexample_fixture() {
  const auto fx = oracle::counterexample_fixture();
  const auto ext = build_extended(fx.kb);
  const auto& facts = fx.kb.split(Split::facts);
  const auto n = fx.kb.num_entities();
  const auto B = build_adjacency(facts, n, ext);
  oracle::FactSet fs(facts, ext);
  const bool truth = oracle::brute_force_entailment(fx.rule, fx.query, fs, n);
  const auto ac3 = oracle::ac3_propagate(fx.rule, fx.query, fs, n);
  const auto hard = run_hard(fx.rule, fx.query, B);
  const bool ok = !truth && !ac3.wipeout && ac3.domains.values == fx.expected_domains &&
                  hard.entailed && hard.fixed_point_uncertain;
  std::ostringstream d;
  d << "oracle " << (truth ? "entails" : "refutes") << ", AC-3 "
    << (ac3.wipeout ? "wipes out" : "reaches a fixed point") << ", propagation "
    << (hard.entailed ? "entails" : "refutes");
  return Outcome{"locally consistent counterexample", ok, d.str()};
}

Outcome chain_subsumption(std::size_t instances, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  double worst = 0.0;
  std::size_t positives = 0, total = 0;
  for (std::size_t i = 0; i < instances; ++i) {
    auto in = random_instance(rng, 12);
    const std::size_t N = 2 + rng() % 5;
    auto rule = synthetic::random_chain_rule(rng, N, in.ext);
    const auto w = synthetic::one_hot_weights(rule);
    // the path of active slots, in variable order
    std::vector<std::uint32_t> preds;
    for (std::size_t v = 0; v + 1 < N;) {
      std::size_t next = v + 1;
      while (rule.is_masked(rule.schema.slot_index(v, next))) ++next;
      preds.push_back(rule.slots[rule.schema.slot_index(v, next)][0]);
      v = next;
    }
    oracle::FactSet fs(in.graph.facts, in.ext);
    const auto E = in.graph.n_entities;
    for (EntityId h = 0; h < E; ++h) {
      std::vector<std::uint8_t> reach(E, 0);
      reach[h] = 1;
      for (auto k : preds) {
        std::vector<std::uint8_t> next(E, 0);
        for (EntityId a = 0; a < E; ++a)
          if (reach[a])
            for (EntityId b = 0; b < E; ++b)
              if (fs.holds(k, a, b)) next[b] = 1;
        reach = std::move(next);
      }
      for (EntityId t = 0; t < E; ++t) {
        const double expected = reach[t] ? 1.0 : 0.0;
        const double got = run_soft(Query{h, t, 0}, w, in.B).score;
        worst = std::max(worst, std::abs(got - expected));
        positives += reach[t];
        ++total;
      }
    }
  }
  std::ostringstream d;
  d << instances << " chain rules, " << total << " queries (" << positives
    << " path-connected), max deviation " << worst;
  return Outcome{"chain rules match path composition", worst <= 1e-9, d.str()};
}

std::vector<Outcome> run_all(std::uint64_t seed, bool quick) {
  const std::size_t scale = quick ? 10 : 1;
  return {gradients(50 / scale, seed), acyclic_equivalence(1000 / scale, seed + 1),
          cyclic_soundness(1000 / scale, seed + 2), counterexample_fixture(),
          chain_subsumption(200 / scale, seed + 3)};
}

}  // namespace glidr::self_check
