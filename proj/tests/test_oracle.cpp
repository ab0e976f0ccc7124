#include <random>

#include "doctest.h"
#include "glidr/oracle.hpp"
#include "glidr/synthetic.hpp"

using namespace glidr;
using namespace glidr::oracle;

namespace {

// parent facts for a three-generation family: a -> b -> c, a -> d, e isolated
KnowledgeBase family() {
  KnowledgeBase kb;
  kb.add(Split::facts, "a", "parent", "b");
  kb.add(Split::facts, "b", "parent", "c");
  kb.add(Split::facts, "a", "parent", "d");
  kb.entities.intern("e");
  return kb;
}

}  // namespace

TEST_CASE("fact set answers base, inverse and always-true predicates") {
  const auto kb = family();
  const auto ext = build_extended(kb);
  FactSet fs(kb.split(Split::facts), ext);
  auto id = [&](const char* n) { return kb.entities.at(n); };
  CHECK(fs.holds(0, id("a"), id("b")));
  CHECK_FALSE(fs.holds(0, id("b"), id("a")));
  CHECK(fs.holds(ext.inverse_of(0), id("b"), id("a")));
  CHECK_FALSE(fs.holds(ext.inverse_of(0), id("a"), id("b")));
  CHECK(fs.holds(ext.true_index(), id("e"), id("c")));
}

TEST_CASE("grandparent rule by exhaustive grounding") {
  const auto kb = family();
  const auto ext = build_extended(kb);
  FactSet fs(kb.split(Split::facts), ext);
  const auto n = kb.num_entities();
  const auto rule = parse_rule("parent(X,Y) :- parent(X,Z2) ∧ parent(Z2,Y)", 3, kb);
  auto id = [&](const char* s) { return kb.entities.at(s); };
  for (EntityId h = 0; h < n; ++h)
    for (EntityId t = 0; t < n; ++t) {
      const bool expected = h == id("a") && t == id("c");
      CHECK(brute_force_entailment(rule, Query{h, t, 0}, fs, n) == expected);
    }
}

TEST_CASE("the unconstrained rule entails every pair") {
  const auto kb = family();
  const auto ext = build_extended(kb);
  FactSet fs(kb.split(Split::facts), ext);
  const auto n = kb.num_entities();
  for (std::size_t N = 2; N <= 5; ++N) {
    const auto rule = unconstrained_rule(RuleSchema(N), ext, 0);
    for (EntityId h = 0; h < n; ++h)
      for (EntityId t = 0; t < n; ++t) {
        CHECK(brute_force_entailment(rule, Query{h, t, 0}, fs, n));
        const auto ac3 = ac3_propagate(rule, Query{h, t, 0}, fs, n);
        CHECK_FALSE(ac3.wipeout);
      }
  }
}

TEST_CASE("the locally consistent counterexample") {
  const auto fx = counterexample_fixture();
  const auto ext = build_extended(fx.kb);
  const auto n = fx.kb.num_entities();
  FactSet fs(fx.kb.split(Split::facts), ext);
  CHECK(n == 8);
  CHECK(fx.rule.has_cycle());
  CHECK_FALSE(brute_force_entailment(fx.rule, fx.query, fs, n));
  const auto ac3 = ac3_propagate(fx.rule, fx.query, fs, n);
  CHECK_FALSE(ac3.wipeout);
  CHECK(ac3.domains.values == fx.expected_domains);
  for (const auto& d : ac3.domains.values) CHECK_FALSE(d.empty());
}

TEST_CASE("arc consistency never removes a value that extends to a solution") {
  std::mt19937_64 rng(17);
  for (int trial = 0; trial < 300; ++trial) {
    auto g = synthetic::random_graph(rng, 7, 3, 0.3);
    ExtendedPredicates ext(g.n_relations);
    FactSet fs(g.facts, ext);
    const auto N = 3 + static_cast<std::size_t>(trial % 3);
    const auto rule = synthetic::random_rule(rng, N, ext, trial % 2 == 0, 0.6);
    const Query q{static_cast<EntityId>(rng() % g.n_entities),
                  static_cast<EntityId>(rng() % g.n_entities), 0};
    const auto ac3 = ac3_propagate(rule, q, fs, g.n_entities);
    const bool truth = brute_force_entailment(rule, q, fs, g.n_entities);
    if (truth) CHECK_FALSE(ac3.wipeout);
    if (!ac3.wipeout) {
      // each surviving middle value has a support in its neighbours' domains; on a forest
      // this already implies a full solution
      CHECK(ac3.domains.values[0] == std::vector<EntityId>{q.head});
      CHECK(ac3.domains.values[N - 1] == std::vector<EntityId>{q.tail});
      if (!rule.has_cycle()) CHECK(truth);
    }
  }
}

TEST_CASE("rule parsing errors") {
  const auto kb = family();
  CHECK_THROWS_AS(parse_rule("parent(X,Y) parent(X,Y)", 2, kb), RuleParseError);
  CHECK_THROWS_AS(parse_rule("parent(X,Y) :- sibling(X,Y)", 2, kb), RuleParseError);
  CHECK_THROWS_AS(parse_rule("parent(X,Z) :- parent(X,Y)", 3, kb), RuleParseError);
  CHECK_THROWS_AS(parse_rule("parent(X,Y) :- parent(X,X)", 2, kb), RuleParseError);
  CHECK_THROWS_AS(parse_rule("parent(X,Y) :- parent(X,Q)", 3, kb), RuleParseError);
  CHECK_THROWS_AS(parse_rule("parent(X,Y) :- parent(X,Y", 2, kb), RuleParseError);
  CHECK_NOTHROW(parse_rule("parent(X,Y) :- true", 2, kb));
  CHECK_NOTHROW(parse_rule("parent(X,Y) :- parent(Y,X)", 2, kb));
}

TEST_CASE("brute force refuses oversized instances") {
  KnowledgeBase kb;
  for (int i = 0; i < 1000; ++i) kb.entities.intern("e" + std::to_string(i));
  kb.add(Split::facts, "e0", "r", "e1");
  const auto ext = build_extended(kb);
  FactSet fs(kb.split(Split::facts), ext);
  const auto big = unconstrained_rule(RuleSchema(5), ext, 0);
  CHECK_THROWS_AS(brute_force_entailment(big, Query{0, 1, 0}, fs, kb.num_entities()),
                  InstanceTooLarge);
  const auto fine = unconstrained_rule(RuleSchema(4), ext, 0);
  CHECK(brute_force_entailment(fine, Query{0, 1, 0}, fs, kb.num_entities()));
}
