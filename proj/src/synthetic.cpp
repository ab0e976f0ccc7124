#include "glidr/synthetic.hpp"

#include <algorithm>
#include <map>
#include <numeric>
#include <set>
#include <stdexcept>
#include <string>

namespace glidr::synthetic {

PlantedChain planted_chain(std::size_t n_entities, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  PlantedChain pc;
  auto& kb = pc.kb;
  for (std::size_t e = 0; e < n_entities; ++e) kb.entities.intern("n" + std::to_string(e));
  pc.first = kb.relations.intern("r1");
  pc.second = kb.relations.intern("r2");
  const RelationId d1 = kb.relations.intern("d1");
  const RelationId d2 = kb.relations.intern("d2");
  pc.target = kb.relations.intern("h");

  std::uniform_int_distribution<EntityId> ent(0, static_cast<EntityId>(n_entities - 1));
  std::uniform_int_distribution<int> degree(1, 2);
  std::set<Triple> facts;
  for (RelationId r : {pc.first, pc.second, d1, d2})
    for (EntityId a = 0; a < n_entities; ++a)
      for (int k = degree(rng); k > 0; --k) {
        EntityId b = ent(rng);
        if (b != a) facts.insert(Triple{a, r, b});
      }
  kb.split(Split::facts).assign(facts.begin(), facts.end());

  std::set<Triple> planted;
  for (const auto& x : facts) {
    if (x.relation != pc.first) continue;
    for (const auto& y : facts)
      if (y.relation == pc.second && y.head == x.tail)
        planted.insert(Triple{x.head, pc.target, y.tail});
  }
  pc.planted.assign(planted.begin(), planted.end());
  std::vector<Triple> shuffled = pc.planted;
  std::shuffle(shuffled.begin(), shuffled.end(), rng);
  const std::size_t n = shuffled.size();
  const std::size_t n_train = n * 6 / 10, n_valid = n * 2 / 10;
  for (std::size_t i = 0; i < n; ++i) {
    Split s = i < n_train ? Split::train : (i < n_train + n_valid ? Split::valid : Split::test);
    kb.split(s).push_back(shuffled[i]);
  }
  return pc;
}

namespace {

struct Person {
  std::string name;
  bool male;
};

struct FamilyTree {
  std::vector<Person> people;
  std::vector<std::pair<int, int>> couples;            // (husband, wife)
  std::vector<std::pair<int, std::vector<int>>> kids;  // couple index -> children
};

// Both trees share one shape; names follow the usual English/Italian labelling.
FamilyTree make_tree(const std::vector<std::string>& names) {
  FamilyTree t;
  const bool male[] = {true, false, true, false, true, false, true, false,
                       true, false, true, false};
  for (std::size_t i = 0; i < 12; ++i) t.people.push_back(Person{names[i], male[i]});
  // 0=1: grandparents A, 2=3: grandparents B
  // children of (0,1): 4 (son), 7 (daughter); children of (2,3): 6 (son), 9 (daughter)
  // couples in middle generation: 4=5, 6=7, 8=9; children of (6,7): 10, 11
  t.couples = {{0, 1}, {2, 3}, {4, 5}, {6, 7}, {8, 9}};
  t.kids = {{0, {4, 7}}, {1, {6, 9}}, {3, {10, 11}}};
  return t;
}

void add_tree(KnowledgeBase& kb, const FamilyTree& t) {
  const int n = static_cast<int>(t.people.size());
  std::vector<std::vector<int>> parents(n), children(n);
  std::vector<int> spouse(n, -1);
  for (const auto& [h, w] : t.couples) {
    spouse[h] = w;
    spouse[w] = h;
  }
  for (const auto& [c, ks] : t.kids)
    for (int k : ks) {
      for (int p : {t.couples[c].first, t.couples[c].second}) {
        parents[k].push_back(p);
        children[p].push_back(k);
      }
    }
  auto siblings = [&](int a) {
    std::set<int> s;
    for (int p : parents[a])
      for (int c : children[p])
        if (c != a) s.insert(c);
    return s;
  };
  auto add = [&](const char* rel, int a, int b) {
    kb.add(Split::facts, t.people[a].name, rel, t.people[b].name);
  };
  for (int a = 0; a < n; ++a) {
    const bool m = t.people[a].male;
    if (spouse[a] >= 0) add(m ? "husband" : "wife", a, spouse[a]);
    for (int c : children[a]) add(m ? "father" : "mother", a, c);
    for (int p : parents[a]) add(m ? "son" : "daughter", a, p);
    for (int s : siblings(a)) add(m ? "brother" : "sister", a, s);
    // a is an uncle/aunt of b when a is a sibling of b's parent or married to one
    std::set<int> nieces;
    std::set<int> via = siblings(a);
    if (spouse[a] >= 0)
      for (int s : siblings(spouse[a])) via.insert(s);
    for (int s : via)
      for (int c : children[s]) nieces.insert(c);
    for (int b : nieces) {
      add(m ? "uncle" : "aunt", a, b);
      kb.add(Split::facts, t.people[b].name, t.people[b].male ? "nephew" : "niece",
             t.people[a].name);
    }
  }
}

}  // namespace

KnowledgeBase hinton_family_complete() {
  KnowledgeBase kb;
  add_tree(kb, make_tree({"christopher", "penelope", "andrew", "christine", "arthur", "margaret",
                          "james", "victoria", "charles", "jennifer", "colin", "charlotte"}));
  add_tree(kb, make_tree({"roberto", "maria", "pierro", "francesca", "emilio", "gina", "marco",
                          "lucia", "tomaso", "angela", "alfonso", "sophia"}));
  return kb;
}

KnowledgeBase hinton_family(std::uint64_t seed) {
  KnowledgeBase kb = hinton_family_complete();
  std::mt19937_64 rng(seed);
  std::vector<Triple> all = kb.split(Split::facts);
  kb.split(Split::facts).clear();
  std::map<RelationId, std::vector<Triple>> by_rel;
  for (const auto& t : all) by_rel[t.relation].push_back(t);
  for (auto& [r, ts] : by_rel) {
    std::shuffle(ts.begin(), ts.end(), rng);
    // at least one held-out triple in each of train/valid/test, the rest mostly facts
    const std::size_t n = ts.size();
    const std::size_t n_test = std::max<std::size_t>(1, n / 10);
    const std::size_t n_valid = std::max<std::size_t>(1, n / 10);
    const std::size_t n_train = std::max<std::size_t>(1, n / 5);
    for (std::size_t i = 0; i < n; ++i) {
      Split s = i < n_test ? Split::test
                : i < n_test + n_valid ? Split::valid
                : i < n_test + n_valid + n_train ? Split::train
                                                 : Split::facts;
      kb.split(s).push_back(ts[i]);
    }
  }
  return kb;
}

KnowledgeBase hinton_task(RelationId target, std::uint64_t seed) {
  KnowledgeBase kb = hinton_family_complete();
  if (target >= kb.num_relations()) throw std::out_of_range("no such family relation");
  std::mt19937_64 rng(seed);
  std::vector<Triple> all = kb.split(Split::facts), own;
  auto& facts = kb.split(Split::facts);
  facts.clear();
  for (const auto& t : all) (t.relation == target ? own : facts).push_back(t);
  std::shuffle(own.begin(), own.end(), rng);
  const std::size_t n = own.size(), n_test = n / 4, n_valid = n / 4;
  for (std::size_t i = 0; i < n; ++i)
    kb.split(i < n_test ? Split::test : i < n_test + n_valid ? Split::valid : Split::train)
        .push_back(own[i]);
  return kb;
}

RandomGraph random_graph(std::mt19937_64& rng, std::size_t max_entities,
                         std::size_t max_relations, double density) {
  RandomGraph g;
  g.n_entities = std::uniform_int_distribution<std::size_t>(3, max_entities)(rng);
  g.n_relations = std::uniform_int_distribution<std::size_t>(1, max_relations)(rng);
  std::bernoulli_distribution edge(density);
  for (RelationId r = 0; r < g.n_relations; ++r)
    for (EntityId a = 0; a < g.n_entities; ++a)
      for (EntityId b = 0; b < g.n_entities; ++b)
        if (edge(rng)) g.facts.push_back(Triple{a, r, b});
  return g;
}

HardRule random_rule(std::mt19937_64& rng, std::size_t n_vars, const ExtendedPredicates& ext,
                     bool acyclic, double active_prob) {
  const RuleSchema schema(n_vars);
  HardRule rule = unconstrained_rule(schema, ext, 0);
  std::vector<std::size_t> order(schema.n_slots());
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);
  std::vector<std::size_t> parent(n_vars);
  std::iota(parent.begin(), parent.end(), 0);
  auto find = [&](std::size_t x) {
    while (parent[x] != x) x = parent[x] = parent[parent[x]];
    return x;
  };
  std::bernoulli_distribution active(active_prob);
  std::bernoulli_distribution two(0.3);
  std::uniform_int_distribution<std::uint32_t> pred(
      0, static_cast<std::uint32_t>(ext.total_count() - 2));
  for (auto s : order) {
    if (!active(rng)) continue;
    if (acyclic) {
      auto a = find(schema.slot(s).from), b = find(schema.slot(s).to);
      if (a == b) continue;
      parent[a] = b;
    }
    std::vector<std::uint32_t> subset{pred(rng)};
    if (two(rng)) subset.push_back(pred(rng));
    std::sort(subset.begin(), subset.end());
    subset.erase(std::unique(subset.begin(), subset.end()), subset.end());
    rule.slots[s] = subset;
  }
  return rule;
}

HardRule random_chain_rule(std::mt19937_64& rng, std::size_t n_vars,
                           const ExtendedPredicates& ext) {
  const RuleSchema schema(n_vars);
  HardRule rule = unconstrained_rule(schema, ext, 0);
  std::vector<std::size_t> interior;
  for (std::size_t v = 1; v + 1 < n_vars; ++v)
    if (std::bernoulli_distribution(0.6)(rng)) interior.push_back(v);
  std::vector<std::size_t> path{0};
  path.insert(path.end(), interior.begin(), interior.end());
  path.push_back(n_vars - 1);
  std::uniform_int_distribution<std::uint32_t> pred(
      0, static_cast<std::uint32_t>(ext.total_count() - 2));
  for (std::size_t a = 0; a + 1 < path.size(); ++a)
    rule.slots[schema.slot_index(path[a], path[a + 1])] = {pred(rng)};
  return rule;
}

RuleWeights one_hot_weights(const HardRule& rule) {
  RuleWeights w{rule.schema, rule.predicates.total_count(), rule.target_relation, {}};
  w.logits.assign(rule.schema.n_slots() * w.n_predicates, -1000.0);
  for (std::size_t s = 0; s < rule.slots.size(); ++s)
    for (auto k : rule.slots[s]) w.logits[s * w.n_predicates + k] = 0.0;
  return w;
}

}  // namespace glidr::synthetic
