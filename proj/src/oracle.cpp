#include "glidr/oracle.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <utility>

namespace glidr::oracle {

FactSet::FactSet(std::span<const Triple> triples, const ExtendedPredicates& ext) : ext_(ext) {
  facts_.reserve(triples.size());
  for (const auto& t : triples) facts_.insert(t);
}

bool FactSet::holds(std::size_t k, EntityId a, EntityId b) const {
  if (ext_.is_true(k)) return true;
  if (ext_.is_inverse(k))
    return facts_.contains(Triple{b, static_cast<RelationId>(ext_.base_of(k)), a});
  return facts_.contains(Triple{a, static_cast<RelationId>(k), b});
}

namespace {

bool slot_satisfied(const HardRule& rule, std::size_t s, EntityId a, EntityId b,
                    const FactSet& facts) {
  for (auto k : rule.slots[s])
    if (facts.holds(k, a, b)) return true;
  return false;
}

}  // namespace

bool brute_force_entailment(const HardRule& rule, const Query& q, const FactSet& facts,
                            std::size_t n_entities) {
  rule.validate();
  const auto N = rule.schema.n_vars();
  if (std::pow(static_cast<double>(n_entities), static_cast<double>(N - 2)) > kMaxAssignments)
    throw InstanceTooLarge("brute-force grounding space exceeds 1e8 assignments");
  std::vector<EntityId> z(N, 0);
  z[0] = q.head;
  z[N - 1] = q.tail;
  auto ok = [&](std::size_t i, std::size_t j) {
    const auto s = rule.schema.slot_index(i, j);
    return rule.is_masked(s) || slot_satisfied(rule, s, z[i], z[j], facts);
  };
  if (!ok(0, N - 1)) return false;
  // depth-first over interior variables, checking each slot as soon as both ends are bound
  auto search = [&](auto&& self, std::size_t v) -> bool {
    if (v == N - 1) return true;
    for (EntityId e = 0; e < n_entities; ++e) {
      z[v] = e;
      bool consistent = true;
      for (std::size_t a = 0; a < v && consistent; ++a) consistent = ok(a, v);
      if (consistent) consistent = ok(v, N - 1);
      if (consistent && self(self, v + 1)) return true;
    }
    return false;
  };
  return search(search, 1);
}

Ac3Result ac3_propagate(const HardRule& rule, const Query& q, const FactSet& facts,
                        std::size_t n_entities) {
  rule.validate();
  const auto N = rule.schema.n_vars();
  std::vector<std::vector<char>> dom(N, std::vector<char>(n_entities, 1));
  std::fill(dom[0].begin(), dom[0].end(), 0);
  std::fill(dom[N - 1].begin(), dom[N - 1].end(), 0);
  dom[0][q.head] = 1;
  dom[N - 1][q.tail] = 1;

  // constraint on (x, y) for each active slot, usable from either end
  std::vector<std::vector<std::pair<std::size_t, std::size_t>>> neighbours(N);  // (other, slot)
  std::deque<std::pair<std::size_t, std::size_t>> work;  // revise first wrt second
  for (std::size_t s = 0; s < rule.slots.size(); ++s) {
    if (rule.is_masked(s)) continue;
    const auto [i, j] = rule.schema.slot(s);
    neighbours[i].emplace_back(j, s);
    neighbours[j].emplace_back(i, s);
    work.emplace_back(i, j);
    work.emplace_back(j, i);
  }
  auto supported = [&](std::size_t x, EntityId a, std::size_t y) {
    const auto s = rule.schema.slot_index(x, y);
    for (EntityId b = 0; b < n_entities; ++b) {
      if (!dom[y][b]) continue;
      const bool sat = x < y ? slot_satisfied(rule, s, a, b, facts)
                             : slot_satisfied(rule, s, b, a, facts);
      if (sat) return true;
    }
    return false;
  };

  Ac3Result res;
  while (!work.empty()) {
    const auto [x, y] = work.front();
    work.pop_front();
    bool revised = false;
    for (EntityId a = 0; a < n_entities; ++a)
      if (dom[x][a] && !supported(x, a, y)) {
        dom[x][a] = 0;
        revised = true;
      }
    if (!revised) continue;
    if (std::none_of(dom[x].begin(), dom[x].end(), [](char c) { return c != 0; })) {
      res.wipeout = true;
      break;
    }
    for (const auto& [z, s] : neighbours[x])
      if (z != y) work.emplace_back(z, x);
  }
  res.domains.values.resize(N);
  for (std::size_t v = 0; v < N; ++v)
    for (EntityId a = 0; a < n_entities; ++a)
      if (dom[v][a]) res.domains.values[v].push_back(a);
  return res;
}

CounterexampleFixture counterexample_fixture() {
  CounterexampleFixture fx;
  auto& kb = fx.kb;
  for (const char* name : {"e_i", "e_0", "e_1", "e_2", "e_3", "e_4", "e_5", "e_j"})
    kb.entities.intern(name);
  // Every edge is a fact of one relation r.
  const std::pair<const char*, const char*> arrows[] = {
      {"e_i", "e_1"}, {"e_1", "e_3"}, {"e_3", "e_5"}, {"e_5", "e_0"}, {"e_0", "e_2"},
      {"e_2", "e_4"}, {"e_4", "e_1"}, {"e_3", "e_j"}, {"e_2", "e_j"}, {"e_i", "e_0"}};
  for (const auto& [a, b] : arrows) kb.add(Split::facts, a, "r", b);

  const RuleSchema schema(5);
  const ExtendedPredicates ext(1);
  const std::uint32_t r = 0, r_inv = static_cast<std::uint32_t>(ext.inverse_of(0));
  fx.rule = unconstrained_rule(schema, ext, 0);
  fx.rule.slots[schema.slot_index(0, 1)] = {r};      // P12(Z1,Z2)
  fx.rule.slots[schema.slot_index(1, 3)] = {r};      // P24(Z2,Z4)
  fx.rule.slots[schema.slot_index(2, 3)] = {r_inv};  // P43(Z4,Z3)
  fx.rule.slots[schema.slot_index(1, 2)] = {r_inv};  // P32(Z3,Z2)
  fx.rule.slots[schema.slot_index(3, 4)] = {r};      // P45(Z4,Z5)

  auto id = [&](const char* n) { return kb.entities.at(n); };
  fx.query = Query{id("e_i"), id("e_j"), 0};
  fx.expected_domains = {{id("e_i")},
                      {id("e_0"), id("e_1")},
                      {id("e_4"), id("e_5")},
                      {id("e_2"), id("e_3")},
                      {id("e_j")}};
  for (auto& d : fx.expected_domains) std::sort(d.begin(), d.end());
  return fx;
}

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\n' || s.back() == '\r'))
    s.remove_suffix(1);
  return s;
}

std::vector<std::string_view> split_on(std::string_view s, std::string_view sep) {
  std::vector<std::string_view> parts;
  std::size_t pos;
  while ((pos = s.find(sep)) != std::string_view::npos) {
    parts.push_back(trim(s.substr(0, pos)));
    s.remove_prefix(pos + sep.size());
  }
  parts.push_back(trim(s));
  return parts;
}

std::size_t parse_variable(std::string_view v, std::size_t n_vars) {
  v = trim(v);
  if (v == "X") return 0;
  if (v == "Y") return n_vars - 1;
  if (v.size() >= 2 && v[0] == 'Z') {
    std::size_t k = 0;
    for (char c : v.substr(1)) {
      if (c < '0' || c > '9') throw RuleParseError("bad variable name: " + std::string(v));
      k = k * 10 + static_cast<std::size_t>(c - '0');
    }
    if (k >= 2 && k < n_vars) return k - 1;
  }
  throw RuleParseError("bad variable name: " + std::string(v));
}

struct Literal {
  std::string name;
  std::size_t a, b;
};

Literal parse_literal(std::string_view lit, std::size_t n_vars) {
  lit = trim(lit);
  const auto open = lit.rfind('(');
  const auto comma = lit.rfind(',');
  if (open == std::string_view::npos || comma == std::string_view::npos || comma < open ||
      lit.back() != ')')
    throw RuleParseError("malformed literal: " + std::string(lit));
  return Literal{std::string(trim(lit.substr(0, open))),
                 parse_variable(lit.substr(open + 1, comma - open - 1), n_vars),
                 parse_variable(lit.substr(comma + 1, lit.size() - comma - 2), n_vars)};
}

std::uint32_t relation_index(std::span<const std::string> names, const std::string& name) {
  auto it = std::find(names.begin(), names.end(), name);
  if (it == names.end()) throw RuleParseError("unknown relation: " + name);
  return static_cast<std::uint32_t>(it - names.begin());
}

}  // namespace

HardRule parse_rule(std::string_view text, std::size_t n_vars,
                    std::span<const std::string> names) {
  const auto arrow = text.find(":-");
  if (arrow == std::string_view::npos) throw RuleParseError("missing ':-'");
  const auto head = parse_literal(text.substr(0, arrow), n_vars);
  if (head.a != 0 || head.b != n_vars - 1) throw RuleParseError("head must be over (X,Y)");
  const RuleSchema schema(n_vars);
  const ExtendedPredicates ext(names.size());
  HardRule rule{schema, ext, relation_index(names, head.name), {}};
  rule.slots.assign(schema.n_slots(), {});

  const auto body = trim(text.substr(arrow + 2));
  if (body != "true") {
    for (auto conj : split_on(body, "∧")) {
      if (conj.size() >= 2 && conj.front() == '(' && conj.back() == ')' &&
          conj.find("∨") != std::string_view::npos)
        conj = conj.substr(1, conj.size() - 2);
      std::size_t group_slot = schema.n_slots();
      for (auto part : split_on(conj, "∨")) {
        const auto lit = parse_literal(part, n_vars);
        if (lit.a == lit.b) throw RuleParseError("literal repeats a variable");
        const auto base = relation_index(names, lit.name);
        const auto s = schema.slot_index(lit.a, lit.b);
        if (group_slot != schema.n_slots() && group_slot != s)
          throw RuleParseError("disjunction spans several slots");
        if (group_slot != s && !rule.slots[s].empty())
          throw RuleParseError("two conjuncts constrain the same slot");
        group_slot = s;
        rule.slots[s].push_back(lit.a < lit.b ? base
                                              : static_cast<std::uint32_t>(ext.inverse_of(base)));
      }
    }
  }
  for (auto& subset : rule.slots) {
    if (subset.empty()) subset.push_back(static_cast<std::uint32_t>(ext.true_index()));
    std::sort(subset.begin(), subset.end());
    subset.erase(std::unique(subset.begin(), subset.end()), subset.end());
  }
  rule.validate();
  return rule;
}

HardRule parse_rule(std::string_view text, std::size_t n_vars, const KnowledgeBase& kb) {
  return parse_rule(text, n_vars, kb.relations.names());
}

}  // namespace glidr::oracle
