#include "glidr/rule_model.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

namespace glidr {

using nlohmann::json;

RuleSchema::RuleSchema(std::size_t n_vars) : n_vars_(n_vars) {
  if (n_vars < 2) throw std::invalid_argument("a rule schema needs at least two variables");
  for (std::size_t i = 0; i < n_vars; ++i)
    for (std::size_t j = i + 1; j < n_vars; ++j) slots_.push_back(Slot{i, j});
}

std::size_t RuleSchema::slot_index(std::size_t i, std::size_t j) const {
  if (i > j) std::swap(i, j);
  if (i == j || j >= n_vars_) throw std::out_of_range("no slot for variable pair");
  // slots before row i: sum_{a<i} (N-1-a)
  return i * (2 * n_vars_ - i - 1) / 2 + (j - i - 1);
}

bool HardRule::has_cycle() const {
  std::vector<std::size_t> parent(schema.n_vars());
  std::iota(parent.begin(), parent.end(), 0);
  auto find = [&](std::size_t x) {
    while (parent[x] != x) x = parent[x] = parent[parent[x]];
    return x;
  };
  for (std::size_t s = 0; s < slots.size(); ++s) {
    if (is_masked(s)) continue;
    auto a = find(schema.slot(s).from), b = find(schema.slot(s).to);
    if (a == b) return true;
    parent[a] = b;
  }
  return false;
}

void HardRule::validate() const {
  if (slots.size() != schema.n_slots()) throw std::invalid_argument("slot count mismatch");
  for (const auto& subset : slots) {
    if (subset.empty()) throw std::invalid_argument("empty predicate subset");
    for (auto k : subset) {
      if (k >= predicates.total_count()) throw std::invalid_argument("predicate out of range");
      if (k == predicates.true_index() && subset.size() != 1)
        throw std::invalid_argument("P_true must occupy a slot alone");
    }
  }
}

HardRule unconstrained_rule(const RuleSchema& schema, const ExtendedPredicates& ext,
                            RelationId target) {
  HardRule r{schema, ext, target, {}};
  r.slots.assign(schema.n_slots(), {static_cast<std::uint32_t>(ext.true_index())});
  return r;
}

RuleWeights init_weights(const RuleSchema& schema, const ExtendedPredicates& ext,
                         RelationId target, std::uint64_t seed) {
  RuleWeights w{schema, ext.total_count(), target, {}};
  w.logits.resize(schema.n_slots() * w.n_predicates);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, kInitLogitStddev);
  for (auto& x : w.logits) x = normal(rng);
  return w;
}

void softargmax(std::span<const double> logits, std::span<double> out) {
  const double hi = *std::max_element(logits.begin(), logits.end());
  double total = 0.0;
  for (std::size_t k = 0; k < logits.size(); ++k) {
    out[k] = std::exp(logits[k] - hi);
    total += out[k];
  }
  for (auto& x : out) x /= total;
}

SlotDistribution slot_distributions(const RuleWeights& weights) {
  SlotDistribution d{weights.schema, weights.n_predicates, {}};
  d.weights.resize(weights.logits.size());
  for (std::size_t s = 0; s < weights.schema.n_slots(); ++s) {
    softargmax(weights.slot_logits(s),
               std::span<double>(d.weights.data() + s * d.n_predicates, d.n_predicates));
  }
  return d;
}

namespace {

std::vector<std::uint32_t> by_descending_weight(std::span<const double> w) {
  std::vector<std::uint32_t> order(w.size());
  std::iota(order.begin(), order.end(), 0u);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::uint32_t a, std::uint32_t b) { return w[a] > w[b]; });
  return order;
}

}  // namespace

HardRule extract_top_p(const SlotDistribution& dist, const ExtendedPredicates& ext,
                       RelationId target, double p) {
  if (!(p > 0.0 && p <= 1.0)) throw std::invalid_argument("top-p threshold must lie in (0,1]");
  HardRule rule{dist.schema, ext, target, {}};
  const auto true_k = static_cast<std::uint32_t>(ext.true_index());
  for (std::size_t s = 0; s < dist.schema.n_slots(); ++s) {
    auto w = dist.slot(s);
    auto order = by_descending_weight(w);
    std::vector<std::uint32_t> subset;
    double mass = 0.0;
    for (auto k : order) {
      subset.push_back(k);
      mass += w[k];
      if (mass >= p - 1e-12) break;
    }
    if (std::find(subset.begin(), subset.end(), true_k) != subset.end()) {
      subset = {true_k};
    } else {
      std::sort(subset.begin(), subset.end());
    }
    rule.slots.push_back(std::move(subset));
  }
  return rule;
}

HardRule extract_argmax(const SlotDistribution& dist, const ExtendedPredicates& ext,
                        RelationId target) {
  HardRule rule{dist.schema, ext, target, {}};
  for (std::size_t s = 0; s < dist.schema.n_slots(); ++s) {
    auto w = dist.slot(s);
    auto best = static_cast<std::uint32_t>(std::max_element(w.begin(), w.end()) - w.begin());
    rule.slots.push_back({best});
  }
  return rule;
}

std::string variable_name(std::size_t var, std::size_t n_vars) {
  if (var == 0) return "X";
  if (var + 1 == n_vars) return "Y";
  return "Z" + std::to_string(var + 1);
}

std::string render_rule(const HardRule& rule, std::span<const std::string> names) {
  const auto& ext = rule.predicates;
  const auto n = rule.schema.n_vars();
  std::string out = names[rule.target_relation] + "(X,Y) :- ";
  std::vector<std::string> literals;
  for (std::size_t s = 0; s < rule.slots.size(); ++s) {
    if (rule.is_masked(s)) continue;
    const auto [i, j] = rule.schema.slot(s);
    std::vector<std::string> parts;
    for (auto k : rule.slots[s]) {
      const auto& name = names[ext.base_of(k)];
      if (ext.is_inverse(k))
        parts.push_back(name + "(" + variable_name(j, n) + "," + variable_name(i, n) + ")");
      else
        parts.push_back(name + "(" + variable_name(i, n) + "," + variable_name(j, n) + ")");
    }
    if (parts.size() == 1) {
      literals.push_back(parts[0]);
    } else {
      std::string d = "(";
      for (std::size_t a = 0; a < parts.size(); ++a) d += (a ? " ∨ " : "") + parts[a];
      literals.push_back(d + ")");
    }
  }
  if (literals.empty()) return out + "true";
  for (std::size_t a = 0; a < literals.size(); ++a) out += (a ? " ∧ " : "") + literals[a];
  return out;
}

std::string render_rule(const HardRule& rule, const KnowledgeBase& kb) {
  return render_rule(rule, kb.relations.names());
}

void save_weights(const RuleWeights& w, const std::string& relation_name,
                  const std::filesystem::path& file) {
  json j;
  j["format_version"] = kCheckpointFormatVersion;
  j["kind"] = "glidr.rule_weights";
  j["n_vars"] = w.schema.n_vars();
  j["n_predicates"] = w.n_predicates;
  j["target_relation"] = w.target_relation;
  j["target_relation_name"] = relation_name;
  j["logits"] = w.logits;
  std::ofstream out(file);
  if (!out) throw std::runtime_error("cannot write checkpoint " + file.string());
  out << j.dump() << '\n';
}

RuleWeights load_weights(const std::filesystem::path& file) {
  std::ifstream in(file);
  if (!in) throw std::runtime_error("cannot read checkpoint " + file.string());
  json j = json::parse(in);
  if (j.value("format_version", 0) != kCheckpointFormatVersion)
    throw std::runtime_error("unsupported checkpoint version in " + file.string());
  RuleWeights w{RuleSchema(j.at("n_vars").get<std::size_t>()),
                j.at("n_predicates").get<std::size_t>(),
                j.at("target_relation").get<RelationId>(),
                j.at("logits").get<std::vector<double>>()};
  if (w.logits.size() != w.schema.n_slots() * w.n_predicates)
    throw std::runtime_error("checkpoint logit count mismatch in " + file.string());
  return w;
}

std::string hard_rule_to_json(const HardRule& rule, double body_score) {
  json j;
  j["format_version"] = kCheckpointFormatVersion;
  j["n_vars"] = rule.schema.n_vars();
  j["base_predicates"] = rule.predicates.base_count();
  j["target_relation"] = rule.target_relation;
  j["body_score"] = body_score;
  json slots = json::array();
  for (std::size_t s = 0; s < rule.slots.size(); ++s) {
    slots.push_back({{"from", rule.schema.slot(s).from},
                     {"to", rule.schema.slot(s).to},
                     {"predicates", rule.slots[s]}});
  }
  j["slots"] = std::move(slots);
  return j.dump();
}

std::pair<HardRule, double> hard_rule_from_json(const std::string& text) {
  json j = json::parse(text);
  RuleSchema schema(j.at("n_vars").get<std::size_t>());
  HardRule rule{schema, ExtendedPredicates(j.at("base_predicates").get<std::size_t>()),
                j.at("target_relation").get<RelationId>(), {}};
  rule.slots.resize(schema.n_slots());
  for (const auto& s : j.at("slots")) {
    auto idx = schema.slot_index(s.at("from").get<std::size_t>(), s.at("to").get<std::size_t>());
    rule.slots[idx] = s.at("predicates").get<std::vector<std::uint32_t>>();
  }
  rule.validate();
  return {std::move(rule), j.value("body_score", 1.0)};
}

}  // namespace glidr
