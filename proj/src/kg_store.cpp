#include "glidr/kg_store.hpp"

#include <algorithm>
#include <fstream>
#include <random>
#include <set>
#include <unordered_set>

namespace glidr {

std::string_view split_file_name(Split s) {
  switch (s) {
    case Split::facts: return "facts.txt";
    case Split::train: return "train.txt";
    case Split::valid: return "valid.txt";
    case Split::test: return "test.txt";
  }
  return "";
}

std::uint32_t SymbolTable::intern(std::string_view name) {
  auto it = index_.find(std::string(name));
  if (it != index_.end()) return it->second;
  auto id = static_cast<std::uint32_t>(names_.size());
  names_.emplace_back(name);
  index_.emplace(names_.back(), id);
  return id;
}

std::uint32_t SymbolTable::at(std::string_view name) const {
  auto it = index_.find(std::string(name));
  if (it == index_.end()) throw DataError("unknown symbol: " + std::string(name));
  return it->second;
}

bool SymbolTable::contains(std::string_view name) const {
  return index_.contains(std::string(name));
}

void KnowledgeBase::add(Split s, std::string_view head, std::string_view relation,
                        std::string_view tail) {
  Triple t;
  t.head = entities.intern(head);
  t.relation = relations.intern(relation);
  t.tail = entities.intern(tail);
  split(s).push_back(t);
}

namespace {

void parse_split_file(const std::filesystem::path& file, Split s, KnowledgeBase& kb) {
  std::ifstream in(file, std::ios::binary);
  if (!in) throw DataError("cannot open split file " + file.string());
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    auto first = line.find('\t');
    auto second = first == std::string::npos ? first : line.find('\t', first + 1);
    if (first == std::string::npos || second == std::string::npos ||
        line.find('\t', second + 1) != std::string::npos) {
      throw DataError(file.string() + ":" + std::to_string(line_no) +
                      ": expected exactly three TAB-separated fields");
    }
    std::string_view v(line);
    kb.add(s, v.substr(0, first), v.substr(first + 1, second - first - 1),
           v.substr(second + 1));
  }
}

}  // namespace

KnowledgeBase load_split_dir(const std::filesystem::path& dir) {
  KnowledgeBase kb;
  for (Split s : kAllSplits) {
    auto file = dir / split_file_name(s);
    if (!std::filesystem::exists(file)) throw DataError("missing split file " + file.string());
  }
  std::size_t known_relations = 0;
  for (Split s : kAllSplits) {
    parse_split_file(dir / split_file_name(s), s, kb);
    if (s == Split::train) known_relations = kb.num_relations();
  }
  // Rules are lifted over relations, so evaluation relations must have been seen in training.
  std::set<RelationId> unseen;
  for (Split s : {Split::valid, Split::test})
    for (const auto& t : kb.split(s))
      if (t.relation >= known_relations) unseen.insert(t.relation);
  for (RelationId r : unseen)
    kb.warnings.push_back("relation '" + kb.relations.name(r) +
                          "' appears in valid/test but not in facts or train");
  return kb;
}

void write_split_dir(const KnowledgeBase& kb, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  for (Split s : kAllSplits) {
    std::ofstream out(dir / split_file_name(s), std::ios::binary);
    if (!out) throw DataError("cannot write " + (dir / split_file_name(s)).string());
    for (const auto& t : kb.split(s)) {
      out << kb.entities.name(t.head) << '\t' << kb.relations.name(t.relation) << '\t'
          << kb.entities.name(t.tail) << '\n';
    }
  }
}

std::size_t ExtendedPredicates::inverse_of(std::size_t k) const {
  if (k < base_) return k + base_;
  if (k < 2 * base_) return k - base_;
  if (k == 2 * base_) return k;
  throw std::out_of_range("predicate index out of range");
}

ExtendedPredicates build_extended(const KnowledgeBase& kb) {
  return ExtendedPredicates(kb.num_relations());
}

bool AdjacencyTensor::contains(std::size_t k, std::uint32_t row, std::uint32_t col) const {
  auto c = by_column(k).at(col);
  return std::binary_search(c.begin(), c.end(), row);
}

namespace {

SparseBinary compress(std::size_t n, std::vector<std::pair<std::uint32_t, std::uint32_t>>& pairs) {
  std::sort(pairs.begin(), pairs.end());
  pairs.erase(std::unique(pairs.begin(), pairs.end()), pairs.end());
  SparseBinary m;
  m.offsets.assign(n + 1, 0);
  m.indices.reserve(pairs.size());
  for (const auto& [outer, inner] : pairs) {
    ++m.offsets[outer + 1];
    m.indices.push_back(inner);
  }
  for (std::size_t i = 0; i < n; ++i) m.offsets[i + 1] += m.offsets[i];
  return m;
}

}  // namespace

AdjacencyTensor build_adjacency(std::span<const Triple> triples, std::size_t n_entities,
                                const ExtendedPredicates& ext) {
  const std::size_t P = ext.total_count();
  // (column i, row j) pairs per predicate
  std::vector<std::vector<std::pair<std::uint32_t, std::uint32_t>>> col_pairs(P);
  for (const auto& t : triples) {
    if (t.head >= n_entities || t.tail >= n_entities || t.relation >= ext.base_count())
      throw std::out_of_range("triple index out of range while building adjacency");
    col_pairs[t.relation].emplace_back(t.head, t.tail);
    col_pairs[ext.inverse_of(t.relation)].emplace_back(t.tail, t.head);
  }

  AdjacencyTensor B;
  B.num_entities_ = n_entities;
  B.ext_ = ext;
  B.columns_.reserve(P);
  B.rows_.reserve(P);
  for (std::size_t k = 0; k < P; ++k) {
    auto& pairs = col_pairs[k];
    B.columns_.push_back(compress(n_entities, pairs));
    std::vector<std::pair<std::uint32_t, std::uint32_t>> transposed;
    transposed.reserve(pairs.size());
    for (const auto& [i, j] : pairs) {
      transposed.emplace_back(j, i);
      B.edges_.push_back(Edge{i, j, static_cast<std::uint32_t>(k)});
    }
    B.rows_.push_back(compress(n_entities, transposed));
  }
  std::sort(B.edges_.begin(), B.edges_.end(), [](const Edge& a, const Edge& b) {
    return std::tie(a.src, a.pred, a.dst) < std::tie(b.src, b.pred, b.dst);
  });
  return B;
}

std::vector<Triple> background_for(Stage stage, const KnowledgeBase& kb) {
  std::vector<Triple> out = kb.split(Split::facts);
  if (stage == Stage::eval) {
    const auto& train = kb.split(Split::train);
    out.insert(out.end(), train.begin(), train.end());
  }
  std::unordered_set<Triple, TripleHash> seen;
  std::vector<Triple> unique;
  unique.reserve(out.size());
  for (const auto& t : out)
    if (seen.insert(t).second) unique.push_back(t);
  return unique;
}

KnowledgeBase apply_mislabeling(const KnowledgeBase& kb, double p, std::uint64_t seed) {
  if (!(p >= 0.0 && p <= 1.0)) throw std::invalid_argument("mislabeling probability outside [0,1]");
  const auto n_rel = kb.num_relations();
  if (p > 0.0 && n_rel < 2)
    throw std::invalid_argument("mislabeling needs at least two relations");
  KnowledgeBase out = kb;
  if (p == 0.0) return out;
  std::mt19937_64 rng(seed);
  std::bernoulli_distribution flip(p);
  std::uniform_int_distribution<RelationId> other(0, static_cast<RelationId>(n_rel - 2));
  for (Split s : {Split::facts, Split::train}) {
    for (auto& t : out.split(s)) {
      if (!flip(rng)) continue;
      RelationId r = other(rng);
      if (r >= t.relation) ++r;  // skip the original relation
      t.relation = r;
    }
  }
  return out;
}

}  // namespace glidr
