#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace glidr {

using EntityId = std::uint32_t;
using RelationId = std::uint32_t;

struct Triple {
  EntityId head = 0;
  RelationId relation = 0;
  EntityId tail = 0;

  friend bool operator==(const Triple&, const Triple&) = default;
  friend auto operator<=>(const Triple&, const Triple&) = default;
};

struct TripleHash {
  std::size_t operator()(const Triple& t) const noexcept {
    std::uint64_t h = (static_cast<std::uint64_t>(t.head) << 32) ^
                      (static_cast<std::uint64_t>(t.relation) << 16) ^ t.tail;
    h ^= h >> 33;
    h *= 0xff51afd7ed558ccdULL;
    h ^= h >> 33;
    return static_cast<std::size_t>(h);
  }
};

enum class Split : std::uint8_t { facts = 0, train = 1, valid = 2, test = 3 };
inline constexpr std::array<Split, 4> kAllSplits = {Split::facts, Split::train, Split::valid,
                                                    Split::test};
std::string_view split_file_name(Split s);

class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Ordered string table with a reverse index. Indices are assigned in insertion order.
class SymbolTable {
 public:
  std::uint32_t intern(std::string_view name);
  std::uint32_t at(std::string_view name) const;
  bool contains(std::string_view name) const;
  const std::string& name(std::uint32_t id) const { return names_.at(id); }
  std::size_t size() const { return names_.size(); }
  const std::vector<std::string>& names() const { return names_; }

 private:
  std::vector<std::string> names_;
  std::unordered_map<std::string, std::uint32_t> index_;
};

struct KnowledgeBase {
  SymbolTable entities;
  SymbolTable relations;
  std::array<std::vector<Triple>, 4> splits;
  std::vector<std::string> warnings;

  std::vector<Triple>& split(Split s) { return splits[static_cast<std::size_t>(s)]; }
  const std::vector<Triple>& split(Split s) const {
    return splits[static_cast<std::size_t>(s)];
  }
  std::size_t num_entities() const { return entities.size(); }
  std::size_t num_relations() const { return relations.size(); }

  /// Interns the names and appends the triple to a split.
  void add(Split s, std::string_view head, std::string_view relation, std::string_view tail);
};

/// Loads facts.txt, train.txt, valid.txt and test.txt (head TAB relation TAB tail).
KnowledgeBase load_split_dir(const std::filesystem::path& dir);

/// Writes the four split files using the symbol names; reloading reproduces the indices.
void write_split_dir(const KnowledgeBase& kb, const std::filesystem::path& dir);

/// Index layout of the extended predicate set: base relations [0, P), inverses [P, 2P),
/// and the always-true predicate last.
class ExtendedPredicates {
 public:
  ExtendedPredicates() = default;
  explicit ExtendedPredicates(std::size_t base_count) : base_(base_count) {}

  std::size_t base_count() const { return base_; }
  std::size_t total_count() const { return 2 * base_ + 1; }
  std::size_t true_index() const { return 2 * base_; }
  bool is_true(std::size_t k) const { return k == true_index(); }
  bool is_inverse(std::size_t k) const { return k >= base_ && k < 2 * base_; }

  /// Maps a base index to its inverse and an inverse back to its base. P_true maps to itself.
  std::size_t inverse_of(std::size_t k) const;
  /// Base relation underlying an extended index (identity for base indices).
  std::size_t base_of(std::size_t k) const { return is_inverse(k) ? k - base_ : k; }

 private:
  std::size_t base_ = 0;
};

ExtendedPredicates build_extended(const KnowledgeBase& kb);

/// Compressed sparse binary matrix; `outer` indexes rows (or columns) and `inner` the
/// stored partner indices. All values are implicitly 1.
struct SparseBinary {
  std::vector<std::uint32_t> offsets;  // size n + 1
  std::vector<std::uint32_t> indices;

  std::span<const std::uint32_t> at(std::size_t outer) const {
    return {indices.data() + offsets[outer], indices.data() + offsets[outer + 1]};
  }
  std::size_t nnz() const { return indices.size(); }
};

/// One edge of the extended background graph: fact (src, pred, dst), i.e. B[dst][src][pred] = 1.
struct Edge {
  std::uint32_t src;
  std::uint32_t dst;
  std::uint32_t pred;
};

/// Sparse binary adjacency tensor over the extended predicate set.
///
/// Matrix k has entry (j, i) iff (e_i, r_k, e_j) holds. Each slice is kept twice:
/// `by_column(k).at(i)` lists the j with B[j][i][k] = 1 (forward access) and
/// `by_row(k).at(j)` lists the i (transposed access). The P_true slice is empty.
class AdjacencyTensor {
 public:
  AdjacencyTensor() = default;

  std::size_t num_entities() const { return num_entities_; }
  std::size_t num_predicates() const { return ext_.total_count(); }
  const ExtendedPredicates& predicates() const { return ext_; }

  const SparseBinary& by_column(std::size_t k) const { return columns_.at(k); }
  const SparseBinary& by_row(std::size_t k) const { return rows_.at(k); }
  bool contains(std::size_t k, std::uint32_t row, std::uint32_t col) const;

  /// All stored entries as (src = column, dst = row, pred), sorted by (src, pred, dst).
  const std::vector<Edge>& edges() const { return edges_; }
  std::size_t nnz() const { return edges_.size(); }

  friend AdjacencyTensor build_adjacency(std::span<const Triple>, std::size_t,
                                         const ExtendedPredicates&);

 private:
  std::size_t num_entities_ = 0;
  ExtendedPredicates ext_;
  std::vector<SparseBinary> columns_;
  std::vector<SparseBinary> rows_;
  std::vector<Edge> edges_;
};

AdjacencyTensor build_adjacency(std::span<const Triple> triples, std::size_t n_entities,
                                const ExtendedPredicates& ext);

enum class Stage { train, eval };

/// Background facts: the facts split at train time, facts plus train (deduplicated) at eval time.
std::vector<Triple> background_for(Stage stage, const KnowledgeBase& kb);

/// Relabels each facts/train triple with probability p to a uniformly drawn different relation.
KnowledgeBase apply_mislabeling(const KnowledgeBase& kb, double p, std::uint64_t seed);

}  // namespace glidr
