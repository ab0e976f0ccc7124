#include <filesystem>
#include <fstream>
#include <random>
#include <set>
#include <unistd.h>

#include "doctest.h"
#include "glidr/kg_store.hpp"

using namespace glidr;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  TempDir() {
    static int counter = 0;
    path = fs::temp_directory_path() /
           ("glidr_kg_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

void write_file(const fs::path& p, const std::string& text) {
  std::ofstream(p, std::ios::binary) << text;
}

void write_splits(const fs::path& dir, const std::string& facts, const std::string& train = "",
                  const std::string& valid = "", const std::string& test = "") {
  write_file(dir / "facts.txt", facts);
  write_file(dir / "train.txt", train);
  write_file(dir / "valid.txt", valid);
  write_file(dir / "test.txt", test);
}

std::set<std::pair<std::uint32_t, std::uint32_t>> column_entries(const AdjacencyTensor& B,
                                                                 std::size_t k) {
  std::set<std::pair<std::uint32_t, std::uint32_t>> out;  // (row j, col i)
  for (std::uint32_t i = 0; i < B.num_entities(); ++i)
    for (auto j : B.by_column(k).at(i)) out.emplace(j, i);
  return out;
}

}  // namespace

TEST_CASE("minimal split directory parses to one fact") {
  TempDir d;
  write_splits(d.path, "a\tr\tb\n");
  auto kb = load_split_dir(d.path);
  CHECK(kb.num_entities() == 2);
  CHECK(kb.num_relations() == 1);
  REQUIRE(kb.split(Split::facts).size() == 1);
  CHECK(kb.split(Split::facts)[0] == Triple{0, 0, 1});
  CHECK(kb.split(Split::train).empty());
}

TEST_CASE("symbols are interned in first-appearance order across splits") {
  TempDir d;
  write_splits(d.path, "b\tq\tc\n", "a\tr\tb\n", "c\tq\td\n", "e\tr\ta");
  auto kb = load_split_dir(d.path);
  CHECK(kb.entities.names() == std::vector<std::string>{"b", "c", "a", "d", "e"});
  CHECK(kb.relations.names() == std::vector<std::string>{"q", "r"});
  CHECK(kb.split(Split::test)[0] == Triple{4, 1, 2});
  CHECK(kb.warnings.empty());
}

TEST_CASE("missing file and malformed lines are reported") {
  TempDir d;
  write_file(d.path / "facts.txt", "a\tr\tb\n");
  CHECK_THROWS_AS(load_split_dir(d.path), DataError);

  write_splits(d.path, "a\tr\tb\nx\ty\n");
  try {
    load_split_dir(d.path);
    FAIL("expected a parse error");
  } catch (const DataError& e) {
    std::string msg = e.what();
    CHECK(msg.find("facts.txt:2") != std::string::npos);
  }
  write_splits(d.path, "a\tr\tb\tc\n");
  CHECK_THROWS_AS(load_split_dir(d.path), DataError);
}

TEST_CASE("unseen relation in test split warns but loads") {
  TempDir d;
  write_splits(d.path, "a\tr\tb\n", "", "", "a\tnew\tb\n");
  auto kb = load_split_dir(d.path);
  CHECK(kb.split(Split::test).size() == 1);
  CHECK(kb.warnings.size() == 1);
}

TEST_CASE("entities seen only in test get fresh indices") {
  TempDir d;
  write_splits(d.path, "a\tr\tb\n", "", "", "u\tr\tv\n");
  auto kb = load_split_dir(d.path);
  CHECK(kb.num_entities() == 4);
  CHECK(kb.split(Split::test)[0] == Triple{2, 0, 3});
}

TEST_CASE("write and reload round trip preserves indices and triples") {
  TempDir d;
  KnowledgeBase kb;
  kb.add(Split::facts, "x", "p", "y");
  kb.add(Split::facts, "y", "q", "z");
  kb.add(Split::train, "z", "p", "x");
  kb.add(Split::valid, "x", "q", "z");
  kb.add(Split::test, "w", "p", "y");
  write_split_dir(kb, d.path);
  auto back = load_split_dir(d.path);
  CHECK(back.entities.names() == kb.entities.names());
  CHECK(back.relations.names() == kb.relations.names());
  for (Split s : kAllSplits) CHECK(back.split(s) == kb.split(s));
}

TEST_CASE("extended predicate layout") {
  ExtendedPredicates family(12);
  CHECK(family.total_count() == 25);
  CHECK(family.true_index() == 24);
  CHECK(ExtendedPredicates(1).total_count() == 3);
  ExtendedPredicates umls(46);
  CHECK(umls.inverse_of(3) == 49);
  CHECK(umls.inverse_of(49) == 3);
  CHECK(umls.inverse_of(umls.true_index()) == umls.true_index());
  CHECK(umls.true_index() == umls.total_count() - 1);
  for (std::size_t k = 0; k < umls.total_count(); ++k)
    CHECK(umls.inverse_of(umls.inverse_of(k)) == k);
  CHECK_THROWS_AS(umls.inverse_of(umls.total_count()), std::out_of_range);
}

TEST_CASE("adjacency stores each fact and its inverse image") {
  ExtendedPredicates ext(1);
  std::vector<Triple> one{{0, 0, 1}};
  auto B = build_adjacency(one, 2, ext);
  CHECK(column_entries(B, 0) == std::set<std::pair<std::uint32_t, std::uint32_t>>{{1, 0}});
  CHECK(column_entries(B, ext.inverse_of(0)) ==
        std::set<std::pair<std::uint32_t, std::uint32_t>>{{0, 1}});
  CHECK(column_entries(B, ext.true_index()).empty());
  CHECK(B.contains(0, 1, 0));
  CHECK_FALSE(B.contains(0, 0, 1));
}

TEST_CASE("empty triple list yields empty slices") {
  ExtendedPredicates ext(2);
  auto B = build_adjacency({}, 3, ext);
  CHECK(B.nnz() == 0);
  for (std::size_t k = 0; k < ext.total_count(); ++k) CHECK(column_entries(B, k).empty());
}

TEST_CASE("symmetric pair fills both slices identically") {
  ExtendedPredicates ext(1);
  std::vector<Triple> sym{{0, 0, 1}, {1, 0, 0}, {0, 0, 1}};
  auto B = build_adjacency(sym, 2, ext);
  std::set<std::pair<std::uint32_t, std::uint32_t>> both{{1, 0}, {0, 1}};
  CHECK(column_entries(B, 0) == both);
  CHECK(column_entries(B, 1) == both);
  CHECK(B.nnz() == 4);
}

TEST_CASE("adjacency rejects out-of-range indices") {
  ExtendedPredicates ext(1);
  std::vector<Triple> bad_entity{{0, 0, 5}};
  std::vector<Triple> bad_relation{{0, 1, 1}};
  CHECK_THROWS_AS(build_adjacency(bad_entity, 2, ext), std::out_of_range);
  CHECK_THROWS_AS(build_adjacency(bad_relation, 2, ext), std::out_of_range);
}

TEST_CASE("row and column access agree for random graphs") {
  std::mt19937_64 rng(7);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t n = 2 + rng() % 10, P = 1 + rng() % 4;
    ExtendedPredicates ext(P);
    std::vector<Triple> ts;
    for (int e = 0; e < 30; ++e)
      ts.push_back(Triple{static_cast<EntityId>(rng() % n), static_cast<RelationId>(rng() % P),
                          static_cast<EntityId>(rng() % n)});
    auto B = build_adjacency(ts, n, ext);
    for (const auto& t : ts) {
      auto col = B.by_column(t.relation).at(t.head);
      CHECK(std::find(col.begin(), col.end(), t.tail) != col.end());
      auto inv = B.by_column(ext.inverse_of(t.relation)).at(t.tail);
      CHECK(std::find(inv.begin(), inv.end(), t.head) != inv.end());
    }
    for (std::size_t k = 0; k < ext.total_count(); ++k) {
      std::set<std::pair<std::uint32_t, std::uint32_t>> rows;
      for (std::uint32_t j = 0; j < n; ++j)
        for (auto i : B.by_row(k).at(j)) rows.emplace(j, i);
      CHECK(rows == column_entries(B, k));
    }
    std::size_t edge_count = 0;
    for (const auto& e : B.edges()) {
      CHECK(B.contains(e.pred, e.dst, e.src));
      ++edge_count;
    }
    CHECK(edge_count == B.nnz());
  }
}

TEST_CASE("train background excludes train positives, eval background merges") {
  KnowledgeBase kb;
  kb.add(Split::facts, "a", "r", "b");
  kb.add(Split::facts, "b", "r", "c");
  kb.add(Split::train, "a", "r", "c");
  kb.add(Split::train, "a", "r", "b");  // duplicate of a fact
  kb.add(Split::valid, "c", "r", "a");
  auto train_bg = background_for(Stage::train, kb);
  CHECK(train_bg.size() == 2);
  CHECK(std::find(train_bg.begin(), train_bg.end(), kb.split(Split::train)[0]) == train_bg.end());
  auto eval_bg = background_for(Stage::eval, kb);
  CHECK(eval_bg.size() == 3);
  CHECK(std::find(eval_bg.begin(), eval_bg.end(), kb.split(Split::valid)[0]) == eval_bg.end());
}

namespace {

KnowledgeBase noise_kb(std::size_t n_triples) {
  KnowledgeBase kb;
  for (int r = 0; r < 4; ++r) kb.relations.intern("r" + std::to_string(r));
  for (int e = 0; e < 50; ++e) kb.entities.intern("e" + std::to_string(e));
  std::mt19937_64 rng(3);
  for (std::size_t i = 0; i < n_triples; ++i) {
    Triple t{static_cast<EntityId>(rng() % 50), static_cast<RelationId>(rng() % 4),
             static_cast<EntityId>(rng() % 50)};
    kb.split(i % 5 == 0 ? Split::train : Split::facts).push_back(t);
    if (i % 97 == 0) kb.split(Split::test).push_back(t);
  }
  return kb;
}

}  // namespace

TEST_CASE("mislabeling with p = 0 is the identity") {
  auto kb = noise_kb(500);
  auto out = apply_mislabeling(kb, 0.0, 11);
  for (Split s : kAllSplits) CHECK(out.split(s) == kb.split(s));
}

TEST_CASE("mislabeling with p = 1 changes every facts/train relation") {
  auto kb = noise_kb(500);
  auto out = apply_mislabeling(kb, 1.0, 11);
  for (Split s : {Split::facts, Split::train}) {
    REQUIRE(out.split(s).size() == kb.split(s).size());
    for (std::size_t i = 0; i < kb.split(s).size(); ++i) {
      CHECK(out.split(s)[i].relation != kb.split(s)[i].relation);
      CHECK(out.split(s)[i].head == kb.split(s)[i].head);
      CHECK(out.split(s)[i].tail == kb.split(s)[i].tail);
    }
  }
  CHECK(out.split(Split::test) == kb.split(Split::test));
}

TEST_CASE("mislabeling rate concentrates around p") {
  auto kb = noise_kb(10000);
  auto out = apply_mislabeling(kb, 0.5, 5);
  std::size_t changed = 0, total = 0;
  for (Split s : {Split::facts, Split::train})
    for (std::size_t i = 0; i < kb.split(s).size(); ++i, ++total)
      changed += out.split(s)[i].relation != kb.split(s)[i].relation;
  CHECK(static_cast<double>(changed) / static_cast<double>(total) == doctest::Approx(0.5).epsilon(0.04));
  auto again = apply_mislabeling(kb, 0.5, 5);
  CHECK(again.split(Split::facts) == out.split(Split::facts));
}

TEST_CASE("mislabeling argument checks") {
  auto kb = noise_kb(10);
  CHECK_THROWS_AS(apply_mislabeling(kb, -0.1, 0), std::invalid_argument);
  CHECK_THROWS_AS(apply_mislabeling(kb, 1.5, 0), std::invalid_argument);
  KnowledgeBase single;
  single.add(Split::facts, "a", "r", "b");
  CHECK_THROWS_AS(apply_mislabeling(single, 0.5, 0), std::invalid_argument);
  CHECK_NOTHROW(apply_mislabeling(single, 0.0, 0));
}
