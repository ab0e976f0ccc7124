#include <sys/wait.h>
#include <unistd.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "doctest.h"
#include "glidr/synthetic.hpp"
#include "json.hpp"

namespace fs = std::filesystem;
using namespace glidr;

namespace {

struct Workspace {
  fs::path root = fs::temp_directory_path() / ("glidr_cli_" + std::to_string(::getpid()));
  Workspace() {
    fs::remove_all(root);
    fs::create_directories(root);
    write_split_dir(synthetic::planted_chain(20, 1).kb, root / "data");
  }
  ~Workspace() { fs::remove_all(root); }
};

struct Run {
  int code = -1;
  std::string out;
};

Run cli(const Workspace& ws, const std::string& args, const std::string& env = "") {
  const auto log = ws.root / "stdout.txt";
  const std::string cmd = "cd '" + ws.root.string() + "' && " + env + " '" GLIDR_CLI_PATH "' " +
                          args + " > '" + log.string() + "' 2>&1";
  const int status = std::system(cmd.c_str());
  Run r;
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  std::ifstream in(log);
  std::stringstream ss;
  ss << in.rdbuf();
  r.out = ss.str();
  return r;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::size_t count_lines(const fs::path& p) {
  std::ifstream in(p);
  std::size_t n = 0;
  for (std::string line; std::getline(in, line);) n += !line.empty();
  return n;
}

}  // namespace

TEST_CASE("usage errors exit with status 2") {
  Workspace ws;
  CHECK(cli(ws, "").code == 2);
  CHECK(cli(ws, "frobnicate").code == 2);
  CHECK(cli(ws, "train --steps notanumber --data data").code == 2);
  CHECK(cli(ws, "train --data data --relation nope").code == 2);
  CHECK(cli(ws, "train --data data --steps 0").code == 2);
  CHECK(cli(ws, "eval --data data --mode fuzzy").code == 2);
  CHECK(cli(ws, "--help").code == 0);
}

TEST_CASE("runtime errors exit with status 1") {
  Workspace ws;
  const auto r = cli(ws, "train --data missing_dir");
  CHECK(r.code == 1);
  CHECK(cli(ws, "eval --data data --out nothing_here").code == 1);
}

TEST_CASE("self-check command passes") {
  Workspace ws;
  const auto r = cli(ws, "check --quick");
  CHECK(r.code == 0);
  CHECK(r.out.find("FAIL") == std::string::npos);
  CHECK(r.out.find("PASS locally consistent counterexample") != std::string::npos);
}

TEST_CASE("perturbing with probability zero copies the dataset byte for byte") {
  Workspace ws;
  REQUIRE(cli(ws, "perturb --data data --out clean --p 0").code == 0);
  for (const char* f : {"facts.txt", "train.txt", "valid.txt", "test.txt"})
    CHECK(slurp(ws.root / "clean" / f) == slurp(ws.root / "data" / f));
  REQUIRE(cli(ws, "perturb --data data --out noisy --noise-p 1 --seed 3").code == 0);
  CHECK(slurp(ws.root / "noisy" / "facts.txt") != slurp(ws.root / "data" / "facts.txt"));
  CHECK(count_lines(ws.root / "noisy" / "facts.txt") == count_lines(ws.root / "data" / "facts.txt"));
}

TEST_CASE("train, extract, eval and infer on a small dataset") {
  Workspace ws;
  const std::string common = "--data data --out runs/a --relation h --bodies 2 --n-vars 3";
  auto r = cli(ws, "train " + common + " --steps 40 --batch-size 16 --workers 2");
  REQUIRE_MESSAGE(r.code == 0, r.out);
  const auto ckpt = ws.root / "runs/a/checkpoints/rel_4";
  CHECK(fs::exists(ckpt / "body_0.json"));
  CHECK(fs::exists(ckpt / "body_1.json"));
  const auto meta = nlohmann::json::parse(slurp(ckpt / "ensemble.json"));
  CHECK(meta.at("relation_name") == "h");
  CHECK(meta.at("body_scores").size() == 2);
  CHECK(count_lines(ws.root / "runs/a/loss/rel_4.jsonl") == 40);

  r = cli(ws, "extract " + common);
  REQUIRE_MESSAGE(r.code == 0, r.out);
  CHECK(count_lines(ws.root / "runs/a/rules/rel_4.txt") == 2);
  CHECK(slurp(ws.root / "runs/a/rules/rel_4.txt").starts_with("h(X,Y) :- "));

  for (const char* mode : {"soft", "hard"}) {
    r = cli(ws, "eval " + common + " --mode " + mode);
    REQUIRE_MESSAGE(r.code == 0, r.out);
    const auto m = nlohmann::json::parse(slurp(ws.root / "runs/a" / ("metrics_" + std::string(mode) + ".json")));
    CHECK(m.at("mrr").get<double>() > 0.0);
    CHECK(m.at("mrr").get<double>() <= 1.0);
    CHECK(count_lines(ws.root / "runs/a" / ("ranks_" + std::string(mode) + ".jsonl")) ==
          m.at("count").get<std::size_t>());
  }
  CHECK(count_lines(ws.root / "runs/sweep.csv") == 3);

  r = cli(ws, "infer " + common + " --query-relation h --head n0 --top-k 4");
  REQUIRE_MESSAGE(r.code == 0, r.out);
  std::istringstream lines(r.out);
  std::size_t ranked = 0;
  for (std::string line; std::getline(lines, line);)
    if (line.starts_with("{")) ++ranked;
  CHECK(ranked == 4);
  r = cli(ws, "infer " + common + " --query-relation h --head n0 --tail n1");
  CHECK(r.code == 0);
  CHECK(r.out.find("\"score\"") != std::string::npos);
  CHECK(cli(ws, "infer " + common + " --query-relation h --head nobody").code == 2);
}

TEST_CASE("flags beat the environment, which beats the config file") {
  Workspace ws;
  std::ofstream(ws.root / "run.toml") << "steps = 7\nbatch_size = 8\nbodies = 1\nrelation = h\n";
  const std::string base = "train --config run.toml --data data";
  REQUIRE(cli(ws, base + " --out cfg").code == 0);
  CHECK(count_lines(ws.root / "cfg/loss/rel_4.jsonl") == 7);
  REQUIRE(cli(ws, base + " --out env", "GLIDR_STEPS=3").code == 0);
  CHECK(count_lines(ws.root / "env/loss/rel_4.jsonl") == 3);
  REQUIRE(cli(ws, base + " --out flag --steps 5", "GLIDR_STEPS=3").code == 0);
  CHECK(count_lines(ws.root / "flag/loss/rel_4.jsonl") == 5);
}
