// glidr: train, evaluate and inspect graph-like rule models from the command line.

#include <algorithm>
#include <cstdlib>
#include <atomic>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <mutex>
#include <numeric>
#include <optional>
#include <sstream>
#include <thread>

#include "CLI11.hpp"
#include "json.hpp"

#include "glidr/evaluation.hpp"
#include "glidr/self_check.hpp"
#include "glidr/training.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;
using namespace glidr;

namespace {

struct RunConfig {
  TrainConfig train;
  fs::path data;
  fs::path out = "runs/default";
  std::vector<std::string> relations;
  double extract_p = 0.25;
  double noise_p = 0.0;
  std::string mode = "soft";
  std::string split = "test";
  bool argmax = false;
  std::string head, tail, query_relation;
  std::size_t top_k = 10;
  bool quick = false;
};

class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

fs::path relation_dir(const fs::path& out, RelationId r) {
  return out / "checkpoints" / ("rel_" + std::to_string(r));
}

std::vector<RelationId> selected_relations(const RunConfig& cfg, const KnowledgeBase& kb) {
  std::vector<RelationId> out;
  if (cfg.relations.empty()) {
    out.resize(kb.num_relations());
    std::iota(out.begin(), out.end(), RelationId{0});
    return out;
  }
  for (const auto& name : cfg.relations) {
    if (!kb.relations.contains(name)) throw UsageError("unknown relation '" + name + "'");
    out.push_back(kb.relations.at(name));
  }
  return out;
}

KnowledgeBase load_data(const RunConfig& cfg) {
  if (cfg.data.empty()) throw UsageError("--data is required");
  auto kb = load_split_dir(cfg.data);
  for (const auto& w : kb.warnings) std::cerr << "warning: " << w << '\n';
  return kb;
}

Split parse_split(const std::string& s) {
  if (s == "test") return Split::test;
  if (s == "valid") return Split::valid;
  throw UsageError("--split must be test or valid");
}

// Runs fn(i) for i in [0, n) on up to `workers` threads.
template <class Fn>
void parallel_for(std::size_t n, std::size_t workers, Fn fn) {
  std::atomic<std::size_t> next{0};
  auto work = [&] {
    for (std::size_t i = next++; i < n; i = next++) fn(i);
  };
  workers = std::clamp<std::size_t>(workers, 1, std::max<std::size_t>(n, 1));
  if (workers == 1) return work();
  std::vector<std::jthread> pool;
  for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(work);
}

int cmd_train(const RunConfig& cfg) {
  cfg.train.validate();
  const auto clean = load_data(cfg);
  // mislabeling perturbs the graph the rules are fit on; evaluation keeps the clean splits
  const auto kb = cfg.noise_p > 0.0 ? apply_mislabeling(clean, cfg.noise_p, cfg.train.seed) : clean;
  const auto ext = build_extended(kb);
  const auto B_train = build_adjacency(background_for(Stage::train, kb), kb.num_entities(), ext);
  const auto B_eval = build_adjacency(background_for(Stage::eval, kb), kb.num_entities(), ext);
  const auto rels = selected_relations(cfg, kb);
  fs::create_directories(cfg.out / "loss");
  std::mutex log_mutex;
  std::atomic<std::size_t> trained{0};

  parallel_for(rels.size(), cfg.train.workers, [&](std::size_t i) {
    const RelationId r = rels[i];
    const auto& name = kb.relations.name(r);
    TrainConfig tc = cfg.train;
    tc.workers = 1;
    const Split forbidden[] = {Split::facts, Split::train};
    if (!BatchSampler(kb, r, Split::train, forbidden).has_positives()) {
      std::lock_guard lock(log_mutex);
      std::cerr << "skip " << name << ": no train positives\n";
      return;
    }
    std::ofstream trace(cfg.out / "loss" / ("rel_" + std::to_string(r) + ".jsonl"));
    auto res = train_relation(kb, r, tc, B_train, [&](std::size_t step, double loss) {
      trace << json{{"step", step}, {"mean_loss", loss}}.dump() << '\n';
    });
    res.ensemble.body_scores =
        validation_weights(res.ensemble, kb, r, B_eval, tc.batch_size, tc.r_max, tc.seed);
    const auto dir = relation_dir(cfg.out, r);
    fs::create_directories(dir);
    for (std::size_t b = 0; b < res.ensemble.bodies.size(); ++b)
      save_weights(res.ensemble.bodies[b], name, dir / ("body_" + std::to_string(b) + ".json"));
    json meta{{"format_version", kCheckpointFormatVersion},
              {"relation", r},
              {"relation_name", name},
              {"bodies", res.ensemble.bodies.size()},
              {"body_scores", res.ensemble.body_scores},
              {"n_vars", tc.n_vars},
              {"r_max", tc.r_max},
              {"seed", tc.seed},
              {"noise_p", cfg.noise_p},
              {"final_loss", res.loss_trace.back()}};
    std::ofstream(dir / "ensemble.json") << meta.dump(2) << '\n';
    std::lock_guard lock(log_mutex);
    std::cerr << "[" << ++trained << "/" << rels.size() << "] " << name << " loss "
              << res.loss_trace.front() << " -> " << res.loss_trace.back() << '\n';
  });
  return 0;
}

std::optional<RuleEnsemble> load_ensemble(const fs::path& out, RelationId r) {
  const auto dir = relation_dir(out, r);
  if (!fs::exists(dir / "ensemble.json")) return std::nullopt;
  std::ifstream in(dir / "ensemble.json");
  const auto meta = json::parse(in);
  RuleEnsemble e;
  e.target_relation = r;
  e.body_scores = meta.at("body_scores").get<std::vector<double>>();
  const auto n = meta.at("bodies").get<std::size_t>();
  for (std::size_t b = 0; b < n; ++b)
    e.bodies.push_back(load_weights(dir / ("body_" + std::to_string(b) + ".json")));
  return e;
}

std::optional<HardBodies> load_rules(const fs::path& out, RelationId r) {
  const auto file = out / "rules" / ("rel_" + std::to_string(r) + ".jsonl");
  if (!fs::exists(file)) return std::nullopt;
  std::ifstream in(file);
  HardBodies hb;
  for (std::string line; std::getline(in, line);) {
    if (line.empty()) continue;
    auto [rule, score] = hard_rule_from_json(line);
    hb.rules.push_back(std::move(rule));
    hb.scores.push_back(score);
  }
  return hb;
}

void append_sweep_row(const RunConfig& cfg, const MetricsReport& m) {
  const auto file = cfg.out.parent_path() / "sweep.csv";
  const bool fresh = !fs::exists(file);
  std::ofstream csv(file, std::ios::app);
  if (fresh) csv << "run,mode,split,noise_p,n_vars,seed,extract_p,mrr,hits1,hits3,hits10,count\n";
  csv << cfg.out.filename().string() << ',' << cfg.mode << ',' << cfg.split << ','
      << cfg.noise_p << ',' << cfg.train.n_vars << ',' << cfg.train.seed << ','
      << cfg.extract_p << ',' << m.mrr << ',' << m.hits1 << ',' << m.hits3 << ',' << m.hits10
      << ',' << m.count << '\n';
}

int cmd_eval(const RunConfig& cfg) {
  if (cfg.mode != "soft" && cfg.mode != "hard") throw UsageError("--mode must be soft or hard");
  const auto kb = load_data(cfg);
  const auto ext = build_extended(kb);
  const auto B = build_adjacency(background_for(Stage::eval, kb), kb.num_entities(), ext);
  std::map<RelationId, RuleEnsemble> ensembles;
  std::map<RelationId, HardBodies> rules;
  for (RelationId r : selected_relations(cfg, kb)) {
    if (cfg.mode == "soft") {
      if (auto e = load_ensemble(cfg.out, r)) ensembles[r] = std::move(*e);
    } else if (auto h = load_rules(cfg.out, r)) {
      rules[r] = std::move(*h);
    }
  }
  if (ensembles.empty() && rules.empty())
    throw std::runtime_error("no " + std::string(cfg.mode == "soft" ? "checkpoints" : "extracted rules") +
                             " under " + cfg.out.string());
  auto scorers = cfg.mode == "soft" ? soft_scorers(ensembles, B, cfg.train.r_max) : hard_scorers(rules, B);

  KnowledgeBase eval_kb = kb;
  const Split split = parse_split(cfg.split);
  if (!cfg.relations.empty()) {
    const auto rels = selected_relations(cfg, kb);
    auto& ts = eval_kb.split(split);
    std::erase_if(ts, [&](const Triple& t) {
      return std::find(rels.begin(), rels.end(), t.relation) == rels.end();
    });
  }
  EvalConfig ec{cfg.train.seed, cfg.train.workers, split};
  const auto res = evaluate(scorers, eval_kb, ec);
  for (const auto& w : res.warnings) std::cerr << "warning: " << w << '\n';

  fs::create_directories(cfg.out);
  std::ofstream ranks(cfg.out / ("ranks_" + cfg.mode + ".jsonl"));
  for (const auto& r : res.records)
    ranks << json{{"direction", direction_name(r.direction)},
                  {"entity", kb.entities.name(r.entity)},
                  {"relation", kb.relations.name(r.relation)},
                  {"target", kb.entities.name(r.target)},
                  {"rank", r.rank}}
                 .dump()
          << '\n';
  const auto& m = res.metrics;
  json report{{"mode", cfg.mode}, {"split", cfg.split},  {"mrr", m.mrr},
              {"hits1", m.hits1}, {"hits3", m.hits3},    {"hits10", m.hits10},
              {"count", m.count}, {"seed", cfg.train.seed}, {"warnings", res.warnings}};
  std::ofstream(cfg.out / ("metrics_" + cfg.mode + ".json")) << report.dump(2) << '\n';
  std::ofstream(cfg.out / "metrics.jsonl", std::ios::app) << report.dump() << '\n';
  append_sweep_row(cfg, m);
  std::cout << std::fixed << std::setprecision(4) << "mode " << cfg.mode << "  MRR " << m.mrr
            << "  Hits@1 " << m.hits1 << "  Hits@3 " << m.hits3 << "  Hits@10 " << m.hits10
            << "  (" << m.count << " queries)\n";
  return 0;
}

int cmd_extract(const RunConfig& cfg) {
  if (!(cfg.extract_p > 0.0 && cfg.extract_p <= 1.0)) throw UsageError("--p must lie in (0,1]");
  const auto kb = load_data(cfg);
  const auto ext = build_extended(kb);
  fs::create_directories(cfg.out / "rules");
  std::size_t written = 0;
  for (RelationId r : selected_relations(cfg, kb)) {
    auto e = load_ensemble(cfg.out, r);
    if (!e) continue;
    std::ofstream txt(cfg.out / "rules" / ("rel_" + std::to_string(r) + ".txt"));
    std::ofstream jl(cfg.out / "rules" / ("rel_" + std::to_string(r) + ".jsonl"));
    for (std::size_t b = 0; b < e->bodies.size(); ++b) {
      const auto dist = slot_distributions(e->bodies[b]);
      const auto rule = cfg.argmax ? extract_argmax(dist, ext, r)
                                   : extract_top_p(dist, ext, r, cfg.extract_p);
      txt << render_rule(rule, kb) << '\n';
      jl << hard_rule_to_json(rule, e->body_score(b)) << '\n';
    }
    ++written;
  }
  std::cerr << "extracted rules for " << written << " relations into " << (cfg.out / "rules") << '\n';
  return 0;
}

int cmd_infer(const RunConfig& cfg) {
  if (cfg.head.empty() && cfg.tail.empty()) throw UsageError("give --head, --tail, or both");
  if (cfg.query_relation.empty()) throw UsageError("--query-relation is required");
  const auto kb = load_data(cfg);
  const auto ext = build_extended(kb);
  const auto B = build_adjacency(background_for(Stage::eval, kb), kb.num_entities(), ext);
  if (!kb.relations.contains(cfg.query_relation))
    throw UsageError("unknown relation '" + cfg.query_relation + "'");
  const RelationId r = kb.relations.at(cfg.query_relation);
  auto entity = [&](const std::string& n) {
    if (!kb.entities.contains(n)) throw UsageError("unknown entity '" + n + "'");
    return kb.entities.at(n);
  };

  OpenQueryScorer scorer;
  std::optional<RuleEnsemble> ens;
  std::optional<HardBodies> hard;
  if (cfg.mode == "hard") {
    hard = load_rules(cfg.out, r);
    if (!hard) throw std::runtime_error("no extracted rules for relation " + cfg.query_relation);
    scorer = [&](QueryDirection d, EntityId f, RelationId rel, std::span<const EntityId> c) {
      return score_open_query_hard(d, f, rel, c, hard->rules, hard->scores, B);
    };
  } else {
    ens = load_ensemble(cfg.out, r);
    if (!ens) throw std::runtime_error("no checkpoint for relation " + cfg.query_relation);
    scorer = [&](QueryDirection d, EntityId f, RelationId rel, std::span<const EntityId> c) {
      return score_open_query(d, f, rel, c, *ens, B, cfg.train.r_max);
    };
  }

  if (!cfg.head.empty() && !cfg.tail.empty()) {
    const EntityId t = entity(cfg.tail);
    const std::vector<EntityId> one{t};
    const double s = scorer(QueryDirection::tail, entity(cfg.head), r, one)[0];
    std::cout << json{{"head", cfg.head}, {"relation", cfg.query_relation}, {"tail", cfg.tail},
                      {"score", s}}
                     .dump()
              << '\n';
    return 0;
  }
  const bool tail_query = !cfg.head.empty();
  const EntityId fixed = entity(tail_query ? cfg.head : cfg.tail);
  std::vector<EntityId> cands(kb.num_entities());
  std::iota(cands.begin(), cands.end(), EntityId{0});
  const auto scores =
      scorer(tail_query ? QueryDirection::tail : QueryDirection::head, fixed, r, cands);
  std::vector<EntityId> order = cands;
  std::stable_sort(order.begin(), order.end(),
                   [&](EntityId a, EntityId b) { return scores[a] > scores[b]; });
  for (std::size_t i = 0; i < std::min(cfg.top_k, order.size()); ++i)
    std::cout << json{{"rank", i + 1}, {"entity", kb.entities.name(order[i])},
                      {"score", scores[order[i]]}}
                     .dump()
              << '\n';
  return 0;
}

int cmd_perturb(const RunConfig& cfg) {
  const auto kb = load_data(cfg);
  const auto noisy = apply_mislabeling(kb, cfg.noise_p, cfg.train.seed);
  write_split_dir(noisy, cfg.out);
  std::cerr << "wrote perturbed splits (p=" << cfg.noise_p << ") to " << cfg.out << '\n';
  return 0;
}

int cmd_check(const RunConfig& cfg) {
  bool ok = true;
  for (const auto& o : self_check::run_all(cfg.train.seed, cfg.quick)) {
    std::cout << (o.passed ? "PASS " : "FAIL ") << o.name << ": " << o.detail << '\n';
    ok = ok && o.passed;
  }
  return ok ? 0 : 1;
}

// CLI11 lets a config file win over environment variables; the precedence here is
// flags > environment > config file > defaults, so environment values not already given as
// flags are injected ahead of the real arguments.
std::vector<std::string> with_env_overrides(const CLI::App& app, int argc, char** argv) {
  std::vector<std::string> given(argv + 1, argv + argc);
  std::vector<std::string> args;
  for (const CLI::Option* opt : app.get_options()) {
    if (opt->get_envname().empty()) continue;
    const char* value = std::getenv(opt->get_envname().c_str());
    if (value == nullptr) continue;
    const auto& names = opt->get_lnames();
    const bool on_command_line = std::any_of(given.begin(), given.end(), [&](const std::string& a) {
      return std::any_of(names.begin(), names.end(), [&](const std::string& n) {
        return a == "--" + n || a.starts_with("--" + n + "=");
      });
    });
    if (!on_command_line) args.push_back("--" + names.front() + "=" + value);
  }
  args.insert(args.end(), given.begin(), given.end());
  std::reverse(args.begin(), args.end());  // CLI11 consumes the vector from the back
  return args;
}

}  // namespace

int main(int argc, char** argv) {
  RunConfig cfg;
  cfg.train.workers = std::max(1u, std::thread::hardware_concurrency());

  CLI::App app{"differentiable graph-like rule learning over knowledge graphs", "glidr"};
  app.require_subcommand(1);
  app.fallthrough();
  app.set_config("--config", "", "flat key = value file using the long option names");
  app.add_option("--data", cfg.data, "directory with facts/train/valid/test.txt")->envname("GLIDR_DATA");
  app.add_option("--out", cfg.out, "run directory")->envname("GLIDR_OUT");
  app.add_option("--relation", cfg.relations, "restrict to these relations")->envname("GLIDR_RELATION");
  app.add_option("--steps", cfg.train.steps)->envname("GLIDR_STEPS");
  app.add_option("--batch-size,--batch_size", cfg.train.batch_size)->envname("GLIDR_BATCH_SIZE");
  app.add_option("--lr,--learning_rate", cfg.train.learning_rate)->envname("GLIDR_LR");
  app.add_option("--weight-decay,--weight_decay", cfg.train.weight_decay)->envname("GLIDR_WEIGHT_DECAY");
  app.add_option("--n-vars,--n_vars", cfg.train.n_vars)->envname("GLIDR_N_VARS");
  app.add_option("--bodies", cfg.train.bodies)->envname("GLIDR_BODIES");
  app.add_option("--r-max,--r_max", cfg.train.r_max)->envname("GLIDR_R_MAX");
  app.add_option("--seed", cfg.train.seed)->envname("GLIDR_SEED");
  app.add_option("--p", cfg.extract_p, "top-p extraction mass")->envname("GLIDR_P");
  app.add_option("--noise-p,--noise_p", cfg.noise_p, "mislabeling probability")->envname("GLIDR_NOISE_P")
      ->check(CLI::Range(0.0, 1.0));
  app.add_option("--mode", cfg.mode, "soft or hard")->envname("GLIDR_MODE")
      ->check(CLI::IsMember({"soft", "hard"}));
  app.add_option("--workers", cfg.train.workers)->envname("GLIDR_WORKERS");

  auto* train = app.add_subcommand("train", "fit rule ensembles per relation");
  auto* eval = app.add_subcommand("eval", "filtered ranking on the test split");
  eval->add_option("--split", cfg.split, "test or valid");
  auto* extract = app.add_subcommand("extract", "write symbolic rules from checkpoints");
  extract->add_flag("--argmax", cfg.argmax, "argmax instead of top-p extraction");
  auto* infer = app.add_subcommand("infer", "score one query or rank candidates");
  infer->add_option("--head", cfg.head);
  infer->add_option("--tail", cfg.tail);
  infer->add_option("--query-relation", cfg.query_relation);
  infer->add_option("--top-k", cfg.top_k);
  auto* perturb = app.add_subcommand("perturb", "write a mislabeled copy of a dataset");
  perturb->add_option("--p", cfg.noise_p, "mislabeling probability (same as --noise-p)")
      ->check(CLI::Range(0.0, 1.0));
  auto* check = app.add_subcommand("check", "gradient, oracle and counterexample self-checks");
  check->add_flag("--quick", cfg.quick, "a tenth of the randomized instances");

  try {
    app.parse(with_env_overrides(app, argc, argv));
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (*train) return cmd_train(cfg);
    if (*eval) return cmd_eval(cfg);
    if (*extract) return cmd_extract(cfg);
    if (*infer) return cmd_infer(cfg);
    if (*perturb) return cmd_perturb(cfg);
    if (*check) return cmd_check(cfg);
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << "\n\n" << app.help();
    return 2;
  } catch (const std::invalid_argument& e) {
    std::cerr << "usage error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 2;
}
