#include <cmath>
#include <limits>

#include "doctest.h"
#include "glidr/autodiff.hpp"
#include "glidr/synthetic.hpp"
#include "glidr/training.hpp"

using namespace glidr;

TEST_CASE("AdamW step examples") {
  SUBCASE("zero gradient only decays the weights") {
    std::vector<double> p{1.0, -2.0};
    std::vector<double> g{0.0, 0.0};
    OptimizerState st(2);
    adamw_step(p, g, st, 0.1, 0.1);
    CHECK(p[0] == doctest::Approx(1.0 * (1.0 - 0.01)).epsilon(1e-12));
    CHECK(p[1] == doctest::Approx(-2.0 * (1.0 - 0.01)).epsilon(1e-12));
  }
  SUBCASE("first step with a constant gradient moves by the learning rate") {
    std::vector<double> p{0.0, 0.0};
    std::vector<double> g{3.0, -0.5};
    OptimizerState st(2);
    adamw_step(p, g, st, 0.15, 0.0);
    CHECK(p[0] == doctest::Approx(-0.15).epsilon(1e-6));
    CHECK(p[1] == doctest::Approx(0.15).epsilon(1e-6));
    CHECK(st.step == 1);
  }
  SUBCASE("steady gradient keeps the step near the learning rate") {
    std::vector<double> p{0.0};
    std::vector<double> g{2.0};
    OptimizerState st(1);
    for (int i = 0; i < 50; ++i) {
      const double before = p[0];
      adamw_step(p, g, st, 0.01, 0.0);
      CHECK(before - p[0] == doctest::Approx(0.01).epsilon(1e-6));
    }
  }
  SUBCASE("non-finite gradients are rejected") {
    std::vector<double> p{0.0, 0.0};
    std::vector<double> g{0.0, std::numeric_limits<double>::quiet_NaN()};
    OptimizerState st(2);
    CHECK_THROWS_AS(adamw_step(p, g, st, 0.1, 0.0), NonFiniteGradient);
    g[1] = std::numeric_limits<double>::infinity();
    CHECK_THROWS_AS(adamw_step(p, g, st, 0.1, 0.0), NonFiniteGradient);
  }
  SUBCASE("shape mismatch") {
    std::vector<double> p{0.0, 0.0};
    std::vector<double> g{0.0};
    OptimizerState st(2);
    CHECK_THROWS_AS(adamw_step(p, g, st, 0.1, 0.0), std::invalid_argument);
  }
}

TEST_CASE("training configuration validation") {
  TrainConfig c;
  CHECK_NOTHROW(c.validate());
  auto bad = c;
  bad.steps = 0;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  bad = c;
  bad.n_vars = 1;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  bad = c;
  bad.learning_rate = 0.0;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  bad = c;
  bad.weight_decay = -1.0;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
}

TEST_CASE("batch sampler balances labels and draws unknown negatives") {
  const auto pc = synthetic::planted_chain(30, 3);
  std::mt19937_64 rng(11);
  std::size_t pos = 0, total = 0;
  const Split forbidden[] = {Split::facts, Split::train};
  BatchSampler sampler(pc.kb, pc.target, Split::train, forbidden);
  for (int i = 0; i < 200; ++i) {
    auto batch = sample_batch(pc.kb, pc.target, 64, rng);
    CHECK(batch.queries.size() == 64);
    for (std::size_t j = 0; j < batch.queries.size(); ++j) {
      const auto& q = batch.queries[j];
      CHECK(q.relation == pc.target);
      if (batch.labels[j]) {
        ++pos;
        CHECK(sampler.is_known(q.head, q.tail));
      } else {
        CHECK_FALSE(sampler.is_known(q.head, q.tail));
      }
      ++total;
    }
  }
  CHECK(static_cast<double>(pos) / total == doctest::Approx(0.5).epsilon(0.04));
}

TEST_CASE("sampler on a one-positive three-entity relation") {
  KnowledgeBase kb;
  kb.add(Split::facts, "a", "link", "b");
  kb.add(Split::facts, "b", "link", "c");
  kb.add(Split::train, "a", "r", "c");
  const RelationId r = kb.relations.at("r");
  std::mt19937_64 rng(2);
  for (int i = 0; i < 50; ++i) {
    auto batch = sample_batch(kb, r, 16, rng);
    for (std::size_t j = 0; j < batch.queries.size(); ++j) {
      const auto& q = batch.queries[j];
      const bool is_pos = q.head == kb.entities.at("a") && q.tail == kb.entities.at("c");
      CHECK(is_pos == static_cast<bool>(batch.labels[j]));
    }
  }
}

TEST_CASE("relations without train positives") {
  KnowledgeBase kb;
  kb.add(Split::facts, "a", "link", "b");
  kb.add(Split::test, "a", "r", "b");
  const RelationId r = kb.relations.at("r");
  std::mt19937_64 rng(0);
  CHECK_THROWS_AS(sample_batch(kb, r, 8, rng), NoPositives);
  TrainConfig cfg;
  cfg.steps = 2;
  CHECK_THROWS_AS(train_relation(kb, r, cfg), NoPositives);
}

TEST_CASE("loss ratio weights") {
  std::vector<double> l{0.1, 0.2, 0.4};
  auto w = loss_ratio_weights(l);
  CHECK(w[0] == doctest::Approx(1.0));
  CHECK(w[1] == doctest::Approx(0.5));
  CHECK(w[2] == doctest::Approx(0.25));
  std::vector<double> same{0.3, 0.3, 0.3};
  for (double x : loss_ratio_weights(same)) CHECK(x == doctest::Approx(1.0));
  std::vector<double> zeros{0.0, 0.2, 0.4};
  auto wz = loss_ratio_weights(zeros);
  CHECK(wz[0] == 1.0);
  CHECK(wz[1] == doctest::Approx(1.0));
  CHECK(wz[2] == doctest::Approx(0.5));
  std::vector<double> all_zero{0.0, 0.0};
  for (double x : loss_ratio_weights(all_zero)) CHECK(x == 1.0);
}

namespace {

TrainConfig small_config() {
  TrainConfig c;
  c.steps = 60;
  c.batch_size = 32;
  c.bodies = 3;
  c.n_vars = 3;
  c.seed = 7;
  return c;
}

}  // namespace

TEST_CASE("training is deterministic and independent of the worker count") {
  const auto pc = synthetic::planted_chain(25, 1);
  auto cfg = small_config();
  const auto a = train_relation(pc.kb, pc.target, cfg);
  const auto b = train_relation(pc.kb, pc.target, cfg);
  CHECK(a.loss_trace == b.loss_trace);
  for (std::size_t i = 0; i < a.ensemble.bodies.size(); ++i)
    CHECK(a.ensemble.bodies[i].logits == b.ensemble.bodies[i].logits);

  cfg.workers = 2;
  const auto c = train_relation(pc.kb, pc.target, cfg);
  REQUIRE(c.loss_trace.size() == a.loss_trace.size());
  for (std::size_t s = 0; s < a.loss_trace.size(); ++s)
    CHECK(c.loss_trace[s] == doctest::Approx(a.loss_trace[s]).epsilon(1e-10));
  for (std::size_t i = 0; i < a.ensemble.bodies.size(); ++i)
    for (std::size_t k = 0; k < a.ensemble.bodies[i].logits.size(); ++k)
      CHECK(std::abs(c.ensemble.bodies[i].logits[k] - a.ensemble.bodies[i].logits[k]) < 1e-10);

  cfg.workers = 1;
  cfg.seed = 8;
  const auto d = train_relation(pc.kb, pc.target, cfg);
  CHECK(d.loss_trace != a.loss_trace);
}

TEST_CASE("loss trace is finite and the callback sees every step") {
  const auto pc = synthetic::planted_chain(25, 2);
  const auto cfg = small_config();
  const auto ext = build_extended(pc.kb);
  const auto B = build_adjacency(background_for(Stage::train, pc.kb), pc.kb.num_entities(), ext);
  std::vector<double> seen;
  const auto res = train_relation(pc.kb, pc.target, cfg, B,
                                  [&](std::size_t step, double loss) {
                                    CHECK(step == seen.size());
                                    seen.push_back(loss);
                                  });
  CHECK(seen == res.loss_trace);
  CHECK(res.loss_trace.size() == cfg.steps);
  for (double l : res.loss_trace) {
    CHECK(std::isfinite(l));
    CHECK(l >= 0.0);
  }
}

TEST_CASE("training never reads the valid or test splits") {
  const auto pc = synthetic::planted_chain(25, 4);
  auto stripped = pc.kb;
  stripped.split(Split::valid).clear();
  stripped.split(Split::test).clear();
  const auto cfg = small_config();
  const auto a = train_relation(pc.kb, pc.target, cfg);
  const auto b = train_relation(stripped, pc.target, cfg);
  CHECK(a.loss_trace == b.loss_trace);
  for (std::size_t i = 0; i < a.ensemble.bodies.size(); ++i)
    CHECK(a.ensemble.bodies[i].logits == b.ensemble.bodies[i].logits);
}

TEST_CASE("validation weights favour the body that fits held-out pairs") {
  const auto pc = synthetic::planted_chain(30, 5);
  const auto ext = build_extended(pc.kb);
  const auto B = build_adjacency(background_for(Stage::eval, pc.kb), pc.kb.num_entities(), ext);
  // body 0 encodes the planted rule, body 1 the unconstrained rule
  HardRule planted = unconstrained_rule(RuleSchema(3), ext, pc.target);
  const auto& schema = planted.schema;
  planted.slots[schema.slot_index(0, 1)] = {pc.first};
  planted.slots[schema.slot_index(1, 2)] = {pc.second};
  const HardRule trivial = unconstrained_rule(RuleSchema(3), ext, pc.target);
  RuleEnsemble ens;
  ens.target_relation = pc.target;
  ens.bodies = {synthetic::one_hot_weights(planted), synthetic::one_hot_weights(trivial)};
  const auto w = validation_weights(ens, pc.kb, pc.target, B, 64, 3, 0);
  REQUIRE(w.size() == 2);
  CHECK(w[0] == doctest::Approx(1.0));
  CHECK(w[1] < 1.0);
}

TEST_CASE("training drives the best body towards the loss floor") {
  // Scores live in [0,1], so the per-pair loss is at least log(1 + e^-1); progress is
  // measured as excess loss above that floor on a large fresh batch.
  const double floor = std::log1p(std::exp(-1.0));
  const auto pc = synthetic::planted_chain(30, 0);
  auto kb = pc.kb;
  // every planted pair is a train positive, so no true pair is sampled as a negative
  for (Split s : {Split::valid, Split::test}) {
    for (const auto& t : kb.split(s)) kb.split(Split::train).push_back(t);
    kb.split(s).clear();
  }
  TrainConfig cfg;
  cfg.steps = 400;
  cfg.bodies = 4;
  cfg.n_vars = 3;
  const auto ext = build_extended(kb);
  const auto B = build_adjacency(background_for(Stage::train, kb), kb.num_entities(), ext);
  const auto res = train_relation(kb, pc.target, cfg, B);

  std::mt19937_64 rng(99);
  const auto batch = sample_batch(kb, pc.target, 512, rng);
  std::vector<RuleWeights> init;
  for (std::size_t b = 0; b < cfg.bodies; ++b)
    init.push_back(init_weights(RuleSchema(cfg.n_vars), ext, pc.target,
                                derive_seed(cfg.seed, pc.target, b + 1)));
  const auto before = Tape::record(B, init, batch.queries, batch.labels, cfg.r_max);
  const auto after =
      Tape::record(B, res.ensemble.bodies, batch.queries, batch.labels, cfg.r_max);
  double best_before = 1e9, best_after = 1e9;
  for (double l : before.body_losses()) best_before = std::min(best_before, l);
  for (double l : after.body_losses()) best_after = std::min(best_after, l);
  MESSAGE("excess loss " << best_before - floor << " -> " << best_after - floor);
  CHECK(best_after >= floor - 1e-12);
  CHECK(best_after - floor < (best_before - floor) / 10.0);
}
