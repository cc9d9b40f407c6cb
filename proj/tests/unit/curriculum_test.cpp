#include <cmath>
#include <limits>
#include <map>
#include <sstream>

#include <gtest/gtest.h>

#include "rollbox/curriculum/explore.hpp"
#include "rollbox/worldgen/suite.hpp"

namespace rollbox::curriculum {
namespace {

std::vector<worldgen::PuzzleConfig> pool(int n) { return worldgen::sample_sandbox_pool(n, 3); }

CurriculumState with_emas(const std::vector<double>& emas, int active) {
  CurriculumState s(pool(static_cast<int>(emas.size())), 0.001, 1000);
  for (std::size_t k = 0; k < emas.size(); ++k) {
    s.pool[k].loss_ema = emas[k];
    s.pool[k].losses = std::isinf(emas[k]) ? 0 : 1;
  }
  s.active = active;
  return s;
}

TEST(Rule, SwitchIsStrictlyBelowTheta) {
  EXPECT_TRUE(should_switch(with_emas({0.0005}, 0)));
  EXPECT_FALSE(should_switch(with_emas({0.002}, 0)));
  EXPECT_FALSE(should_switch(with_emas({0.001}, 0)));
  EXPECT_THROW(should_switch(with_emas({std::numeric_limits<double>::infinity()}, 0)), UsageError);
}

TEST(Rule, SelectNextArgmaxTieAndTerminate) {
  EXPECT_EQ(select_next(with_emas({0.0005, 0.02, 0.004}, 0)), 1);
  EXPECT_EQ(select_next(with_emas({0.0005, 0.02, 0.02}, 0)), 1);
  EXPECT_EQ(select_next(with_emas({0.0005, 0.0002, 0.0009}, 0)), std::nullopt);
  // Exactly theta is still eligible; unseen envs always are.
  EXPECT_EQ(select_next(with_emas({0.0005, 0.001}, 0)), 1);
  EXPECT_EQ(select_next(with_emas({0.5, std::numeric_limits<double>::infinity(), 0.7}, 0)), 1);
  CurriculumState empty;
  EXPECT_THROW(select_next(empty), UsageError);
}

TEST(Rule, RecordLossEma) {
  CurriculumState s(pool(2), 0.001, 10);
  record_loss(s, 1, 0.5);
  EXPECT_EQ(s.pool[1].loss_ema, 0.5);
  record_loss(s, 1, 0.0);
  EXPECT_DOUBLE_EQ(s.pool[1].loss_ema, 0.495);
  for (int k = 0; k < 5000; ++k) record_loss(s, 0, 0.25);
  EXPECT_NEAR(s.pool[0].loss_ema, 0.25, 1e-15);
  EXPECT_THROW(record_loss(s, 7, 0.1), Error);
  EXPECT_THROW(record_loss(s, 0, -0.1), UsageError);
  EXPECT_THROW(record_loss(s, 0, std::nan("")), UsageError);
  EXPECT_THROW(CurriculumState(pool(1), 0.0, 10), UsageError);
  EXPECT_THROW(CurriculumState({}, 0.001, 10), UsageError);
}

// Plays random actions and reports scripted losses, one list per visit.
class ScriptedLearner : public ExplorationLearner {
 public:
  std::map<int, std::vector<std::vector<double>>> script;
  std::vector<double> fallback{1.0};
  int chunk = 10;
  std::map<int, int> visits;
  std::vector<int> order;
  int checkpoints = 0;

  LearnResult learn(agents::EnvSlot& slot, int max_steps, const StepObserver& observe) override {
    const int steps = std::min(chunk, max_steps);
    for (int t = 0; t < steps; ++t) {
      slot.env.step(env::Action{static_cast<int>(rng_.below(env::kNumActions))});
      if (observe) observe(slot.env_id, slot.env);
    }
    order.push_back(slot.env_id);
    const int v = visits[slot.env_id]++;
    const auto& s = script[slot.env_id];
    return {steps, v < static_cast<int>(s.size()) ? s[v] : fallback};
  }
  nn::Checkpoint checkpoint(std::int64_t step) const override {
    ++const_cast<ScriptedLearner*>(this)->checkpoints;
    nn::Checkpoint c;
    c.descriptor = "scripted";
    c.step = static_cast<std::uint64_t>(step);
    return c;
  }

 private:
  Rng rng_{1};
};

TEST(Explore, ScriptedLossesFollowHandSchedule) {
  ScriptedLearner l;
  l.script[0] = {{0.0005}};
  l.script[1] = {{0.0008}};
  // 0.004 * 0.99^137 = 0.0010093 stays, one more zero gives 0.00099919.
  l.script[2] = {{0.004}, std::vector<double>(137, 0.0), {0.0}};
  ExploreConfig cfg;
  cfg.budget = 1000;
  std::ostringstream log;
  cfg.log = &log;
  const auto r = explore(l, pool(3), cfg);
  ASSERT_EQ(r.decisions.size(), 5u);
  const std::vector<std::pair<Action, int>> want{
      {Action::switch_env, 1}, {Action::switch_env, 2}, {Action::cont, 2}, {Action::cont, 2}, {Action::terminate, 2}};
  for (std::size_t k = 0; k < want.size(); ++k) {
    EXPECT_EQ(r.decisions[k].action, want[k].first) << k;
    EXPECT_EQ(r.decisions[k].next_env, want[k].second) << k;
    EXPECT_EQ(r.decisions[k].step, static_cast<std::int64_t>(10 * (k + 1)));
  }
  EXPECT_NEAR(r.decisions[3].loss_ema, 0.004 * std::pow(0.99, 137), 1e-15);
  EXPECT_NEAR(r.decisions[4].loss_ema, 0.004 * std::pow(0.99, 138), 1e-15);
  EXPECT_TRUE(r.terminated);
  EXPECT_EQ(r.steps, 50);
  EXPECT_EQ(r.switches, 2);
  EXPECT_EQ(l.order, (std::vector<int>{0, 1, 2, 2, 2}));

  std::istringstream in(log.str());
  const auto parsed = read_log(in);
  EXPECT_EQ(parsed.decisions, r.decisions);
  EXPECT_TRUE(audit(parsed).ok);
}

TEST(Explore, SingleEnvNeverLearnedRunsToBudget) {
  ScriptedLearner l;
  l.chunk = 7;
  ExploreConfig cfg;
  cfg.budget = 100;
  const auto r = explore(l, pool(1), cfg);
  EXPECT_EQ(r.steps, 100);
  EXPECT_FALSE(r.terminated);
  EXPECT_EQ(r.switches, 0);
  EXPECT_EQ(r.decisions.size(), 15u);  // 14 * 7 + 2
  for (const auto& d : r.decisions) EXPECT_EQ(d.action, Action::cont);
}

TEST(Explore, ZeroBudgetCheckpointsImmediately) {
  ScriptedLearner l;
  ExploreConfig cfg;
  cfg.budget = 0;
  int saved = 0;
  cfg.on_checkpoint = [&](const nn::Checkpoint& c) {
    ++saved;
    EXPECT_EQ(c.step, 0u);
  };
  const auto r = explore(l, pool(2), cfg);
  EXPECT_EQ(saved, 1);
  EXPECT_TRUE(r.decisions.empty());
  EXPECT_TRUE(l.order.empty());
}

TEST(Explore, PeriodicCheckpoints) {
  ScriptedLearner l;
  ExploreConfig cfg;
  cfg.budget = 95;
  cfg.checkpoint_every = 30;
  std::vector<std::uint64_t> steps;
  cfg.on_checkpoint = [&](const nn::Checkpoint& c) { steps.push_back(c.step); };
  explore(l, pool(1), cfg);
  EXPECT_EQ(steps, (std::vector<std::uint64_t>{30, 60, 90, 95}));
}

TEST(Explore, CoverageCountsDistinctCellsPerEnv) {
  ScriptedLearner l;
  l.script[0] = {{0.0}};
  Coverage cov;
  ExploreConfig cfg;
  cfg.budget = 40;
  cfg.observe = [&](int env, const env::Environment& e) { cov.visit(env, e.world()); };
  explore(l, pool(2), cfg);
  EXPECT_GE(cov.distinct(0), 1u);
  EXPECT_GE(cov.distinct(1), 1u);
  EXPECT_EQ(cov.distinct(), cov.distinct(0) + cov.distinct(1));

  sim::WorldState w;
  w.table_half_extent = 2.0;
  w.bodies.push_back(sim::make_dynamic(sim::BodyKind::agent, {-2.0, -2.0}));
  Coverage c2;
  c2.visit(0, w);
  w.bodies[0].position = {-1.76, -1.99};
  c2.visit(0, w);
  EXPECT_EQ(c2.distinct(), 1u);
  w.bodies[0].position = {-1.75, -1.99};
  c2.visit(0, w);
  c2.visit(1, w);
  EXPECT_EQ(c2.distinct(), 3u);
}

TEST(Audit, ReplayIsDeterministicAndCatchesTampering) {
  ExplorationLog log;
  log.header = {4, 0.001, 0.01, 1000, "x"};
  CurriculumState s(pool(4), 0.001, 1000);
  Rng rng(5);
  for (int k = 0; k < 60; ++k) {
    std::vector<double> losses;
    for (int j = 0; j < 3; ++j) losses.push_back(0.003 * rng.uniform() * std::exp(-0.1 * k));
    s.steps += 10;
    const Decision d = decide(s, losses);
    log.decisions.push_back(d);
    if (d.action == Action::terminate) break;
  }
  const auto a = audit(log);
  EXPECT_TRUE(a.ok) << a.mismatch;
  EXPECT_EQ(a.checked, log.decisions.size());
  std::ostringstream out;
  write_header(out, log.header);
  for (const auto& d : log.decisions) write_decision(out, d);
  std::istringstream in(out.str());
  const auto back = read_log(in);
  EXPECT_EQ(back.decisions, log.decisions);

  auto bad = log;
  bad.decisions[2].losses[0] = 1.0;
  EXPECT_FALSE(audit(bad).ok);
  std::istringstream junk("{\"pool_size\":2}\n");
  EXPECT_THROW(read_log(junk), UsageError);
}

TEST(Explore, PpoExplorerRunsAndRecordsModelLoss) {
  auto spec = agents::preset("icm");
  spec.hp.rollout = 16;
  spec.hp.minibatch = 8;
  spec.hp.epochs = 1;
  PpoExplorer l(spec, 9);
  ExploreConfig cfg;
  cfg.budget = 40;
  const auto r = explore(l, pool(2), cfg);
  EXPECT_EQ(r.steps, 40);
  ASSERT_EQ(r.decisions.size(), 3u);
  EXPECT_EQ(r.decisions[0].losses.size(), 2u);
  EXPECT_EQ(r.decisions[2].losses.size(), 1u);
  for (const auto& d : r.decisions) {
    for (double x : d.losses) EXPECT_GT(x, 0.0);
  }
  EXPECT_EQ(r.checkpoint.descriptor, agents::descriptor(spec));
}

}  // namespace
}  // namespace rollbox::curriculum
