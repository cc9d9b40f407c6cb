#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

#include <gtest/gtest.h>

#include "rollbox/eval/finetune.hpp"
#include "rollbox/eval/report.hpp"
#include "rollbox/eval/suite_runner.hpp"

namespace rollbox::eval {
namespace {

// Summation by parts: s_N ln(N+1) - sum_{i<N} (s_{i+1} - s_i) ln(i+1),
// normalized. Never forms the per-budget weights.
double abel_oracle(const std::vector<double>& s) {
  const int n = static_cast<int>(s.size());
  long double acc = static_cast<long double>(s[n - 1]) * std::log(static_cast<long double>(n) + 1.0L);
  for (int i = 1; i < n; ++i) acc -= (static_cast<long double>(s[i]) - s[i - 1]) * std::log(static_cast<long double>(i) + 1.0L);
  return static_cast<double>(acc / std::log(static_cast<long double>(n) + 1.0L));
}

std::vector<double> random_s(int n, Rng& rng) {
  std::vector<double> s(n);
  for (auto& v : s) v = rng.uniform();
  return s;
}

TEST(ASuccess, MatchesSummationByPartsOracle) {
  Rng rng(11);
  for (int n : {100, 200}) {
    for (int rep = 0; rep < 1000; ++rep) {
      const auto s = random_s(n, rng);
      ASSERT_NEAR(a_success(s, n), abel_oracle(s), 1e-12);
    }
  }
}

TEST(ASuccess, HandCases) {
  std::vector<double> s(100, 1.0);
  EXPECT_DOUBLE_EQ(a_success(s, 100), 1.0);
  s[0] = 0.0;
  EXPECT_NEAR(a_success(s, 100), 0.84981, 1e-4);
  EXPECT_EQ(a_success(std::vector<double>(100, 0.0), 100), 0.0);
}

TEST(ASuccess, Errors) {
  EXPECT_THROW(a_success(std::vector<double>(99, 0.5), 100), UsageError);
  std::vector<double> s(10, 0.5);
  s[3] = 1.5;
  EXPECT_THROW(a_success(s, 10), UsageError);
  s[3] = -0.1;
  EXPECT_THROW(a_success(s, 10), UsageError);
  s[3] = std::nan("");
  EXPECT_THROW(a_success(s, 10), UsageError);
}

TEST(ASuccess, LogBaseCancels) {
  Rng rng(12);
  const auto s = random_s(100, rng);
  double acc = 0.0;
  for (int i = 1; i <= 100; ++i) acc += (std::log10(i + 1.0) - std::log10(static_cast<double>(i))) * s[i - 1];
  EXPECT_NEAR(a_success(s, 100), acc / std::log10(101.0), 1e-12);
}

TEST(ASuccess, MonotoneAndPrefersEarlySolves) {
  Rng rng(13);
  for (int rep = 0; rep < 200; ++rep) {
    auto s = random_s(100, rng);
    for (auto& v : s) v *= 0.9;
    auto up = s;
    up[rng.below(100)] += 0.05;
    EXPECT_GE(a_success(up, 100), a_success(s, 100));
    // Move a unit of success from budget i to an earlier budget j: the
    // cumulative curve rises on [j, i).
    const int i = 1 + static_cast<int>(rng.below(99));
    const int j = static_cast<int>(rng.below(i));
    auto early = s;
    for (int k = j; k < i; ++k) early[k] = std::min(1.0, early[k] + 0.05);
    EXPECT_GT(a_success(early, 100), a_success(s, 100));
  }
}

TEST(Report, CreditHeldAfterEpisodeEnds) {
  std::vector<EpisodeTrace> traces{{{0.0, 1.0}, 2, "goal"}, {{0.0, 0.0, 0.0, 0.0}, 4, "budget"}};
  const auto r = report_from_traces(Task::goal_seeking, 4, traces, 2, 9, "a", 0);
  EXPECT_EQ(r.s, (std::vector<double>{0.0, 0.5, 0.5, 0.5}));
  EXPECT_TRUE(r.complete);
  EXPECT_DOUBLE_EQ(r.score, a_success(r.s, 4));
}

TEST(Report, PreferencesAccruePartialCredit) {
  std::vector<EpisodeTrace> traces{{{0.2, 0.2, 1.0}, 3, "both"}, {{0.0, 0.8}, 2, "green"}};
  const auto r = report_from_traces(Task::preferences, 3, traces, 2, 0, "a", 0);
  EXPECT_NEAR(r.s[0], 0.1, 1e-15);
  EXPECT_NEAR(r.s[1], 0.5, 1e-15);
  EXPECT_NEAR(r.s[2], 0.9, 1e-15);
}

TEST(Report, AbandonedEpisodesScoreZero) {
  std::vector<EpisodeTrace> traces{{{1.0}, 1, "goal"}};
  const auto r = report_from_traces(Task::goal_seeking, 2, traces, 4, 0, "h", 0);
  EXPECT_FALSE(r.complete);
  EXPECT_EQ(r.s, (std::vector<double>{0.25, 0.25}));
  EXPECT_THROW(report_from_traces(Task::goal_seeking, 1, {{{1.0, 1.0}, 2, ""}}, 1, 0, "", 0), UsageError);
}

TEST(Report, JsonRoundTrip) {
  std::vector<EpisodeTrace> traces{{{0.0, 1.0}, 2, "goal"}};
  const auto r = report_from_traces(Task::avoidance, 3, traces, 1, 77, "curl_ride", 1000);
  EXPECT_EQ(report_from_json(to_json(r)), r);
  EXPECT_THROW(report_from_json(nlohmann::json{{"task", "goal_seeking"}}), UsageError);
}

// Steers toward the yellow sphere. Records the actions it chose per puzzle.
class Steering : public Controller {
 public:
  std::map<int, std::vector<int>> chosen;
  std::vector<int> act(const std::vector<Query>& queries, Rng&) override {
    std::vector<int> out;
    for (const auto& q : queries) {
      const sim::Vec2 a = q.world->agent().position;
      sim::Vec2 g = a;
      for (const auto& b : q.world->bodies) {
        if (b.kind == sim::BodyKind::goal_sphere_low) g = b.position;
      }
      int best = 0;
      double score = -1e300;
      for (int k = 0; k < env::kNumActions; ++k) {
        const sim::Vec2 d = env::Action{k}.direction();
        const double dot = d.x * (g.x - a.x) + d.y * (g.y - a.y);
        if (dot > score) score = dot, best = k;
      }
      out.push_back(best);
      chosen[q.puzzle].push_back(best);
    }
    return out;
  }
};

worldgen::TestSuite small_suite(int n, std::uint64_t seed) {
  worldgen::PuzzleSetOptions opt;
  opt.table_half_extent = 1.0;
  opt.obstacles = false;
  return worldgen::make_puzzle_set(Task::goal_seeking, seed, n, opt);
}

TEST(RunSuite, ScriptedPolicyMatchesSolveStepHistogram) {
  const auto suite = small_suite(12, 5);
  const int n = 100;
  Steering ctl;
  const auto res = run_suite(ctl, suite, n, 1);
  // Replay each puzzle alone and histogram the step of the hit.
  std::vector<double> cdf(n, 0.0);
  int solved = 0;
  for (std::size_t k = 0; k < suite.puzzles.size(); ++k) {
    env::Environment e;
    e.reset(eval_config(suite.task, n), suite.puzzles[k]);
    const auto& acts = ctl.chosen[static_cast<int>(k)];
    for (std::size_t t = 0; t < acts.size(); ++t) {
      const auto r = e.step(env::Action{acts[t]});
      if (r.reward == 1.0) {
        for (int i = static_cast<int>(t); i < n; ++i) cdf[i] += 1.0;
        ++solved;
        break;
      }
    }
  }
  for (auto& v : cdf) v /= static_cast<double>(suite.puzzles.size());
  ASSERT_GT(solved, 0);
  ASSERT_EQ(res.report.s.size(), cdf.size());
  for (int i = 0; i < n; ++i) EXPECT_DOUBLE_EQ(res.report.s[i], cdf[i]) << i;
  EXPECT_EQ(res.report.episodes, 12);
  EXPECT_TRUE(res.report.complete);
}

TEST(RunSuite, DeterministicGivenEvalSeed) {
  const auto suite = small_suite(6, 3);
  RandomController rc;
  const auto a = run_suite(rc, suite, 100, 4);
  const auto b = run_suite(rc, suite, 100, 4);
  EXPECT_EQ(a.report, b.report);
  EXPECT_EQ(a.traces, b.traces);
  const auto c = run_suite(rc, suite, 100, 5);
  EXPECT_NE(a.traces, c.traces);
}

TEST(RunSuite, PolicyControllerIsDeterministic) {
  const auto suite = small_suite(3, 8);
  agents::Agent agent(agents::preset("ppo"), 2, agents::Phase::finetune);
  PolicyController pc(agent);
  EXPECT_EQ(run_suite(pc, suite, 20, 1).traces, run_suite(pc, suite, 20, 1).traces);
}

TEST(RunSuite, Errors) {
  RandomController rc;
  EXPECT_THROW(run_suite(rc, worldgen::TestSuite{}, 100, 0), UsageError);
  auto suite = small_suite(2, 1);
  EXPECT_THROW(run_suite(rc, suite, 0, 0), UsageError);
  suite.task = Task::avoidance;
  EXPECT_THROW(run_suite(rc, suite, 100, 0), UsageError);
}

agents::AgentSpec quick_ppo() {
  auto s = agents::preset("ppo");
  s.hp.num_envs = 4;
  s.hp.rollout = 16;
  s.hp.minibatch = 8;
  s.hp.epochs = 1;
  return s;
}

TEST(Finetune, ZeroStepsGivesNearUniformPolicy) {
  FinetuneConfig cfg;
  cfg.steps = 0;
  cfg.seed = 3;
  auto agent = finetune(quick_ppo(), nullptr, cfg);
  env::Environment e;
  const auto obs = e.reset(env::EnvConfig::for_task(Task::goal_seeking), small_suite(1, 2).puzzles[0]);
  const auto logits = agent->logits(agent->encoder()(agent->images({obs.pixels.data()})));
  const auto p = nn::softmax(logits);
  for (int k = 0; k < env::kNumActions; ++k) EXPECT_NEAR(p.data()[k], 1.0 / env::kNumActions, 0.02);
}

TEST(Finetune, HonoursBudgetAndUsesTrainingPuzzles) {
  FinetuneConfig cfg;
  cfg.steps = 37;
  cfg.seed = 4;
  cfg.puzzles.table_half_extent = 1.0;
  int updates = 0;
  cfg.on_update = [&](const agents::Agent&, const FinetuneProgress&) { return ++updates < 100; };
  FinetuneProgress prog;
  finetune(quick_ppo(), nullptr, cfg, &prog);
  EXPECT_EQ(prog.steps, 37);
  EXPECT_EQ(prog.updates, 3);
  for (std::uint64_t k = 0; k < 50; ++k) {
    EXPECT_NE(worldgen::training_puzzle(Task::goal_seeking, 4, k).seed & worldgen::kTrainingSeedBit, 0u);
  }
  for (const auto& p : worldgen::make_test_suite(Task::goal_seeking, 4).puzzles) {
    EXPECT_EQ(p.seed & worldgen::kTrainingSeedBit, 0u);
  }
}

TEST(Finetune, CallbackStopsEarlyAndErrors) {
  FinetuneConfig cfg;
  cfg.steps = 1000;
  cfg.on_update = [](const agents::Agent&, const FinetuneProgress&) { return false; };
  FinetuneProgress prog;
  finetune(quick_ppo(), nullptr, cfg, &prog);
  EXPECT_EQ(prog.updates, 1);
  EXPECT_EQ(prog.steps, 16);
  cfg.steps = -1;
  EXPECT_THROW(finetune(quick_ppo(), nullptr, cfg), UsageError);
}

TEST(Finetune, LoadsEncoderAndRejectsMismatch) {
  agents::Agent explorer(agents::preset("icm"), 5);
  const auto ckpt = explorer.checkpoint(0, "test", false);
  FinetuneConfig cfg;
  auto tuned = finetune(quick_ppo(), &ckpt, cfg);
  EXPECT_EQ(nn::capture(tuned->encoder().params()), nn::capture(explorer.encoder().params()));
  auto other = quick_ppo();
  other.encoder.latent_dim = 64;
  EXPECT_THROW(finetune(other, &ckpt, cfg), Error);
}

class ReportFiles : public ::testing::Test {
 protected:
  std::filesystem::path dir = std::filesystem::temp_directory_path() / ("rollbox_report_" + std::to_string(::getpid()));
  void TearDown() override { std::filesystem::remove_all(dir); }
  static std::vector<std::string> lines(const std::filesystem::path& p) {
    std::ifstream f(p);
    std::vector<std::string> out;
    for (std::string l; std::getline(f, l);) out.push_back(l);
    return out;
  }
};

ASuccessReport fake(const std::string& agent, Task task, double level, int n = 100) {
  ASuccessReport r;
  r.agent_id = agent;
  r.task = task;
  r.n = n;
  r.s.assign(n, level);
  r.score = a_success(r.s, n);
  return r;
}

TEST_F(ReportFiles, SingleReportHasZeroStd) {
  emit_report({fake("ppo", Task::goal_seeking, 0.5)}, dir);
  const auto t = lines(dir / "results.csv");
  ASSERT_EQ(t.size(), 2u);
  EXPECT_EQ(t[0], "agent,task,score_mean,score_std,seeds");
  EXPECT_EQ(t[1], "ppo,goal_seeking,0.5,0,1");
  EXPECT_EQ(lines(dir / "curve_goal_seeking.csv").size(), 101u);
}

TEST_F(ReportFiles, SeedsAggregateToPopulationStd) {
  const auto rows = summarize({fake("a", Task::avoidance, 0.2), fake("a", Task::avoidance, 0.4), fake("a", Task::avoidance, 0.9)});
  ASSERT_EQ(rows.size(), 1u);
  EXPECT_NEAR(rows[0].mean, 0.5, 1e-15);
  EXPECT_NEAR(rows[0].std, std::sqrt((0.09 + 0.01 + 0.16) / 3.0), 1e-15);
  EXPECT_EQ(rows[0].seeds, 3);
  emit_report({fake("a", Task::tool_use, 0.1, 200), fake("b", Task::tool_use, 0.3, 200), fake("a", Task::goal_seeking, 1.0)}, dir);
  const auto c = lines(dir / "curve_tool_use.csv");
  EXPECT_EQ(c.size(), 201u);
  EXPECT_EQ(c[0], "i,a,b");
  EXPECT_EQ(lines(dir / "results.csv").size(), 4u);
  EXPECT_THROW(emit_report({}, dir), UsageError);
}

}  // namespace
}  // namespace rollbox::eval
