#ifndef ROLLBOX_EVAL_SUITE_RUNNER_HPP_
#define ROLLBOX_EVAL_SUITE_RUNNER_HPP_

#include <string>
#include <vector>

#include "rollbox/agents/agent.hpp"
#include "rollbox/env/environment.hpp"
#include "rollbox/eval/metric.hpp"
#include "rollbox/worldgen/suite.hpp"

namespace rollbox::eval {

// One live episode asking for an action.
struct Query {
  int puzzle = 0;
  int step = 0;  // actions already taken
  const env::Observation* observation = nullptr;
  const sim::WorldState* world = nullptr;
};

// Anything that picks actions: a trained policy, a script, a human.
class Controller {
 public:
  virtual ~Controller() = default;
  virtual std::vector<int> act(const std::vector<Query>& queries, Rng& rng) = 0;
};

// Samples from an agent's policy head.
class PolicyController : public Controller {
 public:
  explicit PolicyController(const agents::Agent& agent) : agent_(agent) {}
  std::vector<int> act(const std::vector<Query>& queries, Rng& rng) override {
    std::vector<const std::uint8_t*> px;
    for (const auto& q : queries) px.push_back(q.observation->pixels.data());
    return agent_.act(px, rng).actions;
  }

 private:
  const agents::Agent& agent_;
};

class RandomController : public Controller {
 public:
  std::vector<int> act(const std::vector<Query>& queries, Rng& rng) override {
    std::vector<int> out;
    for (std::size_t i = 0; i < queries.size(); ++i) out.push_back(static_cast<int>(rng.below(env::kNumActions)));
    return out;
  }
};

// Appends the credit after one step to a trace.
inline void record_step(EpisodeTrace& trace, const env::StepResult& r) {
  trace.credit.push_back(r.info.credit);
  trace.actions = r.info.actions;
  if (r.done) trace.termination = r.info.termination;
}

inline env::EnvConfig eval_config(Task task, int n) {
  env::EnvConfig c = env::EnvConfig::for_task(task);
  c.max_episode_actions = n;
  return c;
}

struct SuiteResult {
  ASuccessReport report;
  std::vector<EpisodeTrace> traces;
};

// Plays every puzzle for up to N actions, all episodes in lockstep so a
// policy can act on them as one batch.
inline SuiteResult run_suite(Controller& controller, const worldgen::TestSuite& suite, int n, std::uint64_t eval_seed,
                             const std::string& agent_id = "", std::int64_t finetune_steps = 0) {
  if (suite.puzzles.empty()) throw UsageError("suite has no puzzles");
  if (n < 1) throw UsageError("N must be >= 1");
  for (const auto& p : suite.puzzles) {
    if (p.task != suite.task) throw UsageError("suite mixes tasks");
  }
  const std::size_t count = suite.puzzles.size();
  const env::EnvConfig config = eval_config(suite.task, n);
  std::vector<env::Environment> envs(count);
  std::vector<env::Observation> obs(count);
  for (std::size_t k = 0; k < count; ++k) obs[k] = envs[k].reset(config, suite.puzzles[k]);
  SuiteResult res;
  res.traces.resize(count);
  Rng rng(derive_seed(eval_seed, "eval"));
  while (true) {
    std::vector<Query> queries;
    for (std::size_t k = 0; k < count; ++k) {
      if (!envs[k].done()) queries.push_back({static_cast<int>(k), envs[k].actions_taken(), &obs[k], &envs[k].world()});
    }
    if (queries.empty()) break;
    const std::vector<int> actions = controller.act(queries, rng);
    if (actions.size() != queries.size()) throw Error("controller returned " + std::to_string(actions.size()) + " actions for " + std::to_string(queries.size()) + " episodes");
    for (std::size_t i = 0; i < queries.size(); ++i) {
      const auto k = static_cast<std::size_t>(queries[i].puzzle);
      env::StepResult r = envs[k].step(env::Action::checked(actions[i]));
      record_step(res.traces[k], r);
      obs[k] = std::move(r.observation);
    }
  }
  res.report = report_from_traces(suite.task, n, res.traces, static_cast<int>(count), suite.suite_seed, agent_id, finetune_steps);
  return res;
}

}  // namespace rollbox::eval

#endif  // ROLLBOX_EVAL_SUITE_RUNNER_HPP_
