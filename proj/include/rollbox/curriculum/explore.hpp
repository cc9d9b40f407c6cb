#ifndef ROLLBOX_CURRICULUM_EXPLORE_HPP_
#define ROLLBOX_CURRICULUM_EXPLORE_HPP_

#include <cmath>
#include <functional>
#include <memory>
#include <ostream>
#include <set>
#include <tuple>

#include "rollbox/agents/rollout.hpp"
#include "rollbox/curriculum/curriculum.hpp"
#include "rollbox/nn/checkpoint.hpp"

namespace rollbox::curriculum {

inline constexpr double kCoverageCell = 0.25;

// Distinct (env, grid cell) pairs the agent's centre has occupied.
class Coverage {
 public:
  explicit Coverage(double cell = kCoverageCell) : cell_(cell) {}
  void visit(int env, const sim::WorldState& w) {
    const sim::Vec2 p = w.agent().position;
    const auto i = static_cast<int>(std::floor((p.x + w.table_half_extent) / cell_));
    const auto j = static_cast<int>(std::floor((p.y + w.table_half_extent) / cell_));
    cells_.insert({env, i, j});
  }
  std::size_t distinct() const { return cells_.size(); }
  std::size_t distinct(int env) const {
    std::size_t n = 0;
    for (const auto& c : cells_) n += std::get<0>(c) == env;
    return n;
  }

 private:
  double cell_;
  std::set<std::tuple<int, int, int>> cells_;
};

// Called after every environment step with the pool id of the env stepped.
using StepObserver = std::function<void(int env, const env::Environment&)>;

struct LearnResult {
  int steps = 0;
  std::vector<double> losses;  // world-model losses recorded by the update
};

// Something that can spend interactions in one environment and report how
// its world model is doing. The PPO agent is one; tests script others.
class ExplorationLearner {
 public:
  virtual ~ExplorationLearner() = default;
  // At most `max_steps` interactions in `slot`, followed by one update.
  virtual LearnResult learn(agents::EnvSlot& slot, int max_steps, const StepObserver& observe) = 0;
  virtual nn::Checkpoint checkpoint(std::int64_t step) const = 0;
};

class PpoExplorer : public ExplorationLearner {
 public:
  PpoExplorer(const agents::AgentSpec& spec, std::uint64_t seed)
      : agent_(spec, seed, agents::Phase::exploration), rng_(derive_seed(seed, "explore-act")) {}

  LearnResult learn(agents::EnvSlot& slot, int max_steps, const StepObserver& observe) override {
    const int steps = std::min(max_steps, agent_.spec().hp.rollout);
    auto hook = [&](agents::EnvSlot& s, agents::Transition&, const env::StepResult&) {
      if (observe) observe(s.env_id, s.env);
    };
    std::vector<agents::Transition> batch;
    {
      // collect_rollout wants a vector of slots; move the slot in and back out.
      std::vector<agents::EnvSlot> slots;
      slots.push_back(std::move(slot));
      batch = agents::collect_rollout(agent_, slots, steps, rng_, hook);
      slot = std::move(slots.front());
    }
    const agents::UpdateStats st = agent_.update(batch);
    last_ = st;
    return {steps, st.model_losses};
  }

  nn::Checkpoint checkpoint(std::int64_t step) const override {
    return agent_.checkpoint(static_cast<std::uint64_t>(step), agent_.spec().name, false);
  }

  const agents::Agent& agent() const { return agent_; }
  const agents::UpdateStats& last_stats() const { return last_; }

 private:
  agents::Agent agent_;
  Rng rng_;
  agents::UpdateStats last_;
};

struct ExploreConfig {
  std::int64_t budget = kDefaultBudget;
  double theta = kDefaultTheta;
  double alpha = kDefaultAlpha;
  std::int64_t checkpoint_every = 0;  // 0 = only at exit
  std::ostream* log = nullptr;        // JSON lines
  std::string agent_name;
  std::function<void(const nn::Checkpoint&)> on_checkpoint;
  StepObserver observe;
};

struct ExploreResult {
  nn::Checkpoint checkpoint;
  std::vector<Decision> decisions;
  std::int64_t steps = 0;
  bool terminated = false;  // by the loss rule rather than the budget
  int switches = 0;
};

// The open-ended exploration loop: learn in the active environment, record
// its world-model losses, and move on when it has been learned.
inline ExploreResult explore(ExplorationLearner& learner, const std::vector<worldgen::PuzzleConfig>& pool, const ExploreConfig& cfg) {
  CurriculumState state(pool, cfg.theta, cfg.budget, cfg.alpha);
  for (const auto& p : pool) {
    if (p.mode != worldgen::Mode::sandbox) throw UsageError("exploration pool must contain sandbox puzzles");
  }
  if (cfg.checkpoint_every < 0) throw UsageError("checkpoint interval must be >= 0");
  if (cfg.log) write_header(*cfg.log, {static_cast<int>(pool.size()), cfg.theta, cfg.alpha, cfg.budget, cfg.agent_name});

  // Sandbox worlds persist: returning to an env resumes where it was left.
  std::vector<std::unique_ptr<agents::EnvSlot>> slots;
  for (std::size_t k = 0; k < pool.size(); ++k) slots.push_back(nullptr);
  auto slot = [&](int id) -> agents::EnvSlot& {
    auto& s = slots[static_cast<std::size_t>(id)];
    if (!s) {
      s = std::make_unique<agents::EnvSlot>();
      s->env_id = id;
      s->obs = agents::share(s->env.reset(env::EnvConfig::sandbox(), pool[static_cast<std::size_t>(id)]).pixels);
    }
    return *s;
  };

  ExploreResult res;
  std::int64_t next_ckpt = cfg.checkpoint_every > 0 ? cfg.checkpoint_every : -1;
  while (state.steps < state.budget) {
    const auto left = state.budget - state.steps;
    const LearnResult lr = learner.learn(slot(state.active), static_cast<int>(std::min<std::int64_t>(left, 1 << 30)), cfg.observe);
    if (lr.steps <= 0 || lr.steps > left) throw Error("learner took " + std::to_string(lr.steps) + " steps with " + std::to_string(left) + " left");
    state.steps += lr.steps;
    const Decision d = decide(state, lr.losses);
    if (cfg.log) write_decision(*cfg.log, d);
    res.decisions.push_back(d);
    if (d.action == Action::switch_env) ++res.switches;
    if (next_ckpt > 0 && state.steps >= next_ckpt && state.steps < state.budget && d.action != Action::terminate) {
      if (cfg.on_checkpoint) cfg.on_checkpoint(learner.checkpoint(state.steps));
      while (next_ckpt <= state.steps) next_ckpt += cfg.checkpoint_every;
    }
    if (d.action == Action::terminate) {
      res.terminated = true;
      break;
    }
  }
  res.steps = state.steps;
  res.checkpoint = learner.checkpoint(state.steps);
  if (cfg.on_checkpoint) cfg.on_checkpoint(res.checkpoint);
  if (cfg.log) cfg.log->flush();
  return res;
}

}  // namespace rollbox::curriculum

#endif  // ROLLBOX_CURRICULUM_EXPLORE_HPP_
