#ifndef ROLLBOX_EVAL_FINETUNE_HPP_
#define ROLLBOX_EVAL_FINETUNE_HPP_

#include <algorithm>
#include <functional>
#include <memory>
#include <optional>
#include <string>

#include "rollbox/agents/rollout.hpp"
#include "rollbox/eval/suite_runner.hpp"
#include "rollbox/worldgen/suite.hpp"

namespace rollbox::eval {

inline constexpr double kFinetuneLr = 2.5e-4;

struct FinetuneProgress {
  std::int64_t steps = 0;
  int updates = 0;
  int episodes = 0;
  double recent_return = 0.0;  // mean return of episodes finished in the last rollout
  agents::UpdateStats stats;
};

struct FinetuneConfig {
  Task task = Task::goal_seeking;
  std::int64_t steps = 0;
  std::uint64_t seed = 0;
  double lr = kFinetuneLr;
  worldgen::PuzzleSetOptions puzzles;  // table size and obstacles; always drawn from the training partition
  // Called after every update; returning false stops training early.
  std::function<bool(const agents::Agent&, const FinetuneProgress&)> on_update;
};

// Task-specific PPO with extrinsic reward. The encoder comes from the
// checkpoint when given; policy and value heads always start fresh.
inline std::unique_ptr<agents::Agent> finetune(const agents::AgentSpec& base, const nn::Checkpoint* checkpoint,
                                               const FinetuneConfig& cfg, FinetuneProgress* progress_out = nullptr) {
  if (cfg.steps < 0) throw UsageError("finetune steps must be >= 0");
  if (cfg.task == Task::none) throw UsageError("finetune needs a task");
  agents::AgentSpec spec = base;
  spec.hp.lr = cfg.lr;
  auto agent = std::make_unique<agents::Agent>(spec, derive_seed(cfg.seed, "finetune-agent"), agents::Phase::finetune);
  if (checkpoint) agent->load_encoder(*checkpoint);

  worldgen::PuzzleSetOptions opt = cfg.puzzles;
  opt.training = true;
  const env::EnvConfig env_config = env::EnvConfig::for_task(cfg.task);
  std::uint64_t next_puzzle = 0;
  auto fresh = [&](agents::EnvSlot& s) {
    const auto p = worldgen::training_puzzle(cfg.task, cfg.seed, next_puzzle++, opt);
    s.obs = agents::share(s.env.reset(env_config, p).pixels);
  };

  const int num_envs = spec.hp.num_envs;
  std::vector<agents::EnvSlot> slots(num_envs);
  for (int k = 0; k < num_envs; ++k) {
    slots[k].env_id = k;
    fresh(slots[k]);
  }
  std::vector<double> returns(num_envs, 0.0);
  Rng rng(derive_seed(cfg.seed, "finetune-act"));
  FinetuneProgress prog;
  const int per_env = std::max(1, spec.hp.rollout / num_envs);
  while (prog.steps < cfg.steps) {
    const std::int64_t left = cfg.steps - prog.steps;
    const int steps = static_cast<int>(std::min<std::int64_t>(per_env, (left + num_envs - 1) / num_envs));
    double finished = 0.0;
    int finished_n = 0;
    auto hook = [&](agents::EnvSlot& s, agents::Transition& tr, const env::StepResult& r) {
      returns[s.env_id] += tr.reward_ext;
      if (r.done) {
        finished += returns[s.env_id];
        ++finished_n;
        returns[s.env_id] = 0.0;
        fresh(s);
      }
    };
    auto batch = agents::collect_rollout(*agent, slots, steps, rng, hook);
    // The last wave may overshoot the budget by less than one step per env.
    if (static_cast<std::int64_t>(batch.size()) > left) {
      std::vector<agents::Transition> trimmed;
      const std::size_t keep = static_cast<std::size_t>(left);
      for (std::size_t i = 0; i < batch.size() && trimmed.size() < keep; ++i) trimmed.push_back(batch[i]);
      if (!trimmed.back().done && !trimmed.back().cut) {
        trimmed.back().cut = true;
        trimmed.back().next_value = agent->value_of({trimmed.back().next_obs->data()})[0];
      }
      batch = std::move(trimmed);
    }
    prog.steps += static_cast<std::int64_t>(batch.size());
    prog.stats = agent->update(batch);
    ++prog.updates;
    prog.episodes += finished_n;
    prog.recent_return = finished_n > 0 ? finished / finished_n : 0.0;
    if (cfg.on_update && !cfg.on_update(*agent, prog)) break;
  }
  if (progress_out) *progress_out = prog;
  return agent;
}

}  // namespace rollbox::eval

#endif  // ROLLBOX_EVAL_FINETUNE_HPP_
