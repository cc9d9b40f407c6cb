#ifndef ROLLBOX_ENV_ENVIRONMENT_HPP_
#define ROLLBOX_ENV_ENVIRONMENT_HPP_

#include <cmath>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "rollbox/core/error.hpp"
#include "rollbox/env/action.hpp"
#include "rollbox/env/raster.hpp"
#include "rollbox/sim/physics.hpp"
#include "rollbox/sim/query.hpp"
#include "rollbox/worldgen/generator.hpp"

namespace rollbox::env {

using worldgen::Mode;
using worldgen::PuzzleConfig;
using worldgen::Task;

// Action budget N of a task episode (0 = unbounded).
inline int action_budget(Task t) {
  switch (t) {
    case Task::none: return 0;
    case Task::tool_use: return 200;
    default: return 100;
  }
}

struct EnvConfig {
  int frame_skip = 4;
  Mode mode = Mode::sandbox;
  Task task = Task::none;
  int max_episode_actions = 0;  // 0 = unbounded
  bool extrinsic_reward_enabled = true;
  bool observation_enabled = true;
  bool with_aux = false;
  double force_magnitude = sim::Defaults::force_magnitude;

  static EnvConfig sandbox() { return EnvConfig{}; }

  static EnvConfig for_task(Task t) {
    EnvConfig c;
    c.mode = t == Task::none ? Mode::sandbox : Mode::task;
    c.task = t;
    c.max_episode_actions = action_budget(t);
    return c;
  }
};

inline void validate(const EnvConfig& c) {
  if (c.frame_skip < 1) throw UsageError("frame_skip must be >= 1");
  if (c.max_episode_actions < 0) throw UsageError("max_episode_actions must be >= 0");
  if ((c.mode == Mode::sandbox) != (c.task == Task::none)) throw UsageError("mode and task disagree");
  if (!(c.force_magnitude >= 0.0)) throw UsageError("force magnitude must be >= 0");
}

// Payoff of a preferences episode.
inline double preference_reward(bool hit_green, bool hit_yellow) {
  if (hit_green && hit_yellow) return 1.0;
  if (hit_green) return 0.8;
  if (hit_yellow) return 0.2;
  return 0.0;
}

struct StepInfo {
  std::vector<sim::CollisionEvent> collisions;  // involving the agent
  std::uint64_t tick = 0;
  std::string termination;  // "", "goal", "died", "both_goals", "budget"
  double credit = 0.0;      // return the episode would have if it ended now
  int actions = 0;
  bool hit_yellow = false;
  bool hit_green = false;
};

struct StepResult {
  Observation observation;
  double reward = 0.0;
  bool done = false;
  StepInfo info;
};

inline nlohmann::json to_json(const StepInfo& info) {
  nlohmann::json cols = nlohmann::json::array();
  for (const auto& e : info.collisions) cols.push_back({{"a", e.a}, {"b", e.b}, {"impulse", e.impulse}, {"substep", e.substep}});
  return {{"collisions", cols}, {"tick", info.tick},        {"termination", info.termination},
          {"credit", info.credit}, {"actions", info.actions}, {"hit_yellow", info.hit_yellow},
          {"hit_green", info.hit_green}};
}

inline bool inside_danger(const sim::WorldState& w, sim::Vec2 p) {
  for (const auto& b : w.bodies) {
    if (b.kind != sim::BodyKind::danger_region) continue;
    const auto half = std::get<sim::Box>(b.shape).half_extents;
    if (std::abs(p.x - b.position.x) <= half.x && std::abs(p.y - b.position.y) <= half.y) return true;
  }
  return false;
}

// One environment instance. Single-threaded; run many for vectorised rollouts.
class Environment {
 public:
  Observation reset(const EnvConfig& config, const PuzzleConfig& puzzle) {
    validate(config);
    if (puzzle.mode != config.mode || puzzle.task != config.task) throw UsageError("puzzle does not match environment mode/task");
    return reset_world(config, worldgen::generate(puzzle));
  }

  // Starts an episode from an explicit world (fixtures, replays).
  Observation reset_world(const EnvConfig& config, sim::WorldState world) {
    validate(config);
    sim::validate(world);
    config_ = config;
    world_ = std::move(world);
    started_ = true;
    done_ = false;
    actions_ = 0;
    hit_yellow_ = hit_green_ = false;
    return observe();
  }

  StepResult step(Action action) {
    if (!started_) throw Error("episode not started");
    if (done_) throw Error("episode finished");
    action = Action::checked(action.index);
    sim::begin_macro_step(world_);
    const int agent_id = world_.agent().id;
    const sim::ForceCommand force{agent_id, action.direction(), config_.force_magnitude};
    const bool task_mode = config_.mode == Mode::task;
    std::string outcome;
    for (int s = 0; s < config_.frame_skip; ++s) {
      sim::advance(world_, force, sim::Defaults::dt);
      if (!task_mode || !outcome.empty()) continue;
      if (config_.task == Task::avoidance && inside_danger(world_, world_.agent().position)) {
        outcome = "died";
        continue;
      }
      for (const auto& e : world_.pending_collisions) {
        if (e.a != agent_id && e.b != agent_id) continue;
        const sim::Body* other = world_.find(e.a == agent_id ? e.b : e.a);
        if (other->kind == sim::BodyKind::goal_sphere_low) hit_yellow_ = true;
        if (other->kind == sim::BodyKind::goal_sphere_high) hit_green_ = true;
      }
      if (config_.task == Task::preferences) {
        if (hit_yellow_ && hit_green_) outcome = "both_goals";
      } else if (hit_yellow_) {
        outcome = "goal";
      }
    }
    ++actions_;

    StepResult r;
    r.info.termination = outcome;
    if (task_mode) {
      const bool out_of_budget = config_.max_episode_actions > 0 && actions_ >= config_.max_episode_actions;
      if (config_.task == Task::preferences) {
        r.info.credit = preference_reward(hit_green_, hit_yellow_);
        r.done = !outcome.empty() || out_of_budget;
        if (r.done) r.reward = r.info.credit;
      } else {
        r.info.credit = outcome == "goal" ? 1.0 : 0.0;
        r.done = !outcome.empty() || out_of_budget;
        r.reward = r.info.credit;
      }
      if (out_of_budget && outcome.empty()) r.info.termination = "budget";
    }
    if (!config_.extrinsic_reward_enabled) r.reward = 0.0;
    done_ = r.done;

    r.info.collisions = sim::collisions_involving(world_, agent_id);
    r.info.tick = world_.tick;
    r.info.actions = actions_;
    r.info.hit_yellow = hit_yellow_;
    r.info.hit_green = hit_green_;
    r.observation = observe();
    return r;
  }

  // Changes run-time options (frame skip, reward toggle) without a reset.
  void configure(const EnvConfig& config) {
    validate(config);
    config_ = config;
  }

  const EnvConfig& config() const { return config_; }
  const sim::WorldState& world() const { return world_; }
  bool started() const { return started_; }
  bool done() const { return done_; }
  int actions_taken() const { return actions_; }

 private:
  Observation observe() const {
    if (!config_.observation_enabled) return {};
    return rasterize(world_, config_.with_aux);
  }

  EnvConfig config_;
  sim::WorldState world_;
  bool started_ = false;
  bool done_ = false;
  int actions_ = 0;
  bool hit_yellow_ = false;
  bool hit_green_ = false;
};

}  // namespace rollbox::env

#endif  // ROLLBOX_ENV_ENVIRONMENT_HPP_
