#ifndef ROLLBOX_WORLDGEN_SUITE_HPP_
#define ROLLBOX_WORLDGEN_SUITE_HPP_

#include <cstdint>
#include <set>
#include <string>
#include <vector>

#include "rollbox/core/rng.hpp"
#include "rollbox/worldgen/generator.hpp"

namespace rollbox::worldgen {

inline constexpr int kSuiteSize = 100;

// Test-suite seeds have the top bit clear, training seeds have it set, so
// the two sets can never intersect.
inline constexpr std::uint64_t kTrainingSeedBit = 1ULL << 63;

inline std::uint64_t test_seed(std::uint64_t suite_seed, Task task, std::uint64_t k) {
  return derive_seed(suite_seed, "suite:" + std::string(to_string(task)), k) & ~kTrainingSeedBit;
}

inline std::uint64_t training_seed(std::uint64_t seed, Task task, std::uint64_t k) {
  return derive_seed(seed, "train:" + std::string(to_string(task)), k) | kTrainingSeedBit;
}

struct TestSuite {
  Task task = Task::none;
  std::vector<PuzzleConfig> puzzles;
  std::uint64_t suite_seed = 0;
  friend bool operator==(const TestSuite&, const TestSuite&) = default;
};

struct PuzzleSetOptions {
  double table_half_extent = sim::Defaults::table_half_extent;
  bool obstacles = true;  // obstacle cubes where the task has them
  bool training = false;  // draw from the training seed partition
};

// Entity counts for one task puzzle (the recipe drawn from `rng`).
inline PuzzleConfig task_recipe(Task task, Rng& rng, const PuzzleSetOptions& opt) {
  PuzzleConfig c;
  c.mode = Mode::task;
  c.task = task;
  c.table_half_extent = opt.table_half_extent;
  c.counts[BodyKind::goal_sphere_low] = 1;
  switch (task) {
    case Task::goal_seeking:
      if (opt.obstacles) {
        c.counts[BodyKind::cube_heavy] = rng.range(1, 2);
        c.counts[BodyKind::cube_light] = rng.range(1, 2);
      }
      break;
    case Task::preferences:
      c.counts[BodyKind::goal_sphere_high] = 1;
      if (opt.obstacles) {
        c.counts[BodyKind::cube_heavy] = rng.range(1, 2);
        c.counts[BodyKind::cube_light] = rng.range(0, 1);
      }
      break;
    case Task::avoidance:
      c.counts[BodyKind::danger_region] = 1;
      if (opt.obstacles) {
        c.counts[BodyKind::cube_heavy] = rng.range(0, 1);
        c.counts[BodyKind::cube_light] = rng.range(0, 1);
      }
      break;
    case Task::tool_use:
      c.counts[BodyKind::ramp] = 1;
      break;
    case Task::none:
      throw UsageError("task must not be none");
  }
  return c;
}

// `n` solvable puzzles of one task, deterministic in `seed`.
inline TestSuite make_puzzle_set(Task task, std::uint64_t seed, int n, const PuzzleSetOptions& opt = {}) {
  if (task == Task::none) throw UsageError("task must not be none");
  if (n < 1) throw UsageError("puzzle set size must be >= 1");
  TestSuite suite;
  suite.task = task;
  suite.suite_seed = seed;
  std::set<std::uint64_t> used;
  std::uint64_t k = 0;
  while (static_cast<int>(suite.puzzles.size()) < n) {
    Rng recipe_rng(derive_seed(seed, "recipe", k));
    PuzzleConfig c = task_recipe(task, recipe_rng, opt);
    c.seed = opt.training ? training_seed(seed, task, k) : test_seed(seed, task, k);
    ++k;
    if (!used.insert(c.seed).second) continue;
    generate(c);  // throws if unsatisfiable
    suite.puzzles.push_back(c);
  }
  return suite;
}

// The k-th puzzle of an unbounded training stream (training partition).
inline PuzzleConfig training_puzzle(Task task, std::uint64_t seed, std::uint64_t k, const PuzzleSetOptions& opt = {}) {
  Rng recipe_rng(derive_seed(seed, "train-recipe", k));
  PuzzleConfig c = task_recipe(task, recipe_rng, opt);
  c.seed = training_seed(seed, task, k);
  return c;
}

inline TestSuite make_test_suite(Task task, std::uint64_t suite_seed) {
  return make_puzzle_set(task, suite_seed, kSuiteSize);
}

// Inclusive count ranges of sandbox worlds.
struct SandboxRanges {
  static constexpr int cube_max = 4;  // per weight class
  static constexpr int goal_low_max = 3;
  static constexpr int goal_high_max = 1;
  static constexpr int ramp_max = 1;
};

inline std::vector<PuzzleConfig> sample_sandbox_pool(int n, std::uint64_t pool_seed,
                                                     double table_half_extent = sim::Defaults::table_half_extent) {
  if (n < 1) throw UsageError("pool size must be >= 1");
  std::vector<PuzzleConfig> pool;
  std::set<std::uint64_t> used;
  Rng rng(derive_seed(pool_seed, "sandbox-pool"));
  while (static_cast<int>(pool.size()) < n) {
    PuzzleConfig c;
    c.mode = Mode::sandbox;
    c.task = Task::none;
    c.table_half_extent = table_half_extent;
    c.counts[BodyKind::cube_heavy] = rng.range(0, SandboxRanges::cube_max);
    c.counts[BodyKind::cube_light] = rng.range(0, SandboxRanges::cube_max);
    c.counts[BodyKind::goal_sphere_low] = rng.range(0, SandboxRanges::goal_low_max);
    c.counts[BodyKind::goal_sphere_high] = rng.range(0, SandboxRanges::goal_high_max);
    c.counts[BodyKind::ramp] = rng.range(0, SandboxRanges::ramp_max);
    c.seed = rng.next() & ~kTrainingSeedBit;
    if (!used.insert(c.seed).second) continue;
    pool.push_back(c);
  }
  return pool;
}

inline json to_json(const TestSuite& s) {
  json puzzles = json::array();
  for (const auto& p : s.puzzles) puzzles.push_back(to_json(p));
  return json{{"task", to_string(s.task)}, {"suite_seed", s.suite_seed}, {"puzzles", puzzles}};
}

inline TestSuite suite_from_json(const json& j) {
  TestSuite s;
  try {
    s.task = task_from_string(j.at("task").get<std::string>());
    s.suite_seed = j.at("suite_seed").get<std::uint64_t>();
    for (const auto& p : j.at("puzzles")) s.puzzles.push_back(puzzle_from_json(p));
  } catch (const json::exception& e) {
    throw UsageError(std::string("malformed suite: ") + e.what());
  }
  for (const auto& p : s.puzzles) {
    if (p.task != s.task) throw UsageError("suite puzzle task does not match suite task");
  }
  return s;
}

}  // namespace rollbox::worldgen

#endif  // ROLLBOX_WORLDGEN_SUITE_HPP_
