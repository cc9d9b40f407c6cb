#ifndef ROLLBOX_WORLDGEN_PUZZLE_CONFIG_HPP_
#define ROLLBOX_WORLDGEN_PUZZLE_CONFIG_HPP_

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "rollbox/core/error.hpp"
#include "rollbox/sim/body.hpp"

namespace rollbox::worldgen {

using sim::BodyKind;
using json = nlohmann::json;

enum class Mode { sandbox = 0, task = 1 };

// Numbering follows the task ids of the environment API (1..4).
enum class Task { none = 0, goal_seeking = 1, preferences = 2, avoidance = 3, tool_use = 4 };

inline constexpr std::string_view to_string(Mode m) {
  return m == Mode::sandbox ? "sandbox" : "task";
}

inline constexpr std::string_view to_string(Task t) {
  switch (t) {
    case Task::none: return "none";
    case Task::goal_seeking: return "goal_seeking";
    case Task::preferences: return "preferences";
    case Task::avoidance: return "avoidance";
    case Task::tool_use: return "tool_use";
  }
  return "?";
}

inline Mode mode_from_string(std::string_view s) {
  if (s == "sandbox") return Mode::sandbox;
  if (s == "task") return Mode::task;
  throw UsageError("unknown mode '" + std::string(s) + "'");
}

inline Task task_from_string(std::string_view s) {
  for (Task t : {Task::none, Task::goal_seeking, Task::preferences, Task::avoidance, Task::tool_use}) {
    if (to_string(t) == s) return t;
  }
  throw UsageError("unknown task '" + std::string(s) + "'");
}

inline Task task_from_id(int id) {
  if (id < 0 || id > 4) throw UsageError("task id must be in 0..4");
  return static_cast<Task>(id);
}

struct GridCell {
  int i = 0;  // column, west to east
  int j = 0;  // row, south to north
  friend bool operator==(const GridCell&, const GridCell&) = default;
};

inline constexpr int kGridSize = 16;

struct PuzzleConfig {
  Mode mode = Mode::sandbox;
  Task task = Task::none;
  std::map<BodyKind, int> counts{{BodyKind::agent, 1}};
  // Optional explicit grid cells per kind; entries beyond the listed cells
  // are placed randomly.
  std::map<BodyKind, std::vector<GridCell>> placement;
  std::uint64_t seed = 0;
  double table_half_extent = sim::Defaults::table_half_extent;

  int count(BodyKind k) const {
    auto it = counts.find(k);
    return it == counts.end() ? 0 : it->second;
  }

  friend bool operator==(const PuzzleConfig&, const PuzzleConfig&) = default;
};

inline void validate(const PuzzleConfig& c) {
  if (c.mode == Mode::sandbox && c.task != Task::none) throw UsageError("sandbox mode requires task none");
  if (c.mode == Mode::task && c.task == Task::none) throw UsageError("task mode requires a task");
  if (c.count(BodyKind::agent) != 1) throw UsageError("counts[agent] must be 1");
  for (const auto& [k, n] : c.counts) {
    if (n < 0) throw UsageError("negative count for " + std::string(sim::to_string(k)));
    if (k == BodyKind::wall || k == BodyKind::fence) throw UsageError("walls and fences are not configurable counts");
  }
  for (const auto& [k, cells] : c.placement) {
    if (static_cast<int>(cells.size()) > c.count(k)) throw UsageError("more placements than entities for " + std::string(sim::to_string(k)));
    for (const GridCell& g : cells) {
      if (g.i < 0 || g.i >= kGridSize || g.j < 0 || g.j >= kGridSize) throw UsageError("placement cell outside the 16x16 grid");
    }
  }
  if (!(c.table_half_extent > 0.0)) throw UsageError("table_half_extent must be positive");
  switch (c.task) {
    case Task::goal_seeking:
      if (c.count(BodyKind::goal_sphere_low) < 1) throw UsageError("goal_seeking needs a yellow sphere");
      break;
    case Task::preferences:
      if (c.count(BodyKind::goal_sphere_low) < 1 || c.count(BodyKind::goal_sphere_high) < 1)
        throw UsageError("preferences needs a yellow and a green sphere");
      break;
    case Task::avoidance:
      if (c.count(BodyKind::goal_sphere_low) < 1 || c.count(BodyKind::danger_region) < 1)
        throw UsageError("avoidance needs a yellow sphere and a danger region");
      break;
    case Task::tool_use:
      if (c.count(BodyKind::goal_sphere_low) < 1 || c.count(BodyKind::ramp) < 1)
        throw UsageError("tool_use needs a yellow sphere and a ramp");
      break;
    case Task::none:
      break;
  }
}

// Keys accepted in addition to the native kind names, as used by the
// original environment API ("main_sphere", "touch_sphere", ...).
inline std::optional<BodyKind> kind_from_key(std::string_view key) {
  if (auto k = sim::body_kind_from_string(key)) return k;
  if (key == "main_sphere") return BodyKind::agent;
  if (key == "touch_sphere") return BodyKind::goal_sphere_low;
  if (key == "high_value_target") return BodyKind::goal_sphere_high;
  if (key == "cube") return BodyKind::cube_heavy;
  if (key == "light_cube") return BodyKind::cube_light;
  if (key == "danger") return BodyKind::danger_region;
  return std::nullopt;
}

inline json to_json(const PuzzleConfig& c) {
  json counts = json::object();
  for (const auto& [k, n] : c.counts) counts[std::string(sim::to_string(k))] = n;
  json placement = json::object();
  for (const auto& [k, cells] : c.placement) {
    json arr = json::array();
    for (const GridCell& g : cells) arr.push_back({g.i, g.j});
    placement[std::string(sim::to_string(k))] = arr;
  }
  return json{{"mode", to_string(c.mode)},
              {"task", to_string(c.task)},
              {"counts", counts},
              {"placement", placement},
              {"seed", c.seed},
              {"table_half_extent", c.table_half_extent}};
}

inline PuzzleConfig puzzle_from_json(const json& j) {
  if (!j.is_object()) throw UsageError("puzzle config must be an object");
  PuzzleConfig c;
  try {
    if (j.contains("mode")) {
      c.mode = j["mode"].is_number() ? static_cast<Mode>(j["mode"].get<int>() != 0)
                                     : mode_from_string(j["mode"].get<std::string>());
    }
    if (j.contains("task")) {
      c.task = j["task"].is_number() ? task_from_id(j["task"].get<int>())
                                     : task_from_string(j["task"].get<std::string>());
    }
    if (j.contains("seed")) c.seed = j["seed"].get<std::uint64_t>();
    if (j.contains("table_half_extent")) c.table_half_extent = j["table_half_extent"].get<double>();
    // Counts may be nested under "counts" or given flat (API style).
    const json& counts = j.contains("counts") ? j["counts"] : j;
    for (auto it = counts.begin(); it != counts.end(); ++it) {
      const std::string& key = it.key();
      if (key.size() > 4 && key.ends_with("_i_j")) {
        auto kind = kind_from_key(key.substr(0, key.size() - 4));
        if (!kind) throw UsageError("unknown placement key '" + key + "'");
        for (const auto& cell : it.value()) c.placement[*kind].push_back({cell.at(0).get<int>(), cell.at(1).get<int>()});
        continue;
      }
      auto kind = kind_from_key(key);
      if (!kind) {
        if (&counts == &j) continue;  // flat form: other top-level fields
        throw UsageError("unknown entity kind '" + key + "'");
      }
      if (!it.value().is_number_integer()) throw UsageError("count for '" + key + "' must be an integer");
      c.counts[*kind] = it.value().get<int>();
    }
    if (j.contains("placement")) {
      for (auto it = j["placement"].begin(); it != j["placement"].end(); ++it) {
        auto kind = kind_from_key(it.key());
        if (!kind) throw UsageError("unknown placement key '" + it.key() + "'");
        for (const auto& cell : it.value()) c.placement[*kind].push_back({cell.at(0).get<int>(), cell.at(1).get<int>()});
      }
    }
  } catch (const json::exception& e) {
    throw UsageError(std::string("malformed puzzle config: ") + e.what());
  }
  c.counts[BodyKind::agent] = 1;
  return c;
}

}  // namespace rollbox::worldgen

#endif  // ROLLBOX_WORLDGEN_PUZZLE_CONFIG_HPP_
