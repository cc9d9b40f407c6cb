#ifndef ROLLBOX_EVAL_METRIC_HPP_
#define ROLLBOX_EVAL_METRIC_HPP_

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "rollbox/core/error.hpp"
#include "rollbox/worldgen/puzzle_config.hpp"

namespace rollbox::eval {

using worldgen::Task;

// Weight of budget i (1-based): log(i+1) - log(i).
inline double alpha(int i) { return std::log(static_cast<double>(i) + 1.0) - std::log(static_cast<double>(i)); }

// Action-budget weighted mean return. The weights telescope to log(N+1).
inline double a_success(const std::vector<double>& s, int n) {
  if (n < 1) throw UsageError("N must be >= 1");
  if (static_cast<int>(s.size()) != n) {
    throw UsageError("a_success: s has " + std::to_string(s.size()) + " entries, expected N=" + std::to_string(n));
  }
  double acc = 0.0;
  for (int i = 1; i <= n; ++i) {
    const double v = s[i - 1];
    if (!(v >= 0.0 && v <= 1.0)) throw UsageError("a_success: s_" + std::to_string(i) + " = " + std::to_string(v) + " outside [0,1]");
    acc += alpha(i) * v;
  }
  return acc / std::log(static_cast<double>(n) + 1.0);
}

// Return accrued by each action of one episode: credit[i-1] is the return
// the episode holds after i actions (constant after it ends).
struct EpisodeTrace {
  std::vector<double> credit;
  int actions = 0;  // actions actually taken
  std::string termination;
  friend bool operator==(const EpisodeTrace&, const EpisodeTrace&) = default;
};

struct ASuccessReport {
  Task task = Task::goal_seeking;
  int n = 100;
  std::vector<double> s;
  double score = 0.0;
  std::uint64_t suite_seed = 0;
  std::string agent_id;
  std::int64_t finetune_steps = 0;
  int episodes = 0;
  bool complete = true;
  friend bool operator==(const ASuccessReport&, const ASuccessReport&) = default;
};

// s_i = mean over episodes of the credit held after i actions. Puzzles
// without a trace (abandoned) count as zero and mark the report incomplete.
inline ASuccessReport report_from_traces(Task task, int n, const std::vector<EpisodeTrace>& traces, int expected_episodes,
                                         std::uint64_t suite_seed, const std::string& agent_id, std::int64_t finetune_steps) {
  if (expected_episodes < 1) throw UsageError("a report needs at least one episode");
  if (static_cast<int>(traces.size()) > expected_episodes) throw UsageError("more episodes than puzzles");
  ASuccessReport r;
  r.task = task;
  r.n = n;
  r.suite_seed = suite_seed;
  r.agent_id = agent_id;
  r.finetune_steps = finetune_steps;
  r.episodes = static_cast<int>(traces.size());
  r.complete = r.episodes == expected_episodes;
  r.s.assign(n, 0.0);
  for (const auto& t : traces) {
    if (static_cast<int>(t.credit.size()) > n) throw UsageError("episode longer than the action budget");
    double last = 0.0;
    for (int i = 0; i < n; ++i) {
      if (i < static_cast<int>(t.credit.size())) last = t.credit[i];
      r.s[i] += last;
    }
  }
  for (double& v : r.s) v /= expected_episodes;
  r.score = a_success(r.s, n);
  return r;
}

inline nlohmann::json to_json(const ASuccessReport& r) {
  return {{"task", std::string(worldgen::to_string(r.task))},
          {"N", r.n},
          {"s", r.s},
          {"score", r.score},
          {"suite_seed", r.suite_seed},
          {"agent_id", r.agent_id},
          {"finetune_steps", r.finetune_steps},
          {"episodes", r.episodes},
          {"complete", r.complete}};
}

inline ASuccessReport report_from_json(const nlohmann::json& j) {
  ASuccessReport r;
  try {
    r.task = worldgen::task_from_string(j.at("task").get<std::string>());
    r.n = j.at("N").get<int>();
    r.s = j.at("s").get<std::vector<double>>();
    r.score = j.at("score").get<double>();
    r.suite_seed = j.at("suite_seed").get<std::uint64_t>();
    r.agent_id = j.at("agent_id").get<std::string>();
    r.finetune_steps = j.at("finetune_steps").get<std::int64_t>();
    r.episodes = j.value("episodes", 0);
    r.complete = j.value("complete", true);
  } catch (const nlohmann::json::exception& e) {
    throw UsageError(std::string("malformed report: ") + e.what());
  }
  return r;
}

}  // namespace rollbox::eval

#endif  // ROLLBOX_EVAL_METRIC_HPP_
