#ifndef ROLLBOX_CURRICULUM_CURRICULUM_HPP_
#define ROLLBOX_CURRICULUM_CURRICULUM_HPP_

#include <cmath>
#include <cstdint>
#include <istream>
#include <limits>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "rollbox/core/error.hpp"
#include "rollbox/worldgen/puzzle_config.hpp"

namespace rollbox::curriculum {

inline constexpr double kDefaultTheta = 0.001;
inline constexpr double kDefaultAlpha = 0.01;
inline constexpr std::int64_t kDefaultBudget = 2'000'000;

struct PoolEntry {
  int id = 0;
  worldgen::PuzzleConfig puzzle;
  double loss_ema = std::numeric_limits<double>::infinity();  // unseen
  std::int64_t losses = 0;
};

struct CurriculumState {
  std::vector<PoolEntry> pool;
  int active = 0;
  std::int64_t steps = 0;
  double theta = kDefaultTheta;
  double alpha = kDefaultAlpha;
  std::int64_t budget = kDefaultBudget;

  CurriculumState() = default;
  CurriculumState(const std::vector<worldgen::PuzzleConfig>& puzzles, double theta_, std::int64_t budget_, double alpha_ = kDefaultAlpha)
      : theta(theta_), alpha(alpha_), budget(budget_) {
    if (puzzles.empty()) throw UsageError("curriculum pool is empty");
    if (!(theta > 0.0)) throw UsageError("theta must be > 0");
    if (!(alpha > 0.0 && alpha <= 1.0)) throw UsageError("alpha must be in (0, 1]");
    if (budget < 0) throw UsageError("budget must be >= 0");
    for (std::size_t k = 0; k < puzzles.size(); ++k) pool.push_back({static_cast<int>(k), puzzles[k]});
    active = pool.front().id;
  }

  PoolEntry& entry(int id) {
    for (auto& e : pool) {
      if (e.id == id) return e;
    }
    throw Error("unknown environment " + std::to_string(id));
  }
  const PoolEntry& entry(int id) const { return const_cast<CurriculumState*>(this)->entry(id); }
};

// EMA update; the first loss replaces the +inf sentinel.
inline void record_loss(CurriculumState& s, int env, double loss) {
  if (!(loss >= 0.0) || std::isinf(loss)) throw UsageError("loss must be finite and >= 0, got " + std::to_string(loss));
  PoolEntry& e = s.entry(env);
  e.loss_ema = std::isinf(e.loss_ema) ? loss : (1.0 - s.alpha) * e.loss_ema + s.alpha * loss;
  ++e.losses;
}

inline bool should_switch(const CurriculumState& s) {
  const PoolEntry& e = s.entry(s.active);
  if (e.losses == 0) throw UsageError("active environment has no recorded loss");
  return e.loss_ema < s.theta;
}

// Highest-EMA environment still at or above theta; nullopt means terminate.
// Ties go to the lowest id.
inline std::optional<int> select_next(const CurriculumState& s) {
  if (s.pool.empty()) throw UsageError("curriculum pool is empty");
  std::optional<int> best;
  double best_loss = 0.0;
  for (const auto& e : s.pool) {
    if (!(e.loss_ema >= s.theta)) continue;
    if (!best || e.loss_ema > best_loss || (e.loss_ema == best_loss && e.id < *best)) {
      best = e.id;
      best_loss = e.loss_ema;
    }
  }
  return best;
}

enum class Action { cont, switch_env, terminate };

inline const char* to_string(Action a) {
  switch (a) {
    case Action::cont: return "continue";
    case Action::switch_env: return "switch";
    case Action::terminate: return "terminate";
  }
  return "?";
}

inline Action action_from_string(const std::string& s) {
  if (s == "continue") return Action::cont;
  if (s == "switch") return Action::switch_env;
  if (s == "terminate") return Action::terminate;
  throw UsageError("unknown curriculum action '" + s + "'");
}

// One log record: the losses recorded since the previous decision and what
// the controller did with them.
struct Decision {
  std::int64_t step = 0;
  int env = 0;
  std::vector<double> losses;
  double loss_ema = 0.0;
  Action action = Action::cont;
  int next_env = 0;
  friend bool operator==(const Decision&, const Decision&) = default;
};

// Applies a batch of losses for the active env and decides. Budget
// exhaustion is the caller's concern; this only follows the loss rule.
inline Decision decide(CurriculumState& s, const std::vector<double>& losses) {
  Decision d;
  d.step = s.steps;
  d.env = s.active;
  d.losses = losses;
  for (double l : losses) record_loss(s, s.active, l);
  d.loss_ema = s.entry(s.active).loss_ema;
  d.next_env = s.active;
  if (s.entry(s.active).losses > 0 && should_switch(s)) {
    const auto next = select_next(s);
    if (next) {
      d.action = Action::switch_env;
      d.next_env = *next;
      s.active = *next;
    } else {
      d.action = Action::terminate;
    }
  }
  return d;
}

inline nlohmann::json to_json(const Decision& d) {
  nlohmann::json ema = std::isinf(d.loss_ema) ? nlohmann::json(nullptr) : nlohmann::json(d.loss_ema);
  return {{"step", d.step}, {"env", d.env}, {"losses", d.losses}, {"loss_ema", ema},
          {"action", to_string(d.action)}, {"next_env", d.next_env}};
}

inline Decision decision_from_json(const nlohmann::json& j) {
  Decision d;
  try {
    d.step = j.at("step").get<std::int64_t>();
    d.env = j.at("env").get<int>();
    d.losses = j.at("losses").get<std::vector<double>>();
    d.loss_ema = j.at("loss_ema").is_null() ? std::numeric_limits<double>::infinity() : j.at("loss_ema").get<double>();
    d.action = action_from_string(j.at("action").get<std::string>());
    d.next_env = j.at("next_env").get<int>();
  } catch (const nlohmann::json::exception& e) {
    throw UsageError(std::string("malformed log record: ") + e.what());
  }
  return d;
}

// Header line of an exploration log, then one decision per line.
struct LogHeader {
  int pool_size = 0;
  double theta = kDefaultTheta;
  double alpha = kDefaultAlpha;
  std::int64_t budget = 0;
  std::string agent;
};

inline void write_header(std::ostream& out, const LogHeader& h) {
  out << nlohmann::json{{"pool_size", h.pool_size}, {"theta", h.theta}, {"alpha", h.alpha}, {"budget", h.budget}, {"agent", h.agent}}.dump()
      << '\n';
}

inline void write_decision(std::ostream& out, const Decision& d) { out << to_json(d).dump() << '\n'; }

struct ExplorationLog {
  LogHeader header;
  std::vector<Decision> decisions;
};

inline ExplorationLog read_log(std::istream& in) {
  ExplorationLog log;
  std::string line;
  int lineno = 0;
  try {
    if (!std::getline(in, line)) throw UsageError("exploration log is empty");
    ++lineno;
    const auto h = nlohmann::json::parse(line);
    log.header.pool_size = h.at("pool_size").get<int>();
    log.header.theta = h.at("theta").get<double>();
    log.header.alpha = h.at("alpha").get<double>();
    log.header.budget = h.at("budget").get<std::int64_t>();
    log.header.agent = h.value("agent", "");
    while (std::getline(in, line)) {
      ++lineno;
      if (line.empty()) continue;
      log.decisions.push_back(decision_from_json(nlohmann::json::parse(line)));
    }
  } catch (const nlohmann::json::exception& e) {
    throw UsageError("exploration log line " + std::to_string(lineno) + ": " + e.what());
  }
  return log;
}

struct AuditResult {
  bool ok = true;
  std::size_t checked = 0;
  std::string mismatch;  // first disagreement, empty when ok
};

// Re-derives every decision from the logged losses alone and compares.
inline AuditResult audit(const ExplorationLog& log) {
  AuditResult res;
  std::vector<worldgen::PuzzleConfig> dummy(static_cast<std::size_t>(std::max(log.header.pool_size, 1)));
  CurriculumState s(dummy, log.header.theta, log.header.budget, log.header.alpha);
  for (const auto& rec : log.decisions) {
    const auto describe = [&](const std::string& what) {
      return "record " + std::to_string(res.checked) + " (step " + std::to_string(rec.step) + "): " + what;
    };
    if (rec.env != s.active) {
      res.ok = false;
      res.mismatch = describe("logged env " + std::to_string(rec.env) + ", replay is on " + std::to_string(s.active));
      return res;
    }
    s.steps = rec.step;
    const Decision d = decide(s, rec.losses);
    if (d.action != rec.action || d.next_env != rec.next_env || !(d.loss_ema == rec.loss_ema)) {
      res.ok = false;
      res.mismatch = describe(std::string("logged ") + to_string(rec.action) + " -> " + std::to_string(rec.next_env) + ", replay gives " +
                              to_string(d.action) + " -> " + std::to_string(d.next_env));
      return res;
    }
    ++res.checked;
    if (d.action == Action::terminate) break;
  }
  return res;
}

}  // namespace rollbox::curriculum

#endif  // ROLLBOX_CURRICULUM_CURRICULUM_HPP_
