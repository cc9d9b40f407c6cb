#ifndef ROLLBOX_GATEWAY_PROTOCOL_HPP_
#define ROLLBOX_GATEWAY_PROTOCOL_HPP_

#include <chrono>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>

#include <nlohmann/json.hpp>

#include "rollbox/env/environment.hpp"
#include "rollbox/eval/suite_runner.hpp"
#include "rollbox/gateway/frame.hpp"
#include "rollbox/worldgen/suite.hpp"

namespace rollbox::gateway {

using json = nlohmann::json;
using worldgen::Task;

inline constexpr const char* kProtocolVersion = "1";
inline constexpr std::chrono::seconds kIdleTimeout{600};

// Raised inside a handler to send an error reply; the session survives.
class RequestError : public Error {
 public:
  using Error::Error;
};

inline json palette_json() {
  using env::Palette;
  auto rgb = [](env::Rgb c) { return json::array({c.r, c.g, c.b}); };
  return {{"background", rgb(Palette::background)}, {"agent", rgb(Palette::agent)},           {"cube_heavy", rgb(Palette::cube_heavy)},
          {"cube_light", rgb(Palette::cube_light)}, {"goal_sphere_low", rgb(Palette::goal_low)}, {"goal_sphere_high", rgb(Palette::goal_high)},
          {"ramp", rgb(Palette::ramp)},             {"danger_region", rgb(Palette::danger)},    {"fence", rgb(Palette::fence)}};
}

inline json body_json(const sim::Body& b) {
  json j = {{"id", b.id},
            {"kind", std::string(sim::to_string(b.kind))},
            {"position", {b.position.x, b.position.y}},
            {"velocity", {b.velocity.x, b.velocity.y}},
            {"elevation", b.elevation}};
  if (const auto* c = std::get_if<sim::Circle>(&b.shape)) {
    j["shape"] = "circle";
    j["radius"] = c->radius;
  } else {
    const auto& box = std::get<sim::Box>(b.shape);
    j["shape"] = "box";
    j["half_extents"] = {box.half_extents.x, box.half_extents.y};
  }
  return j;
}

// One client's environment and, when playing a suite, its score sheet.
class Session {
 public:
  explicit Session(std::string id) : id_(std::move(id)) {}

  const std::string& id() const { return id_; }

  // Dispatches one request (already past envelope checks) and returns the
  // reply type and payload. Throws RequestError for client mistakes.
  std::pair<std::string, json> dispatch(const std::string& type, const json& p) {
    if (type == "configure") return {"result", configure(p)};
    if (type == "add_change_puzzle") return {"result", add_change_puzzle(p)};
    if (type == "reset") return {"observation", reset()};
    if (type == "step") return {"result", step(p)};
    if (type == "state_snapshot") return {"state_snapshot", snapshot()};
    if (type == "observation") return {"observation", observation_payload()};
    if (type == "turn_off_reward") return {"result", turn_off_reward(p)};
    if (type == "set_observation") return {"result", set_observation(p)};
    if (type == "report") return {"result", report(p)};
    throw RequestError("unknown message type '" + type + "'");
  }

 private:
  struct SuitePlay {
    worldgen::TestSuite suite;
    int n = 100;
    int index = -1;  // puzzle being played
    std::vector<eval::EpisodeTrace> traces;
  };

  template <class T>
  static T field(const json& p, const char* key, T fallback) {
    if (!p.is_object() || !p.contains(key)) return fallback;
    try {
      return p.at(key).get<T>();
    } catch (const json::exception&) {
      throw RequestError(std::string("field '") + key + "' has the wrong type");
    }
  }

  json config_json() const {
    return {{"frame_skip", options_.frame_skip},
            {"reward", options_.extrinsic_reward_enabled},
            {"observation", options_.observation_enabled},
            {"action_space", "full"}};
  }

  void apply_options() {
    if (!env_.started()) return;
    env::EnvConfig c = env_.config();
    c.frame_skip = options_.frame_skip;
    c.extrinsic_reward_enabled = options_.extrinsic_reward_enabled;
    c.observation_enabled = options_.observation_enabled;
    env_.configure(c);
  }

  json configure(const json& p) {
    if (!p.is_object()) throw RequestError("configure needs an object payload");
    const std::string space = field<std::string>(p, "action_space", "full");
    if (space != "full") throw RequestError("unsupported action_space '" + space + "'");
    if (p.contains("skip_frame")) options_.frame_skip = field<bool>(p, "skip_frame", true) ? 4 : 1;
    if (p.contains("frame_skip")) {
      const int s = field<int>(p, "frame_skip", 4);
      if (s < 1) throw RequestError("frame_skip must be >= 1");
      options_.frame_skip = s;
    }
    if (p.contains("observation")) options_.observation_enabled = field<bool>(p, "observation", true);
    apply_options();
    return config_json();
  }

  json turn_off_reward(const json& p) {
    options_.extrinsic_reward_enabled = !field<bool>(p, "off", true);
    apply_options();
    return config_json();
  }

  json set_observation(const json& p) {
    options_.observation_enabled = field<bool>(p, "enabled", true);
    apply_options();
    return config_json();
  }

  static Task task_field(const json& p) {
    const json& t = p.at("task");
    if (t.is_string()) return worldgen::task_from_string(t.get<std::string>());
    const int k = t.get<int>();
    if (k < 0 || k > 4) throw RequestError("task must be 0..4");
    return static_cast<Task>(k);
  }

  json add_change_puzzle(const json& p) {
    if (!p.is_object()) throw RequestError("add_change_puzzle needs an object payload");
    worldgen::PuzzleConfig puzzle;
    std::optional<SuitePlay> suite;
    try {
      if (p.contains("puzzle")) {
        puzzle = worldgen::puzzle_from_json(p.at("puzzle"));
      } else {
        const int mode = p.value("mode", 0);
        if (mode != 0 && mode != 1) throw RequestError("mode must be 0 (sandbox) or 1 (task)");
        const Task task = p.contains("task") ? task_field(p) : Task::none;
        const auto seed = p.value("seed", std::uint64_t{0});
        worldgen::PuzzleSetOptions opt;
        opt.table_half_extent = p.value("table_half_extent", opt.table_half_extent);
        opt.obstacles = p.value("obstacles", true);
        if (mode == 0) {
          if (task != Task::none) throw RequestError("sandbox mode takes task 0");
          puzzle = worldgen::sample_sandbox_pool(1, seed, opt.table_half_extent).front();
        } else {
          if (task == Task::none) throw RequestError("task mode takes task 1..4");
          if (p.contains("suite_seed")) {
            SuitePlay play;
            const int size = p.value("suite_size", worldgen::kSuiteSize);
            if (size < 1) throw RequestError("suite_size must be >= 1");
            play.suite = worldgen::make_puzzle_set(task, p.at("suite_seed").get<std::uint64_t>(), size, opt);
            play.n = env::action_budget(task);
            suite = std::move(play);
            puzzle = suite->suite.puzzles.front();
          } else {
            puzzle = worldgen::make_puzzle_set(task, seed, 1, opt).puzzles.front();
          }
        }
      }
    } catch (const json::exception& e) {
      throw RequestError(std::string("malformed add_change_puzzle: ") + e.what());
    } catch (const UsageError& e) {
      throw RequestError(e.what());
    }
    puzzle_ = puzzle;
    suite_ = std::move(suite);
    env_ = env::Environment{};
    last_obs_.reset();
    json out = {{"mode", static_cast<int>(puzzle.mode)}, {"task", static_cast<int>(puzzle.task)}, {"seed", puzzle.seed}};
    if (suite_) {
      out["suite_size"] = suite_->suite.puzzles.size();
      out["suite_seed"] = suite_->suite.suite_seed;
      out["N"] = suite_->n;
    }
    return out;
  }

  env::EnvConfig env_config() const {
    env::EnvConfig c = env::EnvConfig::for_task(puzzle_->task);
    c.frame_skip = options_.frame_skip;
    c.extrinsic_reward_enabled = options_.extrinsic_reward_enabled;
    c.observation_enabled = options_.observation_enabled;
    return c;
  }

  json reset() {
    if (!puzzle_) throw RequestError("no puzzle installed");
    if (suite_) {
      SuitePlay& s = *suite_;
      if (s.index >= 0 && !env_.done()) throw RequestError("episode in progress");
      if (s.index + 1 >= static_cast<int>(s.suite.puzzles.size())) throw RequestError("suite finished");
      ++s.index;
      s.traces.emplace_back();
      puzzle_ = s.suite.puzzles[static_cast<std::size_t>(s.index)];
      env::EnvConfig c = env_config();
      c.max_episode_actions = s.n;
      last_obs_ = env_.reset(c, *puzzle_);
    } else {
      last_obs_ = env_.reset(env_config(), *puzzle_);
    }
    return observation_payload();
  }

  json observation_json(const env::Observation& o) const {
    if (!options_.observation_enabled) return nullptr;
    return {{"width", env::kObsSize}, {"height", env::kObsSize}, {"channels", 3}, {"encoding", "base64"}, {"data", base64_encode(o.pixels)}};
  }

  json observation_payload() const {
    if (!last_obs_) throw RequestError("episode not started");
    json out = {{"observation", observation_json(*last_obs_)}, {"tick", env_.world().tick}, {"actions", env_.actions_taken()}};
    if (suite_) out["puzzle_index"] = suite_->index;
    return out;
  }

  json step(const json& p) {
    if (!env_.started() || !last_obs_) throw RequestError("episode not started");
    if (env_.done()) throw RequestError("episode finished");
    const int a = field<int>(p, "action", -1);
    if (a < 0 || a >= env::kNumActions) throw RequestError("action must be 0..7");
    env::StepResult r = env_.step(env::Action{a});
    if (suite_) eval::record_step(suite_->traces.back(), r);
    json out = {{"reward", r.reward}, {"done", r.done}, {"info", env::to_json(r.info)}, {"observation", observation_json(r.observation)}};
    last_obs_ = std::move(r.observation);
    return out;
  }

  json snapshot() const {
    if (!env_.started()) throw RequestError("episode not started");
    const auto& w = env_.world();
    json bodies = json::array();
    for (const auto& b : w.bodies) bodies.push_back(body_json(b));
    json out = {{"tick", w.tick},
                {"table_half_extent", w.table_half_extent},
                {"bodies", bodies},
                {"mode", static_cast<int>(env_.config().mode)},
                {"task", static_cast<int>(env_.config().task)},
                {"actions", env_.actions_taken()},
                {"budget", env_.config().max_episode_actions},
                {"done", env_.done()}};
    if (suite_) {
      out["puzzle_index"] = suite_->index;
      out["suite_size"] = suite_->suite.puzzles.size();
      const auto& c = suite_->traces.back().credit;
      out["return"] = c.empty() ? 0.0 : c.back();
    }
    return out;
  }

  json report(const json& p) {
    if (!suite_) throw RequestError("no suite loaded");
    const auto& s = *suite_;
    const auto r = eval::report_from_traces(s.suite.task, s.n, s.traces, static_cast<int>(s.suite.puzzles.size()), s.suite.suite_seed,
                                            field<std::string>(p, "player", "human"), 0);
    return {{"report", eval::to_json(r)}};
  }

  std::string id_;
  env::EnvConfig options_;  // only the run-time toggles are read from here
  std::optional<worldgen::PuzzleConfig> puzzle_;
  std::optional<SuitePlay> suite_;
  env::Environment env_;
  std::optional<env::Observation> last_obs_;
};

// Server-wide session table.
class Hub {
 public:
  using Clock = std::chrono::steady_clock;

  explicit Hub(std::chrono::milliseconds idle = kIdleTimeout) : idle_(idle) {}

  std::shared_ptr<Session> open() {
    std::lock_guard<std::mutex> lock(mu_);
    auto s = std::make_shared<Session>("s" + std::to_string(++next_id_));
    sessions_[s->id()] = {s, Clock::now()};
    return s;
  }

  // False when the session is gone (closed or expired).
  bool touch(const std::string& id) {
    std::lock_guard<std::mutex> lock(mu_);
    auto it = sessions_.find(id);
    if (it == sessions_.end()) return false;
    if (Clock::now() - it->second.last > idle_) {
      sessions_.erase(it);
      return false;
    }
    it->second.last = Clock::now();
    return true;
  }

  void close(const std::string& id) {
    std::lock_guard<std::mutex> lock(mu_);
    sessions_.erase(id);
  }

  // Drops idle sessions; returns their ids.
  std::vector<std::string> reap() {
    std::lock_guard<std::mutex> lock(mu_);
    std::vector<std::string> gone;
    const auto now = Clock::now();
    for (auto it = sessions_.begin(); it != sessions_.end();) {
      if (now - it->second.last > idle_) {
        gone.push_back(it->first);
        it = sessions_.erase(it);
      } else {
        ++it;
      }
    }
    return gone;
  }

  std::size_t size() const {
    std::lock_guard<std::mutex> lock(mu_);
    return sessions_.size();
  }

  std::chrono::milliseconds idle_timeout() const { return idle_; }

 private:
  struct Entry {
    std::shared_ptr<Session> session;
    Clock::time_point last;
  };
  mutable std::mutex mu_;
  std::map<std::string, Entry> sessions_;
  std::uint64_t next_id_ = 0;
  std::chrono::milliseconds idle_;
};

// Protocol state of one connection: envelope checks, hello, sequencing.
class Connection {
 public:
  explicit Connection(Hub& hub) : hub_(hub) {}
  ~Connection() {
    if (session_) hub_.close(session_->id());
  }
  Connection(const Connection&) = delete;
  Connection& operator=(const Connection&) = delete;

  // One request payload in, one reply payload out.
  std::string on_payload(const std::string& text) {
    json req;
    try {
      req = json::parse(text);
    } catch (const json::exception&) {
      return reply("error", nullptr, {{"message", "malformed frame: payload is not valid JSON"}});
    }
    if (!req.is_object() || !req.contains("type") || !req["type"].is_string()) {
      return reply("error", req.is_object() && req.contains("seq") ? req["seq"] : json(nullptr), {{"message", "missing message type"}});
    }
    const std::string type = req["type"].get<std::string>();
    const json seq = req.value("seq", json(nullptr));
    const json payload = req.value("payload", json::object());
    if (!seq.is_number_integer()) return reply("error", seq, {{"message", "missing or non-integer seq"}});
    const std::int64_t n = seq.get<std::int64_t>();

    if (type == "hello") {
      if (session_) return bye(seq, "hello on an open session");
      const std::string version = payload.is_object() ? payload.value("version", "") : "";
      if (version != kProtocolVersion) return bye(seq, "unsupported protocol version '" + version + "', server speaks " + kProtocolVersion);
      session_ = hub_.open();
      last_seq_ = n;
      return reply("hello", seq,
                   {{"session", session_->id()}, {"version", kProtocolVersion}, {"actions", env::kNumActions},
                    {"obs_size", env::kObsSize}, {"palette", palette_json()}});
    }
    if (!session_) return bye(seq, "hello required first");
    if (!hub_.touch(session_->id())) {
      session_.reset();
      return bye(seq, "session expired");
    }
    if (n <= last_seq_) return bye(seq, "sequence number " + std::to_string(n) + " does not increase");
    last_seq_ = n;
    if (req.contains("session") && req["session"] != session_->id()) return reply("error", seq, {{"message", "session id does not match this connection"}});
    if (type == "bye") {
      json r = reply_json("bye", seq, {{"reason", "client closed"}});
      hub_.close(session_->id());
      session_.reset();
      closed_ = true;
      return r.dump();
    }
    try {
      auto [rtype, rpayload] = session_->dispatch(type, payload);
      return reply(rtype, seq, std::move(rpayload));
    } catch (const RequestError& e) {
      return reply("error", seq, {{"message", e.what()}});
    } catch (const Error& e) {
      return reply("error", seq, {{"message", e.what()}});
    }
  }

  // Reply for a frame whose length header was unusable; the stream is lost.
  std::string on_frame_error(const std::string& what) { return bye(nullptr, "malformed frame: " + what); }

  bool closed() const { return closed_; }
  const std::shared_ptr<Session>& session() const { return session_; }

 private:
  json reply_json(const std::string& type, const json& seq, json payload) const {
    json r = {{"type", type}, {"seq", seq}, {"payload", std::move(payload)}};
    r["session"] = session_ ? json(session_->id()) : json(nullptr);
    return r;
  }
  std::string reply(const std::string& type, const json& seq, json payload) const { return reply_json(type, seq, std::move(payload)).dump(); }
  std::string bye(const json& seq, const std::string& reason) {
    const std::string r = reply("bye", seq, {{"reason", reason}});
    if (session_) hub_.close(session_->id());
    session_.reset();
    closed_ = true;
    return r;
  }

  Hub& hub_;
  std::shared_ptr<Session> session_;
  std::int64_t last_seq_ = 0;
  bool closed_ = false;
};

}  // namespace rollbox::gateway

#endif  // ROLLBOX_GATEWAY_PROTOCOL_HPP_
