#ifndef ROLLBOX_CLI_APP_HPP_
#define ROLLBOX_CLI_APP_HPP_

#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "rollbox/agents/spec.hpp"
#include "rollbox/curriculum/explore.hpp"
#include "rollbox/eval/finetune.hpp"
#include "rollbox/eval/report.hpp"
#include "rollbox/gateway/server.hpp"

namespace rollbox::cli {

namespace fs = std::filesystem;
using json = nlohmann::json;
using worldgen::Task;

// Lets --config take a JSON file. Top-level keys set global options; an
// object named after a subcommand sets that subcommand's options.
class JsonConfig : public CLI::Config {
 public:
  std::string to_config(const CLI::App*, bool, bool, std::string) const override { return "{}"; }

  std::vector<CLI::ConfigItem> from_config(std::istream& input) const override {
    json j;
    try {
      input >> j;
    } catch (const json::exception& e) {
      throw CLI::ConversionError(std::string("config file is not valid JSON: ") + e.what());
    }
    if (!j.is_object()) throw CLI::ConversionError("config file must hold a JSON object");
    std::vector<CLI::ConfigItem> out;
    flatten(j, "", {}, out);
    return out;
  }

 private:
  static void flatten(const json& j, const std::string& name, std::vector<std::string> parents, std::vector<CLI::ConfigItem>& out) {
    if (j.is_object()) {
      if (!name.empty()) parents.push_back(name);
      for (auto it = j.begin(); it != j.end(); ++it) flatten(*it, it.key(), parents, out);
      return;
    }
    CLI::ConfigItem item;
    item.name = name;
    item.parents = parents;
    if (j.is_boolean()) {
      item.inputs = {j.get<bool>() ? "true" : "false"};
    } else if (j.is_string()) {
      item.inputs = {j.get<std::string>()};
    } else if (j.is_number()) {
      item.inputs = {j.dump()};
    } else if (j.is_array()) {
      for (const auto& v : j) item.inputs.push_back(v.is_string() ? v.get<std::string>() : v.dump());
    } else {
      throw CLI::ConversionError("config value for '" + name + "' has an unsupported type");
    }
    out.push_back(std::move(item));
  }
};

inline json read_json(const fs::path& p) {
  std::ifstream f(p);
  if (!f) throw UsageError("cannot open " + p.string());
  try {
    return json::parse(f);
  } catch (const json::exception& e) {
    throw UsageError(p.string() + ": " + e.what());
  }
}

inline void write_json(const fs::path& p, const json& j) {
  std::ofstream f(p);
  if (!f) throw Error("cannot write " + p.string());
  f << j.dump(2) << '\n';
  if (!f.flush()) throw Error("write failed: " + p.string());
}

// A preset name or a path to a JSON agent spec.
inline agents::AgentSpec load_agent(const std::string& arg) {
  if (arg.size() > 5 && arg.substr(arg.size() - 5) == ".json") return agents::agent_spec_from_json(read_json(arg));
  return agents::preset(arg);
}

struct Global {
  std::uint64_t seed = 0;
  std::string out = ".";
};

struct GenSuiteArgs {
  std::string task;
  int size = worldgen::kSuiteSize;
  double table_half_extent = sim::Defaults::table_half_extent;
  bool no_obstacles = false;
};

struct ExploreArgs {
  std::string agent = "curl_ride";
  int pool_size = 20;
  std::int64_t pool_seed = -1;
  std::int64_t budget = curriculum::kDefaultBudget;
  double theta = curriculum::kDefaultTheta;
  std::int64_t checkpoint_every = 0;
  double table_half_extent = sim::Defaults::table_half_extent;
};

struct FinetuneArgs {
  std::string agent = "ppo";
  std::string checkpoint;
  std::string task;
  std::int64_t steps = 0;
  double lr = eval::kFinetuneLr;
  double table_half_extent = sim::Defaults::table_half_extent;
  bool no_obstacles = false;
};

struct EvaluateArgs {
  std::string policy;
  bool random = false;
  std::string suite;
  std::string task;
  int n = 0;
  std::int64_t eval_seed = -1;
  std::string agent_id;
};

struct ServeArgs {
  std::string bind = "127.0.0.1";
  unsigned short port = 7777;
  double idle_timeout = 600.0;  // seconds
};

struct ReplayArgs {
  std::string log;
};

inline fs::path out_dir(const Global& g) {
  std::error_code ec;
  fs::create_directories(g.out, ec);
  if (ec) throw Error("cannot create " + g.out + ": " + ec.message());
  return fs::path(g.out);
}

inline int gen_suite(const Global& g, const GenSuiteArgs& a, std::ostream& out) {
  const Task task = worldgen::task_from_string(a.task);
  if (task == Task::none) throw UsageError("gen-suite needs a task, not 'none'");
  worldgen::PuzzleSetOptions opt;
  opt.table_half_extent = a.table_half_extent;
  opt.obstacles = !a.no_obstacles;
  const auto suite = worldgen::make_puzzle_set(task, g.seed, a.size, opt);
  const fs::path path = out_dir(g) / ("suite_" + a.task + "_" + std::to_string(g.seed) + ".json");
  write_json(path, worldgen::to_json(suite));
  out << path.string() << '\n';
  return 0;
}

inline int explore(const Global& g, const ExploreArgs& a, std::ostream& out) {
  const auto spec = load_agent(a.agent);
  const auto pool_seed = a.pool_seed >= 0 ? static_cast<std::uint64_t>(a.pool_seed) : g.seed;
  const auto pool = worldgen::sample_sandbox_pool(a.pool_size, pool_seed, a.table_half_extent);
  const fs::path dir = out_dir(g);
  write_json(dir / "agent.json", agents::to_json(spec));
  std::ofstream log(dir / "exploration.jsonl");
  if (!log) throw Error("cannot write " + (dir / "exploration.jsonl").string());

  curriculum::PpoExplorer learner(spec, g.seed);
  curriculum::ExploreConfig cfg;
  cfg.budget = a.budget;
  cfg.theta = a.theta;
  cfg.checkpoint_every = a.checkpoint_every;
  cfg.log = &log;
  cfg.agent_name = spec.name;
  cfg.on_checkpoint = [&](const nn::Checkpoint& c) {
    nn::save_checkpoint(c, dir / ("encoder_" + std::to_string(c.step) + ".ckpt"));
  };
  const auto r = curriculum::explore(learner, pool, cfg);
  nn::save_checkpoint(r.checkpoint, dir / "encoder.ckpt");
  out << "explored " << r.steps << " steps, " << r.switches << " switches, " << (r.terminated ? "terminated by loss rule" : "budget reached")
      << "\n" << (dir / "encoder.ckpt").string() << '\n';
  return 0;
}

inline int finetune(const Global& g, const FinetuneArgs& a, std::ostream& out) {
  const auto spec = load_agent(a.agent);
  const Task task = worldgen::task_from_string(a.task);
  std::optional<nn::Checkpoint> ckpt;
  if (!a.checkpoint.empty()) ckpt = nn::load_checkpoint(a.checkpoint);
  eval::FinetuneConfig cfg;
  cfg.task = task;
  cfg.steps = a.steps;
  cfg.seed = g.seed;
  cfg.lr = a.lr;
  cfg.puzzles.table_half_extent = a.table_half_extent;
  cfg.puzzles.obstacles = !a.no_obstacles;
  eval::FinetuneProgress prog;
  const auto agent = eval::finetune(spec, ckpt ? &*ckpt : nullptr, cfg, &prog);
  const fs::path dir = out_dir(g);
  nn::save_checkpoint(agent->checkpoint(static_cast<std::uint64_t>(prog.steps), spec.name + ":" + a.task), dir / "policy.ckpt");
  write_json(dir / "policy.json", {{"agent", agents::to_json(spec)},
                                   {"task", a.task},
                                   {"finetune_steps", prog.steps},
                                   {"checkpoint", "policy.ckpt"},
                                   {"encoder_from", a.checkpoint},
                                   {"seed", g.seed}});
  out << "fine-tuned " << prog.steps << " steps over " << prog.updates << " updates\n" << (dir / "policy.json").string() << '\n';
  return 0;
}

inline int evaluate(const Global& g, const EvaluateArgs& a, std::ostream& out) {
  if (a.random == !a.policy.empty()) throw UsageError("evaluate needs exactly one of --policy or --random");
  const auto suite = worldgen::suite_from_json(read_json(a.suite));
  if (!a.task.empty() && worldgen::task_from_string(a.task) != suite.task) {
    throw UsageError("suite holds " + std::string(worldgen::to_string(suite.task)) + " puzzles, not " + a.task);
  }
  const int n = a.n > 0 ? a.n : env::action_budget(suite.task);
  const std::uint64_t eval_seed = a.eval_seed >= 0 ? static_cast<std::uint64_t>(a.eval_seed) : g.seed;
  eval::SuiteResult res;
  if (a.random) {
    eval::RandomController rc;
    res = eval::run_suite(rc, suite, n, eval_seed, a.agent_id.empty() ? "random" : a.agent_id, 0);
  } else {
    const json meta = read_json(a.policy);
    const auto spec = agents::agent_spec_from_json(meta.at("agent"));
    const Task trained = worldgen::task_from_string(meta.at("task").get<std::string>());
    if (trained != suite.task) {
      throw UsageError("policy was fine-tuned on " + std::string(worldgen::to_string(trained)) + " but the suite is " +
                       std::string(worldgen::to_string(suite.task)));
    }
    agents::Agent agent(spec, 0, agents::Phase::finetune);
    agent.load_all(nn::load_checkpoint(fs::path(a.policy).parent_path() / meta.at("checkpoint").get<std::string>()));
    eval::PolicyController pc(agent);
    res = eval::run_suite(pc, suite, n, eval_seed, a.agent_id.empty() ? spec.name : a.agent_id, meta.value("finetune_steps", std::int64_t{0}));
  }
  const fs::path dir = out_dir(g);
  write_json(dir / "report.json", eval::to_json(res.report));
  eval::emit_report({res.report}, dir);
  out << "A-Success " << res.report.score << " (mean return " << res.report.s.back() << ")\n" << (dir / "report.json").string() << '\n';
  return 0;
}

inline int replay(const ReplayArgs& a, std::ostream& out) {
  std::ifstream f(a.log);
  if (!f) throw UsageError("cannot open " + a.log);
  const auto log = curriculum::read_log(f);
  const auto r = curriculum::audit(log);
  int switches = 0;
  for (const auto& d : log.decisions) switches += d.action == curriculum::Action::switch_env;
  if (!r.ok) {
    out << "audit FAILED: " << r.mismatch << '\n';
    return 1;
  }
  out << "audit ok: " << r.checked << " decisions, " << switches << " switches";
  if (!log.decisions.empty()) out << ", last action " << curriculum::to_string(log.decisions.back().action);
  out << '\n';
  return 0;
}

inline int serve(const ServeArgs& a, std::ostream& out) {
  if (!(a.idle_timeout > 0.0)) throw UsageError("idle timeout must be > 0");
  gateway::Server server(a.bind, a.port, std::chrono::milliseconds(static_cast<std::int64_t>(a.idle_timeout * 1000.0)));
  out << "listening on " << a.bind << ':' << server.port() << std::endl;
  server.run();
  return 0;
}

// Exit codes: 0 success, 1 runtime failure, 2 usage error.
inline int run(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  CLI::App app{"rollbox: sandbox exploration, fine-tuning and evaluation"};
  app.config_formatter(std::make_shared<JsonConfig>());
  app.set_config("--config", "", "JSON file with option values");
  app.require_subcommand(1);
  app.fallthrough();
  Global g;
  app.add_option("--seed", g.seed, "Master seed")->capture_default_str();
  app.add_option("--out", g.out, "Output directory")->capture_default_str();

  GenSuiteArgs gs;
  auto* gen = app.add_subcommand("gen-suite", "Write a test suite of task puzzles");
  gen->add_option("--task", gs.task, "goal_seeking | preferences | avoidance | tool_use")->required();
  gen->add_option("--size", gs.size, "Puzzles in the suite")->capture_default_str()->check(CLI::PositiveNumber);
  gen->add_option("--table-half-extent", gs.table_half_extent)->capture_default_str();
  gen->add_flag("--no-obstacles", gs.no_obstacles);

  ExploreArgs ex;
  auto* exp = app.add_subcommand("explore", "Open-ended exploration over a sandbox pool");
  exp->add_option("--agent", ex.agent, "Preset name or agent spec .json")->capture_default_str();
  exp->add_option("--pool-size", ex.pool_size)->capture_default_str()->check(CLI::PositiveNumber);
  exp->add_option("--pool-seed", ex.pool_seed, "Defaults to --seed");
  exp->add_option("--budget", ex.budget, "Interaction budget in macro-steps")->capture_default_str()->check(CLI::NonNegativeNumber);
  exp->add_option("--theta", ex.theta, "Switching threshold")->capture_default_str()->check(CLI::PositiveNumber);
  exp->add_option("--checkpoint-every", ex.checkpoint_every)->capture_default_str()->check(CLI::NonNegativeNumber);
  exp->add_option("--table-half-extent", ex.table_half_extent)->capture_default_str();

  FinetuneArgs ft;
  auto* fin = app.add_subcommand("finetune", "Task-specific PPO from an encoder checkpoint");
  fin->add_option("--agent", ft.agent, "Preset name or agent spec .json")->capture_default_str();
  fin->add_option("--checkpoint", ft.checkpoint, "Encoder checkpoint; omit for a random encoder");
  fin->add_option("--task", ft.task)->required();
  fin->add_option("--steps", ft.steps)->required()->check(CLI::NonNegativeNumber);
  fin->add_option("--lr", ft.lr)->capture_default_str();
  fin->add_option("--table-half-extent", ft.table_half_extent)->capture_default_str();
  fin->add_flag("--no-obstacles", ft.no_obstacles);

  EvaluateArgs ev;
  auto* eva = app.add_subcommand("evaluate", "Score a policy on a suite");
  eva->add_option("--policy", ev.policy, "policy.json written by finetune");
  eva->add_flag("--random", ev.random, "Uniform random actions instead of a policy");
  eva->add_option("--suite", ev.suite)->required();
  eva->add_option("--task", ev.task, "Expected suite task");
  eva->add_option("--N", ev.n, "Action budget (default: the task's)");
  eva->add_option("--eval-seed", ev.eval_seed, "Defaults to --seed");
  eva->add_option("--agent-id", ev.agent_id);

  ServeArgs sv;
  auto* srv = app.add_subcommand("serve", "Run the wire-protocol server");
  srv->add_option("--bind", sv.bind)->capture_default_str();
  srv->add_option("--port", sv.port)->capture_default_str();
  srv->add_option("--idle-timeout", sv.idle_timeout, "Seconds")->capture_default_str();

  ReplayArgs rp;
  auto* rep = app.add_subcommand("replay", "Audit an exploration log");
  rep->add_option("--log", rp.log)->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << '\n';
    return 2;
  }
  try {
    if (gen->parsed()) return gen_suite(g, gs, out);
    if (exp->parsed()) return explore(g, ex, out);
    if (fin->parsed()) return finetune(g, ft, out);
    if (eva->parsed()) return evaluate(g, ev, out);
    if (srv->parsed()) return serve(sv, out);
    if (rep->parsed()) return replay(rp, out);
  } catch (const UsageError& e) {
    err << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  }
  return 2;
}

}  // namespace rollbox::cli

#endif  // ROLLBOX_CLI_APP_HPP_
