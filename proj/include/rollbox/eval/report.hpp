#ifndef ROLLBOX_EVAL_REPORT_HPP_
#define ROLLBOX_EVAL_REPORT_HPP_

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "rollbox/eval/metric.hpp"

namespace rollbox::eval {

struct ScoreSummary {
  std::string agent;
  Task task = Task::goal_seeking;
  double mean = 0.0;
  double std = 0.0;  // population std over seeds
  int seeds = 0;
};

// Groups reports by (agent, task), in first-seen order.
inline std::vector<ScoreSummary> summarize(const std::vector<ASuccessReport>& reports) {
  std::vector<ScoreSummary> out;
  std::vector<std::vector<double>> scores;
  for (const auto& r : reports) {
    std::size_t k = 0;
    while (k < out.size() && !(out[k].agent == r.agent_id && out[k].task == r.task)) ++k;
    if (k == out.size()) {
      out.push_back({r.agent_id, r.task});
      scores.emplace_back();
    }
    scores[k].push_back(r.score);
  }
  for (std::size_t k = 0; k < out.size(); ++k) {
    const auto& v = scores[k];
    double m = 0.0;
    for (double x : v) m += x;
    m /= static_cast<double>(v.size());
    double var = 0.0;
    for (double x : v) var += (x - m) * (x - m);
    out[k].mean = m;
    out[k].std = std::sqrt(var / static_cast<double>(v.size()));
    out[k].seeds = static_cast<int>(v.size());
  }
  return out;
}

namespace detail {
inline void write_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw Error("cannot write " + path.string());
  f << text;
  if (!f.flush()) throw Error("write failed: " + path.string());
}
}  // namespace detail

// results.csv: agent,task,score_mean,score_std,seeds
// curve_<task>.csv: i then one column per agent with s_i averaged over seeds.
// Returns the paths written.
inline std::vector<std::filesystem::path> emit_report(const std::vector<ASuccessReport>& reports,
                                                      const std::filesystem::path& out_dir) {
  if (reports.empty()) throw UsageError("emit_report needs at least one report");
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec) throw Error("cannot create " + out_dir.string() + ": " + ec.message());
  std::vector<std::filesystem::path> written;

  std::ostringstream table;
  table.precision(17);
  table << "agent,task,score_mean,score_std,seeds\n";
  for (const auto& s : summarize(reports)) {
    table << s.agent << ',' << worldgen::to_string(s.task) << ',' << s.mean << ',' << s.std << ',' << s.seeds << '\n';
  }
  written.push_back(out_dir / "results.csv");
  detail::write_file(written.back(), table.str());

  std::map<Task, std::vector<std::string>> agents;  // per task, first-seen order
  for (const auto& r : reports) {
    auto& a = agents[r.task];
    if (std::find(a.begin(), a.end(), r.agent_id) == a.end()) a.push_back(r.agent_id);
  }
  for (const auto& [task, names] : agents) {
    int n = -1;
    std::vector<std::vector<double>> sum(names.size());
    std::vector<int> count(names.size(), 0);
    for (const auto& r : reports) {
      if (r.task != task) continue;
      if (n < 0) n = r.n;
      if (r.n != n) throw UsageError("reports for " + std::string(worldgen::to_string(task)) + " disagree on N");
      const auto k = static_cast<std::size_t>(std::find(names.begin(), names.end(), r.agent_id) - names.begin());
      if (sum[k].empty()) sum[k].assign(n, 0.0);
      for (int i = 0; i < n; ++i) sum[k][i] += r.s[i];
      ++count[k];
    }
    std::ostringstream curve;
    curve.precision(17);
    curve << 'i';
    for (const auto& a : names) curve << ',' << a;
    curve << '\n';
    for (int i = 0; i < n; ++i) {
      curve << i + 1;
      for (std::size_t k = 0; k < names.size(); ++k) curve << ',' << sum[k][i] / count[k];
      curve << '\n';
    }
    written.push_back(out_dir / ("curve_" + std::string(worldgen::to_string(task)) + ".csv"));
    detail::write_file(written.back(), curve.str());
  }
  return written;
}

}  // namespace rollbox::eval

#endif  // ROLLBOX_EVAL_REPORT_HPP_
