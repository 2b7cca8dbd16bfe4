#include "fedsel/report.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <ostream>

#include <fmt/format.h>
#include <fmt/ostream.h>
#include <json.hpp>

#include "fedsel/error.hpp"
#include "fedsel/metrics_io.hpp"

namespace fedsel {

RunData load_run(const std::filesystem::path& dir) {
  std::ifstream csv(dir / "metrics.csv");
  if (!csv) throw ConfigError("no metrics.csv in " + dir.string(), "run dir");
  const auto rows = read_metrics_csv(csv);
  if (rows.empty()) throw ConfigError("metrics.csv has no rounds in " + dir.string(), "run dir");
  RunData run;
  run.label = dir.filename().string();
  if (run.label.empty()) run.label = dir.parent_path().filename().string();
  run.strategy = rows.front().strategy;
  run.seed = rows.front().seed;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i].round != i + 1)
      throw ConfigError("metrics.csv rounds are not consecutive from 1 in " + dir.string(),
                        "run dir");
    run.accuracy.push_back(rows[i].accuracy);
  }
  std::ifstream summary(dir / "summary.json");
  if (summary) {
    const auto j = nlohmann::json::parse(summary, nullptr, false);
    if (!j.is_discarded() && j.contains("training_cost"))
      run.training_cost = counters_from_json(j.at("training_cost"));
  }
  return run;
}

std::size_t checkpoint_round(std::size_t horizon, double fraction) {
  const auto r = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(horizon)));
  return std::clamp<std::size_t>(r, 1, horizon);
}

namespace {

ReportRow row_for(const RunData& run, std::size_t horizon) {
  ReportRow row;
  row.label = run.label;
  row.strategy = run.strategy;
  row.seed = run.seed;
  row.at15 = run.accuracy[checkpoint_round(horizon, 0.15) - 1];
  row.at50 = run.accuracy[checkpoint_round(horizon, 0.50) - 1];
  const auto n = std::min<std::size_t>(10, horizon);
  double mean = 0.0;
  for (std::size_t t = horizon - n; t < horizon; ++t) mean += run.accuracy[t];
  mean /= static_cast<double>(n);
  double dev = 0.0;
  for (std::size_t t = horizon - n; t < horizon; ++t)
    dev = std::max(dev, std::abs(run.accuracy[t] - mean));
  row.final_mean = mean;
  row.final_dev = dev;
  row.cost = run.training_cost;
  return row;
}

}  // namespace

Report build_report(std::span<const RunData> runs) {
  if (runs.empty()) throw ConfigError("no runs to report", "run dirs");
  Report rep;
  rep.horizon = runs.front().accuracy.size();
  for (const auto& r : runs) rep.horizon = std::min(rep.horizon, r.accuracy.size());
  for (const auto& r : runs)
    if (r.accuracy.size() != rep.horizon)
      rep.warnings.push_back(fmt::format("{} has {} rounds; aligning on T={}", r.label,
                                         r.accuracy.size(), rep.horizon));

  std::map<std::string, std::vector<ReportRow>> groups;
  for (const auto& r : runs) {
    rep.runs.push_back(row_for(r, rep.horizon));
    groups[r.strategy].push_back(rep.runs.back());
  }
  for (const auto& [strategy, rows] : groups) {
    ReportRow agg;
    agg.label = fmt::format("{} run{}", rows.size(), rows.size() == 1 ? "" : "s");
    agg.strategy = strategy;
    const double n = static_cast<double>(rows.size());
    bool all_cost = true;
    CostCounters cost;
    for (const auto& r : rows) {
      agg.at15 += r.at15 / n;
      agg.at50 += r.at50 / n;
      agg.final_mean += r.final_mean / n;
      agg.final_dev = std::max(agg.final_dev, r.final_dev);
      if (r.cost) cost += *r.cost;
      else all_cost = false;
    }
    if (all_cost) agg.cost = cost;
    rep.by_strategy.push_back(agg);
  }
  return rep;
}

namespace {

std::string cost_cells(const std::optional<CostCounters>& c, const char* sep) {
  if (!c) return fmt::format("-{}-{}-", sep, sep);
  return fmt::format("{}{}{}{}{}", c->client_trainings, sep, c->client_evaluations, sep,
                     c->gradient_steps);
}

}  // namespace

void write_report_markdown(std::ostream& os, const Report& r) {
  fmt::print(os, "Horizon T = {} (checkpoints: round {} = 15%, round {} = 50%)\n\n", r.horizon,
             checkpoint_round(r.horizon, 0.15), checkpoint_round(r.horizon, 0.50));
  auto table = [&](const std::vector<ReportRow>& rows, const char* first) {
    fmt::print(os,
               "| {} | strategy | 15% | 50% | 100% (last-10 mean ± max dev) | trainings | "
               "evaluations | gradient steps |\n",
               first);
    os << "|---|---|---|---|---|---|---|---|\n";
    for (const auto& row : rows)
      fmt::print(os, "| {} | {} | {:.4f} | {:.4f} | {:.4f} ± {:.4f} | {} |\n", row.label,
                 row.strategy, row.at15, row.at50, row.final_mean, row.final_dev,
                 cost_cells(row.cost, " | "));
  };
  table(r.runs, "run");
  os << '\n';
  table(r.by_strategy, "group");
  for (const auto& w : r.warnings) fmt::print(os, "\nwarning: {}\n", w);
}

void write_report_csv(std::ostream& os, const Report& r) {
  os << "run,strategy,seed,acc_15,acc_50,final_mean,final_max_dev,client_trainings,"
        "client_evaluations,gradient_steps\n";
  for (const auto& row : r.runs)
    fmt::print(os, "{},{},{},{:.8f},{:.8f},{:.8f},{:.8f},{}\n", row.label, row.strategy, row.seed,
               row.at15, row.at50, row.final_mean, row.final_dev, cost_cells(row.cost, ","));
}

}  // namespace fedsel
