#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "fedsel/engine.hpp"

namespace fedsel {

// A finished run directory as written by `fedsel run`.
struct RunData {
  std::string label;
  std::string strategy;
  std::uint64_t seed = 0;
  std::vector<double> accuracy;  // accuracy[t - 1] for round t
  std::optional<CostCounters> training_cost;
};

RunData load_run(const std::filesystem::path& dir);

// Round read for a fractional checkpoint of horizon T: max(1, round(f * T)).
std::size_t checkpoint_round(std::size_t horizon, double fraction);

struct ReportRow {
  std::string label;
  std::string strategy;
  std::uint64_t seed = 0;
  double at15 = 0.0;
  double at50 = 0.0;
  double final_mean = 0.0;  // mean of the last 10 rounds
  double final_dev = 0.0;   // max |a - mean| over those rounds
  std::optional<CostCounters> cost;
};

struct Report {
  std::size_t horizon = 0;
  std::vector<ReportRow> runs;
  std::vector<ReportRow> by_strategy;  // means over runs sharing a strategy
  std::vector<std::string> warnings;
};

// Aligns all runs on the shortest horizon (with a warning when they differ).
Report build_report(std::span<const RunData> runs);

void write_report_markdown(std::ostream& os, const Report& r);
void write_report_csv(std::ostream& os, const Report& r);

}  // namespace fedsel
