#include "fedsel/metrics_io.hpp"

#include <chrono>
#include <ctime>
#include <istream>
#include <ostream>
#include <sstream>

#include <fmt/format.h>
#include <fmt/ostream.h>

#include "fedsel/error.hpp"

namespace fedsel {

using nlohmann::json;

void write_jsonl(std::ostream& os, std::span<const RoundRecord> records, bool with_timing) {
  for (const auto& r : records) os << to_json(r, with_timing).dump() << '\n';
}

void write_metrics_csv(std::ostream& os, std::span<const RoundRecord> records,
                       const std::string& strategy, std::uint64_t seed) {
  os << "round,accuracy,loss,strategy,seed\n";
  for (const auto& r : records)
    fmt::print(os, "{},{:.8f},{:.8f},{},{}\n", r.t, r.accuracy, r.loss, strategy, seed);
}

std::vector<MetricsRow> read_metrics_csv(std::istream& is) {
  std::vector<MetricsRow> rows;
  std::string line;
  if (!std::getline(is, line) || line.rfind("round,accuracy,loss", 0) != 0)
    throw ConfigError("missing metrics header", "metrics.csv");
  std::size_t lineno = 1;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::string cell;
    std::vector<std::string> cells;
    while (std::getline(ls, cell, ',')) cells.push_back(cell);
    if (cells.size() != 5)
      throw ConfigError(fmt::format("line {}: expected 5 columns", lineno), "metrics.csv");
    try {
      rows.push_back({std::stoull(cells[0]), std::stod(cells[1]), std::stod(cells[2]), cells[3],
                      std::stoull(cells[4])});
    } catch (const std::exception&) {
      throw ConfigError(fmt::format("line {}: malformed value", lineno), "metrics.csv");
    }
  }
  return rows;
}

json to_json(const RunSummary& s) {
  return {{"rounds", s.rounds},
          {"window", s.window},
          {"final_mean_accuracy", s.final_mean_accuracy},
          {"final_max_deviation", s.final_max_deviation},
          {"final_accuracy", s.final_accuracy},
          {"init_cost", to_json(s.init_cost)},
          {"training_cost", to_json(s.training_cost)}};
}

json to_json(const RunManifest& m) {
  return {{"config_hash", fmt::format("{:016x}", m.config_hash)},
          {"seed", m.seed},
          {"started_at", m.started_at},
          {"finished_at", m.finished_at},
          {"outputs", m.outputs},
          {"tool_version", m.tool_version}};
}

std::string utc_timestamp() {
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

}  // namespace fedsel
