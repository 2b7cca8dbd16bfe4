#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "fedsel/engine.hpp"

namespace fedsel {

// One JSON object per line per training round.
void write_jsonl(std::ostream& os, std::span<const RoundRecord> records, bool with_timing);

// Columns: round, accuracy, loss, strategy, seed.
void write_metrics_csv(std::ostream& os, std::span<const RoundRecord> records,
                       const std::string& strategy, std::uint64_t seed);

struct MetricsRow {
  std::size_t round = 0;
  double accuracy = 0.0;
  double loss = 0.0;
  std::string strategy;
  std::uint64_t seed = 0;
};

std::vector<MetricsRow> read_metrics_csv(std::istream& is);

nlohmann::json to_json(const RunSummary& s);

struct RunManifest {
  std::uint64_t config_hash = 0;
  std::uint64_t seed = 0;
  std::string started_at;
  std::string finished_at;
  std::vector<std::string> outputs;
  std::string tool_version = FEDSEL_VERSION;
};

nlohmann::json to_json(const RunManifest& m);

// ISO-8601 UTC timestamp of the current time.
std::string utc_timestamp();

}  // namespace fedsel
