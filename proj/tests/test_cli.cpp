#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <json.hpp>

#include "fedsel/cli.hpp"

using namespace fedsel;
namespace fs = std::filesystem;

namespace {

struct Invocation {
  int code;
  std::string out;
  std::string err;
};

Invocation cli(std::vector<std::string> args) {
  args.insert(args.begin(), "fedsel");
  std::ostringstream out, err;
  const int code = run_cli(args, out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

class TempDir {
 public:
  TempDir() : path_(fs::temp_directory_path() / ("fedsel_cli_" + std::to_string(counter_++))) {
    fs::remove_all(path_);
    fs::create_directories(path_);
  }
  ~TempDir() { fs::remove_all(path_); }
  const fs::path& path() const { return path_; }
  fs::path operator/(const std::string& s) const { return path_ / s; }

 private:
  static inline int counter_ = 0;
  fs::path path_;
};

fs::path write_config(const TempDir& dir, const std::string& body) {
  const auto p = dir / "config.json";
  std::ofstream(p) << body;
  return p;
}

const char* kSmall = R"({
  "seed": 4, "num_clients": 6, "clients_per_round": 2, "rounds": 8,
  "arch": {"hidden": [8]}, "batch_size": 16,
  "partition": {"scheme": "shards", "shards_per_client": 1},
  "dataset": {"classes": 3, "per_class": 20, "dims": 4, "eval_per_class": 10}
})";

std::size_t line_count(const std::string& s) {
  std::size_t n = 0;
  for (char c : s) n += c == '\n';
  return n;
}

}  // namespace

TEST_SUITE("cli") {

TEST_CASE("run writes metrics and is byte-reproducible") {
  TempDir dir;
  const auto cfg = write_config(dir, kSmall);
  auto r = cli({"run", cfg.string(), "--out", (dir / "a").string()});
  CHECK(r.code == 0);
  r = cli({"run", cfg.string(), "--out", (dir / "b").string()});
  CHECK(r.code == 0);
  for (auto f : {"metrics.csv", "metrics.jsonl", "summary.json", "config.json"})
    CHECK(slurp(dir / "a" / f) == slurp(dir / "b" / f));
  CHECK(line_count(slurp(dir / "a" / "metrics.jsonl")) >= 8);
  CHECK(line_count(slurp(dir / "a" / "metrics.csv")) == 9);
  const auto manifest = nlohmann::json::parse(slurp(dir / "a" / "manifest.json"));
  CHECK(manifest.at("seed") == 4);
  CHECK(manifest.at("config_hash").get<std::string>().size() == 16);
}

TEST_CASE("run overrides and resume") {
  TempDir dir;
  const auto cfg = write_config(dir, kSmall);
  CHECK(cli({"run", cfg.string(), "--out", (dir / "full").string(), "--strategy", "pow_d"}).code == 2);
  CHECK(cli({"run", cfg.string(), "--out", (dir / "full").string(), "--strategy", "random",
             "--seed", "9"}).code == 0);
  CHECK(slurp(dir / "full" / "metrics.csv").find(",random,9\n") != std::string::npos);

  CHECK(cli({"run", cfg.string(), "--out", (dir / "ck").string(), "--checkpoint-every", "3"}).code ==
        0);
  CHECK(fs::exists(dir / "ck" / "checkpoint.json"));
  // The last checkpoint was taken at round 6; resuming replays rounds 7-8.
  CHECK(cli({"run", "--resume", (dir / "ck" / "checkpoint.json").string(), "--out",
             (dir / "resumed").string()}).code == 0);
  CHECK(slurp(dir / "ck" / "metrics.csv") == slurp(dir / "resumed" / "metrics.csv"));
}

TEST_CASE("validation failures exit 2") {
  TempDir dir;
  auto cfg = write_config(dir, R"({"num_clients": 3, "clients_per_round": 5})");
  auto r = cli({"run", cfg.string(), "--out", (dir / "x").string()});
  CHECK(r.code == 2);
  CHECK(r.err.find("clients_per_round") != std::string::npos);
  CHECK(cli({"run", (dir / "missing.json").string(), "--out", (dir / "x").string()}).code == 2);
  cfg = write_config(dir, "{not json");
  CHECK(cli({"run", cfg.string(), "--out", (dir / "x").string()}).code == 2);
  CHECK(cli({"frobnicate"}).code == 2);
  CHECK(cli({"run"}).code == 2);
  CHECK(cli({"regret", "--dist", "cauchy", "--rounds", "10"}).code == 2);
  CHECK(cli({"regret", "--k", "11", "--rounds", "10"}).code == 2);
  CHECK(cli({"--help"}).code == 0);
}

TEST_CASE("partition subcommand") {
  TempDir dir;
  const auto cfg = write_config(dir, kSmall);
  auto r = cli({"partition", cfg.string(), "--stats", "--out", (dir / "p.txt").string()});
  CHECK(r.code == 0);
  CHECK(r.out.find("| labels per client (mean) | 1.00 |") != std::string::npos);
  CHECK(line_count(slurp(dir / "p.txt")) == 6);

  const auto dcfg = write_config(dir, R"({
    "num_clients": 20, "partition": {"scheme": "dirichlet", "zeta": 0.2},
    "dataset": {"classes": 10, "per_class": 100}})");
  r = cli({"partition", dcfg.string()});
  CHECK(r.code == 0);
  CHECK(r.out.find("relative residual") != std::string::npos);

  // One client and two disjoint labels at tiny concentration cannot be matched.
  const auto bad = write_config(dir, R"({
    "num_clients": 1, "clients_per_round": 1,
    "partition": {"scheme": "dirichlet", "zeta": 0.01, "max_draws": 1},
    "dataset": {"classes": 2, "per_class": 50}})");
  r = cli({"partition", bad.string()});
  CHECK(r.code == 1);
  CHECK(r.err.find("relative residual") != std::string::npos);
}

TEST_CASE("regret subcommand") {
  TempDir dir;
  auto r = cli({"regret", "--rounds", "50", "--replications", "4", "--out",
                (dir / "b.csv").string()});
  CHECK(r.code == 0);
  CHECK(r.out.find("summary: rounds=50") != std::string::npos);
  CHECK(line_count(slurp(dir / "b.csv")) == 51);

  std::ofstream(dir / "arms.txt") << "# mean stddev\n0.2 0.1\n0.8\n";
  r = cli({"regret", "--arms-file", (dir / "arms.txt").string(), "--rounds", "20",
           "--replications", "2", "--dist", "bernoulli"});
  CHECK(r.code == 0);
  CHECK(line_count(r.out) == 21);
}

TEST_CASE("report subcommand") {
  TempDir dir;
  const auto cfg = write_config(dir, kSmall);
  CHECK(cli({"run", cfg.string(), "--out", (dir / "g").string()}).code == 0);
  CHECK(cli({"run", cfg.string(), "--out", (dir / "r").string(), "--strategy", "random"}).code == 0);
  auto r = cli({"report", (dir / "g").string(), (dir / "r").string(), "--csv",
                (dir / "t.csv").string()});
  CHECK(r.code == 0);
  CHECK(r.out.find("| random |") != std::string::npos);
  CHECK(line_count(slurp(dir / "t.csv")) == 3);
  CHECK(cli({"report", (dir / "nothing").string()}).code == 2);
}

}  // TEST_SUITE
