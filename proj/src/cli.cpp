#include "fedsel/cli.hpp"

#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <sstream>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <fmt/ostream.h>
#include <json.hpp>

#include "fedsel/config.hpp"
#include "fedsel/data.hpp"
#include "fedsel/engine.hpp"
#include "fedsel/error.hpp"
#include "fedsel/metrics_io.hpp"
#include "fedsel/parallel.hpp"
#include "fedsel/regret_lab.hpp"
#include "fedsel/report.hpp"

namespace fedsel {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct RunArgs {
  std::string config;
  std::string out;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> strategy;
  std::string resume;
  std::size_t checkpoint_every = 0;
  bool timing = false;
};

struct PartitionArgs {
  std::string config;
  std::string out;
  bool stats = false;
};

struct RegretArgs {
  std::string arms_file;
  std::size_t arms = 10;
  double min_mean = 0.1;
  double max_mean = 0.9;
  double sigma = 0.2;
  std::string dist = "gaussian";
  std::size_t k = 1;
  std::size_t rounds = 2000;
  std::size_t replications = 100;
  double rho = 1.0;
  std::uint64_t seed = 0;
  std::string out;
};

struct ReportArgs {
  std::vector<std::string> dirs;
  std::string csv;
};

template <class F>
void write_file(const fs::path& path, F&& body) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw std::runtime_error("cannot write " + path.string());
  body(os);
  if (!os) throw std::runtime_error("write failed for " + path.string());
}

json checkpoint_with_records(const Engine& engine, const std::vector<RoundRecord>& records) {
  auto j = engine.checkpoint();
  j["records"] = json::array();
  for (const auto& r : records) j["records"].push_back(to_json(r, true));
  return j;
}

int cmd_run(const RunArgs& a, std::ostream& out, std::ostream& err) {
  const auto started = utc_timestamp();
  ExperimentConfig cfg;
  json resume_state;
  if (!a.resume.empty()) {
    std::ifstream in(a.resume);
    if (!in) throw ConfigError("cannot read " + a.resume, "--resume");
    resume_state = json::parse(in, nullptr, false);
    if (resume_state.is_discarded() || !resume_state.contains("config"))
      throw ConfigError("not a checkpoint file", "--resume");
    cfg = config_from_json(resume_state.at("config"));
  } else {
    cfg = load_config(a.config);
    if (a.seed) cfg.seed = *a.seed;
    if (a.strategy) cfg.strategy = parse_strategy(*a.strategy);
    if (a.checkpoint_every) cfg.checkpoint_every = a.checkpoint_every;
    cfg.validate();
  }

  const fs::path dir = a.out;
  fs::create_directories(dir);
  Engine engine(cfg, build_task(cfg));
  for (const auto& w : engine.warnings()) fmt::print(err, "warning: {}\n", w);

  std::vector<RoundRecord> records;
  if (!resume_state.is_null()) {
    engine.restore(resume_state);
    for (const auto& r : resume_state.at("records")) records.push_back(record_from_json(r));
    fmt::print(out, "resumed at round {}\n", engine.completed_rounds());
  }
  const auto ckpt_path = dir / "checkpoint.json";
  const auto every = cfg.checkpoint_every;
  std::vector<RoundRecord> so_far = records;
  auto on_round = [&](const Engine& e, const RoundRecord& r) {
    so_far.push_back(r);
    if (every && r.t % every == 0)
      write_file(ckpt_path,
                 [&](std::ostream& os) { os << checkpoint_with_records(e, so_far).dump() << '\n'; });
  };
  const auto result = run_engine(engine, std::move(records), on_round);

  const auto strategy = to_string(cfg.strategy);
  std::vector<std::string> outputs = {"metrics.jsonl", "metrics.csv", "summary.json"};
  write_file(dir / "metrics.jsonl",
             [&](std::ostream& os) { write_jsonl(os, result.records, a.timing); });
  write_file(dir / "metrics.csv", [&](std::ostream& os) {
    write_metrics_csv(os, result.records, strategy, cfg.seed);
  });
  auto summary = to_json(result.summary);
  summary["strategy"] = strategy;
  summary["seed"] = cfg.seed;
  write_file(dir / "summary.json", [&](std::ostream& os) { os << summary.dump(2) << '\n'; });
  if (every) outputs.push_back("checkpoint.json");

  const auto cfg_json = to_json(cfg);
  write_file(dir / "config.json", [&](std::ostream& os) { os << cfg_json.dump(2) << '\n'; });
  outputs.push_back("config.json");
  RunManifest manifest{config_hash(cfg_json), cfg.seed, started, utc_timestamp(), outputs};
  write_file(dir / "manifest.json",
             [&](std::ostream& os) { os << to_json(manifest).dump(2) << '\n'; });

  fmt::print(out, "{} seed {}: {} rounds, last-{} mean accuracy {:.4f} ± {:.4f}\n", strategy,
             cfg.seed, result.summary.rounds, result.summary.window,
             result.summary.final_mean_accuracy, result.summary.final_max_deviation);
  return kExitOk;
}

int cmd_partition(const PartitionArgs& a, std::ostream& out, std::ostream& err) {
  const auto cfg = load_config(a.config);
  const auto task = build_task(cfg);
  Partition p;
  try {
    p = make_partition(task.train, cfg.partition_spec());
  } catch (const PartitionError& e) {
    fmt::print(err, "error: {}\nrelative residual: {:.6f}\n", e.what(), e.residual());
    return kExitRuntime;
  }
  if (!a.out.empty()) write_file(a.out, [&](std::ostream& os) { write_partition(os, p); });
  if (a.stats) {
    const auto st = partition_stats(p);
    out << "| statistic | value |\n|---|---|\n";
    fmt::print(out, "| client count | {} |\n", st.clients);
    fmt::print(out, "| sample count | {} |\n", st.samples);
    fmt::print(out, "| samples per client (mean) | {:.2f} |\n", st.mean_size);
    fmt::print(out, "| samples per client (stdev) | {:.2f} |\n", st.stdev_size);
    fmt::print(out, "| samples per client (min / max) | {} / {} |\n", st.min_size, st.max_size);
    fmt::print(out, "| labels per client (mean) | {:.2f} |\n", st.mean_labels);
    fmt::print(out, "| labels per client (stdev) | {:.2f} |\n", st.stdev_labels);
  }
  if (p.residual) fmt::print(out, "relative residual: {:.6f}\n", *p.residual);
  return kExitOk;
}

BanditEnv regret_env(const RegretArgs& a) {
  BanditEnv env;
  if (!a.arms_file.empty()) {
    std::ifstream in(a.arms_file);
    if (!in) throw ConfigError("cannot read " + a.arms_file, "--arms-file");
    std::string line;
    while (std::getline(in, line)) {
      if (line.empty() || line[0] == '#') continue;
      std::istringstream ls(line);
      double mean = 0.0, sd = a.sigma;
      if (!(ls >> mean)) throw ConfigError("malformed line '" + line + "'", "--arms-file");
      ls >> sd;
      env.means.push_back(mean);
      env.stddevs.push_back(sd);
    }
    env.k = a.k;
    env.seed = a.seed;
  } else {
    env = BanditEnv::spread(a.arms, a.min_mean, a.max_mean, a.sigma, a.k, a.seed);
  }
  if (a.dist == "bernoulli") env.family = RewardFamily::kBernoulli;
  else if (a.dist != "gaussian") throw ConfigError("must be gaussian or bernoulli", "--dist");
  env.validate();
  return env;
}

int cmd_regret(const RegretArgs& a, std::ostream& out, std::ostream& err) {
  const auto env = regret_env(a);
  SimulationOptions opts;
  opts.rounds = a.rounds;
  opts.replications = a.replications;
  opts.rho = a.rho;
  if (a.rounds == 0) throw ConfigError("must be >= 1", "--rounds");
  if (a.replications == 0) throw ConfigError("must be >= 1", "--replications");
  const auto curve = simulate_iid(env, opts);
  const auto report = bound_report(curve);
  if (a.out.empty()) {
    write_bound_csv(out, report);
  } else {
    write_file(a.out, [&](std::ostream& os) { write_bound_csv(os, report); });
  }
  auto& summary_os = a.out.empty() ? err : out;
  fmt::print(summary_os,
             "summary: rounds={} replications={} defined_rounds={} defined_fraction={:.4f} "
             "satisfied_fraction={:.4f} final_regret={:.6g}\n",
             report.rows.size(), a.replications, report.defined_rounds,
             report.defined_fraction(), report.satisfied_fraction(), curve.mean.back());
  return kExitOk;
}

int cmd_report(const ReportArgs& a, std::ostream& out) {
  std::vector<RunData> runs;
  for (const auto& d : a.dirs) runs.push_back(load_run(d));
  const auto rep = build_report(runs);
  write_report_markdown(out, rep);
  if (!a.csv.empty()) write_file(a.csv, [&](std::ostream& os) { write_report_csv(os, rep); });
  return kExitOk;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Client-selection simulator for federated learning"};
  app.set_version_flag("--version", std::string(FEDSEL_VERSION));
  app.require_subcommand(1);

  RunArgs run;
  auto* run_cmd = app.add_subcommand("run", "Run one experiment and write its metrics");
  run_cmd->add_option("config", run.config, "Experiment config (JSON)");
  run_cmd->add_option("--out", run.out, "Output directory")->required();
  run_cmd->add_option("--seed", run.seed, "Override the config seed");
  run_cmd->add_option("--strategy", run.strategy, "Override the strategy (gpcb|random|pow_d|top_gp)");
  run_cmd->add_option("--resume", run.resume, "Continue from a checkpoint.json");
  run_cmd->add_option("--checkpoint-every", run.checkpoint_every, "Checkpoint period in rounds");
  run_cmd->add_flag("--timing", run.timing, "Include wall-time breakdown in metrics.jsonl");

  PartitionArgs part;
  auto* part_cmd = app.add_subcommand("partition", "Partition the dataset and report statistics");
  part_cmd->add_option("config", part.config, "Experiment config (JSON)")->required();
  part_cmd->add_option("--out", part.out, "Write the partition (one client per line)");
  part_cmd->add_flag("--stats", part.stats, "Print per-client statistics");

  RegretArgs reg;
  auto* reg_cmd = app.add_subcommand("regret", "Check the regret bound on an IID bandit");
  reg_cmd->add_option("--arms-file", reg.arms_file, "One arm per line: mean [stddev]");
  reg_cmd->add_option("--arms", reg.arms, "Number of generated arms");
  reg_cmd->add_option("--min-mean", reg.min_mean, "Lowest generated mean");
  reg_cmd->add_option("--max-mean", reg.max_mean, "Highest generated mean");
  reg_cmd->add_option("--sigma", reg.sigma, "Reward standard deviation");
  reg_cmd->add_option("--dist", reg.dist, "gaussian (clipped) or bernoulli");
  reg_cmd->add_option("--k", reg.k, "Super-arm size");
  reg_cmd->add_option("--rounds", reg.rounds, "Rounds per replication");
  reg_cmd->add_option("--replications", reg.replications, "Independent replications");
  reg_cmd->add_option("--rho", reg.rho, "Exploration schedule scale");
  reg_cmd->add_option("--seed", reg.seed, "Base seed");
  reg_cmd->add_option("--out", reg.out, "CSV path (stdout if omitted)");

  ReportArgs rep;
  auto* rep_cmd = app.add_subcommand("report", "Compare finished runs");
  rep_cmd->add_option("dirs", rep.dirs, "Run directories")->required();
  rep_cmd->add_option("--csv", rep.csv, "Also write the per-run table as CSV");

  std::vector<std::string> rev(args.rbegin(), args.rend() - 1);
  try {
    app.parse(rev);
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForVersion&) {
    out << FEDSEL_VERSION << '\n';
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    fmt::print(err, "error: {}\n", e.what());
    return kExitValidation;
  }

  try {
    if (*run_cmd) {
      if (run.config.empty() == run.resume.empty())
        throw ConfigError("give either a config file or --resume", "config");
      return cmd_run(run, out, err);
    }
    if (*part_cmd) return cmd_partition(part, out, err);
    if (*reg_cmd) return cmd_regret(reg, out, err);
    if (*rep_cmd) return cmd_report(rep, out);
  } catch (const ConfigError& e) {
    fmt::print(err, "invalid configuration: {}\n", e.what());
    return kExitValidation;
  } catch (const std::exception& e) {
    fmt::print(err, "error: {}\n", e.what());
    return kExitRuntime;
  }
  return kExitRuntime;
}

}  // namespace fedsel
