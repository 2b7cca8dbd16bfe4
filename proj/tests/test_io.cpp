#include <doctest.h>

#include <sstream>

#include "fedsel/config.hpp"
#include "fedsel/error.hpp"
#include "fedsel/metrics_io.hpp"
#include "fedsel/report.hpp"

using namespace fedsel;
using nlohmann::json;

namespace {

std::string error_field(const json& j) {
  try {
    config_from_json(j).validate();
  } catch (const ConfigError& e) {
    return e.field();
  }
  return "";
}

RunData run(const std::string& label, const std::string& strategy, std::vector<double> acc) {
  RunData r;
  r.label = label;
  r.strategy = strategy;
  r.accuracy = std::move(acc);
  return r;
}

}  // namespace

TEST_SUITE("io") {

TEST_CASE("config parsing and defaults") {
  const auto cfg = config_from_json(json::parse(R"({
    "seed": 9, "num_clients": 8, "clients_per_round": 2, "rounds": 30, "strategy": "pow_d",
    "pow_d_candidates": 4, "fixed_alpha": 0.0, "reward_mean": "per_round", "gp_source": "last_grad",
    "arch": {"hidden": [16], "activation": "tanh"},
    "sgd": {"learning_rate": 0.01, "weight_decay": 0.0, "momentum": 0.5},
    "partition": {"scheme": "dirichlet", "zeta": 0.5, "max_draws": 3, "seed": 4},
    "dataset": {"classes": 4, "per_class": 20, "dims": 3, "sep": 5.0, "eval_per_class": 5}
  })"));
  CHECK(cfg.seed == 9);
  CHECK(cfg.strategy == Strategy::kPowD);
  CHECK(cfg.fixed_alpha == 0.0);
  CHECK(cfg.reward_mean == RewardMean::kPerRound);
  CHECK(cfg.gp_source == GpSource::kLastGrad);
  CHECK(cfg.activation == Activation::kTanh);
  CHECK(cfg.sgd.momentum == 0.5);
  CHECK(std::get<Dirichlet>(cfg.partition.scheme).zeta == 0.5);
  CHECK(cfg.partition_spec().seed == 4);
  CHECK(cfg.partition_spec().client_count == 8);
  CHECK(config_from_json(to_json(cfg)).seed == 9);
  CHECK(to_json(config_from_json(to_json(cfg))) == to_json(cfg));

  const auto defaults = config_from_json(json::object());
  CHECK(defaults.sgd.learning_rate == 0.005);
  CHECK(defaults.sgd.momentum == 0.1);
  CHECK(defaults.sgd.weight_decay == 1e-4);
  CHECK(defaults.rho == 1.0);
}

TEST_CASE("config errors name the field") {
  CHECK(error_field(json{{"num_clients", 4}, {"clients_per_round", 5}}) == "clients_per_round");
  CHECK(error_field(json{{"rounds", 0}}) == "rounds");
  CHECK(error_field(json{{"strategy", "best"}}) == "strategy");
  CHECK(error_field(json{{"sgd", {{"momentum", 1.0}}}}).find("momentum") != std::string::npos);
  CHECK(error_field(json{{"bogus", 1}}) == "bogus");
  CHECK(error_field(json{{"dataset", {{"per_klass", 1}}}}) == "dataset.per_klass");
  CHECK(error_field(json{{"rounds", "many"}}) == "rounds");
  CHECK(error_field(json{{"rounds", -3}}) == "rounds");
}

TEST_CASE("config hash ignores key order") {
  const auto a = json::parse(R"({"seed": 1, "rounds": 5})");
  const auto b = json::parse(R"({"rounds": 5, "seed": 1})");
  CHECK(config_hash(a) == config_hash(b));
  CHECK(config_hash(a) != config_hash(json::parse(R"({"seed": 2, "rounds": 5})")));
}

TEST_CASE("metrics csv round trip") {
  std::vector<RoundRecord> recs(2);
  recs[0].t = 1;
  recs[0].accuracy = 0.25;
  recs[0].loss = 2.5;
  recs[1].t = 2;
  recs[1].accuracy = 0.5;
  recs[1].loss = 1.25;
  std::stringstream ss;
  write_metrics_csv(ss, recs, "gpcb", 7);
  CHECK(ss.str() ==
        "round,accuracy,loss,strategy,seed\n1,0.25000000,2.50000000,gpcb,7\n"
        "2,0.50000000,1.25000000,gpcb,7\n");
  const auto rows = read_metrics_csv(ss);
  REQUIRE(rows.size() == 2);
  CHECK(rows[1].accuracy == 0.5);
  CHECK(rows[1].strategy == "gpcb");
  CHECK(rows[1].seed == 7);
}

TEST_CASE("jsonl has one line per record") {
  std::vector<RoundRecord> recs(3);
  for (std::size_t i = 0; i < 3; ++i) recs[i].t = i + 1;
  std::stringstream ss;
  write_jsonl(ss, recs, false);
  std::string line;
  std::size_t n = 0;
  while (std::getline(ss, line)) {
    const auto j = json::parse(line);
    CHECK(j.at("t") == ++n);
    CHECK_FALSE(j.contains("time"));
  }
  CHECK(n == 3);
}

TEST_CASE("report checkpoints") {
  CHECK(checkpoint_round(200, 0.5) == 100);
  CHECK(checkpoint_round(200, 0.15) == 30);
  CHECK(checkpoint_round(200, 1.0) == 200);
  CHECK(checkpoint_round(3, 0.15) == 1);

  std::vector<double> acc(200);
  for (std::size_t i = 0; i < 200; ++i) acc[i] = static_cast<double>(i + 1) / 1000.0;
  const std::vector<RunData> runs = {run("a", "gpcb", acc)};
  const auto rep = build_report(runs);
  REQUIRE(rep.runs.size() == 1);
  CHECK(rep.runs[0].at50 == acc[99]);
  CHECK(rep.runs[0].at15 == acc[29]);
  // Last ten: 0.191..0.200, mean 0.1955, max deviation 0.0045.
  CHECK(rep.runs[0].final_mean == doctest::Approx(0.1955).epsilon(1e-12));
  CHECK(rep.runs[0].final_dev == doctest::Approx(0.0045).epsilon(1e-9));
  CHECK(rep.warnings.empty());
}

TEST_CASE("report aligns horizons and groups strategies") {
  const std::vector<RunData> runs = {run("a", "gpcb", std::vector<double>(20, 0.5)),
                                     run("b", "gpcb", std::vector<double>(20, 0.7)),
                                     run("c", "random", std::vector<double>(25, 0.4))};
  const auto rep = build_report(runs);
  CHECK(rep.horizon == 20);
  CHECK(rep.warnings.size() == 1);
  REQUIRE(rep.by_strategy.size() == 2);
  CHECK(rep.by_strategy[0].strategy == "gpcb");
  CHECK(rep.by_strategy[0].final_mean == doctest::Approx(0.6));
  std::ostringstream md, csv;
  write_report_markdown(md, rep);
  write_report_csv(csv, rep);
  CHECK(md.str().find("random") != std::string::npos);
  CHECK(csv.str().find("\nc,random") != std::string::npos);
  CHECK_THROWS_AS(build_report(std::vector<RunData>{}), ConfigError);
}

}  // TEST_SUITE
