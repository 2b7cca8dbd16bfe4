#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "fedsel/engine.hpp"
#include "fedsel/error.hpp"
#include "fedsel/rng.hpp"
#include "fixtures.hpp"

using namespace fedsel;

namespace {

ExperimentConfig small_config(Strategy s, std::uint64_t seed = 1) {
  ExperimentConfig cfg;
  cfg.seed = seed;
  cfg.num_clients = 10;
  cfg.clients_per_round = 3;
  cfg.rounds = 12;
  cfg.strategy = s;
  cfg.pow_d_candidates = 5;
  cfg.hidden = {8};
  cfg.batch_size = 16;
  cfg.sgd.learning_rate = 0.05;
  cfg.dataset.classes = 5;
  cfg.dataset.per_class = 40;
  cfg.dataset.dims = 6;
  cfg.dataset.eval_per_class = 20;
  cfg.partition.scheme = ShardsPerClient{2};
  return cfg;
}

bool same_records(const std::vector<RoundRecord>& a, const std::vector<RoundRecord>& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i)
    if (to_json(a[i], false) != to_json(b[i], false)) return false;
  return true;
}

}  // namespace

TEST_SUITE("engine") {

TEST_CASE("fedavg") {
  const std::vector<ParamVector> two = {{1, 1}, {3, 3}};
  CHECK(fedavg(two) == ParamVector{2, 2});
  const std::vector<ParamVector> one = {{0.3, -2}};
  CHECK(fedavg(one) == one[0]);
  const std::vector<ParamVector> abc = {{0.1, 1e16}, {0.2, 1.0}, {0.3, -1e16}};
  const std::vector<ParamVector> cab = {abc[2], abc[0], abc[1]};
  CHECK(fedavg(abc) == fedavg(cab));
  const std::vector<ParamVector> same = {{0.7, 0.1}, {0.7, 0.1}, {0.7, 0.1}};
  CHECK(fedavg(same) == same[0]);
  const std::vector<ParamVector> bad = {{1}, {1, 2}};
  CHECK_THROWS_AS(fedavg(bad), ConfigError);
}

TEST_CASE("random selection with K = N reduces to plain full-participation FedAvg") {
  auto cfg = small_config(Strategy::kRandom);
  cfg.clients_per_round = cfg.num_clients;
  cfg.rounds = 4;
  const auto result = run_experiment(cfg);

  // Reference: every client trains every round from the global model.
  const auto task = build_task(cfg);
  const auto part = make_partition(task.train, cfg.partition_spec());
  const auto arch = cfg.arch_for(task.train);
  auto w = init_params(arch, cfg.seed);
  std::vector<ParamVector> mom(cfg.num_clients, ParamVector(w.size(), 0.0));
  std::vector<double> acc;
  for (std::uint64_t t = 0; t <= cfg.rounds; ++t) {
    ParamVector sum(w.size(), 0.0);
    for (std::size_t i = 0; i < cfg.num_clients; ++i) {
      const auto r = local_train(arch, task.train, part.assignment[i], w, mom[i], cfg.local_config(),
                                 derive_seed(cfg.seed, 5, (t << 32) | i));
      mom[i] = r.momentum;
      for (std::size_t k = 0; k < w.size(); ++k) sum[k] += r.params[k];
    }
    for (std::size_t k = 0; k < w.size(); ++k) w[k] = sum[k] / static_cast<double>(cfg.num_clients);
    if (t > 0) acc.push_back(evaluate(w, arch, task.eval).accuracy);
  }
  for (std::size_t k = 0; k < w.size(); ++k)
    CHECK(result.final_params[k] == doctest::Approx(w[k]).epsilon(1e-9));
  for (std::size_t t = 0; t < acc.size(); ++t) CHECK(result.records[t].accuracy == acc[t]);
}

TEST_CASE("runs are deterministic and serial equals parallel") {
  for (auto s : {Strategy::kGpcb, Strategy::kRandom, Strategy::kPowD, Strategy::kTopGp}) {
    const auto cfg = small_config(s, 3);
    const auto a = run_experiment(cfg);
    const auto b = run_experiment(cfg);
    CHECK(same_records(a.records, b.records));
    CHECK(a.final_params == b.final_params);

    Engine serial(cfg, build_task(cfg));
    serial.set_parallel(false);
    const auto c = run_engine(serial);
    CHECK(same_records(a.records, c.records));
    CHECK(a.final_params == c.final_params);
  }
}

TEST_CASE("per-round cost counters") {
  for (auto s : {Strategy::kGpcb, Strategy::kRandom, Strategy::kTopGp, Strategy::kPowD}) {
    const auto cfg = small_config(s);
    const auto r = run_experiment(cfg);
    REQUIRE(r.records.size() == cfg.rounds);
    const std::size_t evals = s == Strategy::kPowD ? cfg.pow_d_candidates : 0;
    for (const auto& rec : r.records) {
      CHECK(rec.counters.client_trainings == cfg.clients_per_round);
      CHECK(rec.counters.client_evaluations == evals);
      CHECK(rec.counters.param_uploads == cfg.clients_per_round);
      CHECK(rec.counters.param_downloads == cfg.clients_per_round + evals);
      CHECK(rec.selected.size() == cfg.clients_per_round);
    }
    CHECK(r.init.counters.client_trainings == cfg.num_clients);
  }
}

TEST_CASE("pull bookkeeping: n = N + R K") {
  const auto cfg = small_config(Strategy::kGpcb);
  Engine e(cfg, build_task(cfg));
  e.init_phase();
  for (auto& a : e.stats().arms) CHECK(a.pulls == 1);
  for (std::size_t t = 1; t <= 5; ++t) {
    e.training_round();
    CHECK(e.stats().total_pulls == cfg.num_clients + t * cfg.clients_per_round);
  }
  for (const auto& a : e.stats().arms) {
    CHECK(a.reward_sum >= 0.0);
    CHECK(a.reward_sum <= static_cast<double>(a.pulls));
  }
}

TEST_CASE("initial selection: N = K takes everyone; top-K of initial GP otherwise") {
  auto cfg = small_config(Strategy::kGpcb);
  cfg.clients_per_round = cfg.num_clients;
  Engine all(cfg, build_task(cfg));
  CHECK(all.init_phase().selected.size() == cfg.num_clients);

  cfg = small_config(Strategy::kGpcb);
  Engine e(cfg, build_task(cfg));
  const auto& rec = e.init_phase();
  std::vector<double> gp;
  for (const auto& p : rec.participants) gp.push_back(p.gp);
  std::sort(gp.rbegin(), gp.rend());
  for (auto id : rec.selected) CHECK(e.clients()[id].gp_value >= gp[cfg.clients_per_round - 1]);
}

TEST_CASE("initial projections match an independent recomputation") {
  const auto cfg = small_config(Strategy::kGpcb, 2);
  Engine e(cfg, build_task(cfg));
  const auto& rec = e.init_phase();

  const auto task = build_task(cfg);
  const auto part = make_partition(task.train, cfg.partition_spec());
  const auto arch = cfg.arch_for(task.train);
  const auto w0 = init_params(arch, cfg.seed);
  const ParamVector zero(w0.size(), 0.0);
  std::vector<ParamVector> d;
  for (std::size_t i = 0; i < cfg.num_clients; ++i)
    d.push_back(local_train(arch, task.train, part.assignment[i], w0, zero, cfg.local_config(),
                            derive_seed(cfg.seed, 5, i))
                    .momentum);
  ParamVector g(w0.size(), 0.0);
  for (const auto& v : d)
    for (std::size_t k = 0; k < g.size(); ++k) g[k] += v[k] / static_cast<double>(d.size());
  double gg = 0.0;
  for (double v : g) gg += v * v;
  std::vector<double> expected;
  for (const auto& v : d) {
    double dot = 0.0;
    for (std::size_t k = 0; k < g.size(); ++k) dot += v[k] * g[k];
    expected.push_back(dot / std::sqrt(gg));
  }
  REQUIRE(rec.participants.size() == cfg.num_clients);
  double z = 0.0;
  for (double c : expected) z += std::exp(c);
  for (const auto& p : rec.participants) {
    CHECK(p.gp == doctest::Approx(expected[p.id]).epsilon(1e-9));
    CHECK(p.gp_normalized == doctest::Approx(std::exp(expected[p.id]) / z).epsilon(1e-9));
  }
}

TEST_CASE("checkpoint and resume reproduce the remaining rounds") {
  for (auto s : {Strategy::kGpcb, Strategy::kRandom, Strategy::kPowD}) {
    const auto cfg = small_config(s, 5);
    const auto full = run_experiment(cfg);

    Engine first(cfg, build_task(cfg));
    std::vector<RoundRecord> head;
    first.init_phase();
    for (int i = 0; i < 5; ++i) head.push_back(first.training_round());
    const auto state = nlohmann::json::parse(first.checkpoint().dump());

    Engine second(cfg, build_task(cfg));
    second.restore(state);
    CHECK(second.completed_rounds() == 5);
    const auto rest = run_engine(second, head);
    CHECK(same_records(full.records, rest.records));
    CHECK(full.final_params == rest.final_params);
  }
}

TEST_CASE("checkpoint from a different config is rejected") {
  const auto cfg = small_config(Strategy::kGpcb);
  Engine a(cfg, build_task(cfg));
  a.init_phase();
  auto other = cfg;
  other.rho = 2.0;
  Engine b(other, build_task(other));
  CHECK_THROWS(b.restore(a.checkpoint()));
}

TEST_CASE("summary and horizon") {
  auto cfg = small_config(Strategy::kGpcb);
  cfg.rounds = 1;
  CHECK(run_experiment(cfg).records.size() == 1);

  cfg.rounds = 14;
  const auto r = run_experiment(cfg);
  double mean = 0.0;
  for (std::size_t t = 4; t < 14; ++t) mean += r.records[t].accuracy;
  mean /= 10.0;
  double dev = 0.0;
  for (std::size_t t = 4; t < 14; ++t) dev = std::max(dev, std::abs(r.records[t].accuracy - mean));
  CHECK(r.summary.final_mean_accuracy == doctest::Approx(mean).epsilon(1e-12));
  CHECK(r.summary.final_max_deviation == doctest::Approx(dev).epsilon(1e-12));
  CHECK(r.summary.final_accuracy == r.records.back().accuracy);
  CHECK(r.summary.window == 10);
  std::size_t trainings = 0;
  for (const auto& rec : r.records) trainings += rec.counters.client_trainings;
  CHECK(r.summary.training_cost.client_trainings == trainings);
}

TEST_CASE("invalid configs") {
  auto cfg = small_config(Strategy::kGpcb);
  cfg.clients_per_round = 11;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = small_config(Strategy::kPowD);
  cfg.pow_d_candidates = 2;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = small_config(Strategy::kGpcb);
  cfg.rounds = 0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
}

TEST_CASE("record json round trip") {
  const auto r = run_experiment(small_config(Strategy::kPowD));
  for (const auto& rec : r.records) {
    const auto j = to_json(rec, true);
    CHECK(to_json(record_from_json(j), true) == j);
  }
}

TEST_CASE("proxy regret") {
  std::vector<RoundRecord> recs(3);
  for (auto& r : recs) r.selected = {0, 1};
  const std::vector<double> u = {0.9, 0.8, 0.1};
  const auto zero = proxy_regret(recs, u, 2);
  for (double v : zero) CHECK(v == 0.0);
  recs[1].selected = {0, 2};
  recs[2].selected = {1, 2};
  const auto r = proxy_regret(recs, u, 2);
  CHECK(r[0] == 0.0);
  CHECK(r[1] == doctest::Approx(0.7));
  CHECK(r[2] == doctest::Approx(0.7 + 0.8));
}

TEST_CASE("random selection accumulates at least as much proxy regret as gpcb") {
  std::size_t wins = 0;
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    ExperimentConfig cfg;
    cfg.seed = seed;
    cfg.hidden = {32};
    cfg.dataset.sep = 4.0;
    const auto util = oracle_utilities(cfg);
    const auto g = run_experiment(cfg);
    cfg.strategy = Strategy::kRandom;
    const auto r = run_experiment(cfg);
    const auto rg = proxy_regret(g.records, util, cfg.clients_per_round).back();
    const auto rr = proxy_regret(r.records, util, cfg.clients_per_round).back();
    wins += rr >= rg;
  }
  CHECK(wins >= 8);
}

}  // TEST_SUITE
