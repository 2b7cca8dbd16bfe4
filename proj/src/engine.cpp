#include "fedsel/engine.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

#include <fmt/core.h>

#include "fedsel/error.hpp"
#include "fedsel/parallel.hpp"

namespace fedsel {

using nlohmann::json;

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

class Stopwatch {
 public:
  double lap() {
    const auto now = std::chrono::steady_clock::now();
    const double s = std::chrono::duration<double>(now - start_).count();
    start_ = now;
    return s;
  }

 private:
  std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

std::vector<ClientId> sorted(std::vector<ClientId> ids) {
  std::sort(ids.begin(), ids.end());
  return ids;
}

}  // namespace

ParamVector fedavg(std::span<const ParamVector* const> models) {
  if (models.empty()) throw ConfigError("fedavg needs at least one model");
  const auto len = models.front()->size();
  for (const auto* m : models)
    if (m->size() != len) throw ConfigError("fedavg: model lengths differ");
  ParamVector out(len);
  std::vector<double> column(models.size());
  const auto n = static_cast<double>(models.size());
  for (std::size_t k = 0; k < len; ++k) {
    for (std::size_t m = 0; m < models.size(); ++m) column[m] = (*models[m])[k];
    std::sort(column.begin(), column.end());
    // Offsets from the smallest value keep identical models exact.
    double s = 0.0;
    for (double v : column) s += v - column.front();
    out[k] = column.front() + s / n;
  }
  return out;
}

ParamVector fedavg(std::span<const ParamVector> models) {
  std::vector<const ParamVector*> ptrs;
  for (const auto& m : models) ptrs.push_back(&m);
  return fedavg(ptrs);
}

CostCounters& CostCounters::operator+=(const CostCounters& o) {
  client_trainings += o.client_trainings;
  client_evaluations += o.client_evaluations;
  gradient_steps += o.gradient_steps;
  param_downloads += o.param_downloads;
  param_uploads += o.param_uploads;
  return *this;
}

std::pair<double, double> final_window_stats(std::span<const RoundRecord> records,
                                             std::size_t window) {
  if (records.empty()) return {0.0, 0.0};
  const auto n = std::min(window, records.size());
  const auto tail = records.subspan(records.size() - n);
  double mean = 0.0;
  for (const auto& r : tail) mean += r.accuracy;
  mean /= static_cast<double>(n);
  double dev = 0.0;
  for (const auto& r : tail) dev = std::max(dev, std::abs(r.accuracy - mean));
  return {mean, dev};
}

Engine::Engine(ExperimentConfig cfg, TaskData task)
    : Engine(cfg, task, make_partition(task.train, cfg.partition_spec())) {}

Engine::Engine(ExperimentConfig cfg, TaskData task, Partition partition)
    : cfg_(std::move(cfg)), task_(std::move(task)), partition_(std::move(partition)) {
  cfg_.validate();
  task_.train.validate();
  task_.eval.validate();
  if (task_.eval.size() == 0) throw ConfigError("evaluation set is empty", "dataset");
  if (partition_.client_count() != cfg_.num_clients)
    throw ConfigError("partition client count differs from num_clients", "partition");
  arch_ = cfg_.arch_for(task_.train);
  global_ = init_params(arch_, cfg_.seed);

  const auto n = cfg_.num_clients;
  clients_.resize(n);
  stats_ = BanditStats(n);
  stats_.eligible.assign(n, true);
  std::size_t usable = 0;
  for (ClientId i = 0; i < n; ++i) {
    clients_[i].id = i;
    clients_[i].momentum.assign(global_.size(), 0.0);
    clients_[i].has_data = !partition_.assignment[i].empty();
    stats_.eligible[i] = clients_[i].has_data;
    if (clients_[i].has_data) ++usable;
    else warnings_.push_back(fmt::format("client {} holds no data and is excluded", i));
  }
  if (usable < cfg_.clients_per_round)
    throw ConfigError(fmt::format("only {} clients hold data, fewer than K={}", usable,
                                  cfg_.clients_per_round),
                      "clients_per_round");
  stats_.horizon = cfg_.rounds;
  stats_.rho = cfg_.rho;
  stats_.fixed_alpha = cfg_.fixed_alpha;
  stats_.mean_mode = cfg_.reward_mean;
  selection_rng_ = make_rng(cfg_.seed, Stream::kSelection);
}

std::vector<ClientId> Engine::eligible_pool() const {
  std::vector<ClientId> pool;
  for (const auto& c : clients_)
    if (c.has_data) pool.push_back(c.id);
  return pool;
}

const ParamVector& Engine::gp_vector(const LocalResult& r) const {
  return cfg_.gp_source == GpSource::kMomentum ? r.momentum : r.last_grad;
}

std::vector<LocalResult> Engine::train(std::span<const ClientId> ids) {
  // round_ is the last completed round; jobs here belong to round_ + 1
  // (or to the initialization round when not yet initialized).
  const std::uint64_t tag = initialized() ? round_ + 1 : 0;
  std::vector<ClientJob> jobs;
  jobs.reserve(ids.size());
  for (ClientId id : ids)
    jobs.push_back({id, partition_.assignment[id], &clients_[id].momentum,
                    derive_seed(cfg_.seed, static_cast<std::uint64_t>(Stream::kLocal),
                                (tag << 32) | id)});
  return parallel_ ? train_clients_parallel(arch_, task_.train, jobs, global_, cfg_.local_config())
                   : train_clients_serial(arch_, task_.train, jobs, global_, cfg_.local_config());
}

SelectionOutcome Engine::select_next(CostCounters& cost) {
  const auto k = cfg_.clients_per_round;
  switch (cfg_.strategy) {
    case Strategy::kGpcb:
      return select_gpcb(stats_, k);
    case Strategy::kTopGp: {
      std::vector<double> gp(clients_.size(), kNaN);
      std::vector<std::size_t> pulls(clients_.size());
      for (const auto& c : clients_) {
        if (c.has_data) gp[c.id] = c.gp_value;
        pulls[c.id] = stats_.arms[c.id].pulls;
      }
      return select_top_gp(gp, k, pulls);
    }
    case Strategy::kRandom:
      return select_random(eligible_pool(), clients_.size(), k, selection_rng_);
    case Strategy::kPowD: {
      const auto d = cfg_.pow_d_candidates;
      auto probe = [&](std::span<const ClientId> ids) {
        std::vector<std::span<const std::size_t>> subsets;
        for (ClientId id : ids) subsets.emplace_back(partition_.assignment[id]);
        return client_losses_parallel(arch_, task_.train, subsets, global_);
      };
      auto out = select_pow_d(eligible_pool(), clients_.size(), d, k, selection_rng_, probe);
      cost.client_evaluations += out.evaluated.size();
      cost.param_downloads += out.evaluated.size();
      return out;
    }
  }
  throw std::logic_error("unhandled strategy");
}

const RoundRecord& Engine::init_phase() {
  if (initialized()) throw std::logic_error("initialization already ran");
  Stopwatch clock;
  RoundRecord rec;
  rec.t = 0;

  const auto pool = eligible_pool();
  auto results = train(pool);
  rec.time.local_train = clock.lap();
  for (std::size_t j = 0; j < pool.size(); ++j) {
    clients_[pool[j]].momentum = results[j].momentum;
    rec.counters.gradient_steps += results[j].steps;
  }
  rec.counters.client_trainings = pool.size();
  rec.counters.param_downloads = pool.size();
  rec.counters.param_uploads = pool.size();

  std::vector<const ParamVector*> dirs;
  for (const auto& r : results) dirs.push_back(&gp_vector(r));
  const auto all_dir = GlobalDirection::average(dirs);
  std::vector<double> gp(pool.size());
  for (std::size_t j = 0; j < pool.size(); ++j) {
    gp[j] = gradient_projection(gp_vector(results[j]), all_dir);
    clients_[pool[j]].gp_value = gp[j];
  }
  const auto normalized = normalize_gp(gp);

  // S1 ranks the initial GP values; baselines use their own rule.
  SelectionOutcome first;
  if (cfg_.strategy == Strategy::kGpcb || cfg_.strategy == Strategy::kTopGp) {
    std::vector<double> scores(clients_.size(), kNaN);
    for (std::size_t j = 0; j < pool.size(); ++j) scores[pool[j]] = gp[j];
    first.scores = scores;
    first.selected = top_k(scores, {}, cfg_.clients_per_round);
  } else {
    first = select_next(rec.counters);
  }
  const auto s1 = sorted(first.selected);
  rec.time.selection = clock.lap();

  std::vector<const ParamVector*> models, chosen_dirs;
  for (ClientId id : s1) {
    const auto j = static_cast<std::size_t>(std::find(pool.begin(), pool.end(), id) - pool.begin());
    models.push_back(&results[j].params);
    chosen_dirs.push_back(&gp_vector(results[j]));
  }
  global_ = fedavg(models);
  direction_ = GlobalDirection::average(chosen_dirs);
  rec.time.aggregate = clock.lap();

  const auto ev = evaluate(global_, arch_, task_.eval);
  prev_accuracy_ = ev.accuracy;
  prev_loss_ = ev.loss;
  rec.time.eval = clock.lap();

  // Initial reward is the normalized GP itself (no accuracy history yet).
  stats_.round = 0;
  record_rewards(stats_, pool, normalized);
  for (std::size_t j = 0; j < pool.size(); ++j) {
    auto& c = clients_[pool[j]];
    c.normalized_gp = normalized[j];
    c.last_reward = normalized[j];
    rec.participants.push_back({c.id, gp[j], normalized[j], normalized[j]});
  }

  next_ = s1;
  rec.selected = s1;
  rec.next_selected = s1;
  rec.accuracy = ev.accuracy;
  rec.loss = ev.loss;
  rec.scores = first.scores;
  for (const auto& a : stats_.arms) rec.pulls.push_back(a.pulls);
  init_record_ = rec;
  return *init_record_;
}

RoundRecord Engine::training_round() {
  if (!initialized()) init_phase();
  if (finished()) throw std::logic_error("experiment already reached its horizon");
  const auto t = round_ + 1;
  Stopwatch clock;
  RoundRecord rec;
  rec.t = t;
  rec.selected = next_;

  auto results = train(rec.selected);
  rec.time.local_train = clock.lap();
  const auto k = rec.selected.size();
  rec.counters.client_trainings = k;
  rec.counters.param_downloads = k;
  rec.counters.param_uploads = k;

  std::vector<double> gp(k);
  std::vector<const ParamVector*> models, dirs;
  for (std::size_t j = 0; j < k; ++j) {
    auto& c = clients_[rec.selected[j]];
    c.momentum = results[j].momentum;
    rec.counters.gradient_steps += results[j].steps;
    gp[j] = gradient_projection(gp_vector(results[j]), direction_);
    c.gp_value = gp[j];
    models.push_back(&results[j].params);
    dirs.push_back(&gp_vector(results[j]));
  }
  global_ = fedavg(models);
  rec.time.aggregate = clock.lap();

  const auto ev = evaluate(global_, arch_, task_.eval);
  rec.accuracy = ev.accuracy;
  rec.loss = ev.loss;
  rec.time.eval = clock.lap();

  const auto normalized = normalize_gp(gp);
  std::vector<double> rewards(k);
  for (std::size_t j = 0; j < k; ++j) {
    rewards[j] = adjust_reward(normalized[j], ev.accuracy, prev_accuracy_, ev.loss, prev_loss_,
                               cfg_.accuracy_epsilon);
    auto& c = clients_[rec.selected[j]];
    c.normalized_gp = normalized[j];
    c.last_reward = rewards[j];
    rec.participants.push_back({c.id, gp[j], normalized[j], rewards[j]});
  }
  stats_.round = t;
  record_rewards(stats_, rec.selected, rewards);
  direction_ = GlobalDirection::average(dirs);

  auto next = select_next(rec.counters);
  next_ = sorted(next.selected);
  rec.time.selection = clock.lap();

  prev_accuracy_ = ev.accuracy;
  prev_loss_ = ev.loss;
  round_ = t;
  rec.scores = std::move(next.scores);
  rec.next_selected = next_;
  for (const auto& a : stats_.arms) rec.pulls.push_back(a.pulls);
  return rec;
}

json to_json(const CostCounters& c) {
  return {{"client_trainings", c.client_trainings},
          {"client_evaluations", c.client_evaluations},
          {"gradient_steps", c.gradient_steps},
          {"param_downloads", c.param_downloads},
          {"param_uploads", c.param_uploads}};
}

CostCounters counters_from_json(const json& j) {
  CostCounters c;
  c.client_trainings = j.at("client_trainings").get<std::size_t>();
  c.client_evaluations = j.at("client_evaluations").get<std::size_t>();
  c.gradient_steps = j.at("gradient_steps").get<std::size_t>();
  c.param_downloads = j.at("param_downloads").get<std::size_t>();
  c.param_uploads = j.at("param_uploads").get<std::size_t>();
  return c;
}

json to_json(const RoundRecord& r, bool with_timing) {
  json per = {{"gp", json::object()},
              {"gp_normalized", json::object()},
              {"reward", json::object()},
              {"score", json::object()},
              {"pulls", json::object()}};
  for (const auto& p : r.participants) {
    const auto key = std::to_string(p.id);
    per["gp"][key] = p.gp;
    per["gp_normalized"][key] = p.gp_normalized;
    per["reward"][key] = p.reward;
  }
  for (std::size_t i = 0; i < r.scores.size(); ++i)
    if (!std::isnan(r.scores[i])) per["score"][std::to_string(i)] = r.scores[i];
  for (std::size_t i = 0; i < r.pulls.size(); ++i) per["pulls"][std::to_string(i)] = r.pulls[i];
  json j = {{"t", r.t},
            {"accuracy", r.accuracy},
            {"loss", r.loss},
            {"selected", r.selected},
            {"next_selected", r.next_selected},
            {"per_client", per},
            {"counters", to_json(r.counters)}};
  if (with_timing)
    j["timing"] = {{"selection", r.time.selection},
                   {"local_train", r.time.local_train},
                   {"aggregate", r.time.aggregate},
                   {"eval", r.time.eval}};
  return j;
}

RoundRecord record_from_json(const json& j) {
  RoundRecord r;
  r.t = j.at("t").get<std::size_t>();
  r.accuracy = j.at("accuracy").get<double>();
  r.loss = j.at("loss").get<double>();
  r.selected = j.at("selected").get<std::vector<ClientId>>();
  r.next_selected = j.at("next_selected").get<std::vector<ClientId>>();
  const auto& per = j.at("per_client");
  for (const auto& [key, gp] : per.at("gp").items()) {
    ParticipantInfo p;
    p.id = std::stoull(key);
    p.gp = gp.get<double>();
    p.gp_normalized = per.at("gp_normalized").at(key).get<double>();
    p.reward = per.at("reward").at(key).get<double>();
    r.participants.push_back(p);
  }
  std::sort(r.participants.begin(), r.participants.end(),
            [](const auto& a, const auto& b) { return a.id < b.id; });
  const auto n = per.at("pulls").size();
  r.pulls.assign(n, 0);
  r.scores.assign(n, kNaN);
  for (const auto& [key, v] : per.at("pulls").items()) r.pulls[std::stoull(key)] = v.get<std::size_t>();
  for (const auto& [key, v] : per.at("score").items()) r.scores[std::stoull(key)] = v.get<double>();
  r.counters = counters_from_json(j.at("counters"));
  if (j.contains("timing")) {
    const auto& tm = j.at("timing");
    r.time = {tm.at("selection").get<double>(), tm.at("local_train").get<double>(),
              tm.at("aggregate").get<double>(), tm.at("eval").get<double>()};
  }
  return r;
}

json Engine::checkpoint() const {
  if (!initialized()) throw std::logic_error("nothing to checkpoint before initialization");
  json clients = json::array();
  for (const auto& c : clients_)
    clients.push_back({{"momentum", c.momentum},
                       {"gp", c.gp_value},
                       {"gp_normalized", c.normalized_gp},
                       {"reward", c.last_reward}});
  json arms = json::array();
  for (const auto& a : stats_.arms) arms.push_back({a.reward_sum, a.pulls});
  std::ostringstream rng;
  rng << selection_rng_;
  const auto cfg_json = to_json(cfg_);
  return {{"format", "fedsel-checkpoint-1"},
          {"config", cfg_json},
          {"config_hash", config_hash(cfg_json)},
          {"round", round_},
          {"global", global_},
          {"clients", clients},
          {"stats",
           {{"arms", arms},
            {"total_pulls", stats_.total_pulls},
            {"rounds_observed", stats_.rounds_observed},
            {"round", stats_.round}}},
          {"direction", direction_.vector()},
          {"next", next_},
          {"prev_accuracy", prev_accuracy_},
          {"prev_loss", prev_loss_},
          {"rng", rng.str()},
          {"init_record", to_json(*init_record_, false)}};
}

void Engine::restore(const json& state) {
  if (state.value("format", "") != "fedsel-checkpoint-1")
    throw ConfigError("not a checkpoint file", "checkpoint");
  if (state.at("config_hash").get<std::uint64_t>() != config_hash(to_json(cfg_)))
    throw ConfigError("checkpoint was written for a different configuration", "checkpoint");
  auto global = state.at("global").get<ParamVector>();
  if (global.size() != arch_.param_count())
    throw ConfigError("checkpoint parameter count mismatch", "checkpoint");
  const auto& clients = state.at("clients");
  if (clients.size() != clients_.size())
    throw ConfigError("checkpoint client count mismatch", "checkpoint");
  global_ = std::move(global);
  for (std::size_t i = 0; i < clients_.size(); ++i) {
    const auto& c = clients[i];
    clients_[i].momentum = c.at("momentum").get<ParamVector>();
    clients_[i].gp_value = c.at("gp").get<double>();
    clients_[i].normalized_gp = c.at("gp_normalized").get<double>();
    clients_[i].last_reward = c.at("reward").get<double>();
  }
  const auto& st = state.at("stats");
  const auto& arms = st.at("arms");
  for (std::size_t i = 0; i < stats_.arms.size(); ++i) {
    stats_.arms[i].reward_sum = arms[i][0].get<double>();
    stats_.arms[i].pulls = arms[i][1].get<std::size_t>();
  }
  stats_.total_pulls = st.at("total_pulls").get<std::size_t>();
  stats_.rounds_observed = st.at("rounds_observed").get<std::size_t>();
  stats_.round = st.at("round").get<std::size_t>();
  direction_ = GlobalDirection(state.at("direction").get<ParamVector>());
  next_ = state.at("next").get<std::vector<ClientId>>();
  prev_accuracy_ = state.at("prev_accuracy").get<double>();
  prev_loss_ = state.at("prev_loss").get<double>();
  round_ = state.at("round").get<std::size_t>();
  std::istringstream rng(state.at("rng").get<std::string>());
  rng >> selection_rng_;
  init_record_ = record_from_json(state.at("init_record"));
}

RunSummary summarize(const Engine& engine, std::span<const RoundRecord> records) {
  RunSummary s;
  s.rounds = records.size();
  s.window = std::min<std::size_t>(10, records.size());
  std::tie(s.final_mean_accuracy, s.final_max_deviation) = final_window_stats(records, 10);
  s.final_accuracy = records.empty() ? 0.0 : records.back().accuracy;
  if (engine.initialized()) s.init_cost = engine.init_record().counters;
  for (const auto& r : records) s.training_cost += r.counters;
  return s;
}

ExperimentResult run_engine(Engine& engine, std::vector<RoundRecord> records,
                            const RoundCallback& on_round) {
  if (!engine.initialized()) engine.init_phase();
  while (!engine.finished()) {
    records.push_back(engine.training_round());
    if (on_round) on_round(engine, records.back());
  }
  ExperimentResult out;
  out.final_params = engine.global_params();
  out.init = engine.init_record();
  out.summary = summarize(engine, records);
  out.records = std::move(records);
  return out;
}

ExperimentResult run_experiment(const ExperimentConfig& cfg, const RoundCallback& on_round) {
  Engine engine(cfg, build_task(cfg));
  return run_engine(engine, {}, on_round);
}

std::vector<double> oracle_utilities(const ExperimentConfig& cfg) {
  auto task = build_task(cfg);
  auto partition = make_partition(task.train, cfg.partition_spec());
  ExperimentConfig full = cfg;
  full.clients_per_round = 0;
  for (const auto& a : partition.assignment) full.clients_per_round += a.empty() ? 0 : 1;
  full.strategy = Strategy::kRandom;
  Engine engine(full, std::move(task), std::move(partition));
  const auto result = run_engine(engine);
  std::vector<double> sum(cfg.num_clients, 0.0);
  std::vector<std::size_t> count(cfg.num_clients, 0);
  for (const auto& r : result.records)
    for (const auto& p : r.participants) {
      sum[p.id] += std::clamp(p.reward, 0.0, 1.0);
      ++count[p.id];
    }
  std::vector<double> u(cfg.num_clients, kNaN);
  for (std::size_t i = 0; i < u.size(); ++i)
    if (count[i]) u[i] = sum[i] / static_cast<double>(count[i]);
  return u;
}

std::vector<double> proxy_regret(std::span<const RoundRecord> records,
                                 std::span<const double> utilities, std::size_t k) {
  const auto best_ids = top_k(utilities, {}, k);
  double best = 0.0;
  for (ClientId i : best_ids) best += utilities[i];
  std::vector<double> curve;
  curve.reserve(records.size());
  double total = 0.0;
  for (const auto& r : records) {
    double got = 0.0;
    for (ClientId i : r.selected) {
      if (i >= utilities.size() || std::isnan(utilities[i]))
        throw ConfigError("selected client has no utility estimate");
      got += utilities[i];
    }
    total += std::max(0.0, best - got);
    curve.push_back(total);
  }
  return curve;
}

}  // namespace fedsel
