#pragma once

#include <cstddef>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "fedsel/config.hpp"
#include "fedsel/data.hpp"
#include "fedsel/gp_metric.hpp"
#include "fedsel/nn.hpp"
#include "fedsel/rng.hpp"
#include "fedsel/selection.hpp"

namespace fedsel {

// Coordinatewise mean. Each coordinate is summed in sorted order so the
// result does not depend on the order of `models`.
ParamVector fedavg(std::span<const ParamVector* const> models);
ParamVector fedavg(std::span<const ParamVector> models);

// Simulated client-side work for one round.
struct CostCounters {
  std::size_t client_trainings = 0;    // local training jobs
  std::size_t client_evaluations = 0;  // loss probes (pow-d candidates)
  std::size_t gradient_steps = 0;      // minibatch gradients computed by clients
  std::size_t param_downloads = 0;     // global model sent to a client
  std::size_t param_uploads = 0;       // local model returned to the server

  CostCounters& operator+=(const CostCounters& o);
  bool operator==(const CostCounters&) const = default;
};

// Measured seconds per phase (not part of any deterministic output).
struct WallTime {
  double selection = 0.0;
  double local_train = 0.0;
  double aggregate = 0.0;
  double eval = 0.0;
};

struct ParticipantInfo {
  ClientId id = 0;
  double gp = 0.0;             // c_i
  double gp_normalized = 0.0;  // c~_i
  double reward = 0.0;         // mu_i before clipping
};

struct RoundRecord {
  std::size_t t = 0;  // 0 is the initialization round
  std::vector<ClientId> selected;
  double accuracy = 0.0;
  double loss = 0.0;
  std::vector<ParticipantInfo> participants;
  std::vector<double> scores;          // selection scores behind next_selected (NaN = unscored)
  std::vector<std::size_t> pulls;      // n_i after this round's update
  std::vector<ClientId> next_selected;
  CostCounters counters;
  WallTime time;
};

struct RunSummary {
  std::size_t rounds = 0;
  std::size_t window = 0;          // rounds in the final-window average
  double final_mean_accuracy = 0.0;
  double final_max_deviation = 0.0;
  double final_accuracy = 0.0;
  CostCounters init_cost;
  CostCounters training_cost;      // rounds 1..T
};

// Mean and max |a - mean| over the last min(window, size) accuracies.
std::pair<double, double> final_window_stats(std::span<const RoundRecord> records,
                                             std::size_t window = 10);

// Runs initialization and training rounds. Owns all mutable experiment
// state; one instance per experiment, driven from a single thread.
class Engine {
 public:
  Engine(ExperimentConfig cfg, TaskData task);
  Engine(ExperimentConfig cfg, TaskData task, Partition partition);

  // Every client trains once from w0; picks S1 and forms w1.
  const RoundRecord& init_phase();
  RoundRecord training_round();

  bool initialized() const noexcept { return init_record_.has_value(); }
  std::size_t completed_rounds() const noexcept { return round_; }
  bool finished() const noexcept { return round_ >= cfg_.rounds; }

  const ExperimentConfig& config() const noexcept { return cfg_; }
  const MlpArch& arch() const noexcept { return arch_; }
  const TaskData& task() const noexcept { return task_; }
  const Partition& partition() const noexcept { return partition_; }
  const ParamVector& global_params() const noexcept { return global_; }
  const std::vector<ClientState>& clients() const noexcept { return clients_; }
  const BanditStats& stats() const noexcept { return stats_; }
  const GlobalDirection& direction() const noexcept { return direction_; }
  const std::vector<ClientId>& next_selection() const noexcept { return next_; }
  const RoundRecord& init_record() const { return *init_record_; }
  const std::vector<std::string>& warnings() const noexcept { return warnings_; }

  // Full mutable state (params, momenta, bandit stats, RNG) as JSON.
  nlohmann::json checkpoint() const;
  void restore(const nlohmann::json& state);

  void set_parallel(bool on) noexcept { parallel_ = on; }

 private:
  std::vector<LocalResult> train(std::span<const ClientId> ids);
  const ParamVector& gp_vector(const LocalResult& r) const;
  SelectionOutcome select_next(CostCounters& cost);
  std::vector<ClientId> eligible_pool() const;

  ExperimentConfig cfg_;
  TaskData task_;
  Partition partition_;
  MlpArch arch_;
  ParamVector global_;
  std::vector<ClientState> clients_;
  BanditStats stats_;
  GlobalDirection direction_;
  std::vector<ClientId> next_;
  double prev_accuracy_ = 0.0;
  double prev_loss_ = 0.0;
  std::size_t round_ = 0;
  Rng selection_rng_;
  std::optional<RoundRecord> init_record_;
  std::vector<std::string> warnings_;
  bool parallel_ = true;
};

struct ExperimentResult {
  ParamVector final_params;
  RoundRecord init;
  std::vector<RoundRecord> records;
  RunSummary summary;
};

using RoundCallback = std::function<void(const Engine&, const RoundRecord&)>;

ExperimentResult run_experiment(const ExperimentConfig& cfg, const RoundCallback& on_round = {});
// Continues an engine (fresh or restored) to the configured horizon.
ExperimentResult run_engine(Engine& engine, std::vector<RoundRecord> records = {},
                            const RoundCallback& on_round = {});
RunSummary summarize(const Engine& engine, std::span<const RoundRecord> records);

// Per-client utility: mean clipped reward of each client over a run in which
// every client participates every round (same data, model and seed).
std::vector<double> oracle_utilities(const ExperimentConfig& cfg);

// Cumulative regret against the utility-oracle top-K:
// R(t) = sum_{s<=t} (sum_{j in topK} u_j - sum_{i in S_s} u_i).
std::vector<double> proxy_regret(std::span<const RoundRecord> records,
                                 std::span<const double> utilities, std::size_t k);

nlohmann::json to_json(const RoundRecord& r, bool with_timing);
RoundRecord record_from_json(const nlohmann::json& j);
nlohmann::json to_json(const CostCounters& c);
CostCounters counters_from_json(const nlohmann::json& j);

}  // namespace fedsel
