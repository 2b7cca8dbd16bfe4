#pragma once

#include <cstddef>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "fedsel/gp_metric.hpp"
#include "fedsel/rng.hpp"

namespace fedsel {

enum class Strategy { kGpcb, kRandom, kPowD, kTopGp };

Strategy parse_strategy(const std::string& name);
const char* to_string(Strategy s);

// How the empirical mean reward is formed: per pull (reward_sum / n_i) or
// per observed round (reward_sum / rounds, unselected rounds count as zero).
enum class RewardMean { kPerPull, kPerRound };

struct ArmStats {
  double reward_sum = 0.0;
  std::size_t pulls = 0;
};

struct BanditStats {
  std::vector<ArmStats> arms;
  std::vector<bool> eligible;  // empty means every arm may be chosen
  std::size_t total_pulls = 0;
  std::size_t rounds_observed = 0;
  std::size_t round = 1;    // t
  std::size_t horizon = 1;  // T
  double rho = 1.0;
  std::optional<double> fixed_alpha;  // overrides the linear schedule
  RewardMean mean_mode = RewardMean::kPerPull;

  explicit BanditStats(std::size_t arm_count = 0) : arms(arm_count) {}

  std::size_t arm_count() const noexcept { return arms.size(); }
  bool is_eligible(ClientId i) const { return eligible.empty() || eligible[i]; }
  double mean_reward(ClientId i) const;
  double alpha() const;
};

struct SelectionOutcome {
  std::vector<ClientId> selected;
  // Strategy-specific score per client (GPCB u_i, stored GP, or local loss);
  // NaN for clients the strategy did not score.
  std::vector<double> scores;
  // Clients that did work to be considered (pow-d candidates).
  std::vector<ClientId> evaluated;
};

// rho * t / T
double alpha_at(std::size_t t, std::size_t horizon, double rho);

// mean + alpha * sqrt(2 ln n / n_i)
double gpcb_score(double mean, std::size_t total_pulls, std::size_t arm_pulls, double alpha);
double gpcb_score(const BanditStats& stats, ClientId id);

// Top-K by score; ties go to fewer pulls, then lower id. Entries with a NaN
// score are never chosen.
std::vector<ClientId> top_k(std::span<const double> scores, std::span<const std::size_t> pulls,
                            std::size_t k);

SelectionOutcome select_gpcb(const BanditStats& stats, std::size_t k);

// Uniform K-subset of the pool, without replacement.
SelectionOutcome select_random(std::span<const ClientId> pool, std::size_t client_count,
                               std::size_t k, Rng& rng);
SelectionOutcome select_random(std::size_t client_count, std::size_t k, Rng& rng);

// Local loss of the current global model on each listed client's data.
using LossProbe = std::function<std::vector<double>(std::span<const ClientId>)>;

// Power-of-choice: sample d candidates from the pool, keep the K with the
// highest local loss of the current global model.
SelectionOutcome select_pow_d(std::span<const ClientId> pool, std::size_t client_count,
                              std::size_t candidates, std::size_t k, Rng& rng,
                              const LossProbe& local_loss);

SelectionOutcome select_top_gp(std::span<const double> gp_values, std::size_t k,
                               std::span<const std::size_t> pulls = {});

// reward_sum_i += clip(mu_i, 0, 1); n_i += 1 for each selected i; n += K.
// rewards[j] belongs to outcome.selected[j].
void record_rewards(BanditStats& stats, std::span<const ClientId> selected,
                    std::span<const double> rewards);

// Same, keyed by client id. Throws std::logic_error if an id was not selected
// in `outcome` or a selected id has no reward.
void record_rewards(BanditStats& stats, const SelectionOutcome& outcome,
                    std::span<const std::pair<ClientId, double>> rewards);

}  // namespace fedsel
