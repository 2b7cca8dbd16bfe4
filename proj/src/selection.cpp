#include "fedsel/selection.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "fedsel/error.hpp"

namespace fedsel {

namespace {
constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();
}

Strategy parse_strategy(const std::string& name) {
  if (name == "gpcb") return Strategy::kGpcb;
  if (name == "random") return Strategy::kRandom;
  if (name == "pow_d") return Strategy::kPowD;
  if (name == "top_gp") return Strategy::kTopGp;
  throw ConfigError("unknown strategy '" + name + "' (expected gpcb|random|pow_d|top_gp)",
                    "strategy");
}

const char* to_string(Strategy s) {
  switch (s) {
    case Strategy::kGpcb: return "gpcb";
    case Strategy::kRandom: return "random";
    case Strategy::kPowD: return "pow_d";
    case Strategy::kTopGp: return "top_gp";
  }
  return "?";
}

double BanditStats::mean_reward(ClientId i) const {
  const auto& a = arms.at(i);
  if (mean_mode == RewardMean::kPerRound) {
    if (rounds_observed == 0) throw UnpulledArm("no rounds observed yet");
    return a.reward_sum / static_cast<double>(rounds_observed);
  }
  if (a.pulls == 0) throw UnpulledArm("arm " + std::to_string(i) + " has never been pulled");
  return a.reward_sum / static_cast<double>(a.pulls);
}

double BanditStats::alpha() const {
  return fixed_alpha ? *fixed_alpha : alpha_at(round, horizon, rho);
}

double alpha_at(std::size_t t, std::size_t horizon, double rho) {
  if (horizon == 0) throw ConfigError("horizon T must be positive", "rounds");
  return rho * static_cast<double>(t) / static_cast<double>(horizon);
}

double gpcb_score(double mean, std::size_t total_pulls, std::size_t arm_pulls, double alpha) {
  if (arm_pulls == 0) throw UnpulledArm("GPCB score undefined for an unpulled arm");
  if (total_pulls == 0) throw UnpulledArm("GPCB score undefined before any pull");
  return mean + alpha * std::sqrt(2.0 * std::log(static_cast<double>(total_pulls)) /
                                  static_cast<double>(arm_pulls));
}

double gpcb_score(const BanditStats& stats, ClientId id) {
  const auto& a = stats.arms.at(id);
  if (a.pulls == 0) throw UnpulledArm("arm " + std::to_string(id) + " has never been pulled");
  return gpcb_score(stats.mean_reward(id), stats.total_pulls, a.pulls, stats.alpha());
}

std::vector<ClientId> top_k(std::span<const double> scores, std::span<const std::size_t> pulls,
                            std::size_t k) {
  std::vector<ClientId> ids;
  for (ClientId i = 0; i < scores.size(); ++i)
    if (!std::isnan(scores[i])) ids.push_back(i);
  if (k == 0 || k > ids.size())
    throw ConfigError("K must lie in [1, " + std::to_string(ids.size()) + "]", "clients_per_round");
  auto pulls_of = [&](ClientId i) { return pulls.empty() ? std::size_t{0} : pulls[i]; };
  std::partial_sort(ids.begin(), ids.begin() + static_cast<std::ptrdiff_t>(k), ids.end(),
                    [&](ClientId a, ClientId b) {
                      if (scores[a] != scores[b]) return scores[a] > scores[b];
                      if (pulls_of(a) != pulls_of(b)) return pulls_of(a) < pulls_of(b);
                      return a < b;
                    });
  ids.resize(k);
  return ids;
}

SelectionOutcome select_gpcb(const BanditStats& stats, std::size_t k) {
  SelectionOutcome out;
  out.scores.assign(stats.arm_count(), kNaN);
  std::vector<std::size_t> pulls(stats.arm_count());
  for (ClientId i = 0; i < stats.arm_count(); ++i) {
    pulls[i] = stats.arms[i].pulls;
    if (stats.is_eligible(i)) out.scores[i] = gpcb_score(stats, i);
  }
  out.selected = top_k(out.scores, pulls, k);
  return out;
}

SelectionOutcome select_random(std::span<const ClientId> pool, std::size_t client_count,
                               std::size_t k, Rng& rng) {
  if (k == 0 || k > pool.size())
    throw ConfigError("K must lie in [1, " + std::to_string(pool.size()) + "]", "clients_per_round");
  SelectionOutcome out;
  out.scores.assign(client_count, kNaN);
  // Partial Fisher-Yates keeps draws uniform and independent of pool order.
  std::vector<ClientId> ids(pool.begin(), pool.end());
  for (std::size_t j = 0; j < k; ++j) {
    std::uniform_int_distribution<std::size_t> pick(j, ids.size() - 1);
    std::swap(ids[j], ids[pick(rng)]);
  }
  ids.resize(k);
  std::sort(ids.begin(), ids.end());
  out.selected = std::move(ids);
  return out;
}

SelectionOutcome select_random(std::size_t client_count, std::size_t k, Rng& rng) {
  std::vector<ClientId> pool(client_count);
  std::iota(pool.begin(), pool.end(), ClientId{0});
  return select_random(pool, client_count, k, rng);
}

SelectionOutcome select_pow_d(std::span<const ClientId> pool, std::size_t client_count,
                              std::size_t candidates, std::size_t k, Rng& rng,
                              const LossProbe& local_loss) {
  if (candidates < k)
    throw ConfigError("candidate count d must be >= K", "pow_d_candidates");
  if (candidates > pool.size())
    throw ConfigError("candidate count d exceeds the client pool", "pow_d_candidates");
  auto drawn = select_random(pool, client_count, candidates, rng);
  SelectionOutcome out;
  out.scores.assign(client_count, kNaN);
  const auto losses = local_loss(drawn.selected);
  if (losses.size() != drawn.selected.size())
    throw std::logic_error("loss probe must return one loss per candidate");
  for (std::size_t j = 0; j < losses.size(); ++j) out.scores[drawn.selected[j]] = losses[j];
  out.evaluated = drawn.selected;
  out.selected = top_k(out.scores, {}, k);
  return out;
}

SelectionOutcome select_top_gp(std::span<const double> gp_values, std::size_t k,
                               std::span<const std::size_t> pulls) {
  SelectionOutcome out;
  out.scores.assign(gp_values.begin(), gp_values.end());
  out.selected = top_k(out.scores, pulls, k);
  return out;
}

void record_rewards(BanditStats& stats, std::span<const ClientId> selected,
                    std::span<const double> rewards) {
  if (selected.size() != rewards.size())
    throw std::logic_error("one reward per selected client is required");
  for (std::size_t j = 0; j < selected.size(); ++j) {
    auto& arm = stats.arms.at(selected[j]);
    arm.reward_sum += std::clamp(rewards[j], 0.0, 1.0);
    arm.pulls += 1;
  }
  stats.total_pulls += selected.size();
  stats.rounds_observed += 1;
}

void record_rewards(BanditStats& stats, const SelectionOutcome& outcome,
                    std::span<const std::pair<ClientId, double>> rewards) {
  std::vector<double> ordered(outcome.selected.size(), kNaN);
  for (const auto& [id, mu] : rewards) {
    const auto it = std::find(outcome.selected.begin(), outcome.selected.end(), id);
    if (it == outcome.selected.end())
      throw std::logic_error("reward recorded for unselected client " + std::to_string(id));
    ordered[static_cast<std::size_t>(it - outcome.selected.begin())] = mu;
  }
  for (double mu : ordered)
    if (std::isnan(mu)) throw std::logic_error("selected client without a reward");
  record_rewards(stats, outcome.selected, ordered);
}

}  // namespace fedsel
