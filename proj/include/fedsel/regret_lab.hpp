#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <vector>

#include "fedsel/selection.hpp"

namespace fedsel {

enum class RewardFamily { kGaussian, kBernoulli };

// IID arms. Gaussian rewards are clipped to [0, 1].
struct BanditEnv {
  std::vector<double> means;
  std::vector<double> stddevs;
  RewardFamily family = RewardFamily::kGaussian;
  std::size_t k = 1;  // super-arm size
  std::uint64_t seed = 0;

  std::size_t arm_count() const noexcept { return means.size(); }
  void validate() const;
  double sample(std::size_t arm, Rng& rng) const;
  // Sum of the K largest means minus sum of the K smallest.
  double max_round_gap() const;

  // n arms with means evenly spaced over [lo, hi], common stddev.
  static BanditEnv spread(std::size_t arms, double lo, double hi, double stddev, std::size_t k,
                          std::uint64_t seed);
};

// t * e^{-tau/2} / (1 - (t + 1) e^{-tau/2}); nullopt where the denominator is <= 0.
std::optional<double> theorem_bound(double t, double tau);

// 2 ln n / n_i
double tau_of(double n, double n_i);

struct RegretCurve {
  std::vector<double> mean;    // cumulative regret after round t (index t-1)
  std::vector<double> stderr_;  // standard error across replications
  std::vector<double> mean_min_pulls;  // replication mean of min_i n_i after round t
  std::vector<double> total_pulls;     // n after round t
  std::vector<std::vector<double>> pull_fraction;  // per round, per arm (replication mean)
  std::size_t replications = 0;
};

struct SimulationOptions {
  std::size_t rounds = 1000;
  double rho = 1.0;
  std::size_t replications = 100;
  std::optional<double> fixed_alpha;
  bool keep_pull_fractions = false;
};

// Pull every arm once, then each round select the top-K GPCB super-arm and
// observe its rewards. Regret increment: oracle top-K mean sum minus the
// selected arms' mean sum.
RegretCurve simulate_iid_serial(const BanditEnv& env, const SimulationOptions& opts);
RegretCurve simulate_iid(const BanditEnv& env, const SimulationOptions& opts);

struct BoundRow {
  std::size_t t = 0;
  double empirical = 0.0;
  double stderr_ = 0.0;
  double tau = 0.0;
  std::optional<double> bound;
  bool satisfied = false;  // meaningful only when bound is set
};

struct BoundReport {
  std::vector<BoundRow> rows;
  std::size_t defined_rounds = 0;
  std::size_t satisfied_rounds = 0;

  double defined_fraction() const;
  double satisfied_fraction() const;  // over defined rounds; 1 when none defined
};

// tau at round t uses live counts: n after the round and the replication-mean
// pull count of the least-pulled arm.
BoundReport bound_check(const BanditEnv& env, const SimulationOptions& opts);
BoundReport bound_report(const RegretCurve& curve);

// Columns: t, empirical_regret, stderr, bound, defined, satisfied.
void write_bound_csv(std::ostream& os, const BoundReport& report);

}  // namespace fedsel
