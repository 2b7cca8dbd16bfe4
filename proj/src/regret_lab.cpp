#include "fedsel/regret_lab.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <functional>
#include <numeric>
#include <ostream>
#include <random>

#include <fmt/format.h>
#include <fmt/ostream.h>

#include "fedsel/error.hpp"
#include "fedsel/parallel.hpp"

namespace fedsel {

void BanditEnv::validate() const {
  if (means.empty()) throw ConfigError("bandit needs at least one arm", "arms");
  if (stddevs.size() != means.size())
    throw ConfigError("one stddev per arm is required", "arms");
  for (double m : means)
    if (!(m >= 0.0 && m <= 1.0)) throw ConfigError("arm means must lie in [0, 1]", "arms");
  for (double s : stddevs)
    if (!(s >= 0.0)) throw ConfigError("stddevs must be nonnegative", "arms");
  if (k == 0 || k > means.size()) throw ConfigError("K must lie in [1, arms]", "k");
}

double BanditEnv::sample(std::size_t arm, Rng& rng) const {
  if (family == RewardFamily::kBernoulli) {
    std::bernoulli_distribution b(means[arm]);
    return b(rng) ? 1.0 : 0.0;
  }
  std::normal_distribution<double> g(means[arm], stddevs[arm]);
  return std::clamp(g(rng), 0.0, 1.0);
}

double BanditEnv::max_round_gap() const {
  auto m = means;
  std::sort(m.begin(), m.end());
  double lo = 0.0, hi = 0.0;
  for (std::size_t j = 0; j < k; ++j) {
    lo += m[j];
    hi += m[m.size() - 1 - j];
  }
  return hi - lo;
}

BanditEnv BanditEnv::spread(std::size_t arms, double lo, double hi, double stddev, std::size_t k,
                            std::uint64_t seed) {
  BanditEnv env;
  for (std::size_t i = 0; i < arms; ++i)
    env.means.push_back(arms == 1 ? lo : lo + (hi - lo) * static_cast<double>(i) /
                                                  static_cast<double>(arms - 1));
  env.stddevs.assign(arms, stddev);
  env.k = k;
  env.seed = seed;
  return env;
}

std::optional<double> theorem_bound(double t, double tau) {
  const double e = std::exp(-tau / 2.0);
  const double denom = 1.0 - (t + 1.0) * e;
  if (!(denom > 0.0)) return std::nullopt;
  return t * e / denom;
}

double tau_of(double n, double n_i) {
  if (!(n_i > 0.0)) throw UnpulledArm("tau undefined for an unpulled arm");
  if (!(n >= 1.0)) throw ConfigError("total pulls must be >= 1");
  return 2.0 * std::log(n) / n_i;
}

namespace {

struct Replication {
  std::vector<double> regret;     // cumulative, per round
  std::vector<double> min_pulls;  // per round
  std::vector<std::vector<double>> pull_fraction;
};

Replication run_replication(const BanditEnv& env, const SimulationOptions& opts,
                            std::size_t rep) {
  Rng rng(derive_seed(env.seed, static_cast<std::uint64_t>(Stream::kBandit), rep));
  const auto arms = env.arm_count();
  BanditStats stats(arms);
  stats.horizon = opts.rounds;
  stats.rho = opts.rho;
  stats.fixed_alpha = opts.fixed_alpha;

  std::vector<ClientId> all(arms);
  std::iota(all.begin(), all.end(), ClientId{0});
  std::vector<double> rewards(arms);
  for (std::size_t a = 0; a < arms; ++a) rewards[a] = env.sample(a, rng);
  record_rewards(stats, all, rewards);

  auto sorted_means = env.means;
  std::sort(sorted_means.rbegin(), sorted_means.rend());
  const double best = std::accumulate(sorted_means.begin(),
                                      sorted_means.begin() + static_cast<std::ptrdiff_t>(env.k), 0.0);

  Replication out;
  out.regret.reserve(opts.rounds);
  out.min_pulls.reserve(opts.rounds);
  double cumulative = 0.0;
  std::vector<double> picked(env.k);
  for (std::size_t t = 1; t <= opts.rounds; ++t) {
    stats.round = t;
    const auto choice = select_gpcb(stats, env.k);
    double got = 0.0;
    for (std::size_t j = 0; j < env.k; ++j) {
      picked[j] = env.sample(choice.selected[j], rng);
      got += env.means[choice.selected[j]];
    }
    record_rewards(stats, choice.selected, picked);
    cumulative += best - got;
    out.regret.push_back(cumulative);
    std::size_t least = stats.arms[0].pulls;
    for (const auto& a : stats.arms) least = std::min(least, a.pulls);
    out.min_pulls.push_back(static_cast<double>(least));
    if (opts.keep_pull_fractions) {
      std::vector<double> frac(arms);
      // Fractions of post-initialization pulls.
      for (std::size_t a = 0; a < arms; ++a)
        frac[a] = static_cast<double>(stats.arms[a].pulls - 1) / static_cast<double>(t * env.k);
      out.pull_fraction.push_back(std::move(frac));
    }
  }
  return out;
}

RegretCurve combine(const BanditEnv& env, const SimulationOptions& opts,
                    std::vector<Replication>& reps) {
  RegretCurve c;
  c.replications = reps.size();
  const auto T = opts.rounds;
  const double r = static_cast<double>(reps.size());
  c.mean.assign(T, 0.0);
  c.stderr_.assign(T, 0.0);
  c.mean_min_pulls.assign(T, 0.0);
  c.total_pulls.resize(T);
  if (opts.keep_pull_fractions)
    c.pull_fraction.assign(T, std::vector<double>(env.arm_count(), 0.0));
  for (std::size_t t = 0; t < T; ++t) {
    double sum = 0.0, sq = 0.0, pulls = 0.0;
    for (const auto& rep : reps) {
      sum += rep.regret[t];
      sq += rep.regret[t] * rep.regret[t];
      pulls += rep.min_pulls[t];
      if (opts.keep_pull_fractions)
        for (std::size_t a = 0; a < env.arm_count(); ++a)
          c.pull_fraction[t][a] += rep.pull_fraction[t][a] / r;
    }
    const double mean = sum / r;
    c.mean[t] = mean;
    const double var = reps.size() > 1 ? std::max(0.0, (sq - r * mean * mean) / (r - 1.0)) : 0.0;
    c.stderr_[t] = std::sqrt(var / r);
    c.mean_min_pulls[t] = pulls / r;
    c.total_pulls[t] = static_cast<double>(env.arm_count() + (t + 1) * env.k);
  }
  return c;
}

void check(const BanditEnv& env, const SimulationOptions& opts) {
  env.validate();
  if (opts.rounds == 0) throw ConfigError("must be >= 1", "rounds");
  if (opts.replications == 0) throw ConfigError("must be >= 1", "replications");
}

}  // namespace

RegretCurve simulate_iid_serial(const BanditEnv& env, const SimulationOptions& opts) {
  check(env, opts);
  std::vector<Replication> reps;
  reps.reserve(opts.replications);
  for (std::size_t r = 0; r < opts.replications; ++r) reps.push_back(run_replication(env, opts, r));
  return combine(env, opts, reps);
}

RegretCurve simulate_iid(const BanditEnv& env, const SimulationOptions& opts) {
  check(env, opts);
  std::vector<Replication> reps(opts.replications);
  std::exception_ptr failure;
  const auto n = static_cast<long>(opts.replications);
#pragma omp parallel for schedule(dynamic) num_threads(worker_count())
  for (long r = 0; r < n; ++r) {
    try {
      reps[static_cast<std::size_t>(r)] = run_replication(env, opts, static_cast<std::size_t>(r));
    } catch (...) {
#pragma omp critical(fedsel_bandit_failure)
      if (!failure) failure = std::current_exception();
    }
  }
  if (failure) std::rethrow_exception(failure);
  return combine(env, opts, reps);
}

double BoundReport::defined_fraction() const {
  return rows.empty() ? 0.0 : static_cast<double>(defined_rounds) / static_cast<double>(rows.size());
}

double BoundReport::satisfied_fraction() const {
  return defined_rounds == 0 ? 1.0
                             : static_cast<double>(satisfied_rounds) /
                                   static_cast<double>(defined_rounds);
}

BoundReport bound_report(const RegretCurve& curve) {
  BoundReport rep;
  for (std::size_t i = 0; i < curve.mean.size(); ++i) {
    BoundRow row;
    row.t = i + 1;
    row.empirical = curve.mean[i];
    row.stderr_ = curve.stderr_[i];
    row.tau = tau_of(curve.total_pulls[i], curve.mean_min_pulls[i]);
    row.bound = theorem_bound(static_cast<double>(row.t), row.tau);
    if (row.bound) {
      ++rep.defined_rounds;
      row.satisfied = row.empirical <= *row.bound;
      if (row.satisfied) ++rep.satisfied_rounds;
    }
    rep.rows.push_back(row);
  }
  return rep;
}

BoundReport bound_check(const BanditEnv& env, const SimulationOptions& opts) {
  return bound_report(simulate_iid(env, opts));
}

void write_bound_csv(std::ostream& os, const BoundReport& report) {
  os << "t,empirical_regret,stderr,bound,defined,satisfied\n";
  for (const auto& r : report.rows) {
    if (r.bound)
      fmt::print(os, "{},{:.10g},{:.10g},{:.10g},1,{}\n", r.t, r.empirical, r.stderr_, *r.bound,
                 r.satisfied ? 1 : 0);
    else
      fmt::print(os, "{},{:.10g},{:.10g},undefined,0,na\n", r.t, r.empirical, r.stderr_);
  }
}

}  // namespace fedsel
