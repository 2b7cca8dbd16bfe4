#include <chrono>
#include <cstdio>
#include <vector>

#include <fmt/format.h>

#include "fedsel/data.hpp"
#include "fedsel/nn.hpp"
#include "fedsel/parallel.hpp"
#include "fedsel/regret_lab.hpp"
#include "fedsel/rng.hpp"

using namespace fedsel;

namespace {

template <class F>
double seconds(F&& f, int reps) {
  const auto t0 = std::chrono::steady_clock::now();
  for (int r = 0; r < reps; ++r) f();
  const std::chrono::duration<double> dt = std::chrono::steady_clock::now() - t0;
  return dt.count() / reps;
}

void bench_training() {
  const auto data = gen_synthetic(10, 400, 64, 4.0, 7);
  const MlpArch arch{{64, 64, 30, 10}, Activation::kRelu};
  const auto params = init_params(arch, 1);
  PartitionSpec spec;
  spec.client_count = 40;
  spec.scheme = ShardsPerClient{2};
  const auto part = make_partition(data, spec);
  const ParamVector zero(params.size(), 0.0);
  std::vector<ClientJob> jobs;
  for (std::size_t i = 0; i < part.assignment.size(); ++i)
    jobs.push_back({i, part.assignment[i], &zero, derive_seed(3, i, 0)});
  LocalTrainConfig cfg;
  cfg.epochs = 2;

  const double serial = seconds([&] { train_clients_serial(arch, data, jobs, params, cfg); }, 3);
  const double parallel =
      seconds([&] { train_clients_parallel(arch, data, jobs, params, cfg); }, 3);
  fmt::print("local training, {} clients: serial {:.3f}s  parallel {:.3f}s  speedup {:.2f}x\n",
             jobs.size(), serial, parallel, serial / parallel);
}

void bench_bandit() {
  const auto env = BanditEnv::spread(10, 0.1, 0.9, 0.2, 1, 5);
  SimulationOptions opts;
  opts.rounds = 2000;
  opts.replications = 100;
  const double serial = seconds([&] { simulate_iid_serial(env, opts); }, 1);
  const double parallel = seconds([&] { simulate_iid(env, opts); }, 1);
  fmt::print("bandit replications, {} x {} rounds: serial {:.3f}s  parallel {:.3f}s  speedup {:.2f}x\n",
             opts.replications, opts.rounds, serial, parallel, serial / parallel);
}

}  // namespace

int main() {
  fmt::print("workers: {} (openmp {})\n", worker_count(), openmp_enabled() ? "on" : "off");
  bench_training();
  bench_bandit();
  return 0;
}
