#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "fedsel/gp_metric.hpp"

namespace fedsel {

// Worker threads for the parallel kernels: FEDSEL_THREADS if set, else the
// OpenMP default. Always 1 without OpenMP.
int worker_count();
void set_worker_count(int n);
bool openmp_enabled();

struct ClientJob {
  ClientId id = 0;
  std::span<const std::size_t> indices;
  const ParamVector* momentum = nullptr;
  std::uint64_t seed = 0;
};

// Local training for each job from the same global params. Results are
// returned in job order; both variants produce bit-identical output.
std::vector<LocalResult> train_clients_serial(const MlpArch& arch, const Dataset& data,
                                              std::span<const ClientJob> jobs,
                                              const ParamVector& params,
                                              const LocalTrainConfig& cfg);
std::vector<LocalResult> train_clients_parallel(const MlpArch& arch, const Dataset& data,
                                                std::span<const ClientJob> jobs,
                                                const ParamVector& params,
                                                const LocalTrainConfig& cfg);

// Local loss of `params` on each client subset (pow-d candidate probing).
std::vector<double> client_losses_parallel(const MlpArch& arch, const Dataset& data,
                                           std::span<const std::span<const std::size_t>> subsets,
                                           const ParamVector& params);

}  // namespace fedsel
