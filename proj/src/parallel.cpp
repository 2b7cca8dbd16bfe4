#include "fedsel/parallel.hpp"

#include <cstdlib>
#include <exception>
#include <string>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace fedsel {

namespace {

int configured_workers = 0;

int env_workers() {
  if (const char* v = std::getenv("FEDSEL_THREADS")) {
    try {
      const int n = std::stoi(v);
      if (n > 0) return n;
    } catch (const std::exception&) {
    }
  }
  return 0;
}

}  // namespace

bool openmp_enabled() {
#ifdef _OPENMP
  return true;
#else
  return false;
#endif
}

int worker_count() {
#ifdef _OPENMP
  if (configured_workers > 0) return configured_workers;
  if (const int n = env_workers()) return n;
  return omp_get_max_threads();
#else
  return 1;
#endif
}

void set_worker_count(int n) { configured_workers = n > 0 ? n : 0; }

std::vector<LocalResult> train_clients_serial(const MlpArch& arch, const Dataset& data,
                                              std::span<const ClientJob> jobs,
                                              const ParamVector& params,
                                              const LocalTrainConfig& cfg) {
  std::vector<LocalResult> out;
  out.reserve(jobs.size());
  for (const auto& job : jobs)
    out.push_back(local_train(arch, data, job.indices, params, *job.momentum, cfg, job.seed));
  return out;
}

std::vector<LocalResult> train_clients_parallel(const MlpArch& arch, const Dataset& data,
                                                std::span<const ClientJob> jobs,
                                                const ParamVector& params,
                                                const LocalTrainConfig& cfg) {
  std::vector<LocalResult> out(jobs.size());
  std::exception_ptr failure;
  const auto n = static_cast<long>(jobs.size());
#pragma omp parallel for schedule(dynamic) num_threads(worker_count())
  for (long j = 0; j < n; ++j) {
    try {
      const auto& job = jobs[static_cast<std::size_t>(j)];
      out[static_cast<std::size_t>(j)] =
          local_train(arch, data, job.indices, params, *job.momentum, cfg, job.seed);
    } catch (...) {
#pragma omp critical(fedsel_train_failure)
      if (!failure) failure = std::current_exception();
    }
  }
  if (failure) std::rethrow_exception(failure);
  return out;
}

std::vector<double> client_losses_parallel(const MlpArch& arch, const Dataset& data,
                                           std::span<const std::span<const std::size_t>> subsets,
                                           const ParamVector& params) {
  std::vector<double> out(subsets.size(), 0.0);
  std::exception_ptr failure;
  const auto n = static_cast<long>(subsets.size());
#pragma omp parallel for schedule(dynamic) num_threads(worker_count())
  for (long j = 0; j < n; ++j) {
    try {
      out[static_cast<std::size_t>(j)] =
          evaluate(params, arch, data, subsets[static_cast<std::size_t>(j)]).loss;
    } catch (...) {
#pragma omp critical(fedsel_loss_failure)
      if (!failure) failure = std::current_exception();
    }
  }
  if (failure) std::rethrow_exception(failure);
  return out;
}

}  // namespace fedsel
