#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <variant>
#include <vector>

#include "fedsel/dataset.hpp"

namespace fedsel {

// Gaussian clusters (unit variance), one mean per class, class means at
// pairwise distance >= sep. Samples are grouped by class.
Dataset gen_synthetic(int class_count, std::size_t per_class, std::size_t dims,
                      double sep, std::uint64_t seed);

struct ShardsPerClient {
  std::size_t shards = 1;
};

struct Dirichlet {
  double zeta = 0.2;
  // Fresh fraction-matrix draws tried before giving up on an infeasible
  // size allocation. 1 reproduces single-draw semantics.
  int max_draws = 20;
};

struct PartitionSpec {
  std::variant<ShardsPerClient, Dirichlet> scheme;
  std::size_t client_count = 0;
  std::uint64_t seed = 0;

  void validate() const;
};

struct Partition {
  std::vector<std::vector<std::size_t>> assignment;
  std::vector<std::vector<std::size_t>> label_histogram;
  // Relative residual ||Qx - d|| / ||d|| of the size allocation (Dirichlet only).
  std::optional<double> residual;

  std::size_t client_count() const noexcept { return assignment.size(); }
};

std::vector<std::vector<std::size_t>> label_histograms(
    const Dataset& ds, const std::vector<std::vector<std::size_t>>& assignment);

// Sort by (label, index), cut into client_count * shards equal contiguous
// shards, deal them out at random.
Partition partition_shards(const Dataset& ds, const PartitionSpec& spec);

// L x N label-fraction matrix; column i is client i's label distribution.
struct FractionMatrix {
  std::size_t rows = 0;  // labels
  std::size_t cols = 0;  // clients
  std::vector<double> values;  // row-major

  double operator()(std::size_t r, std::size_t c) const { return values[r * cols + c]; }
  double& operator()(std::size_t r, std::size_t c) { return values[r * cols + c]; }
};

struct LeastNormOptions {
  double ridge = 1e-6;
  std::size_t max_iterations = 100000;
  double residual_tol = 1e-8;
  double feasibility_tol = 0.05;
};

struct LeastNormResult {
  std::vector<double> sizes;          // continuous solution, >= 0
  std::vector<std::size_t> rounded;   // integer client sizes, sum <= sum(d)
  double relative_residual = 0.0;     // before rounding
  std::size_t iterations = 0;
};

// Projected gradient on ||Qx - d||^2 + ridge ||x||^2 over x >= 0, started at
// zero. Throws PartitionError when the relative residual stays above
// feasibility_tol.
LeastNormResult solve_least_norm(const FractionMatrix& q, const std::vector<double>& d,
                                 const LeastNormOptions& opts = {});

// Per-client label mixes q_i ~ Dir(zeta * p), sizes from solve_least_norm,
// samples drawn per label without replacement.
Partition partition_dirichlet(const Dataset& ds, const PartitionSpec& spec);

Partition make_partition(const Dataset& ds, const PartitionSpec& spec);

struct PartitionStats {
  std::size_t clients = 0;
  std::size_t samples = 0;
  double mean_size = 0.0;
  double stdev_size = 0.0;
  double mean_labels = 0.0;
  double stdev_labels = 0.0;
  std::size_t min_size = 0;
  std::size_t max_size = 0;
};

// Population standard deviations. Throws ConfigError on an empty partition.
PartitionStats partition_stats(const Partition& p);

// Largest-remainder rounding of nonnegative `values` to integers summing to `total`.
std::vector<std::size_t> largest_remainder(const std::vector<double>& values,
                                           std::size_t total);

// Text format: one line per client, whitespace-separated sample indices.
void write_partition(std::ostream& os, const Partition& p);
Partition read_partition(std::istream& is, const Dataset& ds);

// IDX (big-endian) image/label files, e.g. MNIST. Pixels scaled to [0, 1].
Dataset load_idx(const std::filesystem::path& images, const std::filesystem::path& labels,
                 std::size_t limit = 0);

}  // namespace fedsel
