#pragma once

#include <cstdint>
#include <numeric>
#include <random>
#include <vector>

#include "fedsel/dataset.hpp"
#include "fedsel/nn.hpp"

namespace fixtures {

inline fedsel::Dataset random_dataset(std::size_t n, std::size_t dims, int classes,
                                      std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g(0.0, 1.0);
  std::uniform_int_distribution<int> lab(0, classes - 1);
  fedsel::Dataset ds;
  ds.dims = dims;
  ds.class_count = classes;
  for (std::size_t i = 0; i < n * dims; ++i) ds.features.push_back(g(rng));
  for (std::size_t i = 0; i < n; ++i) ds.labels.push_back(lab(rng));
  return ds;
}

inline std::vector<std::size_t> iota(std::size_t n, std::size_t from = 0) {
  std::vector<std::size_t> v(n);
  std::iota(v.begin(), v.end(), from);
  return v;
}

inline fedsel::ParamVector random_params(const fedsel::MlpArch& arch, std::uint64_t seed,
                                         double scale = 0.5) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g(0.0, scale);
  fedsel::ParamVector p(arch.param_count());
  for (auto& v : p) v = g(rng);
  return p;
}

}  // namespace fixtures
