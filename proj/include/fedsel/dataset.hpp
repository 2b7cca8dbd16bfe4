#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace fedsel {

// Labeled samples stored row-major. Labels lie in [0, class_count).
struct Dataset {
  std::vector<double> features;
  std::vector<int> labels;
  std::size_t dims = 0;
  int class_count = 0;

  std::size_t size() const noexcept { return labels.size(); }

  std::span<const double> row(std::size_t i) const noexcept {
    return {features.data() + i * dims, dims};
  }

  std::vector<std::size_t> class_counts() const;

  // Throws ConfigError when labels or row sizes are inconsistent.
  void validate() const;
};

}  // namespace fedsel
