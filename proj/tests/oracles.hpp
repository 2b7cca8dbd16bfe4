#pragma once

// Reference computations used as expected values. Written without the
// library's own helpers so a shared bug cannot hide in both.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <vector>

namespace oracle {

// Central differences of f at x, step h per coordinate.
inline std::vector<double> central_diff(const std::function<double(const std::vector<double>&)>& f,
                                        std::vector<double> x, double h) {
  std::vector<double> g(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double keep = x[i];
    x[i] = keep + h;
    const double up = f(x);
    x[i] = keep - h;
    const double down = f(x);
    x[i] = keep;
    g[i] = (up - down) / (2.0 * h);
  }
  return g;
}

// Largest per-coordinate |a - b| / max(|a|, |b|, floor).
inline double max_rel_error(const std::vector<double>& a, const std::vector<double>& b,
                            double floor = 1e-6) {
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double scale = std::max({std::abs(a[i]), std::abs(b[i]), floor});
    worst = std::max(worst, std::abs(a[i] - b[i]) / scale);
  }
  return worst;
}

// Best K-subset of additive scores by enumerating all bitmasks. Returns the
// best sum; `argmax` receives every mask achieving it (within tol).
inline double best_subset_sum(const std::vector<double>& u, std::size_t k,
                              std::vector<unsigned>* argmax = nullptr, double tol = 1e-12) {
  const unsigned n = static_cast<unsigned>(u.size());
  double best = -std::numeric_limits<double>::infinity();
  std::vector<std::pair<unsigned, double>> all;
  for (unsigned mask = 0; mask < (1u << n); ++mask) {
    if (static_cast<std::size_t>(__builtin_popcount(mask)) != k) continue;
    double s = 0.0;
    for (unsigned i = 0; i < n; ++i)
      if (mask & (1u << i)) s += u[i];
    all.emplace_back(mask, s);
    best = std::max(best, s);
  }
  if (argmax) {
    argmax->clear();
    for (auto [m, s] : all)
      if (s >= best - tol) argmax->push_back(m);
  }
  return best;
}

// Dense projected gradient for min ||Qx - d||^2 + ridge ||x||^2, x >= 0.
// Q is rows x cols row-major. Fixed step from the Frobenius norm bound.
inline std::vector<double> nnls_projected_gradient(const std::vector<double>& q, std::size_t rows,
                                                   std::size_t cols, const std::vector<double>& d,
                                                   double ridge, std::size_t iterations) {
  double fro2 = 0.0;
  for (double v : q) fro2 += v * v;
  const double step = 1.0 / (2.0 * (fro2 + ridge));
  std::vector<double> x(cols, 0.0), r(rows), g(cols);
  for (std::size_t it = 0; it < iterations; ++it) {
    for (std::size_t i = 0; i < rows; ++i) {
      double s = -d[i];
      for (std::size_t j = 0; j < cols; ++j) s += q[i * cols + j] * x[j];
      r[i] = s;
    }
    for (std::size_t j = 0; j < cols; ++j) {
      double s = 2.0 * ridge * x[j];
      for (std::size_t i = 0; i < rows; ++i) s += 2.0 * q[i * cols + j] * r[i];
      g[j] = s;
    }
    for (std::size_t j = 0; j < cols; ++j) x[j] = std::max(0.0, x[j] - step * g[j]);
  }
  return x;
}

inline double relative_residual(const std::vector<double>& q, std::size_t rows, std::size_t cols,
                                const std::vector<double>& d, const std::vector<double>& x) {
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < rows; ++i) {
    double s = -d[i];
    for (std::size_t j = 0; j < cols; ++j) s += q[i * cols + j] * x[j];
    num += s * s;
    den += d[i] * d[i];
  }
  return std::sqrt(num / den);
}

}  // namespace oracle
