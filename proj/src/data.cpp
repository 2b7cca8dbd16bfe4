#include "fedsel/data.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <istream>
#include <numeric>
#include <ostream>
#include <random>
#include <sstream>
#include <string>

#include <fmt/core.h>

#include "fedsel/error.hpp"
#include "fedsel/rng.hpp"

namespace fedsel {

namespace {

std::vector<std::vector<double>> class_means(int class_count, std::size_t dims, double sep,
                                             Rng& rng) {
  const auto L = static_cast<std::size_t>(class_count);
  std::vector<std::vector<double>> means(L, std::vector<double>(dims, 0.0));
  if (dims >= L) {
    // Scaled basis vectors are exactly sep apart.
    const double r = sep / std::sqrt(2.0);
    for (std::size_t c = 0; c < L; ++c) means[c][c] = r;
    return means;
  }
  double half =
      std::max(sep, sep * std::ceil(std::pow(static_cast<double>(L), 1.0 / dims)));
  std::size_t placed = 0;
  int failures = 0;
  while (placed < L) {
    std::uniform_real_distribution<double> u(-half, half);
    for (auto& v : means[placed]) v = u(rng);
    bool ok = true;
    for (std::size_t j = 0; j < placed && ok; ++j) {
      double d2 = 0.0;
      for (std::size_t k = 0; k < dims; ++k) {
        const double diff = means[placed][k] - means[j][k];
        d2 += diff * diff;
      }
      ok = d2 >= sep * sep;
    }
    if (ok) {
      ++placed;
      failures = 0;
    } else if (++failures > 1000) {
      half *= 1.1;
      failures = 0;
    }
  }
  return means;
}

std::vector<std::size_t> sorted_by_label(const Dataset& ds) {
  std::vector<std::size_t> order(ds.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return ds.labels[a] < ds.labels[b];
  });
  return order;
}

}  // namespace

Dataset gen_synthetic(int class_count, std::size_t per_class, std::size_t dims, double sep,
                      std::uint64_t seed) {
  if (class_count <= 0 || per_class == 0 || dims == 0)
    throw ConfigError("synthetic dataset sizes must be positive");
  Rng rng(derive_seed(seed, static_cast<std::uint64_t>(Stream::kData)));
  const auto means = class_means(class_count, dims, sep, rng);
  Dataset ds;
  ds.dims = dims;
  ds.class_count = class_count;
  const auto L = static_cast<std::size_t>(class_count);
  ds.features.reserve(L * per_class * dims);
  ds.labels.reserve(L * per_class);
  std::normal_distribution<double> noise(0.0, 1.0);
  for (std::size_t c = 0; c < L; ++c) {
    for (std::size_t s = 0; s < per_class; ++s) {
      for (std::size_t k = 0; k < dims; ++k) ds.features.push_back(means[c][k] + noise(rng));
      ds.labels.push_back(static_cast<int>(c));
    }
  }
  return ds;
}

void PartitionSpec::validate() const {
  if (client_count == 0) throw ConfigError("must be positive", "partition.clients");
  if (const auto* s = std::get_if<ShardsPerClient>(&scheme)) {
    if (s->shards == 0) throw ConfigError("must be positive", "partition.shards_per_client");
  } else {
    const auto& d = std::get<Dirichlet>(scheme);
    if (!(d.zeta > 0.0) || !std::isfinite(d.zeta))
      throw ConfigError("must be > 0", "partition.zeta");
    if (d.max_draws < 1) throw ConfigError("must be >= 1", "partition.max_draws");
  }
}

std::vector<std::vector<std::size_t>> label_histograms(
    const Dataset& ds, const std::vector<std::vector<std::size_t>>& assignment) {
  std::vector<std::vector<std::size_t>> hist(
      assignment.size(), std::vector<std::size_t>(static_cast<std::size_t>(ds.class_count), 0));
  for (std::size_t i = 0; i < assignment.size(); ++i)
    for (auto idx : assignment[i]) ++hist[i][static_cast<std::size_t>(ds.labels[idx])];
  return hist;
}

Partition partition_shards(const Dataset& ds, const PartitionSpec& spec) {
  spec.validate();
  const auto s = std::get<ShardsPerClient>(spec.scheme).shards;
  const auto shard_count = spec.client_count * s;
  if (ds.size() == 0 || ds.size() % shard_count != 0)
    throw ConfigError(fmt::format("{} samples cannot be cut into {} equal shards", ds.size(),
                                  shard_count),
                      "partition");
  const auto shard_size = ds.size() / shard_count;
  const auto order = sorted_by_label(ds);

  std::vector<std::size_t> shard_ids(shard_count);
  std::iota(shard_ids.begin(), shard_ids.end(), std::size_t{0});
  Rng rng(derive_seed(spec.seed, static_cast<std::uint64_t>(Stream::kPartition)));
  std::shuffle(shard_ids.begin(), shard_ids.end(), rng);

  Partition p;
  p.assignment.resize(spec.client_count);
  for (std::size_t c = 0; c < spec.client_count; ++c) {
    auto& mine = p.assignment[c];
    for (std::size_t k = 0; k < s; ++k) {
      const auto shard = shard_ids[c * s + k];
      mine.insert(mine.end(), order.begin() + static_cast<std::ptrdiff_t>(shard * shard_size),
                  order.begin() + static_cast<std::ptrdiff_t>((shard + 1) * shard_size));
    }
    std::sort(mine.begin(), mine.end());
  }
  p.label_histogram = label_histograms(ds, p.assignment);
  return p;
}

std::vector<std::size_t> largest_remainder(const std::vector<double>& values,
                                           std::size_t total) {
  std::vector<std::size_t> out(values.size(), 0);
  const double sum = std::accumulate(values.begin(), values.end(), 0.0);
  if (total == 0) return out;
  if (!(sum > 0.0)) throw ConfigError("cannot apportion a positive total over zero weights");
  const double scale = static_cast<double>(total) / sum;
  std::vector<std::pair<double, std::size_t>> rem;
  rem.reserve(values.size());
  std::size_t assigned = 0;
  for (std::size_t i = 0; i < values.size(); ++i) {
    const double v = std::max(0.0, values[i]) * scale;
    const auto f = static_cast<std::size_t>(std::floor(v));
    out[i] = f;
    assigned += f;
    rem.emplace_back(v - static_cast<double>(f), i);
  }
  // Floating error can push the floors one over; trim from the smallest remainders.
  std::stable_sort(rem.begin(), rem.end(),
                   [](const auto& a, const auto& b) { return a.first > b.first; });
  for (std::size_t k = 0; assigned < total; k = (k + 1) % rem.size()) {
    ++out[rem[k].second];
    ++assigned;
  }
  for (std::size_t k = rem.size(); assigned > total && k > 0; --k) {
    auto& slot = out[rem[k - 1].second];
    if (slot > 0) {
      --slot;
      --assigned;
    }
  }
  return out;
}

namespace {

double spectral_norm_sq(const FractionMatrix& q) {
  std::vector<double> v(q.cols, 1.0 / std::sqrt(static_cast<double>(q.cols)));
  std::vector<double> qv(q.rows);
  double lambda = 0.0;
  for (int it = 0; it < 200; ++it) {
    for (std::size_t r = 0; r < q.rows; ++r) {
      double s = 0.0;
      for (std::size_t c = 0; c < q.cols; ++c) s += q(r, c) * v[c];
      qv[r] = s;
    }
    std::vector<double> w(q.cols, 0.0);
    for (std::size_t r = 0; r < q.rows; ++r)
      for (std::size_t c = 0; c < q.cols; ++c) w[c] += q(r, c) * qv[r];
    const double norm = std::sqrt(std::inner_product(w.begin(), w.end(), w.begin(), 0.0));
    if (norm == 0.0) return 0.0;
    const double next = norm;
    for (std::size_t c = 0; c < q.cols; ++c) v[c] = w[c] / norm;
    if (std::abs(next - lambda) <= 1e-12 * next) {
      lambda = next;
      break;
    }
    lambda = next;
  }
  return lambda;
}

double norm2(const std::vector<double>& v) {
  return std::sqrt(std::inner_product(v.begin(), v.end(), v.begin(), 0.0));
}

}  // namespace

LeastNormResult solve_least_norm(const FractionMatrix& q, const std::vector<double>& d,
                                 const LeastNormOptions& opts) {
  if (q.rows != d.size() || q.values.size() != q.rows * q.cols || q.cols == 0)
    throw ConfigError("fraction matrix and label totals disagree in shape");
  for (double v : d)
    if (!(v >= 0.0)) throw ConfigError("label totals must be nonnegative");

  LeastNormResult res;
  res.sizes.assign(q.cols, 0.0);
  const double d_norm = norm2(d);
  const double total = std::accumulate(d.begin(), d.end(), 0.0);
  if (d_norm == 0.0) {
    res.rounded.assign(q.cols, 0);
    return res;
  }

  const double lipschitz = 2.0 * (spectral_norm_sq(q) * 1.01 + opts.ridge);
  const double step = 1.0 / lipschitz;
  auto& x = res.sizes;
  std::vector<double> resid(q.rows);
  std::vector<double> grad(q.cols);

  auto residual = [&] {
    for (std::size_t r = 0; r < q.rows; ++r) {
      double s = -d[r];
      for (std::size_t c = 0; c < q.cols; ++c) s += q(r, c) * x[c];
      resid[r] = s;
    }
    return norm2(resid) / d_norm;
  };

  double rel = residual();
  std::size_t it = 0;
  for (; it < opts.max_iterations && rel >= opts.residual_tol; ++it) {
    for (std::size_t c = 0; c < q.cols; ++c) {
      double g = 2.0 * opts.ridge * x[c];
      for (std::size_t r = 0; r < q.rows; ++r) g += 2.0 * q(r, c) * resid[r];
      grad[c] = g;
    }
    double moved = 0.0;
    double size = 0.0;
    for (std::size_t c = 0; c < q.cols; ++c) {
      const double next = std::max(0.0, x[c] - step * grad[c]);
      moved += (next - x[c]) * (next - x[c]);
      size += next * next;
      x[c] = next;
    }
    rel = residual();
    if (std::sqrt(moved) <= 1e-13 * (1.0 + std::sqrt(size))) {
      ++it;
      break;
    }
  }
  res.iterations = it;
  res.relative_residual = rel;
  if (rel > opts.feasibility_tol)
    throw PartitionError(
        fmt::format("least-norm size allocation left relative residual {:.4f} > {:.2f}; "
                    "try a larger zeta or more clients",
                    rel, opts.feasibility_tol),
        rel);

  const double x_sum = std::accumulate(x.begin(), x.end(), 0.0);
  const auto target =
      std::min(static_cast<std::size_t>(std::llround(x_sum)), static_cast<std::size_t>(total));
  res.rounded = largest_remainder(x, target);
  return res;
}

Partition partition_dirichlet(const Dataset& ds, const PartitionSpec& spec) {
  spec.validate();
  const auto& dir = std::get<Dirichlet>(spec.scheme);
  const auto L = static_cast<std::size_t>(ds.class_count);
  const auto N = spec.client_count;
  const auto counts = ds.class_counts();
  for (auto c : counts)
    if (c == 0) throw ConfigError("every class needs at least one sample", "dataset");

  std::vector<double> prior(L), d(L);
  for (std::size_t l = 0; l < L; ++l) {
    d[l] = static_cast<double>(counts[l]);
    prior[l] = d[l] / static_cast<double>(ds.size());
  }

  Rng rng(derive_seed(spec.seed, static_cast<std::uint64_t>(Stream::kPartition)));
  FractionMatrix q{L, N, std::vector<double>(L * N, 0.0)};
  std::optional<LeastNormResult> solved;
  double last_residual = 0.0;
  for (int draw = 0; draw < dir.max_draws && !solved; ++draw) {
    for (std::size_t i = 0; i < N; ++i) {
      double sum = 0.0;
      std::vector<double> g(L);
      while (!(sum > 0.0)) {
        sum = 0.0;
        for (std::size_t l = 0; l < L; ++l) {
          std::gamma_distribution<double> gamma(dir.zeta * prior[l], 1.0);
          g[l] = gamma(rng);
          sum += g[l];
        }
      }
      for (std::size_t l = 0; l < L; ++l) q(l, i) = g[l] / sum;
    }
    try {
      solved = solve_least_norm(q, d);
    } catch (const PartitionError& e) {
      last_residual = e.residual();
    }
  }
  if (!solved)
    throw PartitionError(
        fmt::format("no feasible size allocation in {} draws (last relative residual {:.4f}); "
                    "try a larger zeta or more clients",
                    dir.max_draws, last_residual),
        last_residual);

  // Per-client label counts, then trim any label demanded beyond its supply.
  std::vector<std::vector<std::size_t>> want(N);
  for (std::size_t i = 0; i < N; ++i) {
    std::vector<double> mix(L);
    for (std::size_t l = 0; l < L; ++l) mix[l] = q(l, i);
    want[i] = largest_remainder(mix, solved->rounded[i]);
  }
  for (std::size_t l = 0; l < L; ++l) {
    std::size_t demand = 0;
    for (std::size_t i = 0; i < N; ++i) demand += want[i][l];
    if (demand <= counts[l]) continue;
    std::vector<double> share(N);
    for (std::size_t i = 0; i < N; ++i) share[i] = static_cast<double>(want[i][l]);
    const auto trimmed = largest_remainder(share, counts[l]);
    for (std::size_t i = 0; i < N; ++i) want[i][l] = trimmed[i];
  }

  std::vector<std::vector<std::size_t>> pools(L);
  for (std::size_t idx : sorted_by_label(ds))
    pools[static_cast<std::size_t>(ds.labels[idx])].push_back(idx);
  for (auto& pool : pools) std::shuffle(pool.begin(), pool.end(), rng);

  Partition p;
  p.assignment.resize(N);
  std::vector<std::size_t> cursor(L, 0);
  for (std::size_t i = 0; i < N; ++i) {
    for (std::size_t l = 0; l < L; ++l) {
      for (std::size_t k = 0; k < want[i][l]; ++k) p.assignment[i].push_back(pools[l][cursor[l]++]);
    }
    std::sort(p.assignment[i].begin(), p.assignment[i].end());
  }
  p.label_histogram = label_histograms(ds, p.assignment);
  p.residual = solved->relative_residual;
  return p;
}

Partition make_partition(const Dataset& ds, const PartitionSpec& spec) {
  if (std::holds_alternative<ShardsPerClient>(spec.scheme)) return partition_shards(ds, spec);
  return partition_dirichlet(ds, spec);
}

PartitionStats partition_stats(const Partition& p) {
  if (p.assignment.empty()) throw ConfigError("partition has no clients");
  PartitionStats st;
  st.clients = p.assignment.size();
  std::vector<double> sizes, labels;
  for (std::size_t i = 0; i < st.clients; ++i) {
    sizes.push_back(static_cast<double>(p.assignment[i].size()));
    std::size_t distinct = 0;
    if (i < p.label_histogram.size())
      for (auto c : p.label_histogram[i]) distinct += c > 0 ? 1 : 0;
    labels.push_back(static_cast<double>(distinct));
    st.samples += p.assignment[i].size();
  }
  auto moments = [](const std::vector<double>& v) {
    const double n = static_cast<double>(v.size());
    const double mean = std::accumulate(v.begin(), v.end(), 0.0) / n;
    double var = 0.0;
    for (double x : v) var += (x - mean) * (x - mean);
    return std::pair{mean, std::sqrt(var / n)};
  };
  std::tie(st.mean_size, st.stdev_size) = moments(sizes);
  std::tie(st.mean_labels, st.stdev_labels) = moments(labels);
  const auto [lo, hi] = std::minmax_element(sizes.begin(), sizes.end());
  st.min_size = static_cast<std::size_t>(*lo);
  st.max_size = static_cast<std::size_t>(*hi);
  return st;
}

void write_partition(std::ostream& os, const Partition& p) {
  for (const auto& client : p.assignment) {
    for (std::size_t k = 0; k < client.size(); ++k) {
      if (k) os << ' ';
      os << client[k];
    }
    os << '\n';
  }
}

Partition read_partition(std::istream& is, const Dataset& ds) {
  Partition p;
  std::vector<bool> seen(ds.size(), false);
  std::string line;
  while (std::getline(is, line)) {
    std::istringstream ls(line);
    std::vector<std::size_t> client;
    std::string tok;
    while (ls >> tok) {
      std::size_t idx = 0;
      try {
        std::size_t used = 0;
        idx = std::stoull(tok, &used);
        if (used != tok.size()) throw std::invalid_argument(tok);
      } catch (const std::exception&) {
        throw ConfigError("malformed sample index '" + tok + "'", "partition file");
      }
      if (idx >= ds.size())
        throw ConfigError(fmt::format("sample index {} out of range", idx), "partition file");
      if (seen[idx])
        throw ConfigError(fmt::format("sample index {} assigned twice", idx), "partition file");
      seen[idx] = true;
      client.push_back(idx);
    }
    p.assignment.push_back(std::move(client));
  }
  p.label_histogram = label_histograms(ds, p.assignment);
  return p;
}

namespace {

std::uint32_t read_be32(std::istream& is) {
  std::array<unsigned char, 4> b{};
  if (!is.read(reinterpret_cast<char*>(b.data()), 4))
    throw ConfigError("truncated IDX header", "dataset");
  return (std::uint32_t{b[0]} << 24) | (std::uint32_t{b[1]} << 16) | (std::uint32_t{b[2]} << 8) |
         std::uint32_t{b[3]};
}

}  // namespace

Dataset load_idx(const std::filesystem::path& images, const std::filesystem::path& labels,
                 std::size_t limit) {
  std::ifstream img(images, std::ios::binary);
  std::ifstream lab(labels, std::ios::binary);
  if (!img) throw ConfigError("cannot open " + images.string(), "dataset.images");
  if (!lab) throw ConfigError("cannot open " + labels.string(), "dataset.labels");
  if (read_be32(img) != 0x00000803u) throw ConfigError("bad IDX image magic", "dataset.images");
  if (read_be32(lab) != 0x00000801u) throw ConfigError("bad IDX label magic", "dataset.labels");
  const std::size_t n = read_be32(img);
  const std::size_t rows = read_be32(img);
  const std::size_t cols = read_be32(img);
  if (read_be32(lab) != n) throw ConfigError("image and label counts differ", "dataset");
  const std::size_t count = limit ? std::min(limit, n) : n;

  Dataset ds;
  ds.dims = rows * cols;
  ds.features.resize(count * ds.dims);
  ds.labels.resize(count);
  std::vector<unsigned char> buf(ds.dims);
  int max_label = -1;
  for (std::size_t i = 0; i < count; ++i) {
    if (!img.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size())))
      throw ConfigError("truncated IDX image data", "dataset.images");
    for (std::size_t k = 0; k < ds.dims; ++k) ds.features[i * ds.dims + k] = buf[k] / 255.0;
    char y = 0;
    if (!lab.get(y)) throw ConfigError("truncated IDX label data", "dataset.labels");
    ds.labels[i] = static_cast<unsigned char>(y);
    max_label = std::max(max_label, ds.labels[i]);
  }
  ds.class_count = max_label + 1;
  return ds;
}

}  // namespace fedsel
