#include "fedsel/gp_metric.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "fedsel/error.hpp"
#include "fedsel/rng.hpp"

namespace fedsel {

GlobalDirection::GlobalDirection(ParamVector v) : vec_(std::move(v)) {
  norm_ = std::sqrt(std::inner_product(vec_.begin(), vec_.end(), vec_.begin(), 0.0));
}

GlobalDirection GlobalDirection::average(std::span<const ParamVector* const> dirs) {
  if (dirs.empty()) throw ConfigError("cannot average zero directions");
  ParamVector sum(dirs.front()->size(), 0.0);
  for (const auto* d : dirs) {
    if (d->size() != sum.size()) throw ConfigError("direction length mismatch");
    for (std::size_t k = 0; k < sum.size(); ++k) sum[k] += (*d)[k];
  }
  const double inv = 1.0 / static_cast<double>(dirs.size());
  for (auto& v : sum) v *= inv;
  return GlobalDirection(std::move(sum));
}

void mgd_step(ParamVector& params, ParamVector& momentum, std::span<const double> grad,
              double gamma, double eta) {
  if (params.size() != momentum.size() || params.size() != grad.size())
    throw ConfigError("mgd_step: parameter, momentum and gradient lengths differ");
  if (!(gamma > 0.0 && gamma < 1.0)) throw ConfigError("momentum factor must lie in (0, 1)");
  if (!(eta >= 0.0)) throw ConfigError("learning rate must be nonnegative");
  for (std::size_t k = 0; k < params.size(); ++k) {
    momentum[k] = gamma * momentum[k] + grad[k];
    params[k] -= eta * momentum[k];
  }
}

LocalResult local_train(const MlpArch& arch, const Dataset& data,
                        std::span<const std::size_t> client_indices, const ParamVector& params,
                        const ParamVector& momentum, const LocalTrainConfig& cfg,
                        std::uint64_t seed) {
  LocalResult out{params, momentum, ParamVector(params.size(), 0.0), 0, false};
  if (momentum.size() != params.size())
    throw ConfigError("momentum buffer length does not match parameters");
  if (client_indices.empty()) {
    out.skipped = true;
    return out;
  }
  if (cfg.epochs == 0 || cfg.batch_size == 0)
    throw ConfigError("local epochs and batch size must be positive");

  std::vector<std::size_t> order(client_indices.begin(), client_indices.end());
  Rng rng(seed);
  const auto n = order.size();
  for (std::size_t e = 0; e < cfg.epochs; ++e) {
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t start = 0; start < n; start += cfg.batch_size) {
      const auto len = std::min(cfg.batch_size, n - start);
      auto lg = loss_and_grad(out.params, arch, data,
                              std::span<const std::size_t>(order).subspan(start, len),
                              cfg.sgd.weight_decay);
      mgd_step(out.params, out.momentum, lg.grad, cfg.sgd.momentum, cfg.sgd.learning_rate);
      out.last_grad = std::move(lg.grad);
      ++out.steps;
    }
  }
  return out;
}

double gradient_projection(std::span<const double> direction, const GlobalDirection& global) {
  if (!(global.norm() > 0.0))
    throw ProjectionUndefined("global direction has zero norm");
  if (direction.size() != global.vector().size())
    throw ConfigError("projection operands differ in length");
  const double dot =
      std::inner_product(direction.begin(), direction.end(), global.vector().begin(), 0.0);
  return dot / global.norm();
}

std::vector<double> normalize_gp(std::span<const double> values) {
  if (values.empty()) return {};
  const double m = *std::max_element(values.begin(), values.end());
  std::vector<double> out(values.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < values.size(); ++i) {
    out[i] = std::exp(values[i] - m);
    sum += out[i];
  }
  for (auto& v : out) v /= sum;
  return out;
}

double adjust_reward(double normalized_gp, double acc, double acc_prev, double loss,
                     double loss_prev, double accuracy_epsilon) {
  if (std::abs(acc - acc_prev) > accuracy_epsilon)
    return normalized_gp * 2.0 * std::exp(acc - acc_prev);
  return normalized_gp * std::exp(loss - loss_prev);
}

}  // namespace fedsel
