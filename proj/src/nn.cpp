#include "fedsel/nn.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "fedsel/error.hpp"
#include "fedsel/rng.hpp"

namespace fedsel {

std::vector<std::size_t> Dataset::class_counts() const {
  std::vector<std::size_t> counts(static_cast<std::size_t>(class_count), 0);
  for (int y : labels) ++counts[static_cast<std::size_t>(y)];
  return counts;
}

void Dataset::validate() const {
  if (class_count <= 0) throw ConfigError("class_count must be positive");
  if (dims == 0) throw ConfigError("feature dimension must be positive");
  if (features.size() != labels.size() * dims)
    throw ConfigError("feature matrix does not match label count");
  for (int y : labels)
    if (y < 0 || y >= class_count) throw ConfigError("label out of range");
}

Activation parse_activation(const std::string& name) {
  if (name == "relu") return Activation::kRelu;
  if (name == "tanh") return Activation::kTanh;
  throw ConfigError("unknown activation '" + name + "'", "arch.activation");
}

const char* to_string(Activation a) {
  return a == Activation::kRelu ? "relu" : "tanh";
}

std::size_t MlpArch::param_count() const {
  std::size_t n = 0;
  for (std::size_t l = 1; l < layer_sizes.size(); ++l)
    n += layer_sizes[l - 1] * layer_sizes[l] + layer_sizes[l];
  return n;
}

void MlpArch::validate() const {
  if (layer_sizes.size() < 2)
    throw ConfigError("need at least input and output layers", "arch.layer_sizes");
  for (auto s : layer_sizes)
    if (s == 0) throw ConfigError("layer sizes must be positive", "arch.layer_sizes");
}

void SgdConfig::validate() const {
  if (!(learning_rate > 0.0) || !std::isfinite(learning_rate))
    throw ConfigError("must be > 0", "sgd.learning_rate");
  if (!(weight_decay >= 0.0) || !std::isfinite(weight_decay))
    throw ConfigError("must be >= 0", "sgd.weight_decay");
  if (!(momentum > 0.0 && momentum < 1.0))
    throw ConfigError("must lie in (0, 1)", "sgd.momentum");
}

ParamVector init_params(const MlpArch& arch, std::uint64_t seed) {
  arch.validate();
  ParamVector params(arch.param_count(), 0.0);
  Rng rng(derive_seed(seed, static_cast<std::uint64_t>(Stream::kInit)));
  std::size_t off = 0;
  for (std::size_t l = 1; l < arch.layer_sizes.size(); ++l) {
    const auto fan_in = arch.layer_sizes[l - 1];
    const auto fan_out = arch.layer_sizes[l];
    const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    std::uniform_real_distribution<double> dist(-limit, limit);
    for (std::size_t k = 0; k < fan_in * fan_out; ++k) params[off + k] = dist(rng);
    off += fan_in * fan_out + fan_out;
  }
  return params;
}

namespace {

// Per-sample forward/backward scratch space, reused across a batch.
class Network {
 public:
  Network(const ParamVector& params, const MlpArch& arch)
      : params_(params), arch_(arch) {
    const auto layers = arch.layer_sizes.size();
    acts_.resize(layers);
    pre_.resize(layers);
    for (std::size_t l = 0; l < layers; ++l) {
      acts_[l].resize(arch.layer_sizes[l]);
      pre_[l].resize(arch.layer_sizes[l]);
    }
    offsets_.push_back(0);
    for (std::size_t l = 1; l < layers; ++l)
      offsets_.push_back(offsets_.back() + arch.layer_sizes[l - 1] * arch.layer_sizes[l] +
                         arch.layer_sizes[l]);
  }

  // Returns the output logits.
  std::span<const double> forward(std::span<const double> x) {
    std::copy(x.begin(), x.end(), acts_[0].begin());
    const auto last = arch_.layer_sizes.size() - 1;
    for (std::size_t l = 1; l <= last; ++l) {
      const auto in = arch_.layer_sizes[l - 1];
      const auto out = arch_.layer_sizes[l];
      const double* w = params_.data() + offsets_[l - 1];
      const double* b = w + in * out;
      const auto& a = acts_[l - 1];
      for (std::size_t j = 0; j < out; ++j) {
        double z = b[j];
        const double* wj = w + j * in;
        for (std::size_t k = 0; k < in; ++k) z += wj[k] * a[k];
        pre_[l][j] = z;
        acts_[l][j] = l == last ? z : activate(z);
      }
    }
    return acts_[last];
  }

  // Accumulates scale * dLoss/dparams into grad given dLoss/dlogits in delta.
  void backward(std::vector<double> delta, double scale, ParamVector& grad) {
    for (std::size_t l = arch_.layer_sizes.size() - 1; l >= 1; --l) {
      const auto in = arch_.layer_sizes[l - 1];
      const auto out = arch_.layer_sizes[l];
      const double* w = params_.data() + offsets_[l - 1];
      double* gw = grad.data() + offsets_[l - 1];
      double* gb = gw + in * out;
      const auto& a = acts_[l - 1];
      for (std::size_t j = 0; j < out; ++j) {
        const double dj = delta[j] * scale;
        gb[j] += dj;
        double* gwj = gw + j * in;
        for (std::size_t k = 0; k < in; ++k) gwj[k] += dj * a[k];
      }
      if (l == 1) break;
      std::vector<double> prev(in, 0.0);
      for (std::size_t j = 0; j < out; ++j) {
        const double* wj = w + j * in;
        for (std::size_t k = 0; k < in; ++k) prev[k] += wj[k] * delta[j];
      }
      for (std::size_t k = 0; k < in; ++k) prev[k] *= derivative(pre_[l - 1][k]);
      delta = std::move(prev);
    }
  }

 private:
  double activate(double z) const {
    return arch_.activation == Activation::kRelu ? (z > 0.0 ? z : 0.0) : std::tanh(z);
  }
  double derivative(double z) const {
    if (arch_.activation == Activation::kRelu) return z > 0.0 ? 1.0 : 0.0;
    const double t = std::tanh(z);
    return 1.0 - t * t;
  }

  const ParamVector& params_;
  const MlpArch& arch_;
  std::vector<std::vector<double>> acts_;
  std::vector<std::vector<double>> pre_;
  std::vector<std::size_t> offsets_;
};

double log_sum_exp(std::span<const double> z) {
  const double m = *std::max_element(z.begin(), z.end());
  double s = 0.0;
  for (double v : z) s += std::exp(v - m);
  return m + std::log(s);
}

void check_shapes(const ParamVector& params, const MlpArch& arch, const Dataset& data) {
  if (params.size() != arch.param_count())
    throw ConfigError("parameter vector length does not match architecture");
  if (data.dims != arch.input_dim())
    throw ConfigError("feature dimension does not match architecture input");
  if (static_cast<std::size_t>(data.class_count) != arch.output_dim())
    throw ConfigError("class count does not match architecture output");
}

double l2_squared(const ParamVector& p) {
  return std::inner_product(p.begin(), p.end(), p.begin(), 0.0);
}

}  // namespace

LossGrad loss_and_grad(const ParamVector& params, const MlpArch& arch,
                       const Dataset& data, std::span<const std::size_t> batch,
                       double weight_decay) {
  check_shapes(params, arch, data);
  if (batch.empty()) throw ConfigError("empty batch");
  LossGrad out{0.0, ParamVector(params.size(), 0.0)};
  Network net(params, arch);
  const double scale = 1.0 / static_cast<double>(batch.size());
  std::vector<double> delta(arch.output_dim());
  for (auto idx : batch) {
    auto logits = net.forward(data.row(idx));
    const double lse = log_sum_exp(logits);
    const auto y = static_cast<std::size_t>(data.labels[idx]);
    out.loss += (lse - logits[y]) * scale;
    for (std::size_t c = 0; c < logits.size(); ++c)
      delta[c] = std::exp(logits[c] - lse) - (c == y ? 1.0 : 0.0);
    net.backward(delta, scale, out.grad);
  }
  if (weight_decay > 0.0) {
    out.loss += 0.5 * weight_decay * l2_squared(params);
    for (std::size_t k = 0; k < params.size(); ++k) out.grad[k] += weight_decay * params[k];
  }
  return out;
}

double batch_loss(const ParamVector& params, const MlpArch& arch, const Dataset& data,
                  std::span<const std::size_t> batch, double weight_decay) {
  check_shapes(params, arch, data);
  if (batch.empty()) throw ConfigError("empty batch");
  Network net(params, arch);
  double loss = 0.0;
  for (auto idx : batch) {
    auto logits = net.forward(data.row(idx));
    loss += log_sum_exp(logits) - logits[static_cast<std::size_t>(data.labels[idx])];
  }
  loss /= static_cast<double>(batch.size());
  return loss + 0.5 * weight_decay * l2_squared(params);
}

EvalResult evaluate(const ParamVector& params, const MlpArch& arch, const Dataset& data,
                    std::span<const std::size_t> subset) {
  check_shapes(params, arch, data);
  if (subset.empty()) throw ConfigError("cannot evaluate on an empty dataset");
  Network net(params, arch);
  std::size_t correct = 0;
  double loss = 0.0;
  for (auto idx : subset) {
    auto logits = net.forward(data.row(idx));
    std::size_t best = 0;
    for (std::size_t c = 1; c < logits.size(); ++c)
      if (logits[c] > logits[best]) best = c;
    const auto y = static_cast<std::size_t>(data.labels[idx]);
    if (best == y) ++correct;
    loss += log_sum_exp(logits) - logits[y];
  }
  const auto n = static_cast<double>(subset.size());
  return {static_cast<double>(correct) / n, loss / n};
}

EvalResult evaluate(const ParamVector& params, const MlpArch& arch, const Dataset& data) {
  std::vector<std::size_t> all(data.size());
  std::iota(all.begin(), all.end(), std::size_t{0});
  return evaluate(params, arch, data, all);
}

}  // namespace fedsel
