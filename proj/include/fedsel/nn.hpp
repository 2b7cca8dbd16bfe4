#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "fedsel/dataset.hpp"

namespace fedsel {

// Flat parameter or gradient vector. Layer l stores its weight matrix
// (out x in, row-major) followed by its bias vector.
using ParamVector = std::vector<double>;

enum class Activation { kRelu, kTanh };

Activation parse_activation(const std::string& name);
const char* to_string(Activation a);

struct MlpArch {
  // input, hidden..., output
  std::vector<std::size_t> layer_sizes;
  Activation activation = Activation::kRelu;

  std::size_t input_dim() const { return layer_sizes.front(); }
  std::size_t output_dim() const { return layer_sizes.back(); }
  std::size_t param_count() const;
  void validate() const;
};

struct SgdConfig {
  double learning_rate = 0.005;
  double weight_decay = 1e-4;
  double momentum = 0.1;

  void validate() const;
};

// Glorot-uniform weights, zero biases. Deterministic per seed.
ParamVector init_params(const MlpArch& arch, std::uint64_t seed);

struct LossGrad {
  double loss = 0.0;
  ParamVector grad;
};

// Mean softmax cross-entropy over `batch` (indices into `data`, duplicates
// allowed) plus (weight_decay / 2) * ||params||^2, and its exact gradient.
LossGrad loss_and_grad(const ParamVector& params, const MlpArch& arch,
                       const Dataset& data, std::span<const std::size_t> batch,
                       double weight_decay);

double batch_loss(const ParamVector& params, const MlpArch& arch,
                  const Dataset& data, std::span<const std::size_t> batch,
                  double weight_decay);

struct EvalResult {
  double accuracy = 0.0;
  double loss = 0.0;  // mean cross-entropy, no penalty term
};

// Argmax accuracy with ties going to the lowest class index.
EvalResult evaluate(const ParamVector& params, const MlpArch& arch,
                    const Dataset& data);
EvalResult evaluate(const ParamVector& params, const MlpArch& arch,
                    const Dataset& data, std::span<const std::size_t> subset);

}  // namespace fedsel
