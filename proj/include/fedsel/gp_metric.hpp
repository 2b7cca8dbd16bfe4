#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "fedsel/dataset.hpp"
#include "fedsel/nn.hpp"

namespace fedsel {

using ClientId = std::size_t;

// Per-client state kept by the server between rounds. Pull counts and reward
// sums live in BanditStats.
struct ClientState {
  ClientId id = 0;
  ParamVector momentum;       // d_i, carried across rounds
  double gp_value = 0.0;      // last computed projection c_i (stale when unselected)
  double normalized_gp = 0.0;
  double last_reward = 0.0;   // unclipped mu_i
  bool has_data = true;
};

// Global descent direction and its cached Euclidean norm.
class GlobalDirection {
 public:
  GlobalDirection() = default;
  explicit GlobalDirection(ParamVector v);

  const ParamVector& vector() const noexcept { return vec_; }
  double norm() const noexcept { return norm_; }

  // Uniform mean of the given directions.
  static GlobalDirection average(std::span<const ParamVector* const> dirs);

 private:
  ParamVector vec_;
  double norm_ = 0.0;
};

// d <- gamma * d + grad;  w <- w - eta * d.  Updates both in place.
void mgd_step(ParamVector& params, ParamVector& momentum, std::span<const double> grad,
              double gamma, double eta);

enum class GpSource { kMomentum, kLastGrad };

struct LocalResult {
  ParamVector params;
  ParamVector momentum;
  ParamVector last_grad;
  std::size_t steps = 0;
  bool skipped = false;  // client had no data
};

struct LocalTrainConfig {
  std::size_t epochs = 1;
  std::size_t batch_size = 64;
  SgdConfig sgd;
};

// epochs * ceil(|data| / batch) momentum steps over minibatches reshuffled
// each epoch from `seed`. Starts from the supplied momentum buffer.
LocalResult local_train(const MlpArch& arch, const Dataset& data,
                        std::span<const std::size_t> client_indices, const ParamVector& params,
                        const ParamVector& momentum, const LocalTrainConfig& cfg,
                        std::uint64_t seed);

// (d . g) / |g|. Throws ProjectionUndefined when |g| == 0.
double gradient_projection(std::span<const double> direction, const GlobalDirection& global);

// Max-shifted softmax.
std::vector<double> normalize_gp(std::span<const double> values);

// Accuracy changes by more than `accuracy_epsilon`:
//   mu = c~ * 2 * exp(A_t - A_prev), otherwise mu = c~ * exp(F_t - F_prev).
double adjust_reward(double normalized_gp, double acc, double acc_prev, double loss,
                     double loss_prev, double accuracy_epsilon = 0.0);

}  // namespace fedsel
