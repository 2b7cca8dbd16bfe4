#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "fedsel/data.hpp"
#include "fedsel/gp_metric.hpp"
#include "fedsel/nn.hpp"
#include "fedsel/selection.hpp"

namespace fedsel {

struct DatasetConfig {
  std::string kind = "synthetic";  // synthetic | idx
  // synthetic
  int classes = 10;
  std::size_t per_class = 100;
  std::size_t dims = 20;
  double sep = 4.0;
  std::size_t eval_per_class = 50;
  std::optional<std::uint64_t> seed;  // defaults to the experiment seed
  // idx
  std::string train_images, train_labels, test_images, test_labels;
  std::size_t train_limit = 0;
  std::size_t test_limit = 0;
};

struct ExperimentConfig {
  std::uint64_t seed = 0;
  std::size_t num_clients = 20;        // N
  std::size_t clients_per_round = 5;   // K
  std::size_t rounds = 150;            // T
  Strategy strategy = Strategy::kGpcb;
  std::size_t pow_d_candidates = 10;   // d
  double rho = 1.0;
  std::optional<double> fixed_alpha;
  RewardMean reward_mean = RewardMean::kPerPull;
  GpSource gp_source = GpSource::kMomentum;
  double accuracy_epsilon = 0.0;
  std::size_t local_epochs = 1;        // E
  std::size_t batch_size = 64;
  std::size_t checkpoint_every = 0;    // 0 disables
  std::vector<std::size_t> hidden = {64, 30};
  std::optional<std::vector<std::size_t>> layer_sizes;  // full override
  Activation activation = Activation::kRelu;
  SgdConfig sgd;
  PartitionSpec partition{ShardsPerClient{1}, 0, 0};
  std::optional<std::uint64_t> partition_seed;
  DatasetConfig dataset;

  // Field-level checks that need no data. Throws ConfigError.
  void validate() const;
  MlpArch arch_for(const Dataset& ds) const;
  PartitionSpec partition_spec() const;
  LocalTrainConfig local_config() const;
};

ExperimentConfig config_from_json(const nlohmann::json& j);
nlohmann::json to_json(const ExperimentConfig& cfg);
ExperimentConfig load_config(const std::filesystem::path& path);

// FNV-1a over the canonical (key-sorted, compact) dump.
std::uint64_t config_hash(const nlohmann::json& j);

struct TaskData {
  Dataset train;
  Dataset eval;
};

// Generates or loads the train/eval pair described by the config.
TaskData build_task(const ExperimentConfig& cfg);

}  // namespace fedsel
