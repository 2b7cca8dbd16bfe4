#include "fedsel/config.hpp"

#include <algorithm>
#include <fstream>
#include <set>

#include <fmt/core.h>

#include "fedsel/error.hpp"

namespace fedsel {

using nlohmann::json;

namespace {

// Typed field access with the dotted path reported on failure.
class Reader {
 public:
  Reader(const json& j, std::string prefix) : j_(j), prefix_(std::move(prefix)) {
    if (!j_.is_object()) throw ConfigError("must be an object", prefix_.empty() ? "config" : prefix_);
  }

  std::string path(const std::string& key) const {
    return prefix_.empty() ? key : prefix_ + "." + key;
  }

  bool has(const std::string& key) const { return j_.contains(key) && !j_.at(key).is_null(); }

  template <class T>
  void get(const std::string& key, T& out) {
    seen_.insert(key);
    if (!has(key)) return;
    const auto& v = j_.at(key);
    try {
      if constexpr (std::is_same_v<T, std::size_t> || std::is_same_v<T, std::uint64_t>) {
        if (!v.is_number_integer() || v.get<long long>() < 0)
          throw ConfigError("must be a nonnegative integer", path(key));
      } else if constexpr (std::is_same_v<T, int>) {
        if (!v.is_number_integer()) throw ConfigError("must be an integer", path(key));
      } else if constexpr (std::is_same_v<T, double>) {
        if (!v.is_number()) throw ConfigError("must be a number", path(key));
      } else if constexpr (std::is_same_v<T, std::string>) {
        if (!v.is_string()) throw ConfigError("must be a string", path(key));
      }
      out = v.get<T>();
    } catch (const json::exception& e) {
      throw ConfigError(e.what(), path(key));
    }
  }

  template <class T>
  void get(const std::string& key, std::optional<T>& out) {
    if (!has(key)) {
      seen_.insert(key);
      return;
    }
    T v{};
    get(key, v);
    out = v;
  }

  void mark(const std::string& key) { seen_.insert(key); }

  const json& child(const std::string& key) {
    seen_.insert(key);
    return j_.at(key);
  }

  void reject_unknown() const {
    for (const auto& [k, _] : j_.items())
      if (!seen_.count(k)) throw ConfigError("unknown field", path(k));
  }

 private:
  const json& j_;
  std::string prefix_;
  std::set<std::string> seen_;
};

std::vector<std::size_t> size_list(const json& v, const std::string& field) {
  if (!v.is_array()) throw ConfigError("must be an array of positive integers", field);
  std::vector<std::size_t> out;
  for (const auto& e : v) {
    if (!e.is_number_integer() || e.get<long long>() <= 0)
      throw ConfigError("must be an array of positive integers", field);
    out.push_back(e.get<std::size_t>());
  }
  return out;
}

}  // namespace

void ExperimentConfig::validate() const {
  if (num_clients == 0) throw ConfigError("must be positive", "num_clients");
  if (clients_per_round == 0) throw ConfigError("must be positive", "clients_per_round");
  if (clients_per_round > num_clients)
    throw ConfigError(fmt::format("K={} exceeds N={}", clients_per_round, num_clients),
                      "clients_per_round");
  if (rounds == 0) throw ConfigError("must be >= 1", "rounds");
  if (strategy == Strategy::kPowD &&
      (pow_d_candidates < clients_per_round || pow_d_candidates > num_clients))
    throw ConfigError("must satisfy K <= d <= N", "pow_d_candidates");
  if (!(rho > 0.0)) throw ConfigError("must be > 0", "rho");
  if (fixed_alpha && !(*fixed_alpha >= 0.0)) throw ConfigError("must be >= 0", "fixed_alpha");
  if (!(accuracy_epsilon >= 0.0)) throw ConfigError("must be >= 0", "accuracy_epsilon");
  if (local_epochs == 0) throw ConfigError("must be >= 1", "local_epochs");
  if (batch_size == 0) throw ConfigError("must be >= 1", "batch_size");
  sgd.validate();
  partition_spec().validate();
  if (dataset.kind == "synthetic") {
    if (dataset.classes <= 0) throw ConfigError("must be positive", "dataset.classes");
    if (dataset.per_class == 0) throw ConfigError("must be positive", "dataset.per_class");
    if (dataset.dims == 0) throw ConfigError("must be positive", "dataset.dims");
    if (dataset.eval_per_class == 0) throw ConfigError("must be positive", "dataset.eval_per_class");
    if (!(dataset.sep > 0.0)) throw ConfigError("must be > 0", "dataset.sep");
  } else if (dataset.kind == "idx") {
    if (dataset.train_images.empty() || dataset.train_labels.empty() ||
        dataset.test_images.empty() || dataset.test_labels.empty())
      throw ConfigError("idx datasets need train/test image and label paths", "dataset");
  } else {
    throw ConfigError("must be 'synthetic' or 'idx'", "dataset.kind");
  }
}

MlpArch ExperimentConfig::arch_for(const Dataset& ds) const {
  MlpArch arch;
  arch.activation = activation;
  if (layer_sizes) {
    arch.layer_sizes = *layer_sizes;
    arch.validate();
    if (arch.input_dim() != ds.dims)
      throw ConfigError("input size does not match dataset dimension", "arch.layer_sizes");
    if (arch.output_dim() != static_cast<std::size_t>(ds.class_count))
      throw ConfigError("output size does not match class count", "arch.layer_sizes");
    return arch;
  }
  arch.layer_sizes.push_back(ds.dims);
  arch.layer_sizes.insert(arch.layer_sizes.end(), hidden.begin(), hidden.end());
  arch.layer_sizes.push_back(static_cast<std::size_t>(ds.class_count));
  arch.validate();
  return arch;
}

PartitionSpec ExperimentConfig::partition_spec() const {
  PartitionSpec spec = partition;
  spec.client_count = num_clients;
  spec.seed = partition_seed.value_or(seed);
  return spec;
}

LocalTrainConfig ExperimentConfig::local_config() const {
  return {local_epochs, batch_size, sgd};
}

ExperimentConfig config_from_json(const json& j) {
  ExperimentConfig cfg;
  Reader r(j, "");
  r.get("seed", cfg.seed);
  r.get("num_clients", cfg.num_clients);
  r.get("clients_per_round", cfg.clients_per_round);
  r.get("rounds", cfg.rounds);
  std::string s = to_string(cfg.strategy);
  r.get("strategy", s);
  cfg.strategy = parse_strategy(s);
  r.get("pow_d_candidates", cfg.pow_d_candidates);
  r.get("rho", cfg.rho);
  r.get("fixed_alpha", cfg.fixed_alpha);
  std::string mean = "per_pull";
  r.get("reward_mean", mean);
  if (mean == "per_pull") cfg.reward_mean = RewardMean::kPerPull;
  else if (mean == "per_round") cfg.reward_mean = RewardMean::kPerRound;
  else throw ConfigError("must be 'per_pull' or 'per_round'", "reward_mean");
  std::string src = "momentum";
  r.get("gp_source", src);
  if (src == "momentum") cfg.gp_source = GpSource::kMomentum;
  else if (src == "last_grad") cfg.gp_source = GpSource::kLastGrad;
  else throw ConfigError("must be 'momentum' or 'last_grad'", "gp_source");
  r.get("accuracy_epsilon", cfg.accuracy_epsilon);
  r.get("local_epochs", cfg.local_epochs);
  r.get("batch_size", cfg.batch_size);
  r.get("checkpoint_every", cfg.checkpoint_every);

  if (r.has("arch")) {
    Reader a(r.child("arch"), "arch");
    a.mark("hidden");
    if (a.has("hidden")) cfg.hidden = size_list(a.child("hidden"), "arch.hidden");
    a.mark("layer_sizes");
    if (a.has("layer_sizes")) cfg.layer_sizes = size_list(a.child("layer_sizes"), "arch.layer_sizes");
    std::string act = to_string(cfg.activation);
    a.get("activation", act);
    cfg.activation = parse_activation(act);
    a.reject_unknown();
  }
  if (r.has("sgd")) {
    Reader g(r.child("sgd"), "sgd");
    g.get("learning_rate", cfg.sgd.learning_rate);
    g.get("weight_decay", cfg.sgd.weight_decay);
    g.get("momentum", cfg.sgd.momentum);
    g.reject_unknown();
  }
  if (r.has("partition")) {
    Reader p(r.child("partition"), "partition");
    std::string scheme = "shards";
    p.get("scheme", scheme);
    if (scheme == "shards") {
      ShardsPerClient sp;
      p.get("shards_per_client", sp.shards);
      cfg.partition.scheme = sp;
    } else if (scheme == "dirichlet") {
      Dirichlet d;
      p.get("zeta", d.zeta);
      p.get("max_draws", d.max_draws);
      cfg.partition.scheme = d;
    } else {
      throw ConfigError("must be 'shards' or 'dirichlet'", "partition.scheme");
    }
    // Fields of the other scheme are tolerated so one file can switch schemes.
    p.mark("shards_per_client");
    p.mark("zeta");
    p.mark("max_draws");
    p.get("seed", cfg.partition_seed);
    p.reject_unknown();
  }
  if (r.has("dataset")) {
    Reader d(r.child("dataset"), "dataset");
    auto& ds = cfg.dataset;
    d.get("kind", ds.kind);
    d.get("classes", ds.classes);
    d.get("per_class", ds.per_class);
    d.get("dims", ds.dims);
    d.get("sep", ds.sep);
    d.get("eval_per_class", ds.eval_per_class);
    d.get("seed", ds.seed);
    d.get("train_images", ds.train_images);
    d.get("train_labels", ds.train_labels);
    d.get("test_images", ds.test_images);
    d.get("test_labels", ds.test_labels);
    d.get("train_limit", ds.train_limit);
    d.get("test_limit", ds.test_limit);
    d.reject_unknown();
  }
  r.reject_unknown();
  cfg.validate();
  return cfg;
}

json to_json(const ExperimentConfig& cfg) {
  json j;
  j["seed"] = cfg.seed;
  j["num_clients"] = cfg.num_clients;
  j["clients_per_round"] = cfg.clients_per_round;
  j["rounds"] = cfg.rounds;
  j["strategy"] = to_string(cfg.strategy);
  j["pow_d_candidates"] = cfg.pow_d_candidates;
  j["rho"] = cfg.rho;
  j["fixed_alpha"] = cfg.fixed_alpha ? json(*cfg.fixed_alpha) : json(nullptr);
  j["reward_mean"] = cfg.reward_mean == RewardMean::kPerPull ? "per_pull" : "per_round";
  j["gp_source"] = cfg.gp_source == GpSource::kMomentum ? "momentum" : "last_grad";
  j["accuracy_epsilon"] = cfg.accuracy_epsilon;
  j["local_epochs"] = cfg.local_epochs;
  j["batch_size"] = cfg.batch_size;
  j["checkpoint_every"] = cfg.checkpoint_every;
  j["arch"] = {{"hidden", cfg.hidden}, {"activation", to_string(cfg.activation)}};
  if (cfg.layer_sizes) j["arch"]["layer_sizes"] = *cfg.layer_sizes;
  j["sgd"] = {{"learning_rate", cfg.sgd.learning_rate},
              {"weight_decay", cfg.sgd.weight_decay},
              {"momentum", cfg.sgd.momentum}};
  if (const auto* sp = std::get_if<ShardsPerClient>(&cfg.partition.scheme)) {
    j["partition"] = {{"scheme", "shards"}, {"shards_per_client", sp->shards}};
  } else {
    const auto& d = std::get<Dirichlet>(cfg.partition.scheme);
    j["partition"] = {{"scheme", "dirichlet"}, {"zeta", d.zeta}, {"max_draws", d.max_draws}};
  }
  if (cfg.partition_seed) j["partition"]["seed"] = *cfg.partition_seed;
  const auto& ds = cfg.dataset;
  if (ds.kind == "synthetic") {
    j["dataset"] = {{"kind", ds.kind},          {"classes", ds.classes},
                    {"per_class", ds.per_class}, {"dims", ds.dims},
                    {"sep", ds.sep},             {"eval_per_class", ds.eval_per_class}};
  } else {
    j["dataset"] = {{"kind", ds.kind},
                    {"train_images", ds.train_images},
                    {"train_labels", ds.train_labels},
                    {"test_images", ds.test_images},
                    {"test_labels", ds.test_labels},
                    {"train_limit", ds.train_limit},
                    {"test_limit", ds.test_limit}};
  }
  if (ds.seed) j["dataset"]["seed"] = *ds.seed;
  return j;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read " + path.string(), "config");
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("invalid JSON: ") + e.what(), "config");
  }
  return config_from_json(j);
}

std::uint64_t config_hash(const json& j) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : j.dump()) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

TaskData build_task(const ExperimentConfig& cfg) {
  const auto& d = cfg.dataset;
  if (d.kind == "idx") {
    TaskData t{load_idx(d.train_images, d.train_labels, d.train_limit),
               load_idx(d.test_images, d.test_labels, d.test_limit)};
    t.eval.class_count = t.train.class_count = std::max(t.train.class_count, t.eval.class_count);
    if (t.train.dims != t.eval.dims)
      throw ConfigError("train and test images differ in size", "dataset");
    return t;
  }
  const auto base = d.seed.value_or(cfg.seed);
  // Same class means for both sets; the held-out samples come from a later
  // part of the same generator stream.
  Dataset pool = gen_synthetic(d.classes, d.per_class + d.eval_per_class, d.dims, d.sep, base);
  TaskData t;
  for (auto* target : {&t.train, &t.eval}) {
    target->dims = pool.dims;
    target->class_count = pool.class_count;
  }
  const auto per = d.per_class + d.eval_per_class;
  for (std::size_t i = 0; i < pool.size(); ++i) {
    auto& target = (i % per) < d.per_class ? t.train : t.eval;
    target.labels.push_back(pool.labels[i]);
    const auto row = pool.row(i);
    target.features.insert(target.features.end(), row.begin(), row.end());
  }
  return t;
}

}  // namespace fedsel
