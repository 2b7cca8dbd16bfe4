#include <doctest.h>

#include <cmath>
#include <vector>

#include "fedsel/error.hpp"
#include "fedsel/gp_metric.hpp"
#include "fixtures.hpp"

using namespace fedsel;

TEST_SUITE("gp_metric") {

TEST_CASE("momentum step") {
  ParamVector w = {1.0}, d = {2.0};
  const std::vector<double> g = {1.0};
  mgd_step(w, d, g, 0.5, 0.1);
  CHECK(d[0] == 2.0);
  CHECK(w[0] == doctest::Approx(0.8).epsilon(1e-15));
  ParamVector bad = {1.0, 2.0};
  CHECK_THROWS_AS(mgd_step(bad, d, g, 0.5, 0.1), ConfigError);
}

TEST_CASE("projection") {
  const GlobalDirection g({0.0, 2.0});
  const std::vector<double> d = {3.0, 4.0};
  CHECK(gradient_projection(d, g) == 4.0);
  const std::vector<double> ortho = {5.0, 0.0};
  CHECK(gradient_projection(ortho, g) == 0.0);
  const GlobalDirection h({3.0, 4.0});
  CHECK(gradient_projection(h.vector(), h) == doctest::Approx(5.0).epsilon(1e-15));
  CHECK_THROWS_AS(gradient_projection(d, GlobalDirection({0.0, 0.0})), ProjectionUndefined);
}

TEST_CASE("projection is linear in d and invariant to positive scaling of g") {
  const GlobalDirection g({1.0, -2.0, 0.5});
  const GlobalDirection g5({5.0, -10.0, 2.5});
  const std::vector<double> a = {0.3, 0.1, -0.7}, b = {-1.0, 2.0, 4.0};
  std::vector<double> sum(3);
  for (int i = 0; i < 3; ++i) sum[i] = 2.0 * a[i] + b[i];
  CHECK(gradient_projection(sum, g) ==
        doctest::Approx(2.0 * gradient_projection(a, g) + gradient_projection(b, g)));
  CHECK(gradient_projection(a, g5) == doctest::Approx(gradient_projection(a, g)));
}

TEST_CASE("direction average") {
  const ParamVector a = {1.0, 1.0}, b = {3.0, 5.0};
  const std::vector<const ParamVector*> v = {&a, &b};
  const auto g = GlobalDirection::average(v);
  CHECK(g.vector() == ParamVector{2.0, 3.0});
  CHECK(g.norm() == doctest::Approx(std::sqrt(13.0)));
}

TEST_CASE("softmax normalization") {
  auto p = normalize_gp(std::vector<double>{0.0, 0.0});
  CHECK(p[0] == 0.5);
  CHECK(p[1] == 0.5);
  p = normalize_gp(std::vector<double>{std::log(1.0), std::log(3.0)});
  CHECK(std::abs(p[0] - 0.25) < 1e-12);
  CHECK(std::abs(p[1] - 0.75) < 1e-12);
  p = normalize_gp(std::vector<double>{1000.0, 0.0});
  CHECK(std::isfinite(p[0]));
  CHECK(p[0] == doctest::Approx(1.0));
  CHECK(p[1] == doctest::Approx(0.0));
  p = normalize_gp(std::vector<double>{-3.0, 2.0, 0.5, 7.0});
  double s = 0.0;
  for (double v : p) s += v;
  CHECK(std::abs(s - 1.0) < 1e-9);
  CHECK(std::max_element(p.begin(), p.end()) - p.begin() == 3);
}

TEST_CASE("reward adjustment") {
  CHECK(adjust_reward(0.3, 0.5, 0.5, 1.2, 1.2) == 0.3);
  CHECK(std::abs(adjust_reward(0.2, 0.6, 0.5, 1.0, 1.0) - 0.4 * std::exp(0.1)) < 1e-12);
  CHECK(std::abs(adjust_reward(0.2, 0.4, 0.5, 1.0, 1.0) - 0.4 * std::exp(-0.1)) < 1e-12);
  CHECK(adjust_reward(0.2, 0.6, 0.5, 1.0, 1.0) == doctest::Approx(0.4421).epsilon(1e-4));
  CHECK(adjust_reward(0.2, 0.4, 0.5, 1.0, 1.0) == doctest::Approx(0.3619).epsilon(1e-4));
  // Equal accuracy: the loss branch.
  CHECK(std::abs(adjust_reward(0.5, 0.7, 0.7, 0.9, 1.1) - 0.5 * std::exp(-0.2)) < 1e-12);
  // Within epsilon counts as unchanged.
  CHECK(std::abs(adjust_reward(0.5, 0.701, 0.7, 0.9, 1.1, 0.01) - 0.5 * std::exp(-0.2)) < 1e-12);
  // Unclipped here.
  CHECK(adjust_reward(1.0, 0.6, 0.5, 0.0, 0.0) > 2.0);
}

TEST_CASE("local training step count, zero learning rate, determinism") {
  const auto ds = fixtures::random_dataset(50, 3, 2, 1);
  const MlpArch a{{3, 4, 2}};
  const auto p = fixtures::random_params(a, 2);
  const ParamVector zero(p.size(), 0.0);
  const auto idx = fixtures::iota(50);
  LocalTrainConfig cfg;
  cfg.epochs = 3;
  cfg.batch_size = 16;
  const auto r = local_train(a, ds, idx, p, zero, cfg, 9);
  CHECK(r.steps == 12);
  CHECK(r.params == local_train(a, ds, idx, p, zero, cfg, 9).params);
  CHECK(r.momentum == local_train(a, ds, idx, p, zero, cfg, 9).momentum);

  cfg.sgd.learning_rate = 0.0;
  CHECK(local_train(a, ds, idx, p, zero, cfg, 9).params == p);

  const std::vector<std::size_t> none;
  CHECK(local_train(a, ds, none, p, zero, cfg, 9).skipped);
}

TEST_CASE("single full-batch epoch equals one hand-computed momentum step") {
  const auto ds = fixtures::random_dataset(20, 3, 2, 4);
  const MlpArch a{{3, 2}};
  const auto p = fixtures::random_params(a, 5);
  ParamVector d0(p.size());
  for (std::size_t i = 0; i < d0.size(); ++i) d0[i] = 0.01 * static_cast<double>(i);
  const auto idx = fixtures::iota(20);
  LocalTrainConfig cfg;
  cfg.batch_size = 20;
  cfg.sgd = SgdConfig{0.05, 1e-3, 0.3};
  const auto r = local_train(a, ds, idx, p, d0, cfg, 1);
  CHECK(r.steps == 1);
  const auto g = loss_and_grad(p, a, ds, idx, 1e-3).grad;
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double d = 0.3 * d0[i] + g[i];
    CHECK(r.momentum[i] == doctest::Approx(d).epsilon(1e-12));
    CHECK(r.params[i] == doctest::Approx(p[i] - 0.05 * d).epsilon(1e-12));
    CHECK(r.last_grad[i] == doctest::Approx(g[i]).epsilon(1e-12));
  }
}

}  // TEST_SUITE
