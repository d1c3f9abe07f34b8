#include <cmath>

#include "awdlab/adversarial.hpp"
#include "awdlab/error.hpp"
#include "awdlab/rng.hpp"
#include "awdlab/training.hpp"
#include "doctest.h"

using namespace awdlab;

namespace {

Tensor uniform_batch(Shape shape, std::uint64_t seed) {
  CounterRng rng(seed);
  Tensor t(std::move(shape));
  for (auto& v : t.data()) v = rng.uniform();
  return t;
}

AttackConfig attack(double eps, double step, int steps, bool random_start = true) {
  AttackConfig c;
  c.epsilon = eps;
  c.step_size = step;
  c.steps = steps;
  c.random_start = random_start;
  return c;
}

// Two well separated clusters in [0, 1]^2.
Dataset toy_binary() {
  Dataset d;
  d.num_classes = 2;
  CounterRng rng(3);
  std::vector<double> x;
  for (int i = 0; i < 64; ++i) {
    const int y = i % 2;
    x.push_back(y ? rng.uniform(0.6, 0.9) : rng.uniform(0.1, 0.4));
    x.push_back(rng.uniform(0.2, 0.8));
    d.labels.push_back(y);
  }
  d.inputs = Tensor({64, 2}, x);
  return d;
}

}  // namespace

TEST_CASE("attack config defaults and validation") {
  const auto tr = AttackConfig::train_default(), ev = AttackConfig::eval_default();
  CHECK(tr.epsilon == 8.0 / 255.0);
  CHECK(tr.step_size == 2.0 / 255.0);
  CHECK(tr.steps == 7);
  CHECK(tr.random_start);
  CHECK(ev.steps == 20);
  CHECK(ev.epsilon == tr.epsilon);
  CHECK_THROWS_AS(attack(-0.1, 0.01, 1).validate(), ConfigError);
  CHECK_THROWS_AS(attack(0.1, 0.0, 1).validate(), ConfigError);
  CHECK_THROWS_AS(attack(0.1, 0.01, 0).validate(), ConfigError);
  const Model m = Model::mlp({3, 2}, 1);
  CHECK_THROWS_AS(pgd_attack(m, uniform_batch({2, 3}, 1), std::vector<int>{0, 1}, attack(-1, 0.1, 1), 0),
                  ConfigError);
}

TEST_CASE("epsilon zero returns the input unchanged") {
  const Model m = Model::small_cnn(1, 8, 8, {3}, 3, 2);
  const Tensor x = uniform_batch({4, 1, 8, 8}, 5);
  const std::vector<int> y{0, 1, 2, 0};
  CHECK(pgd_attack(m, x, y, attack(0.0, 2.0 / 255, 7), 9) == x);
}

TEST_CASE("one-step attack on a linear binary model is the signed gradient") {
  Model m = Model::mlp({4, 2}, 0);
  m.param("fc0.weight").tensor = Tensor({4, 2}, {0.5, -0.5, -1.0, 2.0, 0.0, 0.0, 3.0, 1.0});
  const Tensor x({2, 4}, {0.5, 0.5, 0.5, 0.5, 0.4, 0.6, 0.3, 0.7});
  const std::vector<int> y{0, 1};
  const double eps = 0.03;
  const Tensor adv = pgd_attack(m, x, y, attack(eps, eps, 1, false), 0);
  // d CE / d x_n = W (p_n - e_{y_n}); for two classes its sign is +-sign(W[:,1] - W[:,0]).
  const double diff[4] = {-1.0, 3.0, 0.0, -2.0};
  for (std::size_t n = 0; n < 2; ++n) {
    const double dir = y[n] == 0 ? 1.0 : -1.0;
    for (std::size_t j = 0; j < 4; ++j) {
      const double s = diff[j] == 0.0 ? 0.0 : (dir * diff[j] > 0 ? 1.0 : -1.0);
      CHECK(adv[n * 4 + j] - x[n * 4 + j] == doctest::Approx(eps * s).epsilon(1e-12));
    }
  }
  CHECK(m.loss(adv, y) > m.loss(x, y));
}

TEST_CASE("attack feasibility, determinism and parameter safety") {
  const Model m = Model::small_cnn(1, 8, 8, {4, 4}, 4, 3);
  const Tensor x = uniform_batch({6, 1, 8, 8}, 7);
  const std::vector<int> y{0, 1, 2, 3, 0, 1};
  const auto before = param_checksum(m);
  const auto cfg = attack(8.0 / 255, 2.0 / 255, 7);
  const Tensor adv = pgd_attack(m, x, y, cfg, 11);
  CHECK(param_checksum(m) == before);
  CHECK(linf_distance(adv, x) <= 8.0 / 255 + 1e-12);
  for (std::size_t i = 0; i < adv.size(); ++i) {
    CHECK(std::abs(adv[i] - x[i]) <= cfg.epsilon);
    CHECK(adv[i] >= 0.0);
    CHECK(adv[i] <= 1.0);
  }
  CHECK(pgd_attack(m, x, y, cfg, 11) == adv);
  CHECK_FALSE(pgd_attack(m, x, y, cfg, 12) == adv);
  CHECK(m.loss(adv, y) >= m.loss(x, y));
}

TEST_CASE("projection is exact for many epsilons") {
  const Model m = Model::mlp({16, 8, 3}, 4);
  const Tensor x = uniform_batch({10, 16}, 8);
  std::vector<int> y(10);
  for (int i = 0; i < 10; ++i) y[i] = i % 3;
  CounterRng rng(13);
  for (int trial = 0; trial < 30; ++trial) {
    const double eps = rng.uniform(0.0, 0.2);
    const Tensor adv = pgd_attack(m, x, y, attack(eps, eps / 3 + 1e-3, 5), trial);
    for (std::size_t i = 0; i < adv.size(); ++i) CHECK(std::abs(adv[i] - x[i]) <= eps);
  }
}

TEST_CASE("robust accuracy bounds") {
  const auto data = synth_images(4, 8, 8, 30, 6);
  const Model m = Model::mlp({64, 16, 4}, 5);
  CHECK(robust_accuracy(m, data, attack(0.0, 0.01, 3), 1) == clean_accuracy(m, data));
  const double clean = clean_accuracy(m, data);
  const double r1 = robust_accuracy(m, data, attack(8.0 / 255, 8.0 / 255, 1), 1);
  const double r20 = robust_accuracy(m, data, AttackConfig::eval_default(), 1);
  CHECK(r1 <= clean);
  CHECK(r20 <= clean);
  CHECK(r20 <= r1 + 0.02);
  Dataset empty;
  empty.num_classes = 2;
  empty.inputs = Tensor();
  CHECK_THROWS_AS(robust_accuracy(m, empty, AttackConfig::eval_default(), 1), InputError);
}

TEST_CASE("untrained model is near chance on balanced data") {
  const std::size_t c = 5, per = 200;
  const auto data = synth_clusters(c, 10, per, 3.0, 2);
  Model m = Model::mlp({10, c}, 77);
  for (auto& v : m.params()[0].tensor.data()) v *= 1e-3;
  const double acc = robust_accuracy(m, data, AttackConfig::eval_default(), 3);
  const double sd = std::sqrt(0.2 * 0.8 / static_cast<double>(c * per));
  CHECK(acc <= 0.2 + 3 * sd);
}

TEST_CASE("epsilon zero adversarial epoch equals a natural epoch") {
  const auto data = synth_images(3, 8, 8, 20, 4);
  Model a = Model::mlp({64, 8, 3}, 1), b = a;
  Optimizer oa(AdaptiveDecay{}, make_state(a, 0.05, 10)), ob(AdaptiveDecay{}, make_state(b, 0.05, 10));
  EpochOptions opts;
  opts.batch_size = 16;
  adv_train_epoch(a, oa, data, 0, 9, attack(0.0, 2.0 / 255, 7), opts);
  train_epoch(b, ob, data, 0, 9, opts);
  CHECK(param_checksum(a) == param_checksum(b));
  CHECK(oa.state().lambda_bar == ob.state().lambda_bar);
}

TEST_CASE("adversarial training reduces adversarial loss on a separable toy set") {
  const auto data = toy_binary();
  Model m = Model::mlp({2, 2}, 6);
  const auto cfg = attack(0.05, 0.02, 7);
  const Tensor x0 = pgd_attack(m, data.inputs, data.labels, cfg, 1);
  const double before = m.loss(x0, data.labels);
  Optimizer opt(FixedDecay{0.0}, make_state(m, 0.5, 8));
  EpochOptions opts;
  opts.batch_size = 8;
  adv_train_epoch(m, opt, data, 0, 2, cfg, opts);
  const Tensor x1 = pgd_attack(m, data.inputs, data.labels, cfg, 1);
  CHECK(m.loss(x1, data.labels) < before);
}
