#include <cmath>
#include <filesystem>
#include <sstream>

#include "awdlab/error.hpp"
#include "awdlab/model.hpp"
#include "awdlab/rng.hpp"
#include "doctest.h"

using namespace awdlab;

namespace {

Tensor random_batch(Shape shape, std::uint64_t seed) {
  CounterRng rng(seed);
  Tensor t(std::move(shape));
  for (auto& v : t.data()) v = rng.uniform();
  return t;
}

std::vector<double> flatten_params(const Model& m) {
  std::vector<double> all;
  for (const auto& p : m.params()) all.insert(all.end(), p.tensor.values().begin(), p.tensor.values().end());
  return all;
}

}  // namespace

TEST_CASE("mlp layout and initialization") {
  const Model m = Model::mlp({4, 3}, 7);
  REQUIRE(m.params().size() == 2);
  CHECK(m.params()[0].name == "fc0.weight");
  CHECK(m.params()[0].tensor.shape() == Shape{4, 3});
  CHECK(m.params()[0].prunable);
  CHECK(m.params()[1].name == "fc0.bias");
  CHECK(m.params()[1].tensor.values() == std::vector<double>(3, 0.0));
  CHECK_FALSE(m.params()[1].prunable);
  const double s = std::sqrt(6.0 / 7.0);
  for (double v : m.params()[0].tensor.values()) CHECK(std::abs(v) <= s);

  CHECK(Model::mlp({784, 128, 10}, 1).parameter_count() == 101770);
  CHECK_THROWS_AS(Model::mlp({}, 1), ConfigError);
  CHECK_THROWS_AS(Model::mlp({5}, 1), ConfigError);
  CHECK_THROWS_AS(Model::mlp({5, 0, 2}, 1), ConfigError);
}

TEST_CASE("builders are deterministic in the seed") {
  CHECK(param_checksum(Model::mlp({6, 5, 3}, 11)) == param_checksum(Model::mlp({6, 5, 3}, 11)));
  CHECK(param_checksum(Model::mlp({6, 5, 3}, 11)) != param_checksum(Model::mlp({6, 5, 3}, 12)));
  const auto a = Model::small_cnn(3, 8, 8, {4, 6}, 2, 5), b = Model::small_cnn(3, 8, 8, {4, 6}, 2, 5);
  CHECK(flatten_params(a) == flatten_params(b));
}

TEST_CASE("small cnn shapes and zero-input logits") {
  Model m = Model::small_cnn(3, 8, 8, {4}, 2, 3);
  CHECK(m.logits(random_batch({5, 3, 8, 8}, 1)).shape() == Shape{5, 2});
  auto& bias = m.param("head.bias").tensor;
  bias[0] = 0.25;
  bias[1] = -1.5;
  const Tensor z = m.logits(Tensor({2, 3, 8, 8}));
  CHECK(z.values() == std::vector<double>{0.25, -1.5, 0.25, -1.5});

  CHECK(Model::small_cnn(1, 8, 8, {2, 2, 2, 2}, 3, 1).logits(Tensor({1, 1, 8, 8})).shape() == Shape{1, 3});
  CHECK_THROWS_AS(Model::small_cnn(1, 2, 2, {2, 2, 2}, 3, 1), ConfigError);
  CHECK_THROWS_AS(Model::small_cnn(1, 8, 8, {}, 3, 1), ConfigError);
}

TEST_CASE("forward yields N x C logits and accepts image-shaped input for an mlp") {
  const Model m = Model::mlp({12, 5, 4}, 2);
  CHECK(m.logits(random_batch({7, 12}, 3)).shape() == Shape{7, 4});
  const Tensor img = random_batch({2, 3, 2, 2}, 4);
  CHECK(m.logits(img) == m.logits(img.reshaped({2, 12})));
}

TEST_CASE("param_l2_norm examples and oracles") {
  Model m = Model::mlp({3, 2}, 9);
  for (auto& p : m.params())
    for (auto& v : p.tensor.data()) v = 0.0;
  CHECK(param_l2_norm(m) == 0.0);

  Model one = Model::mlp({1, 2}, 1);
  one.params()[0].tensor = Tensor({1, 2}, {3, 4});
  CHECK(param_l2_norm(one) == doctest::Approx(5.0).epsilon(1e-15));

  const Model r = Model::small_cnn(2, 8, 8, {3, 5}, 4, 21);
  double sq = 0, per_tensor = 0;
  for (double v : flatten_params(r)) sq += v * v;
  for (const auto& p : r.params()) {
    double t = 0;
    for (double v : p.tensor.values()) t += v * v;
    per_tensor += t;
  }
  CHECK(std::abs(param_l2_norm(r) - std::sqrt(sq)) <= 1e-12);
  CHECK(std::abs(param_l2_norm(r) * param_l2_norm(r) - per_tensor) <= 1e-10);
}

TEST_CASE("grad_l2_norm examples and errors") {
  Model m = Model::mlp({1, 1}, 1);
  CHECK_THROWS_AS(grad_l2_norm(m), StateError);
  try {
    grad_l2_norm(m);
  } catch (const StateError& e) {
    CHECK(std::string(e.what()).find("fc0.weight") != std::string::npos);
  }
  m.params()[0].tensor.set_grad({0.6});
  m.params()[1].tensor.set_grad({0.8});
  CHECK(grad_l2_norm(m) == doctest::Approx(1.0).epsilon(1e-15));

  Model r = Model::mlp({6, 4, 3}, 8);
  const Tensor x = random_batch({5, 6}, 2);
  const std::vector<int> y{0, 1, 2, 0, 1};
  r.loss_and_grad(x, y);
  double sq = 0;
  for (const auto& p : r.params())
    for (double g : p.tensor.grad()) sq += g * g;
  CHECK(std::abs(grad_l2_norm(r) - std::sqrt(sq)) <= 1e-12);
}

TEST_CASE("constant output with a matching target has zero gradient") {
  // One class: softmax is identically 1, so the loss is flat.
  Model m = Model::mlp({3, 1}, 4);
  const std::vector<int> y{0, 0};
  CHECK(m.loss_and_grad(random_batch({2, 3}, 5), y) == 0.0);
  CHECK(grad_l2_norm(m) == 0.0);
}

TEST_CASE("checkpoint round trip gives bit-identical logits") {
  Model m = Model::small_cnn(1, 8, 8, {3, 4}, 3, 77);
  Checkpoint ck{m, {{"optim/scalars", Tensor({2}, {0.9, 0.125})}}, 17, 0.8125};
  const auto path = std::filesystem::temp_directory_path() / "awdlab_model_roundtrip.ckpt";
  save_checkpoint(path, ck);
  const Checkpoint back = load_checkpoint(path);
  std::filesystem::remove(path);
  const Tensor x = random_batch({3, 1, 8, 8}, 6);
  CHECK(back.model.logits(x) == m.logits(x));
  CHECK(back.epoch == 17);
  CHECK(back.metric == 0.8125);
  REQUIRE(back.optimizer_state.size() == 1);
  CHECK(back.optimizer_state[0].name == "optim/scalars");
  CHECK(back.optimizer_state[0].tensor.values() == std::vector<double>{0.9, 0.125});
  REQUIRE(back.model.params().size() == m.params().size());
  for (std::size_t i = 0; i < m.params().size(); ++i) CHECK(back.model.params()[i].name == m.params()[i].name);
}

TEST_CASE("checkpoint rejects a bad magic string and truncated files") {
  std::stringstream bad("NOTMAGIC........");
  CHECK_THROWS_AS(read_tensor_records(bad), FormatError);

  std::stringstream ss;
  write_tensor_records(ss, {{"w", Tensor({2}, {1.0, 2.0})}});
  std::string bytes = ss.str();
  CHECK(bytes.substr(0, 8) == "AWDLAB01");
  std::stringstream cut(bytes.substr(0, bytes.size() - 3));
  CHECK_THROWS_AS(read_tensor_records(cut), FormatError);
}
