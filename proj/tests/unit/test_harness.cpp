#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "awdlab/config.hpp"
#include "awdlab/error.hpp"
#include "awdlab/experiment.hpp"
#include "awdlab/grid.hpp"
#include "awdlab/rng.hpp"
#include "doctest.h"

using namespace awdlab;
namespace fs = std::filesystem;

namespace {

ExperimentConfig tiny_config() {
  ExperimentConfig c;
  c.data.kind = "clusters";
  c.data.classes = 3;
  c.data.per_class = 40;
  c.data.test_per_class = 20;
  c.data.dim = 6;
  c.data.separation = 3.0;
  c.model.hidden = {8};
  c.optim.epochs = 3;
  c.optim.batch_size = 16;
  c.optim.lr = 0.05;
  c.run.seed = 5;
  return c;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

fs::path fresh_dir(const std::string& name) {
  const auto d = fs::temp_directory_path() / name;
  fs::remove_all(d);
  return d;
}

}  // namespace

TEST_CASE("config text parsing") {
  const auto c = parse_config(R"(
# comment
grid.lrs = [0.1, 0.01]

[data]
kind = "clusters"
classes = 5
noise_rate = 0.2

[optim]
mode = "adaptive"
dog = 0.02   # trailing comment
epochs = 7

[attack]
enabled = true
epsilon = 8/255

[model]
hidden = [32, 16]
)");
  CHECK(c.data.kind == "clusters");
  CHECK(c.data.classes == 5);
  CHECK(c.data.noise_rate == 0.2);
  CHECK(c.optim.mode == "adaptive");
  CHECK(c.optim.dog == 0.02);
  CHECK(c.optim.epochs == 7);
  CHECK(c.attack.enabled);
  CHECK(c.attack.epsilon == 8.0 / 255.0);
  CHECK(c.model.hidden == std::vector<std::size_t>{32, 16});
  CHECK(c.grid.lrs == std::vector<double>{0.1, 0.01});
  CHECK(c.optim.batch_size == 128);
  CHECK(std::holds_alternative<AdaptiveDecay>(c.optim.regularizer()));
}

TEST_CASE("config rejects unknown keys, duplicates and bad values") {
  CHECK_THROWS_AS(parse_config("optim.learning_rate = 0.1\n"), ConfigError);
  CHECK_THROWS_AS(parse_config("[optim]\nlr = 0.1\nlr = 0.2\n"), ConfigError);
  CHECK_THROWS_AS(parse_config("optim.epochs = many\n"), ConfigError);
  try {
    parse_config("optim.lr = -1\noptim.mode = \"sideways\"\n");
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("optim.lr") != std::string::npos);
    CHECK(msg.find("optim.mode") != std::string::npos);
  }
  CHECK_THROWS_AS(parse_config("data.val_fraction = 1.5\n"), ConfigError);
  CHECK_THROWS_AS(parse_config("optim.batch_size = 0\n"), ConfigError);
}

TEST_CASE("config overrides") {
  auto entries = parse_config_text("optim.lr = 0.1\n");
  apply_override(entries, "optim.lr=0.5");
  apply_override(entries, "run.seed = 9");
  const auto c = config_from_entries(entries);
  CHECK(c.optim.lr == 0.5);
  CHECK(c.run.seed == 9);
  CHECK_THROWS_AS(apply_override(entries, "optim.nope=1"), ConfigError);
  CHECK_THROWS_AS(apply_override(entries, "novalue"), ConfigError);
}

TEST_CASE("config round trip through canonical text") {
  auto c = tiny_config();
  c.optim.mode = "adadecay";
  c.optim.alpha = 0.25;
  c.data.noise_rate = 0.1 + 0.2;
  c.grid.lambdas = {1e-5, 3e-4};
  c.attack.epsilon = 8.0 / 255.0;
  const auto text = config_to_text(c);
  const auto back = parse_config(text);
  CHECK(config_to_text(back) == text);
  CHECK(back.data.noise_rate == 0.1 + 0.2);
  CHECK(back.attack.epsilon == 8.0 / 255.0);
  CHECK(back.optim.alpha == 0.25);
}

TEST_CASE("geometric sequences") {
  const auto lam = geometric_sequence(0.00005, 0.005, 17);
  REQUIRE(lam.size() == 17);
  CHECK(lam.front() == 0.00005);
  CHECK(lam.back() == 0.005);
  for (std::size_t i = 1; i < lam.size(); ++i) CHECK(lam[i] / lam[i - 1] == doctest::Approx(std::pow(100.0, 1.0 / 16)));
  const auto dog = geometric_sequence(0.02, 0.04, 9);
  REQUIRE(dog.size() == 9);
  CHECK(dog.front() == 0.02);
  CHECK(dog.back() == 0.04);
  CHECK(geometric_sequence(0.3, 0.3, 4) == std::vector<double>(4, 0.3));
  const auto three = geometric_sequence(1, 4, 3);
  CHECK(three[0] == 1.0);
  CHECK(three[1] == doctest::Approx(2.0).epsilon(1e-15));
  CHECK(three[2] == 4.0);
  CHECK_THROWS_AS(geometric_sequence(0.0, 1.0, 3), ConfigError);
  CHECK_THROWS_AS(geometric_sequence(1.0, -1.0, 3), ConfigError);
  CHECK_THROWS_AS(geometric_sequence(1.0, 2.0, 1), ConfigError);
}

TEST_CASE("runs are deterministic down to the bytes") {
  auto c = tiny_config();
  c.optim.mode = "adaptive";
  const auto a = fresh_dir("awdlab_det_a"), b = fresh_dir("awdlab_det_b");
  c.run.out = a.string();
  run_experiment(c);
  c.run.out = b.string();
  run_experiment(c);
  for (const char* f : {"metrics.csv", "dog_trace.csv", "final.ckpt", "best.ckpt", "summary.csv"}) {
    CAPTURE(f);
    CHECK(fs::exists(a / f));
    CHECK(slurp(a / f) == slurp(b / f));
  }
  std::istringstream metrics(slurp(a / "metrics.csv"));
  std::string header;
  std::getline(metrics, header);
  CHECK(header == kMetricsHeader);
  fs::remove_all(a);
  fs::remove_all(b);
}

TEST_CASE("the persisted config reproduces the run") {
  auto c = tiny_config();
  const auto a = fresh_dir("awdlab_cfg_a"), b = fresh_dir("awdlab_cfg_b");
  c.run.out = a.string();
  const auto first = run_experiment(c);
  auto again = parse_config(slurp(a / "config.toml"));
  again.run.out = b.string();
  const auto second = run_experiment(again);
  CHECK(slurp(a / "metrics.csv") == slurp(b / "metrics.csv"));
  CHECK(param_checksum(first.final_model) == param_checksum(second.final_model));
  fs::remove_all(a);
  fs::remove_all(b);
}

TEST_CASE("zero epochs gives one untrained evaluation row") {
  auto c = tiny_config();
  c.optim.epochs = 0;
  c.data.per_class = 300;
  c.data.test_per_class = 300;
  c.data.separation = 0.0;
  const auto r = run_experiment(c);
  REQUIRE(r.history.size() == 1);
  CHECK(r.history[0].epoch == 0);
  const double sd = std::sqrt((1.0 / 3) * (2.0 / 3) / 900.0);
  CHECK(std::abs(r.history[0].test_acc - 1.0 / 3) <= 4 * sd);
}

TEST_CASE("weight decay shrinks the final weight norm") {
  auto c = tiny_config();
  c.optim.epochs = 5;
  c.optim.weight_decay = 0.0;
  const auto plain = run_experiment(c);
  c.optim.weight_decay = 0.1;
  const auto decayed = run_experiment(c);
  CHECK(decayed.final_record().weight_norm < plain.final_record().weight_norm);
}

TEST_CASE("one record per epoch and optional robust accuracy") {
  auto c = tiny_config();
  c.attack.enabled = true;
  c.attack.train_steps = 2;
  c.attack.eval_steps = 3;
  c.run.early_stopping = "robust-val";
  const auto r = run_experiment(c);
  REQUIRE(r.history.size() == 4);
  for (std::size_t e = 0; e < r.history.size(); ++e) {
    CHECK(r.history[e].epoch == static_cast<std::int64_t>(e));
    CHECK(r.history[e].weight_norm >= 0.0);
  }
  CHECK(r.final_record().robust_val_acc.has_value());
  CHECK(r.best.robust_val_acc.has_value());
  CHECK(r.max_perturbation <= c.attack.epsilon + 1e-12);
}

TEST_CASE("early stopping keeps the best validation epoch") {
  auto c = tiny_config();
  c.optim.epochs = 6;
  const auto r = run_experiment(c);
  double best = -1;
  for (const auto& h : r.history) best = std::max(best, h.val_acc);
  CHECK(r.best.val_acc == best);
  c.run.early_stopping = "none";
  const auto n = run_experiment(c);
  CHECK(n.best.epoch == n.final_record().epoch);
}

TEST_CASE("a 1x1 grid equals a single run") {
  auto c = tiny_config();
  const auto g = grid_search_2d({0.05}, {5e-4}, c);
  c.optim.lr = 0.05;
  c.optim.weight_decay = 5e-4;
  const auto r = run_experiment(c);
  REQUIRE(g.cells.size() == 1);
  CHECK(g.cells[0].val_acc == r.best.val_acc);
  CHECK(g.argmax == CellIndex{0, 0});
}

TEST_CASE("grid diagonal cells share the first weight-decay update") {
  auto c = tiny_config();
  c.optim.epochs = 1;
  c.optim.momentum = 0.0;
  const auto g = grid_search_2d({0.01, 0.1}, {0.005, 0.0005}, c, 2);
  const double a = g.at(0, 0).first_decay_update, b = g.at(1, 1).first_decay_update;
  CHECK(a > 0.0);
  CHECK(a == doctest::Approx(b).epsilon(1e-12));
  CHECK(g.at(0, 1).first_decay_update != doctest::Approx(a));
}

TEST_CASE("grid cells do not depend on thread count or order") {
  auto c = tiny_config();
  c.optim.epochs = 2;
  const std::vector<double> lrs{0.02, 0.1}, lams{1e-4, 1e-3, 1e-2};
  const auto serial = grid_search_2d(lrs, lams, c, 1);
  const auto parallel = grid_search_2d(lrs, lams, c, 4);
  const auto reversed = grid_search_2d({0.1, 0.02}, lams, c, 1);
  for (std::size_t i = 0; i < 2; ++i)
    for (std::size_t j = 0; j < 3; ++j) {
      CHECK(serial.at(i, j).val_acc == parallel.at(i, j).val_acc);
      CHECK(serial.at(i, j).val_acc == reversed.at(1 - i, j).val_acc);
    }
}

TEST_CASE("grid csv and summaries") {
  GridResult g;
  g.lrs = {0.1, 0.01};
  g.lambdas = {1e-3, 1e-4};
  g.cells = {{0.1, 1e-3, 0.5}, {0.1, 1e-4, 0.7}, {0.01, 1e-3, 0.9}, {0.01, 1e-4, std::nan("")}};
  g.cells[3].failed = true;
  summarize_grid(g);
  CHECK(g.argmax == CellIndex{1, 0});
  CHECK(g.best_lambda_per_lr == std::vector<std::size_t>{1, 0});
  CHECK(g.best_lr_per_lambda == std::vector<std::size_t>{1, 0});
  const auto path = fs::temp_directory_path() / "awdlab_grid.csv";
  write_grid_csv(path, g);
  const auto text = slurp(path);
  fs::remove(path);
  CHECK(text.rfind("lr,lambda_or_dog,val_acc\n", 0) == 0);
  CHECK(text.find(",nan\n") != std::string::npos);
}

TEST_CASE("alternating search stalls where the landscape has a diagonal ridge") {
  const auto lrs = geometric_sequence(0.001, 1.0, 7), lams = geometric_sequence(1e-5, 1e-2, 7);
  const auto land = diagonal_ridge_landscape(lrs, lams, 5e-5, 0.1, 3);
  REQUIRE(land.size() == 49);
  std::size_t arg = 0;
  for (std::size_t k = 0; k < land.size(); ++k)
    if (land[k] > land[arg]) arg = k;
  const auto score = [&](CellIndex c) { return land[c.lr * lams.size() + c.lambda]; };
  const auto s = alternating_1d_search(lrs.size(), lams.size(), {1, 4}, score);
  CHECK(s.rounds >= 1);
  CHECK(s.evaluations <= 49);
  REQUIRE_FALSE(s.path.empty());
  CHECK(s.path.back() == s.final_cell);
  // A coordinate-wise local optimum: neither axis improves it.
  for (std::size_t i = 0; i < lrs.size(); ++i) CHECK(score({i, s.final_cell.lambda}) <= score(s.final_cell));
  for (std::size_t j = 0; j < lams.size(); ++j) CHECK(score({s.final_cell.lr, j}) <= score(s.final_cell));
  CHECK(s.final_cell.lr * lams.size() + s.final_cell.lambda != arg);
}

TEST_CASE("alternating search finds the optimum of a separable landscape") {
  const auto score = [](CellIndex c) {
    const double a = static_cast<double>(c.lr) - 3, b = static_cast<double>(c.lambda) - 1;
    return -(a * a) - (b * b);
  };
  const auto s = alternating_1d_search(6, 5, {0, 4}, score);
  CHECK(s.final_cell == CellIndex{3, 1});
}
