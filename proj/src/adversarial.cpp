#include "awdlab/adversarial.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "awdlab/error.hpp"
#include "awdlab/rng.hpp"

namespace awdlab {

void AttackConfig::validate() const {
  if (!(epsilon >= 0.0)) throw ConfigError("attack epsilon must be >= 0");
  if (!(step_size > 0.0)) throw ConfigError("attack step_size must be > 0");
  if (steps < 1) throw ConfigError("attack steps must be >= 1");
  if (!(lo < hi)) throw ConfigError("attack input bounds must satisfy lo < hi");
}

namespace {

// Nearest double to `candidate` that is within eps of x (as computed in
// double arithmetic) and inside [lo, hi].
double project(double x, double candidate, double eps, double lo, double hi) {
  double a = std::clamp(candidate, x - eps, x + eps);
  while (a - x > eps) a = std::nextafter(a, -INFINITY);
  while (x - a > eps) a = std::nextafter(a, INFINITY);
  return std::clamp(a, lo, hi);
}

}  // namespace

Tensor pgd_attack(const Model& model, const Tensor& x, std::span<const int> labels, const AttackConfig& cfg,
                  std::uint64_t seed) {
  cfg.validate();
  for (double v : x.data()) {
    if (!(v >= cfg.lo && v <= cfg.hi)) throw InputError("pgd_attack: input outside the configured bounds");
  }
  if (cfg.epsilon == 0.0) return x;
  CounterRng rng = component_rng(seed, "attack");
  Tensor adv = x;
  auto a = adv.data();
  auto x0 = x.data();
  if (cfg.random_start) {
    for (std::size_t i = 0; i < a.size(); ++i) {
      a[i] = project(x0[i], x0[i] + rng.uniform(-cfg.epsilon, cfg.epsilon), cfg.epsilon, cfg.lo, cfg.hi);
    }
  }
  for (int s = 0; s < cfg.steps; ++s) {
    const Tensor g = model.input_gradient(adv, labels);
    for (std::size_t i = 0; i < a.size(); ++i) {
      const double sign = g[i] > 0.0 ? 1.0 : (g[i] < 0.0 ? -1.0 : 0.0);
      a[i] = project(x0[i], a[i] + cfg.step_size * sign, cfg.epsilon, cfg.lo, cfg.hi);
    }
  }
  return adv;
}

double linf_distance(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) throw DimensionError("linf_distance: shape mismatch");
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

namespace {

template <typename Fn>
double batched_accuracy(const Dataset& data, std::size_t batch_size, Fn&& predict_batch) {
  if (data.size() == 0) throw InputError("accuracy on an empty dataset");
  if (batch_size == 0) batch_size = data.size();
  std::vector<std::size_t> idx(data.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::size_t hits = 0;
  for (std::size_t start = 0, b = 0; start < idx.size(); start += batch_size, ++b) {
    const auto len = std::min(batch_size, idx.size() - start);
    std::span<const std::size_t> sel(idx.data() + start, len);
    const Tensor xb = data.gather_inputs(sel);
    const auto yb = data.gather_labels(sel);
    const auto pred = predict_batch(xb, yb, b);
    for (std::size_t i = 0; i < len; ++i) hits += pred[i] == yb[i];
  }
  return static_cast<double>(hits) / static_cast<double>(data.size());
}

}  // namespace

double clean_accuracy(const Model& model, const Dataset& data, std::size_t batch_size) {
  return batched_accuracy(data, batch_size,
                          [&](const Tensor& xb, const std::vector<int>&, std::size_t) { return model.predict(xb); });
}

double robust_accuracy(const Model& model, const Dataset& data, const AttackConfig& cfg, std::uint64_t seed,
                       std::size_t batch_size) {
  return batched_accuracy(data, batch_size, [&](const Tensor& xb, const std::vector<int>& yb, std::size_t b) {
    return model.predict(pgd_attack(model, xb, yb, cfg, seed + b));
  });
}

}  // namespace awdlab
