#pragma once

#include <cstdint>
#include <span>

#include "awdlab/data.hpp"
#include "awdlab/model.hpp"

namespace awdlab {

struct AttackConfig {
  double epsilon = 8.0 / 255.0;
  double step_size = 2.0 / 255.0;
  int steps = 7;
  bool random_start = true;
  double lo = 0.0;
  double hi = 1.0;

  static AttackConfig train_default() { return {}; }
  static AttackConfig eval_default() {
    AttackConfig c;
    c.steps = 20;
    return c;
  }
  void validate() const;
};

// l-infinity PGD: signed-gradient ascent on the cross-entropy, projected onto
// the epsilon box around x and the input bounds after every step. The result
// satisfies |x_adv - x| <= epsilon elementwise when evaluated in double
// arithmetic. Model parameters are never touched.
Tensor pgd_attack(const Model& model, const Tensor& x, std::span<const int> labels, const AttackConfig& cfg,
                  std::uint64_t seed);

// Largest |a - b| over all elements.
double linf_distance(const Tensor& a, const Tensor& b);

double clean_accuracy(const Model& model, const Dataset& data, std::size_t batch_size = 256);
// Fraction still correct after a per-batch attack seeded from `seed`.
double robust_accuracy(const Model& model, const Dataset& data, const AttackConfig& cfg, std::uint64_t seed,
                       std::size_t batch_size = 256);

}  // namespace awdlab
