#pragma once

#include <cstdint>
#include <string>
#include <variant>
#include <vector>

#include "awdlab/model.hpp"

namespace awdlab {

// lambda_wd * w added to the gradient every step.
struct FixedDecay {
  double weight_decay = 0.0;
};

// lambda_t = dog * |grad| / |w|, smoothed by an EMA before use.
struct AdaptiveDecay {
  double dog = 0.016;
  double ema_old = 0.1;
  double ema_new = 0.9;
};

// Per-parameter factor theta = 2 / (1 + exp(-alpha * normalized grad)) scaling lambda.
struct AdaDecay {
  double weight_decay = 0.0;
  double alpha = 1.0;
};

using RegularizerMode = std::variant<FixedDecay, AdaptiveDecay, AdaDecay>;

std::string mode_name(const RegularizerMode& mode);
void validate_mode(const RegularizerMode& mode);

struct OptimizerState {
  std::vector<Tensor> momentum_buffers;
  double momentum = 0.9;
  double base_lr = 0.1;
  std::int64_t total_steps = 1;
  std::int64_t step = 0;
  double lambda_bar = 0.0;   // adaptive EMA accumulator
  double last_lambda = 0.0;  // last pre-EMA lambda_t (diagnostic)

  std::vector<NamedTensor> to_records(const Model& model) const;
  static OptimizerState from_records(const std::vector<NamedTensor>& records);
};

OptimizerState make_state(const Model& model, double base_lr, std::int64_t total_steps, double momentum = 0.9);

// What one step did; enough to audit every update rule.
struct StepReport {
  std::int64_t step = 0;
  double lr = 0.0;
  double weight_norm = 0.0;
  double grad_norm = 0.0;
  double lambda_raw = 0.0;      // lambda_t before smoothing (adaptive), lambda otherwise
  double lambda_applied = 0.0;  // coefficient multiplying w in the update
  double theta_min = 1.0;       // AdaDecay factor range
  double theta_max = 1.0;
};

double cosine_lr(std::int64_t step, std::int64_t total_steps, double base_lr);

// Adaptive coefficient; detached scalar. Returns 0 (and warns once) when
// weight_norm is below 1e-12.
double awd_lambda(double grad_norm, double weight_norm, double dog);

// AdaDecay factor for one normalized gradient entry.
double adadecay_theta(double normalized_grad, double alpha);

// buffer <- mu * buffer + (grad + lambda * w);  w <- w - lr * buffer.
StepReport sgd_fixed_step(Model& model, OptimizerState& state, double weight_decay, double lr);
// Algorithm: lambda_t from the global norms, EMA into lambda_bar, then the
// fixed update with lambda_bar. Grads must come from the cross-entropy alone.
StepReport awd_step(Model& model, OptimizerState& state, const AdaptiveDecay& mode, double lr);
StepReport adadecay_step(Model& model, OptimizerState& state, const AdaDecay& mode, double lr);

class Optimizer {
 public:
  Optimizer(RegularizerMode mode, OptimizerState state);

  // Uses the cosine schedule position of the state's step counter.
  StepReport step(Model& model);
  StepReport step(Model& model, double lr);

  const RegularizerMode& mode() const { return mode_; }
  const OptimizerState& state() const { return state_; }
  OptimizerState& state() { return state_; }

 private:
  RegularizerMode mode_;
  OptimizerState state_;
};

}  // namespace awdlab
