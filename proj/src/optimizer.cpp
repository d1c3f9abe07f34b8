#include "awdlab/optimizer.hpp"

#include <atomic>
#include <cmath>
#include <iostream>
#include <numbers>

#include "awdlab/error.hpp"

namespace awdlab {

std::string mode_name(const RegularizerMode& mode) {
  switch (mode.index()) {
    case 0: return "fixed";
    case 1: return "adaptive";
    default: return "adadecay";
  }
}

void validate_mode(const RegularizerMode& mode) {
  if (const auto* f = std::get_if<FixedDecay>(&mode)) {
    if (!(f->weight_decay >= 0.0)) throw ConfigError("fixed weight decay must be >= 0");
  } else if (const auto* a = std::get_if<AdaptiveDecay>(&mode)) {
    if (!(a->dog > 0.0)) throw ConfigError("adaptive DoG must be > 0");
    if (a->ema_old < 0.0 || a->ema_new < 0.0 || std::abs(a->ema_old + a->ema_new - 1.0) > 1e-12) {
      throw ConfigError("adaptive EMA coefficients must be nonnegative and sum to 1");
    }
  } else {
    const auto& d = std::get<AdaDecay>(mode);
    if (!(d.weight_decay >= 0.0)) throw ConfigError("adadecay lambda must be >= 0");
    if (!std::isfinite(d.alpha)) throw ConfigError("adadecay alpha must be finite");
  }
}

OptimizerState make_state(const Model& model, double base_lr, std::int64_t total_steps, double momentum) {
  OptimizerState s;
  s.base_lr = base_lr;
  s.total_steps = total_steps;
  s.momentum = momentum;
  for (const auto& p : model.params()) s.momentum_buffers.emplace_back(p.tensor.shape());
  return s;
}

std::vector<NamedTensor> OptimizerState::to_records(const Model& model) const {
  std::vector<NamedTensor> out;
  out.push_back({"scalars", Tensor({6}, {momentum, base_lr, static_cast<double>(total_steps),
                                         static_cast<double>(step), lambda_bar, last_lambda})});
  for (std::size_t i = 0; i < momentum_buffers.size(); ++i) {
    out.push_back({"momentum/" + model.params().at(i).name, momentum_buffers[i]});
  }
  return out;
}

OptimizerState OptimizerState::from_records(const std::vector<NamedTensor>& records) {
  OptimizerState s;
  bool have_scalars = false;
  for (const auto& r : records) {
    if (r.name == "scalars") {
      if (r.tensor.size() != 6) throw FormatError("optimizer scalars record has wrong length");
      s.momentum = r.tensor[0];
      s.base_lr = r.tensor[1];
      s.total_steps = static_cast<std::int64_t>(r.tensor[2]);
      s.step = static_cast<std::int64_t>(r.tensor[3]);
      s.lambda_bar = r.tensor[4];
      s.last_lambda = r.tensor[5];
      have_scalars = true;
    } else if (r.name.starts_with("momentum/")) {
      s.momentum_buffers.push_back(r.tensor);
    }
  }
  if (!have_scalars) throw FormatError("optimizer state has no scalars record");
  return s;
}

double cosine_lr(std::int64_t step, std::int64_t total_steps, double base_lr) {
  if (total_steps <= 0) throw RangeError("cosine_lr: total_steps must be positive");
  if (step < 0 || step > total_steps) {
    throw RangeError("cosine_lr: step " + std::to_string(step) + " outside [0, " + std::to_string(total_steps) + "]");
  }
  if (step == total_steps) return 0.0;
  const double frac = static_cast<double>(step) / static_cast<double>(total_steps);
  return base_lr * 0.5 * (1.0 + std::cos(std::numbers::pi * frac));
}

double awd_lambda(double grad_norm, double weight_norm, double dog) {
  if (weight_norm < 1e-12) {
    static std::atomic<bool> warned{false};
    if (!warned.exchange(true)) {
      std::cerr << "awdlab: weight norm below 1e-12, adaptive weight decay set to 0\n";
    }
    return 0.0;
  }
  return dog * grad_norm / weight_norm;
}

double adadecay_theta(double normalized_grad, double alpha) {
  return 2.0 / (1.0 + std::exp(-alpha * normalized_grad));
}

namespace {

void check_ready(const Model& model, const OptimizerState& state) {
  if (state.momentum_buffers.size() != model.params().size()) {
    throw StateError("optimizer has " + std::to_string(state.momentum_buffers.size()) +
                     " momentum buffers for " + std::to_string(model.params().size()) + " parameters");
  }
  for (std::size_t i = 0; i < model.params().size(); ++i) {
    const auto& p = model.params()[i];
    if (!p.tensor.has_grad()) throw StateError("gradient missing for parameter '" + p.name + "'");
    if (state.momentum_buffers[i].shape() != p.tensor.shape()) {
      throw StateError("momentum buffer shape mismatch for '" + p.name + "'");
    }
    for (double g : p.tensor.grad()) {
      if (!std::isfinite(g)) {
        throw NumericError("non-finite gradient at step " + std::to_string(state.step) + " in parameter '" +
                           p.name + "'");
      }
    }
  }
}

// Applies buffer <- mu*buffer + (g + coef_i * w_i); w <- w - lr*buffer, with
// coef_i supplied per element.
template <typename Coef>
void momentum_update(Model& model, OptimizerState& state, double lr, Coef&& coef) {
  const double mu = state.momentum;
  for (std::size_t i = 0; i < model.params().size(); ++i) {
    auto& p = model.params()[i].tensor;
    auto w = p.data();
    auto g = p.grad();
    auto buf = state.momentum_buffers[i].data();
    for (std::size_t j = 0; j < w.size(); ++j) {
      const double d = g[j] + coef(i, j) * w[j];
      buf[j] = mu * buf[j] + d;
      w[j] -= lr * buf[j];
    }
  }
  ++state.step;
}

}  // namespace

StepReport sgd_fixed_step(Model& model, OptimizerState& state, double weight_decay, double lr) {
  check_ready(model, state);
  StepReport r;
  r.step = state.step;
  r.lr = lr;
  r.weight_norm = param_l2_norm(model);
  r.grad_norm = grad_l2_norm(model);
  r.lambda_raw = r.lambda_applied = weight_decay;
  momentum_update(model, state, lr, [&](std::size_t, std::size_t) { return weight_decay; });
  return r;
}

StepReport awd_step(Model& model, OptimizerState& state, const AdaptiveDecay& mode, double lr) {
  check_ready(model, state);
  StepReport r;
  r.step = state.step;
  r.lr = lr;
  r.weight_norm = param_l2_norm(model);
  r.grad_norm = grad_l2_norm(model);
  const double lambda_t = awd_lambda(r.grad_norm, r.weight_norm, mode.dog);
  state.last_lambda = lambda_t;
  state.lambda_bar = mode.ema_old * state.lambda_bar + mode.ema_new * lambda_t;
  r.lambda_raw = lambda_t;
  r.lambda_applied = state.lambda_bar;
  const double lam = state.lambda_bar;
  momentum_update(model, state, lr, [&](std::size_t, std::size_t) { return lam; });
  return r;
}

StepReport adadecay_step(Model& model, OptimizerState& state, const AdaDecay& mode, double lr) {
  check_ready(model, state);
  StepReport r;
  r.step = state.step;
  r.lr = lr;
  r.weight_norm = param_l2_norm(model);
  r.grad_norm = grad_l2_norm(model);
  r.lambda_raw = r.lambda_applied = mode.weight_decay;
  r.theta_min = 2.0;
  r.theta_max = 0.0;
  // Each parameter tensor is one normalization group.
  std::vector<std::vector<double>> coef(model.params().size());
  for (std::size_t i = 0; i < model.params().size(); ++i) {
    auto g = model.params()[i].tensor.grad();
    const double n = static_cast<double>(g.size());
    double mean = 0.0;
    for (double v : g) mean += v;
    mean /= n;
    double var = 0.0;
    for (double v : g) var += (v - mean) * (v - mean);
    const double sd = std::sqrt(var / n);
    coef[i].resize(g.size());
    for (std::size_t j = 0; j < g.size(); ++j) {
      const double z = sd < 1e-12 ? 0.0 : (g[j] - mean) / sd;
      const double theta = adadecay_theta(z, mode.alpha);
      r.theta_min = std::min(r.theta_min, theta);
      r.theta_max = std::max(r.theta_max, theta);
      coef[i][j] = mode.weight_decay * theta;
    }
  }
  momentum_update(model, state, lr, [&](std::size_t i, std::size_t j) { return coef[i][j]; });
  return r;
}

Optimizer::Optimizer(RegularizerMode mode, OptimizerState state) : mode_(std::move(mode)), state_(std::move(state)) {
  validate_mode(mode_);
}

StepReport Optimizer::step(Model& model) {
  return step(model, cosine_lr(std::min(state_.step, state_.total_steps), state_.total_steps, state_.base_lr));
}

StepReport Optimizer::step(Model& model, double lr) {
  return std::visit(
      [&](const auto& m) -> StepReport {
        using M = std::decay_t<decltype(m)>;
        if constexpr (std::is_same_v<M, FixedDecay>) {
          return sgd_fixed_step(model, state_, m.weight_decay, lr);
        } else if constexpr (std::is_same_v<M, AdaptiveDecay>) {
          return awd_step(model, state_, m, lr);
        } else {
          return adadecay_step(model, state_, m, lr);
        }
      },
      mode_);
}

}  // namespace awdlab
