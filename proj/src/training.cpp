#include "awdlab/training.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "awdlab/error.hpp"
#include "awdlab/rng.hpp"

namespace awdlab {

std::size_t batches_per_epoch(std::size_t n, std::size_t batch_size) { return (n + batch_size - 1) / batch_size; }

EpochStats train_epoch(Model& model, Optimizer& opt, const Dataset& train, std::int64_t epoch, std::uint64_t seed,
                       const EpochOptions& options, const StepObserver& observer) {
  if (train.size() == 0) throw InputError("train_epoch: empty training set");
  if (options.batch_size == 0) throw ConfigError("train_epoch: batch size must be positive");
  const std::uint64_t epoch_key = CounterRng::mix(seed + static_cast<std::uint64_t>(epoch));
  CounterRng order_rng = component_rng(epoch_key, "shuffle");
  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), 0);
  order_rng.shuffle(order.begin(), order.end());

  EpochStats stats;
  stats.theta_min = 2.0;
  stats.theta_max = 0.0;
  double xent_sum = 0.0, lambda_sum = 0.0;
  const bool images = train.inputs.rank() == 4;
  for (std::size_t start = 0, b = 0; start < order.size(); start += options.batch_size, ++b) {
    const auto len = std::min(options.batch_size, order.size() - start);
    std::span<const std::size_t> sel(order.data() + start, len);
    Tensor xb = train.gather_inputs(sel);
    const auto yb = train.gather_labels(sel);
    const std::uint64_t batch_key = CounterRng::mix(epoch_key ^ (b + 1));
    if (options.augment && images) xb = pad_and_crop(xb, options.pad, options.flip, batch_key);
    if (options.attack) {
      Tensor adv = pgd_attack(model, xb, yb, *options.attack, batch_key);
      stats.max_perturbation = std::max(stats.max_perturbation, linf_distance(adv, xb));
      xb = std::move(adv);
    }
    const double xent = model.loss_and_grad(xb, yb);
    if (!std::isfinite(xent)) {
      throw NumericError("non-finite training loss at step " + std::to_string(opt.state().step) + " (epoch " +
                         std::to_string(epoch) + ")");
    }
    const StepReport rep = opt.step(model);
    ++stats.steps;
    xent_sum += xent;
    lambda_sum += rep.lambda_applied;
    stats.last_lr = rep.lr;
    stats.theta_min = std::min(stats.theta_min, rep.theta_min);
    stats.theta_max = std::max(stats.theta_max, rep.theta_max);
    if (observer) observer(rep, xent);
  }
  stats.mean_xent = xent_sum / static_cast<double>(stats.steps);
  stats.mean_lambda = lambda_sum / static_cast<double>(stats.steps);
  return stats;
}

EpochStats adv_train_epoch(Model& model, Optimizer& opt, const Dataset& train, std::int64_t epoch,
                           std::uint64_t seed, const AttackConfig& attack, EpochOptions options,
                           const StepObserver& observer) {
  options.attack = attack;
  return train_epoch(model, opt, train, epoch, seed, options, observer);
}

double dataset_xent(const Model& model, const Dataset& data, std::size_t batch_size) {
  if (data.size() == 0) throw InputError("dataset_xent: empty dataset");
  std::vector<std::size_t> idx(data.size());
  std::iota(idx.begin(), idx.end(), 0);
  double total = 0.0;
  for (std::size_t start = 0; start < idx.size(); start += batch_size) {
    const auto len = std::min(batch_size, idx.size() - start);
    std::span<const std::size_t> sel(idx.data() + start, len);
    total += model.loss(data.gather_inputs(sel), data.gather_labels(sel)) * static_cast<double>(len);
  }
  return total / static_cast<double>(data.size());
}

}  // namespace awdlab
