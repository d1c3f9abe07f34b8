#pragma once

#include <cstdint>
#include <functional>
#include <optional>

#include "awdlab/adversarial.hpp"
#include "awdlab/data.hpp"
#include "awdlab/model.hpp"
#include "awdlab/optimizer.hpp"

namespace awdlab {

struct EpochOptions {
  std::size_t batch_size = 128;
  bool augment = false;
  std::size_t pad = 4;
  bool flip = true;
  std::optional<AttackConfig> attack;
};

struct EpochStats {
  std::size_t steps = 0;
  double mean_xent = 0.0;
  double mean_lambda = 0.0;  // mean applied decay coefficient
  double last_lr = 0.0;
  double theta_min = 1.0, theta_max = 1.0;
  double max_perturbation = 0.0;  // largest |x_adv - x| generated this epoch
};

// Called after every optimizer step with the step report and the batch loss.
using StepObserver = std::function<void(const StepReport&, double xent)>;

// One pass over `train` in a seeded shuffled order: optional pad-and-crop,
// optional PGD, one backward on the cross-entropy, one optimizer step on the
// cosine schedule. Throws NumericError on a non-finite loss.
EpochStats train_epoch(Model& model, Optimizer& opt, const Dataset& train, std::int64_t epoch, std::uint64_t seed,
                       const EpochOptions& options, const StepObserver& observer = {});

// train_epoch with the PGD attack generating every training batch.
EpochStats adv_train_epoch(Model& model, Optimizer& opt, const Dataset& train, std::int64_t epoch,
                           std::uint64_t seed, const AttackConfig& attack, EpochOptions options = {},
                           const StepObserver& observer = {});

std::size_t batches_per_epoch(std::size_t n, std::size_t batch_size);

// Batched mean cross-entropy over the whole dataset.
double dataset_xent(const Model& model, const Dataset& data, std::size_t batch_size = 256);

}  // namespace awdlab
