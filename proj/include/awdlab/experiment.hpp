#pragma once

#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "awdlab/config.hpp"
#include "awdlab/data.hpp"
#include "awdlab/dog.hpp"
#include "awdlab/model.hpp"

namespace awdlab {

struct MetricsRecord {
  std::int64_t epoch = 0;
  double train_xent = 0.0;
  double train_acc = 0.0;
  double val_acc = 0.0;
  double test_acc = 0.0;
  std::optional<double> robust_val_acc;
  double weight_norm = 0.0;
  double lambda_mean = 0.0;
  double lr = 0.0;
};

inline constexpr const char* kMetricsHeader =
    "epoch,train_xent,train_acc,val_acc,test_acc,robust_val_acc,weight_norm,lambda_mean,lr";

std::string metrics_csv_row(const MetricsRecord& r);
void write_metrics_csv(const std::filesystem::path& path, const std::vector<MetricsRecord>& rows);

struct ExperimentData {
  Dataset train;
  Dataset val;
  Dataset test;
  NoiseSpec noise;  // indices refer to the training pool before the validation split
};

// Synthetic data: one pool per seed, carved into a stratified test set, then
// label noise on the remainder, then the validation split.
ExperimentData build_experiment_data(const ExperimentConfig& cfg);
Model build_model(const ExperimentConfig& cfg, const Dataset& train);

struct RunResult {
  std::vector<MetricsRecord> history;
  MetricsRecord best;  // per the early-stopping rule (the final record for "none")
  DogTrace trace;
  Model final_model;
  Model best_model;
  bool aborted = false;
  std::string abort_reason;
  // Training accuracy against the (noisy) training labels, split by whether
  // the label was flipped. NaN without label noise.
  double train_acc_flipped = 0.0;
  double train_acc_clean = 0.0;
  double max_perturbation = 0.0;
  double theta_min = 1.0, theta_max = 1.0;
  // Pre-EMA lambda_t * |w| / |grad| relative deviation from DoG, worst over all
  // steps with |grad| > 1e-12 (adaptive mode only).
  double max_ratio_error = 0.0;
  std::size_t ratio_checked_steps = 0;
  // Norms of the weight-decay and cross-entropy parts of the first update.
  double first_decay_update = 0.0;
  double first_xent_update = 0.0;

  const MetricsRecord& final_record() const { return history.back(); }
};

// Trains per the config. With run.out set, writes metrics.csv,
// dog_trace.csv, best.ckpt, final.ckpt, summary.csv and the effective
// config.toml there. A non-finite loss stops training with aborted = true;
// the logs written so far are kept and the models hold the last finite state.
RunResult run_experiment(const ExperimentConfig& cfg);

}  // namespace awdlab
