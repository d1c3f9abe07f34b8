#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "awdlab/adversarial.hpp"
#include "awdlab/optimizer.hpp"

namespace awdlab {

struct DataConfig {
  std::string kind = "images";  // images | clusters | file | csv
  std::size_t classes = 4;
  std::size_t per_class = 250;
  std::size_t test_per_class = 100;
  std::size_t dim = 16;
  double separation = 4.0;
  std::size_t height = 8, width = 8, channels = 1;
  double stripe_amplitude = 0.25;
  double blob_amplitude = 0.0;
  double blob_reliability = 1.0;
  double noise_std = 0.15;
  std::string train_path, test_path;
  double val_fraction = 0.1;
  double noise_rate = 0.0;
  bool augment = false;
  std::size_t pad = 4;
  bool flip = true;
};

struct ModelConfig {
  std::string kind = "mlp";  // mlp | cnn
  std::vector<std::size_t> hidden{64};
  std::vector<std::size_t> channels{8};
};

struct OptimConfig {
  std::string mode = "fixed";  // fixed | adaptive | adadecay
  double lr = 0.1;
  double weight_decay = 5e-4;
  double dog = 0.016;
  double ema_old = 0.1, ema_new = 0.9;
  double alpha = 1.0;
  double momentum = 0.9;
  std::size_t epochs = 200;
  std::size_t batch_size = 128;

  RegularizerMode regularizer() const;
  // The swept hyperparameter: dog for adaptive, weight_decay otherwise.
  double lambda_or_dog() const;
  void set_lambda_or_dog(double v);
};

struct AttackSection {
  bool enabled = false;
  double epsilon = 8.0 / 255.0;
  double step_size = 2.0 / 255.0;
  int train_steps = 7;
  int eval_steps = 20;
  bool random_start = true;

  AttackConfig train_config() const;
  AttackConfig eval_config() const;
};

struct RunConfig {
  std::uint64_t seed = 0;
  std::string early_stopping = "clean-val";  // clean-val | robust-val | none
  std::size_t eval_stride = 1;
  std::size_t trace_stride = 1;
  double plateau_tol = 1e-3;
  std::size_t plateau_patience = 5;
  std::string out;
  std::size_t threads = 1;
};

struct GridConfig {
  std::vector<double> lrs;
  std::vector<double> lambdas;
  double start_lr = 0.01;
  double start_lambda = 0.005;
};

struct ExperimentConfig {
  DataConfig data;
  ModelConfig model;
  OptimConfig optim;
  AttackSection attack;
  RunConfig run;
  GridConfig grid;

  // Throws ConfigError listing every offending field.
  void validate() const;
};

// Flat "key = value" text. "[section]" headers prefix later keys with
// "section."; dotted keys may also be written in full. "#" starts a comment.
using ConfigEntries = std::map<std::string, std::string>;

ConfigEntries parse_config_text(const std::string& text);
ConfigEntries read_config_file(const std::string& path);
// "key=value"; the key must be known.
void apply_override(ConfigEntries& entries, const std::string& assignment);
ExperimentConfig config_from_entries(const ConfigEntries& entries);
ExperimentConfig parse_config(const std::string& text);
// Canonical text with every key, reparseable into an equal config.
std::string config_to_text(const ExperimentConfig& cfg);

}  // namespace awdlab
