#include "awdlab/experiment.hpp"

#include <cmath>
#include <fstream>
#include <limits>

#include "awdlab/adversarial.hpp"
#include "awdlab/csv.hpp"
#include "awdlab/error.hpp"
#include "awdlab/optimizer.hpp"
#include "awdlab/rng.hpp"
#include "awdlab/training.hpp"

namespace awdlab {

std::string metrics_csv_row(const MetricsRecord& r) {
  std::string s = std::to_string(r.epoch);
  for (double v : {r.train_xent, r.train_acc, r.val_acc, r.test_acc}) s += "," + fmt_double(v);
  s += "," + (r.robust_val_acc ? fmt_double(*r.robust_val_acc) : std::string());
  for (double v : {r.weight_norm, r.lambda_mean, r.lr}) s += "," + fmt_double(v);
  return s;
}

void write_metrics_csv(const std::filesystem::path& path, const std::vector<MetricsRecord>& rows) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw InputError("cannot write metrics: " + path.string());
  os << kMetricsHeader << '\n';
  for (const auto& r : rows) os << metrics_csv_row(r) << '\n';
}

ExperimentData build_experiment_data(const ExperimentConfig& cfg) {
  const auto& dc = cfg.data;
  const std::uint64_t seed = cfg.run.seed;
  ExperimentData out;
  Dataset pool;
  if (dc.kind == "images" || dc.kind == "clusters") {
    const std::size_t total = dc.per_class + dc.test_per_class;
    Dataset all;
    if (dc.kind == "images") {
      SynthImageOptions opt;
      opt.channels = dc.channels;
      opt.stripe_amplitude = dc.stripe_amplitude;
      opt.blob_amplitude = dc.blob_amplitude;
      opt.blob_reliability = dc.blob_reliability;
      opt.noise_std = dc.noise_std;
      all = synth_images(dc.classes, dc.height, dc.width, total, seed, opt);
    } else {
      all = synth_clusters(dc.classes, dc.dim, total, dc.separation, seed);
    }
    const double test_fraction = static_cast<double>(dc.test_per_class) / static_cast<double>(total);
    auto carved = split_train_val(all, test_fraction, seed ^ component_tag("test"));
    pool = std::move(carved.train);
    out.test = std::move(carved.val);
  } else if (dc.kind == "file") {
    pool = load_dataset(dc.train_path);
    out.test = load_dataset(dc.test_path);
  } else {
    pool = load_csv_dataset(dc.train_path);
    out.test = load_csv_dataset(dc.test_path, pool.num_classes);
  }
  if (out.test.num_classes != pool.num_classes) throw ConfigError("train and test class counts differ");
  if (dc.noise_rate > 0.0) {
    auto noisy = flip_labels_symmetric(pool.labels, pool.num_classes, dc.noise_rate, seed);
    pool.clean_labels = pool.labels;
    pool.labels = std::move(noisy.labels);
    out.noise = std::move(noisy.spec);
  }
  auto split = split_train_val(pool, dc.val_fraction, seed);
  out.train = std::move(split.train);
  out.val = std::move(split.val);
  return out;
}

Model build_model(const ExperimentConfig& cfg, const Dataset& train) {
  if (cfg.model.kind == "mlp") {
    std::vector<std::size_t> sizes{train.example_size()};
    sizes.insert(sizes.end(), cfg.model.hidden.begin(), cfg.model.hidden.end());
    sizes.push_back(train.num_classes);
    return Model::mlp(sizes, cfg.run.seed);
  }
  const auto shape = train.example_shape();
  if (shape.size() != 3) throw ConfigError("model.kind = cnn needs C x H x W inputs, got " + shape_str(shape));
  return Model::small_cnn(shape[0], shape[1], shape[2], cfg.model.channels, train.num_classes, cfg.run.seed);
}

namespace {

struct Evaluator {
  const ExperimentConfig& cfg;
  const ExperimentData& data;
  bool robust;

  MetricsRecord operator()(const Model& model, std::int64_t epoch, bool robust_now) const {
    MetricsRecord r;
    r.epoch = epoch;
    r.train_acc = clean_accuracy(model, data.train);
    r.val_acc = clean_accuracy(model, data.val);
    r.test_acc = clean_accuracy(model, data.test);
    if (robust && robust_now) {
      r.robust_val_acc = robust_accuracy(model, data.val, cfg.attack.eval_config(),
                                         cfg.run.seed ^ component_tag("eval-attack"));
    }
    r.weight_norm = param_l2_norm(model);
    return r;
  }
};

std::optional<double> stopping_metric(const std::string& rule, const MetricsRecord& r) {
  if (rule == "clean-val") return r.val_acc;
  if (rule == "robust-val") return r.robust_val_acc;
  return std::nullopt;
}

}  // namespace

RunResult run_experiment(const ExperimentConfig& cfg) {
  cfg.validate();
  const ExperimentData data = build_experiment_data(cfg);
  RunResult res;
  Model model = build_model(cfg, data.train);
  const std::size_t per_epoch = batches_per_epoch(data.train.size(), cfg.optim.batch_size);
  const auto total_steps = static_cast<std::int64_t>(std::max<std::size_t>(cfg.optim.epochs * per_epoch, 1));
  Optimizer opt(cfg.optim.regularizer(), make_state(model, cfg.optim.lr, total_steps, cfg.optim.momentum));

  const std::filesystem::path out_dir = cfg.run.out;
  if (!cfg.run.out.empty()) {
    std::filesystem::create_directories(out_dir);
    std::ofstream(out_dir / "config.toml", std::ios::trunc) << config_to_text(cfg);
  }

  const bool robust = cfg.attack.enabled || cfg.run.early_stopping == "robust-val";
  const Evaluator evaluate{cfg, data, robust};
  EpochOptions options;
  options.batch_size = cfg.optim.batch_size;
  options.augment = cfg.data.augment;
  options.pad = cfg.data.pad;
  options.flip = cfg.data.flip;
  if (cfg.attack.enabled) options.attack = cfg.attack.train_config();

  MetricsRecord init = evaluate(model, 0, true);
  init.train_xent = dataset_xent(model, data.train);
  init.lr = cfg.optim.lr;
  res.history.push_back(init);
  res.best = init;
  res.best_model = model;
  std::optional<double> best_metric = stopping_metric(cfg.run.early_stopping, init);
  OptimizerState best_state = opt.state();

  const AdaptiveDecay* adaptive = std::get_if<AdaptiveDecay>(&opt.mode());
  const std::uint64_t train_seed = cfg.run.seed ^ component_tag("train");
  res.theta_min = 2.0;
  res.theta_max = 0.0;
  bool first = true;
  std::int64_t epoch = 0;
  StepObserver observe = [&](const StepReport& rep, double xent) {
    if (first) {
      res.first_decay_update = rep.lr * rep.lambda_applied * rep.weight_norm;
      res.first_xent_update = rep.lr * rep.grad_norm;
      first = false;
    }
    if (adaptive && rep.grad_norm > 1e-12 && rep.weight_norm >= 1e-12) {
      const double ratio = rep.lambda_raw * rep.weight_norm / rep.grad_norm;
      res.max_ratio_error = std::max(res.max_ratio_error, std::abs(ratio - adaptive->dog) / adaptive->dog);
      ++res.ratio_checked_steps;
    }
    if (rep.step % static_cast<std::int64_t>(cfg.run.trace_stride) == 0) {
      res.trace.append({rep.step, epoch, rep.weight_norm, rep.grad_norm, rep.lambda_applied, xent});
    }
  };

  for (epoch = 1; epoch <= static_cast<std::int64_t>(cfg.optim.epochs); ++epoch) {
    const Model before = model;
    EpochStats stats;
    try {
      stats = train_epoch(model, opt, data.train, epoch, train_seed, options, observe);
    } catch (const NumericError& e) {
      res.aborted = true;
      res.abort_reason = e.what();
      model = before;
      break;
    }
    res.max_perturbation = std::max(res.max_perturbation, stats.max_perturbation);
    res.theta_min = std::min(res.theta_min, stats.theta_min);
    res.theta_max = std::max(res.theta_max, stats.theta_max);
    const bool robust_now = epoch % static_cast<std::int64_t>(cfg.run.eval_stride) == 0 ||
                            epoch == static_cast<std::int64_t>(cfg.optim.epochs);
    MetricsRecord r = evaluate(model, epoch, robust_now);
    r.train_xent = stats.mean_xent;
    r.lambda_mean = stats.mean_lambda;
    r.lr = stats.last_lr;
    res.history.push_back(r);
    if (auto m = stopping_metric(cfg.run.early_stopping, r); m && (!best_metric || *m > *best_metric)) {
      best_metric = m;
      res.best = r;
      res.best_model = model;
      best_state = opt.state();
    }
  }
  if (cfg.run.early_stopping == "none") {
    res.best = res.history.back();
    res.best_model = model;
    best_state = opt.state();
  }
  res.final_model = model;
  if (res.theta_min > res.theta_max) res.theta_min = res.theta_max = 1.0;

  const auto nan = std::numeric_limits<double>::quiet_NaN();
  res.train_acc_flipped = res.train_acc_clean = nan;
  if (!data.train.clean_labels.empty()) {
    const auto pred = model.predict(data.train.inputs);
    std::size_t nf = 0, hf = 0, nc = 0, hc = 0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
      const bool hit = pred[i] == data.train.labels[i];
      if (data.train.labels[i] != data.train.clean_labels[i]) {
        ++nf;
        hf += hit;
      } else {
        ++nc;
        hc += hit;
      }
    }
    if (nf) res.train_acc_flipped = static_cast<double>(hf) / static_cast<double>(nf);
    if (nc) res.train_acc_clean = static_cast<double>(hc) / static_cast<double>(nc);
  }

  if (!cfg.run.out.empty()) {
    write_metrics_csv(out_dir / "metrics.csv", res.history);
    res.trace.write_csv(out_dir / "dog_trace.csv");
    save_checkpoint(out_dir / "final.ckpt",
                    Checkpoint{model, opt.state().to_records(model), res.history.back().epoch,
                               stopping_metric(cfg.run.early_stopping, res.history.back()).value_or(nan)});
    save_checkpoint(out_dir / "best.ckpt", Checkpoint{res.best_model, best_state.to_records(res.best_model),
                                                      res.best.epoch, best_metric.value_or(nan)});
    std::ofstream os(out_dir / "summary.csv", std::ios::trunc);
    os << "key,value\n";
    os << "status," << (res.aborted ? "aborted" : "ok") << '\n';
    os << "best_epoch," << res.best.epoch << '\n';
    os << "best_val_acc," << fmt_double(res.best.val_acc) << '\n';
    os << "best_test_acc," << fmt_double(res.best.test_acc) << '\n';
    os << "final_test_acc," << fmt_double(res.history.back().test_acc) << '\n';
    os << "final_weight_norm," << fmt_double(res.history.back().weight_norm) << '\n';
    os << "train_acc_flipped," << fmt_double(res.train_acc_flipped) << '\n';
    os << "train_acc_clean," << fmt_double(res.train_acc_clean) << '\n';
  }
  return res;
}

}  // namespace awdlab
