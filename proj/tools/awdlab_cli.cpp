#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "awdlab/adversarial.hpp"
#include "awdlab/config.hpp"
#include "awdlab/csv.hpp"
#include "awdlab/dog.hpp"
#include "awdlab/error.hpp"
#include "awdlab/experiment.hpp"
#include "awdlab/grid.hpp"
#include "awdlab/pruning.hpp"
#include "awdlab/rng.hpp"

using namespace awdlab;
namespace fs = std::filesystem;

namespace {

struct GlobalOptions {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::vector<std::string> overrides;
};

ExperimentConfig load_config(const GlobalOptions& g) {
  ConfigEntries entries = g.config.empty() ? ConfigEntries{} : read_config_file(g.config);
  for (const auto& o : g.overrides) apply_override(entries, o);
  auto cfg = config_from_entries(entries);
  if (g.seed) cfg.run.seed = *g.seed;
  if (!g.out.empty()) cfg.run.out = g.out;
  cfg.validate();
  return cfg;
}

// Writes to <out>/<name> when an output directory is set, else to stdout.
void emit(const ExperimentConfig& cfg, const std::string& name, const std::string& text) {
  if (cfg.run.out.empty()) {
    std::cout << text;
    return;
  }
  fs::create_directories(cfg.run.out);
  std::ofstream os(fs::path(cfg.run.out) / name, std::ios::trunc);
  if (!os) throw InputError("cannot write " + (fs::path(cfg.run.out) / name).string());
  os << text;
  std::cout << "wrote " << (fs::path(cfg.run.out) / name).string() << '\n';
}

int report_run(const RunResult& r) {
  const auto& f = r.final_record();
  std::cout << "epochs " << f.epoch << "  final test_acc " << fmt_double(f.test_acc) << "  best epoch "
            << r.best.epoch << "  best val_acc " << fmt_double(r.best.val_acc) << "  best test_acc "
            << fmt_double(r.best.test_acc) << "  weight_norm " << fmt_double(f.weight_norm) << '\n';
  if (r.best.robust_val_acc) std::cout << "best robust_val_acc " << fmt_double(*r.best.robust_val_acc) << '\n';
  if (r.aborted) {
    std::cerr << "run aborted: " << r.abort_reason << '\n';
    return 3;
  }
  return 0;
}

std::vector<double> grid_axis(const std::vector<double>& values, const char* key) {
  if (values.empty()) throw ConfigError(std::string(key) + " must list at least one value");
  return values;
}

std::size_t nearest_index(const std::vector<double>& values, double target) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < values.size(); ++i)
    if (std::abs(std::log(values[i] / target)) < std::abs(std::log(values[best] / target))) best = i;
  return best;
}

const Dataset& pick_split(const ExperimentData& d, const std::string& split) {
  if (split == "train") return d.train;
  if (split == "val") return d.val;
  return d.test;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Adaptive weight decay experiments"};
  app.require_subcommand(1);
  GlobalOptions g;
  app.add_option("--config", g.config, "Experiment config file")->check(CLI::ExistingFile);
  app.add_option("--seed", g.seed, "Run seed");
  app.add_option("--out", g.out, "Output directory");
  app.add_option("--override", g.overrides, "key=value applied after the config file");

  auto* train = app.add_subcommand("train", "Train one model from the config");
  auto* grid2d = app.add_subcommand("grid2d", "Full learning-rate x decay grid");
  std::size_t threads = 0;
  grid2d->add_option("--threads", threads, "Worker threads (default run.threads)");
  auto* grid1d = app.add_subcommand("grid1d", "Alternating 1D searches over the grid axes");
  auto* estimate = app.add_subcommand("estimate-dog", "Fixed-decay run followed by the plateau-averaged DoG");
  auto* advtrain = app.add_subcommand("advtrain", "PGD adversarial training with robust early stopping");
  auto* noisy = app.add_subcommand("noisy", "Training on symmetrically flipped labels");
  std::optional<double> rate;
  noisy->add_option("--rate", rate, "Label flip probability (default data.noise_rate)")->check(CLI::Range(0.0, 1.0));
  auto* prune = app.add_subcommand("prune", "Global magnitude pruning sweep of a checkpoint");
  std::string checkpoint, split = "test";
  std::vector<double> sparsities;
  prune->add_option("--checkpoint", checkpoint, "Model checkpoint")->required()->check(CLI::ExistingFile);
  prune->add_option("--sparsities", sparsities, "Ascending sparsity levels")->required()->delimiter(',');
  prune->add_option("--split", split, "Evaluation split")->check(CLI::IsMember({"train", "val", "test"}));
  auto* eval = app.add_subcommand("eval", "Clean and robust accuracy of a checkpoint");
  bool robust = false;
  eval->add_option("--checkpoint", checkpoint, "Model checkpoint")->required()->check(CLI::ExistingFile);
  eval->add_option("--split", split, "Evaluation split")->check(CLI::IsMember({"train", "val", "test"}));
  eval->add_flag("--robust", robust, "Also run the evaluation attack");

  for (auto* sub : app.get_subcommands({})) sub->fallthrough();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    auto cfg = load_config(g);

    if (train->parsed()) return report_run(run_experiment(cfg));

    if (advtrain->parsed()) {
      cfg.attack.enabled = true;
      if (cfg.run.early_stopping == "clean-val") cfg.run.early_stopping = "robust-val";
      return report_run(run_experiment(cfg));
    }

    if (noisy->parsed()) {
      if (rate) cfg.data.noise_rate = *rate;
      const auto r = run_experiment(cfg);
      const int code = report_run(r);
      std::cout << "noise_rate " << fmt_double(cfg.data.noise_rate) << "  train_acc_flipped "
                << fmt_double(r.train_acc_flipped) << "  train_acc_clean " << fmt_double(r.train_acc_clean) << '\n';
      return code;
    }

    if (estimate->parsed()) {
      cfg.optim.mode = "fixed";
      const auto r = run_experiment(cfg);
      if (r.aborted) return report_run(r);
      const auto losses = r.trace.epoch_mean_xent();
      const double dog = estimate_dog(r.trace, cfg.run.plateau_tol, cfg.run.plateau_patience);
      double lo = INFINITY, hi = -INFINITY;
      for (const auto& row : r.trace.rows()) {
        if (auto d = dog_value(row.lambda_eff, row.weight_norm, row.grad_norm)) {
          lo = std::min(lo, *d);
          hi = std::max(hi, *d);
        }
      }
      std::string plateau;
      if (losses.size() > cfg.run.plateau_patience) {
        plateau = std::to_string(r.trace.epochs()[plateau_epoch(losses, cfg.run.plateau_tol, cfg.run.plateau_patience)]);
      }
      emit(cfg, "dog_estimate.csv",
           "dog,plateau_epoch,min_dog,max_dog\n" + fmt_double(dog) + "," + plateau + "," + fmt_double(lo) + "," +
               fmt_double(hi) + "\n");
      std::cout << "dog " << fmt_double(dog) << '\n';
      return 0;
    }

    if (grid2d->parsed()) {
      const auto lrs = grid_axis(cfg.grid.lrs, "grid.lrs");
      const auto lams = grid_axis(cfg.grid.lambdas, "grid.lambdas");
      const auto result = grid_search_2d(lrs, lams, cfg, threads ? threads : cfg.run.threads);
      if (!cfg.run.out.empty()) {
        fs::create_directories(cfg.run.out);
        write_grid_csv(fs::path(cfg.run.out) / "grid.csv", result);
        std::cout << "wrote " << (fs::path(cfg.run.out) / "grid.csv").string() << '\n';
      } else {
        std::cout << "lr,lambda_or_dog,val_acc\n";
        for (const auto& c : result.cells)
          std::cout << fmt_double(c.lr) << ',' << fmt_double(c.lambda) << ',' << fmt_double(c.val_acc) << '\n';
      }
      const auto& best = result.at(result.argmax.lr, result.argmax.lambda);
      std::cout << "argmax lr " << fmt_double(best.lr) << "  lambda_or_dog " << fmt_double(best.lambda)
                << "  val_acc " << fmt_double(best.val_acc) << '\n';
      for (std::size_t i = 0; i < lrs.size(); ++i)
        std::cout << "best at lr " << fmt_double(lrs[i]) << ": lambda_or_dog "
                  << fmt_double(lams[result.best_lambda_per_lr[i]]) << '\n';
      for (std::size_t j = 0; j < lams.size(); ++j)
        std::cout << "best at lambda_or_dog " << fmt_double(lams[j]) << ": lr "
                  << fmt_double(lrs[result.best_lr_per_lambda[j]]) << '\n';
      return 0;
    }

    if (grid1d->parsed()) {
      const auto lrs = grid_axis(cfg.grid.lrs, "grid.lrs");
      const auto lams = grid_axis(cfg.grid.lambdas, "grid.lambdas");
      std::map<std::pair<std::size_t, std::size_t>, double> seen;
      const auto score = [&](CellIndex c) {
        auto cell = cfg;
        cell.optim.lr = lrs[c.lr];
        cell.optim.set_lambda_or_dog(lams[c.lambda]);
        if (!cfg.run.out.empty())
          cell.run.out = (fs::path(cfg.run.out) / ("cell_" + std::to_string(c.lr) + "_" + std::to_string(c.lambda))).string();
        double v = NAN;
        try {
          const auto r = run_experiment(cell);
          if (!r.aborted) v = r.best.val_acc;
        } catch (const NumericError&) {
        }
        seen[{c.lr, c.lambda}] = v;
        return std::isnan(v) ? -INFINITY : v;
      };
      const CellIndex start{nearest_index(lrs, cfg.grid.start_lr), nearest_index(lams, cfg.grid.start_lambda)};
      const auto s = alternating_1d_search(lrs.size(), lams.size(), start, score);
      std::string text = "lr,lambda_or_dog,val_acc\n";
      for (const auto& [ij, v] : seen)
        text += fmt_double(lrs[ij.first]) + "," + fmt_double(lams[ij.second]) + "," + fmt_double(v) + "\n";
      emit(cfg, "grid1d.csv", text);
      std::cout << "final lr " << fmt_double(lrs[s.final_cell.lr]) << "  lambda_or_dog "
                << fmt_double(lams[s.final_cell.lambda]) << "  val_acc "
                << fmt_double(seen[{s.final_cell.lr, s.final_cell.lambda}]) << "  rounds " << s.rounds
                << "  evaluations " << s.evaluations << '\n';
      return 0;
    }

    if (prune->parsed() || eval->parsed()) {
      const auto ck = load_checkpoint(checkpoint);
      const auto data = build_experiment_data(cfg);
      const Dataset& d = pick_split(data, split);
      if (prune->parsed()) {
        std::string text = "sparsity,accuracy\n";
        for (const auto& row : prune_sweep(ck.model, d, sparsities))
          text += fmt_double(row.sparsity) + "," + fmt_double(row.accuracy) + "\n";
        emit(cfg, "prune.csv", text);
        return 0;
      }
      std::string text = "metric,value\naccuracy," + fmt_double(clean_accuracy(ck.model, d)) + "\n";
      if (robust || cfg.attack.enabled)
        text += "robust_accuracy," +
                fmt_double(robust_accuracy(ck.model, d, cfg.attack.eval_config(), cfg.run.seed ^ component_tag("eval-attack"))) + "\n";
      emit(cfg, "eval.csv", text);
      return 0;
    }
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
