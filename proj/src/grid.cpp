#include "awdlab/grid.hpp"

#include <atomic>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <thread>

#include "awdlab/csv.hpp"
#include "awdlab/error.hpp"
#include "awdlab/experiment.hpp"
#include "awdlab/rng.hpp"

namespace awdlab {

std::vector<double> geometric_sequence(double start, double end, std::size_t length) {
  if (!(start > 0.0) || !(end > 0.0)) throw ConfigError("geometric_sequence: endpoints must be positive");
  if (length < 2) throw ConfigError("geometric_sequence: length must be >= 2");
  std::vector<double> out(length);
  const double ratio = end / start;
  for (std::size_t i = 0; i < length; ++i) {
    out[i] = start * std::pow(ratio, static_cast<double>(i) / static_cast<double>(length - 1));
  }
  out.front() = start;
  out.back() = end;
  return out;
}

void summarize_grid(GridResult& g) {
  const std::size_t nl = g.lrs.size(), nw = g.lambdas.size();
  auto better = [](double a, double b) { return !std::isnan(a) && (std::isnan(b) || a > b); };
  g.best_lambda_per_lr.assign(nl, 0);
  g.best_lr_per_lambda.assign(nw, 0);
  g.argmax = {0, 0};
  for (std::size_t i = 0; i < nl; ++i)
    for (std::size_t j = 0; j < nw; ++j) {
      const double v = g.at(i, j).val_acc;
      if (better(v, g.at(i, g.best_lambda_per_lr[i]).val_acc)) g.best_lambda_per_lr[i] = j;
      if (better(v, g.at(g.best_lr_per_lambda[j], j).val_acc)) g.best_lr_per_lambda[j] = i;
      if (better(v, g.at(g.argmax.lr, g.argmax.lambda).val_acc)) g.argmax = {i, j};
    }
}

GridResult grid_search_2d(const std::vector<double>& lrs, const std::vector<double>& lambdas,
                          const ExperimentConfig& base, std::size_t threads) {
  if (lrs.empty() || lambdas.empty()) throw ConfigError("grid_search_2d: both value lists must be nonempty");
  GridResult g;
  g.lrs = lrs;
  g.lambdas = lambdas;
  g.cells.resize(lrs.size() * lambdas.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t c = next++; c < g.cells.size(); c = next++) {
      const std::size_t i = c / lambdas.size(), j = c % lambdas.size();
      ExperimentConfig cfg = base;
      cfg.optim.lr = lrs[i];
      cfg.optim.set_lambda_or_dog(lambdas[j]);
      if (!base.run.out.empty()) {
        cfg.run.out = (std::filesystem::path(base.run.out) / ("cell_" + std::to_string(i) + "_" + std::to_string(j))).string();
      }
      GridCell& cell = g.cells[c];
      cell.lr = lrs[i];
      cell.lambda = lambdas[j];
      try {
        const RunResult r = run_experiment(cfg);
        cell.failed = r.aborted;
        cell.val_acc = r.aborted ? std::numeric_limits<double>::quiet_NaN() : r.best.val_acc;
        cell.first_decay_update = r.first_decay_update;
      } catch (const Error&) {
        cell.failed = true;
        cell.val_acc = std::numeric_limits<double>::quiet_NaN();
      }
    }
  };
  const std::size_t n = std::max<std::size_t>(1, std::min(threads, g.cells.size()));
  std::vector<std::thread> pool;
  for (std::size_t t = 1; t < n; ++t) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();
  summarize_grid(g);
  return g;
}

void write_grid_csv(const std::filesystem::path& path, const GridResult& g) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw InputError("cannot write grid CSV: " + path.string());
  os << "lr,lambda_or_dog,val_acc\n";
  for (const auto& c : g.cells) os << fmt_double(c.lr) << ',' << fmt_double(c.lambda) << ',' << fmt_double(c.val_acc) << '\n';
}

AlternatingSearch alternating_1d_search(std::size_t n_lr, std::size_t n_lambda, CellIndex start,
                                        const std::function<double(CellIndex)>& score, std::size_t max_rounds) {
  if (n_lr == 0 || n_lambda == 0) throw ConfigError("alternating_1d_search: empty grid");
  if (start.lr >= n_lr || start.lambda >= n_lambda) throw RangeError("alternating_1d_search: start outside the grid");
  std::map<std::pair<std::size_t, std::size_t>, double> memo;
  AlternatingSearch out;
  auto eval = [&](CellIndex c) {
    auto [it, fresh] = memo.try_emplace({c.lr, c.lambda}, 0.0);
    if (fresh) {
      it->second = score(c);
      ++out.evaluations;
    }
    return it->second;
  };
  auto better = [](double a, double b) { return !std::isnan(a) && (std::isnan(b) || a > b); };
  CellIndex cur = start;
  for (std::size_t round = 0; round < max_rounds; ++round) {
    ++out.rounds;
    const CellIndex before = cur;
    for (std::size_t i = 0; i < n_lr; ++i)
      if (better(eval({i, cur.lambda}), eval(cur))) cur.lr = i;
    out.path.push_back(cur);
    for (std::size_t j = 0; j < n_lambda; ++j)
      if (better(eval({cur.lr, j}), eval(cur))) cur.lambda = j;
    out.path.push_back(cur);
    if (cur == before) break;
  }
  out.final_cell = cur;
  return out;
}

std::vector<double> diagonal_ridge_landscape(const std::vector<double>& lrs, const std::vector<double>& lambdas,
                                             double ridge_product, double best_lr, std::uint64_t seed, double jitter) {
  CounterRng rng = component_rng(seed, "landscape");
  std::vector<double> out;
  out.reserve(lrs.size() * lambdas.size());
  for (double lr : lrs)
    for (double lam : lambdas) {
      const double off_ridge = std::log10(lr * lam / ridge_product);
      const double off_lr = std::log10(lr / best_lr);
      out.push_back(0.9 - 0.10 * off_ridge * off_ridge - 0.01 * off_lr * off_lr + rng.uniform(-jitter, jitter) / 100.0);
    }
  return out;
}

}  // namespace awdlab
