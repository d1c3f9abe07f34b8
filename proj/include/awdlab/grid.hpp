#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <vector>

#include "awdlab/config.hpp"

namespace awdlab {

// start * (end/start)^(i/(length-1)); endpoints returned exactly.
std::vector<double> geometric_sequence(double start, double end, std::size_t length);

struct GridCell {
  double lr = 0.0;
  double lambda = 0.0;  // weight decay, or DoG for adaptive runs
  double val_acc = 0.0; // NaN when the run failed
  bool failed = false;
  double first_decay_update = 0.0;
};

struct CellIndex {
  std::size_t lr = 0, lambda = 0;
  bool operator==(const CellIndex&) const = default;
};

struct GridResult {
  std::vector<double> lrs, lambdas;
  std::vector<GridCell> cells;  // lr-major: cells[i * lambdas.size() + j]
  CellIndex argmax;
  std::vector<std::size_t> best_lambda_per_lr;  // argmax over each lr row
  std::vector<std::size_t> best_lr_per_lambda;  // argmax over each lambda column

  const GridCell& at(std::size_t i, std::size_t j) const { return cells[i * lambdas.size() + j]; }
};

// Runs every (lr, lambda) cell of `base`; cells share nothing and may run on
// `threads` workers without changing any result.
GridResult grid_search_2d(const std::vector<double>& lrs, const std::vector<double>& lambdas,
                          const ExperimentConfig& base, std::size_t threads = 1);

// Fills argmax and per-row/column bests from the cell scores (NaN never wins).
void summarize_grid(GridResult& grid);

void write_grid_csv(const std::filesystem::path& path, const GridResult& grid);

struct AlternatingSearch {
  CellIndex final_cell;
  std::vector<CellIndex> path;  // cell after each 1D search
  std::size_t evaluations = 0;
  std::size_t rounds = 0;
};

// Alternating 1D searches: over lr with lambda fixed, then over lambda with
// lr fixed, until neither moves. Ties keep the current cell. `score` is
// memoized; cells are evaluated lazily.
AlternatingSearch alternating_1d_search(std::size_t n_lr, std::size_t n_lambda, CellIndex start,
                                        const std::function<double(CellIndex)>& score, std::size_t max_rounds = 16);

// Deterministic accuracy landscape with a ridge along lr * lambda = ridge_product
// and a shallower preference for lr near best_lr, plus seeded jitter of at
// most `jitter` percentage points. Used to exercise grid-search logic without training.
std::vector<double> diagonal_ridge_landscape(const std::vector<double>& lrs, const std::vector<double>& lambdas,
                                             double ridge_product, double best_lr, std::uint64_t seed,
                                             double jitter = 0.1);

}  // namespace awdlab
