#pragma once

#include <string>
#include <vector>

#include "awdlab/data.hpp"
#include "awdlab/model.hpp"

namespace awdlab {

struct PruneReport {
  double sparsity = 0.0;
  std::size_t prunable_total = 0;   // M
  std::size_t pruned = 0;           // floor(sparsity * M)
  std::vector<std::pair<std::string, std::size_t>> zeros_per_tensor;
};

struct PruneResult {
  Model model;
  PruneReport report;
};

// One-shot global magnitude pruning: rank every prunable entry by |w| (ties by
// tensor name, then flat index) and zero the floor(sparsity * M) smallest.
// The input model is left untouched.
PruneResult global_l1_prune(const Model& model, double sparsity, bool include_biases = false);

struct SweepRow {
  double sparsity = 0.0;
  double accuracy = 0.0;
};

// Clean accuracy of a freshly pruned copy per sparsity (ascending).
std::vector<SweepRow> prune_sweep(const Model& model, const Dataset& data, const std::vector<double>& sparsities,
                                  bool include_biases = false);

}  // namespace awdlab
