#include "awdlab/pruning.hpp"

#include <algorithm>
#include <cmath>
#include <tuple>

#include "awdlab/adversarial.hpp"
#include "awdlab/error.hpp"

namespace awdlab {

PruneResult global_l1_prune(const Model& model, double sparsity, bool include_biases) {
  if (!(sparsity >= 0.0 && sparsity <= 1.0)) throw RangeError("global_l1_prune: sparsity must lie in [0, 1]");
  struct Entry {
    double magnitude;
    std::size_t param;
    std::size_t index;
  };
  PruneResult out{model, {}};
  const auto& params = out.model.params();
  std::vector<Entry> entries;
  for (std::size_t p = 0; p < params.size(); ++p) {
    if (!params[p].prunable && !include_biases) continue;
    const auto w = params[p].tensor.data();
    for (std::size_t i = 0; i < w.size(); ++i) entries.push_back({std::abs(w[i]), p, i});
  }
  const std::size_t m = entries.size();
  // The tiny slack keeps decimal sparsities like 0.29 from flooring one short.
  auto k = static_cast<std::size_t>(std::floor(sparsity * static_cast<double>(m) + 1e-9));
  k = std::min(k, m);
  auto less = [&](const Entry& a, const Entry& b) {
    return std::forward_as_tuple(a.magnitude, params[a.param].name, a.index) <
           std::forward_as_tuple(b.magnitude, params[b.param].name, b.index);
  };
  if (k > 0 && k < m) std::nth_element(entries.begin(), entries.begin() + static_cast<std::ptrdiff_t>(k), entries.end(), less);
  for (std::size_t e = 0; e < k; ++e) out.model.params()[entries[e].param].tensor[entries[e].index] = 0.0;
  out.report.sparsity = sparsity;
  out.report.prunable_total = m;
  out.report.pruned = k;
  for (const auto& p : out.model.params()) {
    if (!p.prunable && !include_biases) continue;
    const auto zeros = static_cast<std::size_t>(std::count(p.tensor.data().begin(), p.tensor.data().end(), 0.0));
    out.report.zeros_per_tensor.emplace_back(p.name, zeros);
  }
  return out;
}

std::vector<SweepRow> prune_sweep(const Model& model, const Dataset& data, const std::vector<double>& sparsities,
                                  bool include_biases) {
  if (!std::is_sorted(sparsities.begin(), sparsities.end())) {
    throw InputError("prune_sweep: sparsities must be sorted ascending");
  }
  std::vector<SweepRow> rows;
  for (double s : sparsities) {
    const auto pruned = global_l1_prune(model, s, include_biases);
    rows.push_back({s, clean_accuracy(pruned.model, data)});
  }
  return rows;
}

}  // namespace awdlab
