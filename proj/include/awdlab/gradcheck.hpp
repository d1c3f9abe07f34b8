#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "awdlab/model.hpp"

namespace awdlab {

struct GradCheckEntry {
  std::string name;
  std::size_t checked = 0;
  double max_rel_error = 0.0;
  bool pass = true;
};

struct GradCheckReport {
  std::vector<GradCheckEntry> tensors;
  bool all_pass() const;
  double max_rel_error() const;
};

// Compares tape gradients of the mean cross-entropy with central differences
// (L(w+h) - L(w-h)) / 2h on up to `samples` entries per parameter tensor.
// Relative error is |tape - fd| / max(|tape|, |fd|, 1e-6).
GradCheckReport finite_difference_check(const Model& model, const Tensor& inputs, std::span<const int> labels,
                                        double h = 1e-5, double tol = 1e-4, std::size_t samples = 100,
                                        std::uint64_t seed = 0);

}  // namespace awdlab
