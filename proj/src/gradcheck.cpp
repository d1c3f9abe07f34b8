#include "awdlab/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "awdlab/error.hpp"
#include "awdlab/rng.hpp"

namespace awdlab {

bool GradCheckReport::all_pass() const {
  return std::all_of(tensors.begin(), tensors.end(), [](const auto& t) { return t.pass; });
}

double GradCheckReport::max_rel_error() const {
  double m = 0.0;
  for (const auto& t : tensors) m = std::max(m, t.max_rel_error);
  return m;
}

GradCheckReport finite_difference_check(const Model& model, const Tensor& inputs, std::span<const int> labels,
                                        double h, double tol, std::size_t samples, std::uint64_t seed) {
  if (!(h > 0.0)) throw ConfigError("finite_difference_check: h must be positive");
  Model work = model;
  work.loss_and_grad(inputs, labels);
  CounterRng rng = component_rng(seed, "gradcheck");
  GradCheckReport report;
  for (std::size_t p = 0; p < work.params().size(); ++p) {
    auto& param = work.params()[p];
    const std::vector<double> tape(param.tensor.grad().begin(), param.tensor.grad().end());
    std::vector<std::size_t> idx(param.tensor.size());
    std::iota(idx.begin(), idx.end(), 0);
    rng.shuffle(idx.begin(), idx.end());
    idx.resize(std::min(samples, idx.size()));
    GradCheckEntry entry{param.name};
    for (auto i : idx) {
      const double orig = param.tensor[i];
      param.tensor[i] = orig + h;
      const double up = work.loss(inputs, labels);
      param.tensor[i] = orig - h;
      const double down = work.loss(inputs, labels);
      param.tensor[i] = orig;
      const double fd = (up - down) / (2.0 * h);
      const double rel = std::abs(tape[i] - fd) / std::max({std::abs(tape[i]), std::abs(fd), 1e-6});
      entry.max_rel_error = std::max(entry.max_rel_error, rel);
      ++entry.checked;
    }
    entry.pass = entry.max_rel_error < tol && std::all_of(tape.begin(), tape.end(), [](double g) { return std::isfinite(g); });
    report.tensors.push_back(entry);
  }
  return report;
}

}  // namespace awdlab
