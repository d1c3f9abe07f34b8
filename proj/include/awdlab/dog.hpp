#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <vector>

namespace awdlab {

struct DogRow {
  std::int64_t step = 0;
  std::int64_t epoch = 0;
  double weight_norm = 0.0;
  double grad_norm = 0.0;
  double lambda_eff = 0.0;
  double xent = 0.0;
};

// Per-iteration record of the decay and gradient norms. Rows are appended in
// strictly increasing step order.
class DogTrace {
 public:
  void append(const DogRow& row);
  const std::vector<DogRow>& rows() const { return rows_; }
  bool empty() const { return rows_.empty(); }

  // Distinct epochs in order, and the mean cross-entropy of each.
  std::vector<std::int64_t> epochs() const;
  std::vector<double> epoch_mean_xent() const;

  void write_csv(const std::filesystem::path& path) const;
  static DogTrace read_csv(const std::filesystem::path& path);

 private:
  std::vector<DogRow> rows_;
};

inline constexpr double kDogGradEpsilon = 1e-12;

// |lambda * w| / |grad|; nullopt when grad_norm <= 1e-12.
std::optional<double> dog_value(double weight_decay, double weight_norm, double grad_norm);

// First epoch e whose relative improvement stayed below tol for `patience`
// consecutive epochs ending at e; the last epoch when it never happens.
std::size_t plateau_epoch(const std::vector<double>& epoch_losses, double tol = 1e-3, std::size_t patience = 5);

// Mean DoG over defined rows whose epoch is <= last_epoch.
double estimate_dog_through(const DogTrace& trace, std::int64_t last_epoch);
// Plateau-averaged estimate: the epoch comes from plateau_epoch on the
// trace's per-epoch mean cross-entropy.
double estimate_dog(const DogTrace& trace, double tol = 1e-3, std::size_t patience = 5);

}  // namespace awdlab
