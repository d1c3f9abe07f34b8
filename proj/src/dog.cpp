#include "awdlab/dog.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <sstream>
#include <string>

#include "awdlab/csv.hpp"
#include "awdlab/error.hpp"

namespace awdlab {

void DogTrace::append(const DogRow& row) {
  if (!rows_.empty() && row.step <= rows_.back().step) {
    throw StateError("trace rows must have strictly increasing steps (got " + std::to_string(row.step) + " after " +
                     std::to_string(rows_.back().step) + ")");
  }
  if (row.weight_norm < 0.0 || row.grad_norm < 0.0) throw StateError("trace norms must be nonnegative");
  rows_.push_back(row);
}

std::vector<std::int64_t> DogTrace::epochs() const {
  std::vector<std::int64_t> out;
  for (const auto& r : rows_)
    if (out.empty() || out.back() != r.epoch) out.push_back(r.epoch);
  return out;
}

std::vector<double> DogTrace::epoch_mean_xent() const {
  std::map<std::int64_t, std::pair<double, std::size_t>> acc;
  for (const auto& r : rows_) {
    auto& [sum, n] = acc[r.epoch];
    sum += r.xent;
    ++n;
  }
  std::vector<double> out;
  for (const auto& [epoch, s] : acc) out.push_back(s.first / static_cast<double>(s.second));
  return out;
}

void DogTrace::write_csv(const std::filesystem::path& path) const {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw InputError("cannot write trace: " + path.string());
  os << "step,epoch,weight_norm,grad_norm,lambda_eff,xent\n";
  for (const auto& r : rows_) {
    os << r.step << ',' << r.epoch << ',' << fmt_double(r.weight_norm) << ',' << fmt_double(r.grad_norm) << ','
       << fmt_double(r.lambda_eff) << ',' << fmt_double(r.xent) << '\n';
  }
}

DogTrace DogTrace::read_csv(const std::filesystem::path& path) {
  const auto table = read_csv_file(path);
  const std::vector<std::string> want{"step", "epoch", "weight_norm", "grad_norm", "lambda_eff", "xent"};
  if (table.header != want) throw FormatError("unexpected trace header in " + path.string());
  DogTrace t;
  for (const auto& row : table.rows) {
    DogRow r;
    r.step = std::stoll(row[0]);
    r.epoch = std::stoll(row[1]);
    r.weight_norm = parse_double(row[2]);
    r.grad_norm = parse_double(row[3]);
    r.lambda_eff = parse_double(row[4]);
    r.xent = parse_double(row[5]);
    t.append(r);
  }
  return t;
}

std::optional<double> dog_value(double weight_decay, double weight_norm, double grad_norm) {
  if (!(grad_norm > kDogGradEpsilon)) return std::nullopt;
  return weight_decay * weight_norm / grad_norm;
}

std::size_t plateau_epoch(const std::vector<double>& epoch_losses, double tol, std::size_t patience) {
  if (epoch_losses.size() < patience + 1) {
    throw InputError("plateau_epoch: need at least " + std::to_string(patience + 1) + " epochs, got " +
                     std::to_string(epoch_losses.size()));
  }
  std::size_t run = 0;
  for (std::size_t e = 1; e < epoch_losses.size(); ++e) {
    const double prev = epoch_losses[e - 1];
    const double improvement = (prev - epoch_losses[e]) / std::max(prev, 1e-12);
    run = improvement < tol ? run + 1 : 0;
    if (run >= patience) return e;
  }
  return epoch_losses.size() - 1;
}

double estimate_dog_through(const DogTrace& trace, std::int64_t last_epoch) {
  if (trace.empty()) throw InputError("estimate_dog: trace is empty");
  double sum = 0.0;
  std::size_t n = 0;
  for (const auto& r : trace.rows()) {
    if (r.epoch > last_epoch) break;
    if (auto d = dog_value(r.lambda_eff, r.weight_norm, r.grad_norm)) {
      sum += *d;
      ++n;
    }
  }
  if (n == 0) throw InputError("estimate_dog: no iteration with a defined DoG value");
  return sum / static_cast<double>(n);
}

double estimate_dog(const DogTrace& trace, double tol, std::size_t patience) {
  if (trace.empty()) throw InputError("estimate_dog: trace is empty");
  const auto losses = trace.epoch_mean_xent();
  const auto epochs = trace.epochs();
  std::int64_t last = epochs.back();
  // Too short to judge a plateau: average the whole trace.
  if (losses.size() >= patience + 1) last = epochs[plateau_epoch(losses, tol, patience)];
  return estimate_dog_through(trace, last);
}

}  // namespace awdlab
