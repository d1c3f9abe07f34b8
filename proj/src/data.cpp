#include "awdlab/data.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <fstream>
#include <numbers>

#include "awdlab/csv.hpp"
#include "awdlab/error.hpp"
#include "awdlab/rng.hpp"

namespace awdlab {

Shape Dataset::example_shape() const {
  const auto& s = inputs.shape();
  return Shape(s.begin() + 1, s.end());
}

Tensor Dataset::gather_inputs(std::span<const std::size_t> indices) const {
  Shape shape = inputs.shape();
  shape[0] = indices.size();
  Tensor out(shape);
  const std::size_t d = example_size();
  auto src = inputs.data();
  auto dst = out.data();
  for (std::size_t i = 0; i < indices.size(); ++i) {
    if (indices[i] >= size()) throw IndexError("example index " + std::to_string(indices[i]) + " out of range");
    std::copy_n(src.begin() + static_cast<std::ptrdiff_t>(indices[i] * d), d,
                dst.begin() + static_cast<std::ptrdiff_t>(i * d));
  }
  return out;
}

std::vector<int> Dataset::gather_labels(std::span<const std::size_t> indices) const {
  std::vector<int> out;
  out.reserve(indices.size());
  for (auto i : indices) out.push_back(labels.at(i));
  return out;
}

Dataset Dataset::subset(std::span<const std::size_t> indices) const {
  Dataset out;
  out.inputs = gather_inputs(indices);
  out.labels = gather_labels(indices);
  out.num_classes = num_classes;
  out.name = name;
  if (!clean_labels.empty()) {
    for (auto i : indices) out.clean_labels.push_back(clean_labels.at(i));
  }
  return out;
}

void Dataset::validate() const {
  if (inputs.rank() < 2 || inputs.dim(0) != labels.size()) {
    throw InputError("dataset '" + name + "': inputs " + shape_str(inputs.shape()) + " do not match " +
                     std::to_string(labels.size()) + " labels");
  }
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] < 0 || static_cast<std::size_t>(labels[i]) >= num_classes) {
      throw InputError("dataset '" + name + "': label " + std::to_string(labels[i]) + " at index " +
                       std::to_string(i) + " outside [0, " + std::to_string(num_classes) + ")");
    }
  }
  for (double v : inputs.data()) {
    if (!std::isfinite(v) || v < 0.0 || v > 1.0) {
      throw InputError("dataset '" + name + "': input value outside [0, 1]");
    }
  }
}

std::vector<int> NoiseSpec::restore(std::vector<int> noisy) const {
  for (std::size_t k = 0; k < flipped_indices.size(); ++k) noisy.at(flipped_indices[k]) = original_labels[k];
  return noisy;
}

NoisyLabels flip_labels_symmetric(std::span<const int> labels, std::size_t num_classes, double rate,
                                  std::uint64_t seed) {
  if (num_classes < 2) throw ConfigError("flip_labels_symmetric: need at least 2 classes");
  if (!(rate >= 0.0 && rate <= 1.0)) throw ConfigError("flip_labels_symmetric: rate must lie in [0, 1]");
  CounterRng rng = component_rng(seed, "noise");
  NoisyLabels out;
  out.labels.assign(labels.begin(), labels.end());
  out.spec.rate = rate;
  out.spec.seed = seed;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    // One Bernoulli and one class draw per example keeps streams aligned across rates.
    const bool flip = rng.uniform() < rate;
    const auto shift = 1 + rng.below(num_classes - 1);
    if (!flip) continue;
    const int orig = labels[i];
    out.labels[i] = static_cast<int>((static_cast<std::size_t>(orig) + shift) % num_classes);
    out.spec.flipped_indices.push_back(i);
    out.spec.original_labels.push_back(orig);
  }
  return out;
}

Dataset synth_clusters(std::size_t classes, std::size_t dim, std::size_t per_class, double separation,
                       std::uint64_t seed) {
  if (classes == 0 || dim == 0 || per_class == 0) throw ConfigError("synth_clusters: sizes must be positive");
  if (!(separation >= 0.0)) throw ConfigError("synth_clusters: separation must be >= 0");
  CounterRng rng = component_rng(seed, "data");
  const double radius = separation / std::numbers::sqrt2;
  std::vector<std::vector<double>> means(classes, std::vector<double>(dim, 0.0));
  for (std::size_t c = 0; c < classes; ++c) {
    if (dim >= classes) {
      means[c][c] = radius;
    } else {
      // Not enough dimensions for an exact simplex; random directions instead.
      double nn = 0.0;
      for (auto& v : means[c]) {
        v = rng.normal();
        nn += v * v;
      }
      for (auto& v : means[c]) v *= radius / std::sqrt(nn);
    }
  }
  const double span = 2.0 * (radius + 4.0);
  const std::size_t n = classes * per_class;
  Dataset d;
  d.inputs = Tensor({n, dim});
  d.labels.resize(n);
  d.num_classes = classes;
  d.name = "clusters";
  auto x = d.inputs.data();
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t c = i % classes;
    d.labels[i] = static_cast<int>(c);
    for (std::size_t j = 0; j < dim; ++j) {
      const double raw = means[c][j] + rng.normal();
      x[i * dim + j] = std::clamp(0.5 + raw / span, 0.0, 1.0);
    }
  }
  return d;
}

Dataset synth_images(std::size_t classes, std::size_t height, std::size_t width, std::size_t per_class,
                     std::uint64_t seed, const SynthImageOptions& opt) {
  if (height < 8 || width < 8) throw ConfigError("synth_images: images must be at least 8x8");
  if (classes == 0 || per_class == 0 || opt.channels == 0) throw ConfigError("synth_images: sizes must be positive");
  CounterRng rng = component_rng(seed, "data");
  const std::size_t n = classes * per_class;
  const std::size_t ch = opt.channels;
  Dataset d;
  d.inputs = Tensor({n, ch, height, width});
  d.labels.resize(n);
  d.num_classes = classes;
  d.name = "images";
  const double k = 2.0 * std::numbers::pi / 4.0;
  const double cy = (static_cast<double>(height) - 1.0) / 2.0;
  const double cx = (static_cast<double>(width) - 1.0) / 2.0;
  const double ring = 0.3 * static_cast<double>(std::min(height, width));
  const double blob_sd = static_cast<double>(std::max(height, width)) / 8.0;
  auto x = d.inputs.data();
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t c = i % classes;
    d.labels[i] = static_cast<int>(c);
    const double theta = std::numbers::pi * static_cast<double>(c) / static_cast<double>(classes);
    std::size_t blob_class = c;
    if (classes > 1 && !(rng.uniform() < opt.blob_reliability)) {
      blob_class = (c + 1 + rng.below(classes - 1)) % classes;
    }
    const double phi = 2.0 * std::numbers::pi * static_cast<double>(blob_class) / static_cast<double>(classes);
    const double by = cy + ring * std::sin(phi), bx = cx + ring * std::cos(phi);
    for (std::size_t p = 0; p < ch; ++p)
      for (std::size_t r = 0; r < height; ++r)
        for (std::size_t q = 0; q < width; ++q) {
          const double rr = static_cast<double>(r), qq = static_cast<double>(q);
          const double stripe = std::cos(k * (qq * std::cos(theta) + rr * std::sin(theta)));
          const double dist2 = (rr - by) * (rr - by) + (qq - bx) * (qq - bx);
          const double blob = std::exp(-dist2 / (2.0 * blob_sd * blob_sd));
          const double v = 0.5 + opt.stripe_amplitude * stripe + opt.blob_amplitude * blob + opt.noise_std * rng.normal();
          x[((i * ch + p) * height + r) * width + q] = std::clamp(v, 0.0, 1.0);
        }
  }
  return d;
}

Split split_train_val(const Dataset& data, double val_fraction, std::uint64_t seed) {
  if (!(val_fraction > 0.0 && val_fraction < 1.0)) throw ConfigError("split_train_val: fraction must lie in (0, 1)");
  CounterRng rng = component_rng(seed, "split");
  std::vector<std::vector<std::size_t>> by_class(data.num_classes);
  for (std::size_t i = 0; i < data.size(); ++i) by_class.at(static_cast<std::size_t>(data.labels[i])).push_back(i);
  Split s;
  for (std::size_t c = 0; c < by_class.size(); ++c) {
    auto& idx = by_class[c];
    if (idx.empty()) continue;
    if (idx.size() < 2) {
      throw InputError("split_train_val: class " + std::to_string(c) + " has fewer than 2 examples");
    }
    rng.shuffle(idx.begin(), idx.end());
    auto k = static_cast<std::size_t>(std::llround(static_cast<double>(idx.size()) * val_fraction));
    k = std::clamp<std::size_t>(k, 1, idx.size() - 1);
    s.val_indices.insert(s.val_indices.end(), idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(k));
    s.train_indices.insert(s.train_indices.end(), idx.begin() + static_cast<std::ptrdiff_t>(k), idx.end());
  }
  std::sort(s.val_indices.begin(), s.val_indices.end());
  std::sort(s.train_indices.begin(), s.train_indices.end());
  s.train = data.subset(s.train_indices);
  s.val = data.subset(s.val_indices);
  return s;
}

Tensor pad_and_crop(const Tensor& images, std::size_t pad, bool flip, std::uint64_t seed) {
  if (images.rank() != 4) throw DimensionError("pad_and_crop: expected N x C x H x W, got " + shape_str(images.shape()));
  CounterRng rng = component_rng(seed, "augment");
  const std::size_t n = images.dim(0), c = images.dim(1), h = images.dim(2), w = images.dim(3);
  Tensor out(images.shape());
  auto src = images.data();
  auto dst = out.data();
  const auto ipad = static_cast<std::ptrdiff_t>(pad);
  for (std::size_t b = 0; b < n; ++b) {
    const auto dy = static_cast<std::ptrdiff_t>(rng.below(2 * pad + 1)) - ipad;
    const auto dx = static_cast<std::ptrdiff_t>(rng.below(2 * pad + 1)) - ipad;
    const bool mirror = flip && rng.uniform() < 0.5;
    for (std::size_t p = 0; p < c; ++p)
      for (std::size_t y = 0; y < h; ++y)
        for (std::size_t x = 0; x < w; ++x) {
          const std::size_t xo = mirror ? w - 1 - x : x;
          const auto sy = static_cast<std::ptrdiff_t>(y) + dy;
          const auto sx = static_cast<std::ptrdiff_t>(xo) + dx;
          double v = 0.0;
          if (sy >= 0 && sy < static_cast<std::ptrdiff_t>(h) && sx >= 0 && sx < static_cast<std::ptrdiff_t>(w)) {
            v = src[((b * c + p) * h + static_cast<std::size_t>(sy)) * w + static_cast<std::size_t>(sx)];
          }
          dst[((b * c + p) * h + y) * w + x] = v;
        }
  }
  return out;
}

namespace {

constexpr char kDataMagic[8] = {'A', 'W', 'D', 'D', 'A', 'T', 'A', '1'};

void put_u32(std::ostream& os, std::uint32_t v) {
  char buf[4];
  for (int i = 0; i < 4; ++i) buf[i] = static_cast<char>((v >> (8 * i)) & 0xFF);
  os.write(buf, 4);
}

std::uint32_t get_u32(std::istream& is) {
  unsigned char buf[4];
  if (!is.read(reinterpret_cast<char*>(buf), 4)) throw FormatError("dataset file truncated");
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(buf[i]) << (8 * i);
  return v;
}

}  // namespace

void save_dataset(const std::filesystem::path& path, const Dataset& data) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw InputError("cannot write dataset: " + path.string());
  os.write(kDataMagic, 8);
  const auto dims = data.example_shape();
  put_u32(os, static_cast<std::uint32_t>(data.size()));
  put_u32(os, static_cast<std::uint32_t>(data.num_classes));
  put_u32(os, static_cast<std::uint32_t>(dims.size()));
  for (auto dd : dims) put_u32(os, static_cast<std::uint32_t>(dd));
  for (double v : data.inputs.data()) put_u32(os, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
  for (int y : data.labels) put_u32(os, static_cast<std::uint32_t>(y));
}

Dataset load_dataset(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw InputError("cannot open dataset: " + path.string());
  char magic[8];
  if (!is.read(magic, 8) || !std::equal(magic, magic + 8, kDataMagic)) throw FormatError("not a dataset file: bad magic");
  const std::size_t n = get_u32(is);
  Dataset d;
  d.num_classes = get_u32(is);
  const std::size_t rank = get_u32(is);
  if (n == 0 || rank == 0 || rank > 8) throw FormatError("dataset header is implausible");
  Shape shape{n};
  for (std::size_t i = 0; i < rank; ++i) shape.push_back(get_u32(is));
  std::vector<double> values(shape_numel(shape));
  for (auto& v : values) v = static_cast<double>(std::bit_cast<float>(get_u32(is)));
  d.inputs = Tensor(shape, std::move(values));
  d.labels.resize(n);
  for (auto& y : d.labels) y = static_cast<int>(get_u32(is));
  d.name = path.stem().string();
  d.validate();
  return d;
}

Dataset load_csv_dataset(const std::filesystem::path& path, std::size_t num_classes) {
  const auto table = read_csv_file(path);
  if (table.header.size() < 2) throw FormatError("CSV dataset needs at least one feature and a label column");
  const std::size_t n = table.rows.size(), dim = table.header.size() - 1;
  if (n == 0) throw FormatError("CSV dataset has no rows");
  Dataset d;
  d.inputs = Tensor({n, dim});
  d.labels.resize(n);
  d.name = path.stem().string();
  int max_label = 0;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < dim; ++j) d.inputs[i * dim + j] = parse_double(table.rows[i][j]);
    d.labels[i] = std::stoi(table.rows[i][dim]);
    max_label = std::max(max_label, d.labels[i]);
  }
  d.num_classes = num_classes ? num_classes : static_cast<std::size_t>(max_label) + 1;
  d.validate();
  return d;
}

double accuracy(std::span<const int> predicted, std::span<const int> labels) {
  if (predicted.size() != labels.size()) throw DimensionError("accuracy: prediction/label length mismatch");
  if (labels.empty()) throw InputError("accuracy: empty label set");
  std::size_t hits = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) hits += predicted[i] == labels[i];
  return static_cast<double>(hits) / static_cast<double>(labels.size());
}

}  // namespace awdlab
