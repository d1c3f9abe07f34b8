#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "awdlab/tensor.hpp"

namespace awdlab {

struct Dataset {
  Tensor inputs;  // N x D or N x C x H x W, values in [0, 1]
  std::vector<int> labels;
  std::size_t num_classes = 0;
  std::string name;
  // Labels before noise injection; empty when the labels were never flipped.
  std::vector<int> clean_labels;

  std::size_t size() const { return labels.size(); }
  Shape example_shape() const;
  std::size_t example_size() const { return inputs.size() / std::max<std::size_t>(size(), 1); }

  Dataset subset(std::span<const std::size_t> indices) const;
  // Copies examples [begin, begin+count) of `order` into a batch.
  Tensor gather_inputs(std::span<const std::size_t> indices) const;
  std::vector<int> gather_labels(std::span<const std::size_t> indices) const;
  // Throws InputError unless labels are in range and inputs finite in [0, 1].
  void validate() const;
};

struct NoiseSpec {
  double rate = 0.0;
  std::uint64_t seed = 0;
  std::vector<std::size_t> flipped_indices;
  std::vector<int> original_labels;  // parallel to flipped_indices

  // Restores the labels that existed before flipping.
  std::vector<int> restore(std::vector<int> noisy) const;
};

struct NoisyLabels {
  std::vector<int> labels;
  NoiseSpec spec;
};

// Each label independently, with probability `rate`, becomes a uniformly
// drawn different class.
NoisyLabels flip_labels_symmetric(std::span<const int> labels, std::size_t num_classes, double rate,
                                  std::uint64_t seed);

// Gaussian clusters with identity covariance and means at pairwise distance
// `separation`, mapped into [0, 1] by a fixed affine map and clamped.
Dataset synth_clusters(std::size_t classes, std::size_t dim, std::size_t per_class, double separation,
                       std::uint64_t seed);

struct SynthImageOptions {
  std::size_t channels = 1;
  double stripe_amplitude = 0.25;  // class-oriented sinusoidal stripes
  double blob_amplitude = 0.0;     // Gaussian blob at a class-specific position
  double blob_reliability = 1.0;   // probability the blob sits at the true class position
  double noise_std = 0.15;         // i.i.d. pixel noise
};

Dataset synth_images(std::size_t classes, std::size_t height, std::size_t width, std::size_t per_class,
                     std::uint64_t seed, const SynthImageOptions& options = {});

struct Split {
  Dataset train;
  Dataset val;
  std::vector<std::size_t> train_indices;
  std::vector<std::size_t> val_indices;
};

// Stratified by class: each class contributes round(n_c * fraction) examples
// (at least 1, at most n_c - 1) to validation.
Split split_train_val(const Dataset& data, double val_fraction, std::uint64_t seed);

// Zero-pad every image by `pad`, crop back at a random offset, and mirror
// horizontally with probability 0.5 when `flip` is set.
Tensor pad_and_crop(const Tensor& images, std::size_t pad, bool flip, std::uint64_t seed);

// "AWDDATA1", u32 N, classes, rank, dims, f32 inputs, u32 labels (little-endian).
void save_dataset(const std::filesystem::path& path, const Dataset& data);
Dataset load_dataset(const std::filesystem::path& path);
// Header row, numeric feature columns, last column the integer label.
Dataset load_csv_dataset(const std::filesystem::path& path, std::size_t num_classes = 0);

double accuracy(std::span<const int> predicted, std::span<const int> labels);

}  // namespace awdlab
