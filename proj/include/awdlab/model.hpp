#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "awdlab/tape.hpp"
#include "awdlab/tensor.hpp"

namespace awdlab {

struct ModelSpec {
  enum class Kind { Mlp, Cnn };
  Kind kind = Kind::Mlp;
  // Mlp: [input, hidden..., classes].
  std::vector<std::size_t> layer_sizes;
  // Cnn: input C x H x W, conv channel widths, class count.
  std::size_t in_channels = 0, height = 0, width = 0;
  std::vector<std::size_t> channels;
  std::size_t classes = 0;
};

struct Parameter {
  std::string name;
  Tensor tensor;
  // Weight matrices and kernels are prunable, biases are not.
  bool prunable = false;
};

struct Layer {
  enum class Kind { Linear, Conv, Relu, Flatten };
  Kind kind;
  std::size_t weight = 0, bias = 0;  // indices into params
  std::size_t stride = 1, padding = 0;
};

class Model {
 public:
  Model() = default;

  // Linear+ReLU stack ending in a linear layer to layer_sizes.back() classes.
  static Model mlp(const std::vector<std::size_t>& layer_sizes, std::uint64_t seed);
  // conv3x3(pad 1)+ReLU blocks, blocks after the first downsample 2x with
  // stride 2, then flatten and a linear head.
  static Model small_cnn(std::size_t in_channels, std::size_t height, std::size_t width,
                         const std::vector<std::size_t>& channels, std::size_t classes, std::uint64_t seed);
  static Model from_spec(const ModelSpec& spec, std::uint64_t seed);

  // Records the network on the tape. Parameters become leaves that require
  // gradients when `param_grads` is set; their Vars are written to `bound`.
  Var forward(Tape& tape, Var input, bool param_grads, std::vector<Var>* bound = nullptr) const;

  Tensor logits(const Tensor& input) const;
  std::vector<int> predict(const Tensor& input) const;

  // Mean cross-entropy on the batch; writes d(loss)/d(param) into each parameter's grad slot.
  double loss_and_grad(const Tensor& input, std::span<const int> labels);
  double loss(const Tensor& input, std::span<const int> labels) const;
  // d(loss)/d(input) with parameters held constant.
  Tensor input_gradient(const Tensor& input, std::span<const int> labels, double* loss_out = nullptr) const;

  std::vector<Parameter>& params() { return params_; }
  const std::vector<Parameter>& params() const { return params_; }
  Parameter& param(const std::string& name);
  const Parameter& param(const std::string& name) const;
  const std::vector<Layer>& layers() const { return layers_; }
  const ModelSpec& spec() const { return spec_; }
  std::size_t num_classes() const;
  std::size_t parameter_count() const;
  void clear_grads();

 private:
  std::size_t add_param(std::string name, Tensor t, bool prunable);

  ModelSpec spec_;
  std::vector<Layer> layers_;
  std::vector<Parameter> params_;
};

// Global Euclidean norm over every trainable parameter (biases included).
double param_l2_norm(const Model& model);
// Global Euclidean norm over every parameter gradient; StateError if a grad is missing.
double grad_l2_norm(const Model& model);

// Order-sensitive digest of all parameter bits.
std::uint64_t param_checksum(const Model& model);

struct NamedTensor {
  std::string name;
  Tensor tensor;
};

struct Checkpoint {
  Model model;
  std::vector<NamedTensor> optimizer_state;
  std::int64_t epoch = 0;
  double metric = 0.0;
};

// "AWDLAB01" followed by length-prefixed named tensors, all little-endian.
void write_tensor_records(std::ostream& os, const std::vector<NamedTensor>& records);
std::vector<NamedTensor> read_tensor_records(std::istream& is);

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace awdlab
