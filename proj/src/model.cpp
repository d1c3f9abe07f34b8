#include "awdlab/model.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>

#include "awdlab/error.hpp"
#include "awdlab/rng.hpp"

namespace awdlab {

namespace {

Tensor glorot_uniform(Shape shape, std::size_t fan_in, std::size_t fan_out, CounterRng& rng) {
  Tensor t(std::move(shape));
  const double s = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  for (auto& v : t.data()) v = rng.uniform(-s, s);
  return t;
}

}  // namespace

std::size_t Model::add_param(std::string name, Tensor t, bool prunable) {
  params_.push_back(Parameter{std::move(name), std::move(t), prunable});
  return params_.size() - 1;
}

Model Model::mlp(const std::vector<std::size_t>& layer_sizes, std::uint64_t seed) {
  if (layer_sizes.size() < 2) throw ConfigError("mlp: need at least 2 layer sizes (input and classes)");
  for (auto s : layer_sizes)
    if (s == 0) throw ConfigError("mlp: layer sizes must be positive");
  Model m;
  m.spec_.kind = ModelSpec::Kind::Mlp;
  m.spec_.layer_sizes = layer_sizes;
  m.spec_.classes = layer_sizes.back();
  CounterRng rng = component_rng(seed, "init");
  for (std::size_t i = 0; i + 1 < layer_sizes.size(); ++i) {
    const auto in = layer_sizes[i], out = layer_sizes[i + 1];
    Layer lin{Layer::Kind::Linear};
    lin.weight = m.add_param("fc" + std::to_string(i) + ".weight", glorot_uniform({in, out}, in, out, rng), true);
    lin.bias = m.add_param("fc" + std::to_string(i) + ".bias", Tensor({out}), false);
    m.layers_.push_back(lin);
    if (i + 2 < layer_sizes.size()) m.layers_.push_back(Layer{Layer::Kind::Relu});
  }
  return m;
}

Model Model::small_cnn(std::size_t in_channels, std::size_t height, std::size_t width,
                       const std::vector<std::size_t>& channels, std::size_t classes, std::uint64_t seed) {
  if (channels.empty()) throw ConfigError("small_cnn: channel list is empty");
  if (in_channels == 0 || height == 0 || width == 0) throw ConfigError("small_cnn: input dims must be positive");
  if (classes == 0) throw ConfigError("small_cnn: classes must be positive");
  Model m;
  m.spec_.kind = ModelSpec::Kind::Cnn;
  m.spec_.in_channels = in_channels;
  m.spec_.height = height;
  m.spec_.width = width;
  m.spec_.channels = channels;
  m.spec_.classes = classes;
  CounterRng rng = component_rng(seed, "init");
  std::size_t c = in_channels, h = height, w = width;
  for (std::size_t i = 0; i < channels.size(); ++i) {
    const std::size_t f = channels[i];
    if (f == 0) throw ConfigError("small_cnn: channel widths must be positive");
    Layer conv{Layer::Kind::Conv};
    conv.padding = 1;
    if (i > 0) {
      if (h < 2 || w < 2) {
        throw ConfigError("small_cnn: spatial dims " + std::to_string(h) + "x" + std::to_string(w) +
                          " exhausted by downsampling at block " + std::to_string(i));
      }
      conv.stride = 2;
      h = (h - 1) / 2 + 1;
      w = (w - 1) / 2 + 1;
    }
    conv.weight = m.add_param("conv" + std::to_string(i) + ".weight",
                              glorot_uniform({f, c, 3, 3}, c * 9, f * 9, rng), true);
    conv.bias = m.add_param("conv" + std::to_string(i) + ".bias", Tensor({f}), false);
    m.layers_.push_back(conv);
    m.layers_.push_back(Layer{Layer::Kind::Relu});
    c = f;
  }
  m.layers_.push_back(Layer{Layer::Kind::Flatten});
  const std::size_t feat = c * h * w;
  Layer head{Layer::Kind::Linear};
  head.weight = m.add_param("head.weight", glorot_uniform({feat, classes}, feat, classes, rng), true);
  head.bias = m.add_param("head.bias", Tensor({classes}), false);
  m.layers_.push_back(head);
  return m;
}

Model Model::from_spec(const ModelSpec& spec, std::uint64_t seed) {
  if (spec.kind == ModelSpec::Kind::Mlp) return mlp(spec.layer_sizes, seed);
  return small_cnn(spec.in_channels, spec.height, spec.width, spec.channels, spec.classes, seed);
}

Var Model::forward(Tape& tape, Var input, bool param_grads, std::vector<Var>* bound) const {
  std::vector<Var> vars;
  vars.reserve(params_.size());
  for (const auto& p : params_) vars.push_back(tape.leaf(p.tensor, param_grads));
  Var h = input;
  if (spec_.kind == ModelSpec::Kind::Mlp && tape.value(h).rank() != 2) h = tape.flatten(h);
  for (const auto& layer : layers_) {
    switch (layer.kind) {
      case Layer::Kind::Linear:
        h = tape.add_bias(tape.matmul(h, vars[layer.weight]), vars[layer.bias]);
        break;
      case Layer::Kind::Conv:
        h = tape.add_bias(tape.conv2d(h, vars[layer.weight], layer.stride, layer.padding), vars[layer.bias]);
        break;
      case Layer::Kind::Relu:
        h = tape.relu(h);
        break;
      case Layer::Kind::Flatten:
        h = tape.flatten(h);
        break;
    }
  }
  if (bound) *bound = std::move(vars);
  return h;
}

Tensor Model::logits(const Tensor& input) const {
  Tape tape;
  const Var out = forward(tape, tape.leaf(input, false), false);
  return tape.value(out);
}

std::vector<int> Model::predict(const Tensor& input) const {
  const Tensor z = logits(input);
  const std::size_t n = z.dim(0), c = z.dim(1);
  std::vector<int> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    std::size_t best = 0;
    for (std::size_t j = 1; j < c; ++j)
      if (z[i * c + j] > z[i * c + best]) best = j;
    out[i] = static_cast<int>(best);
  }
  return out;
}

double Model::loss_and_grad(const Tensor& input, std::span<const int> labels) {
  Tape tape;
  std::vector<Var> bound;
  const Var logits = forward(tape, tape.leaf(input, false), true, &bound);
  const Var loss = tape.softmax_cross_entropy(logits, labels);
  tape.backward(loss);
  for (std::size_t i = 0; i < params_.size(); ++i) {
    auto g = tape.grad(bound[i]);
    if (g.empty()) {
      params_[i].tensor.set_grad(std::vector<double>(params_[i].tensor.size(), 0.0));
    } else {
      params_[i].tensor.set_grad(std::vector<double>(g.begin(), g.end()));
    }
  }
  return tape.value(loss)[0];
}

double Model::loss(const Tensor& input, std::span<const int> labels) const {
  Tape tape;
  const Var logits = forward(tape, tape.leaf(input, false), false);
  return tape.value(tape.softmax_cross_entropy(logits, labels))[0];
}

Tensor Model::input_gradient(const Tensor& input, std::span<const int> labels, double* loss_out) const {
  Tape tape;
  const Var x = tape.leaf(input, true);
  const Var loss = tape.softmax_cross_entropy(forward(tape, x, false), labels);
  tape.backward(loss);
  if (loss_out) *loss_out = tape.value(loss)[0];
  auto g = tape.grad(x);
  Tensor out(input.shape());
  if (!g.empty()) std::copy(g.begin(), g.end(), out.data().begin());
  return out;
}

Parameter& Model::param(const std::string& name) {
  for (auto& p : params_)
    if (p.name == name) return p;
  throw IndexError("no parameter named '" + name + "'");
}

const Parameter& Model::param(const std::string& name) const {
  return const_cast<Model*>(this)->param(name);
}

std::size_t Model::num_classes() const { return spec_.classes; }

std::size_t Model::parameter_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p.tensor.size();
  return n;
}

void Model::clear_grads() {
  for (auto& p : params_) p.tensor.clear_grad();
}

double param_l2_norm(const Model& model) {
  double ss = 0.0;
  for (const auto& p : model.params())
    for (double v : p.tensor.data()) ss += v * v;
  return std::sqrt(ss);
}

double grad_l2_norm(const Model& model) {
  double ss = 0.0;
  for (const auto& p : model.params()) {
    if (!p.tensor.has_grad()) throw StateError("gradient missing for parameter '" + p.name + "'");
    for (double g : p.tensor.grad()) ss += g * g;
  }
  return std::sqrt(ss);
}

std::uint64_t param_checksum(const Model& model) {
  std::uint64_t h = 0x9E3779B97F4A7C15ULL;
  for (const auto& p : model.params())
    for (double v : p.tensor.data()) h = CounterRng::mix(h ^ std::bit_cast<std::uint64_t>(v));
  return h;
}

// --- on-disk format -------------------------------------------------------

namespace {

constexpr char kCheckpointMagic[8] = {'A', 'W', 'D', 'L', 'A', 'B', '0', '1'};

void put_u64(std::ostream& os, std::uint64_t v) {
  char buf[8];
  for (int i = 0; i < 8; ++i) buf[i] = static_cast<char>((v >> (8 * i)) & 0xFF);
  os.write(buf, 8);
}

bool get_u64(std::istream& is, std::uint64_t& v) {
  unsigned char buf[8];
  if (!is.read(reinterpret_cast<char*>(buf), 8)) return false;
  v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(buf[i]) << (8 * i);
  return true;
}

std::uint64_t need_u64(std::istream& is, const char* what) {
  std::uint64_t v;
  if (!get_u64(is, v)) throw FormatError(std::string("checkpoint truncated while reading ") + what);
  return v;
}

Tensor encode_spec(const ModelSpec& s) {
  std::vector<double> v{s.kind == ModelSpec::Kind::Mlp ? 0.0 : 1.0, static_cast<double>(s.classes),
                        static_cast<double>(s.in_channels), static_cast<double>(s.height),
                        static_cast<double>(s.width), static_cast<double>(s.layer_sizes.size())};
  for (auto x : s.layer_sizes) v.push_back(static_cast<double>(x));
  v.push_back(static_cast<double>(s.channels.size()));
  for (auto x : s.channels) v.push_back(static_cast<double>(x));
  const std::size_t n = v.size();
  return Tensor({n}, std::move(v));
}

ModelSpec decode_spec(const Tensor& t) {
  auto v = t.data();
  auto at = [&](std::size_t i) {
    if (i >= v.size()) throw FormatError("checkpoint model spec is truncated");
    return static_cast<std::size_t>(v[i]);
  };
  ModelSpec s;
  s.kind = at(0) == 0 ? ModelSpec::Kind::Mlp : ModelSpec::Kind::Cnn;
  s.classes = at(1);
  s.in_channels = at(2);
  s.height = at(3);
  s.width = at(4);
  std::size_t i = 5;
  const std::size_t nl = at(i++);
  for (std::size_t k = 0; k < nl; ++k) s.layer_sizes.push_back(at(i++));
  const std::size_t nc = at(i++);
  for (std::size_t k = 0; k < nc; ++k) s.channels.push_back(at(i++));
  return s;
}

}  // namespace

void write_tensor_records(std::ostream& os, const std::vector<NamedTensor>& records) {
  os.write(kCheckpointMagic, 8);
  for (const auto& r : records) {
    put_u64(os, r.name.size());
    os.write(r.name.data(), static_cast<std::streamsize>(r.name.size()));
    put_u64(os, r.tensor.rank());
    for (auto d : r.tensor.shape()) put_u64(os, d);
    for (double v : r.tensor.data()) put_u64(os, std::bit_cast<std::uint64_t>(v));
  }
}

std::vector<NamedTensor> read_tensor_records(std::istream& is) {
  char magic[8];
  if (!is.read(magic, 8) || !std::equal(magic, magic + 8, kCheckpointMagic)) {
    throw FormatError("not a checkpoint: bad magic");
  }
  std::vector<NamedTensor> out;
  std::uint64_t name_len;
  while (get_u64(is, name_len)) {
    if (name_len > (1u << 20)) throw FormatError("checkpoint tensor name length is implausible");
    std::string name(name_len, '\0');
    if (!is.read(name.data(), static_cast<std::streamsize>(name_len))) throw FormatError("checkpoint truncated in name");
    const auto rank = need_u64(is, "rank");
    if (rank > 16) throw FormatError("checkpoint tensor '" + name + "' has implausible rank");
    Shape shape(rank);
    for (auto& d : shape) d = need_u64(is, "dims");
    std::vector<double> data(shape_numel(shape));
    for (auto& v : data) v = std::bit_cast<double>(need_u64(is, "data"));
    out.push_back(NamedTensor{std::move(name), Tensor(std::move(shape), std::move(data))});
  }
  return out;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  std::vector<NamedTensor> records;
  records.push_back({"meta/spec", encode_spec(ckpt.model.spec())});
  records.push_back({"meta/epoch", Tensor::scalar(static_cast<double>(ckpt.epoch))});
  records.push_back({"meta/metric", Tensor::scalar(ckpt.metric)});
  for (const auto& p : ckpt.model.params()) records.push_back({p.name, p.tensor});
  for (const auto& r : ckpt.optimizer_state) records.push_back({"optim/" + r.name, r.tensor});
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw InputError("cannot open checkpoint for writing: " + path.string());
  write_tensor_records(os, records);
  if (!os) throw InputError("failed writing checkpoint: " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw InputError("cannot open checkpoint: " + path.string());
  auto records = read_tensor_records(is);
  Checkpoint ckpt;
  const NamedTensor* spec = nullptr;
  for (const auto& r : records)
    if (r.name == "meta/spec") spec = &r;
  if (!spec) throw FormatError("checkpoint has no model spec record");
  ckpt.model = Model::from_spec(decode_spec(spec->tensor), 0);
  std::size_t loaded = 0;
  for (auto& r : records) {
    if (r.name == "meta/spec") continue;
    if (r.name == "meta/epoch") {
      ckpt.epoch = static_cast<std::int64_t>(r.tensor[0]);
    } else if (r.name == "meta/metric") {
      ckpt.metric = r.tensor[0];
    } else if (r.name.starts_with("optim/")) {
      ckpt.optimizer_state.push_back({r.name.substr(6), std::move(r.tensor)});
    } else {
      auto& p = ckpt.model.param(r.name);
      if (p.tensor.shape() != r.tensor.shape()) {
        throw FormatError("checkpoint tensor '" + r.name + "' has shape " + shape_str(r.tensor.shape()) +
                          ", model expects " + shape_str(p.tensor.shape()));
      }
      p.tensor = std::move(r.tensor);
      ++loaded;
    }
  }
  if (loaded != ckpt.model.params().size()) throw FormatError("checkpoint is missing parameter tensors");
  return ckpt;
}

}  // namespace awdlab
