#include "awdlab/tape.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "awdlab/error.hpp"

namespace awdlab {

namespace {

void require_rank(const Tensor& t, std::size_t rank, const char* op, const char* what) {
  if (t.rank() != rank) {
    throw DimensionError(std::string(op) + ": " + what + " must have rank " + std::to_string(rank) + ", got " +
                         shape_str(t.shape()));
  }
}

}  // namespace

Tensor matmul_forward(const Tensor& a, const Tensor& b) {
  require_rank(a, 2, "matmul", "lhs");
  require_rank(b, 2, "matmul", "rhs");
  if (a.dim(1) != b.dim(0)) {
    throw DimensionError("matmul: inner dimensions disagree for " + shape_str(a.shape()) + " and " +
                         shape_str(b.shape()));
  }
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  Tensor out({m, n});
  auto o = out.data();
  auto av = a.data();
  auto bv = b.data();
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t p = 0; p < k; ++p) {
      const double aip = av[i * k + p];
      if (aip == 0.0) continue;
      const double* brow = &bv[p * n];
      double* orow = &o[i * n];
      for (std::size_t j = 0; j < n; ++j) orow[j] += aip * brow[j];
    }
  }
  return out;
}

Tensor conv2d_forward(const Tensor& input, const Tensor& kernel, std::size_t stride, std::size_t padding) {
  require_rank(input, 4, "conv2d", "input");
  require_rank(kernel, 4, "conv2d", "kernel");
  if (stride == 0) throw DimensionError("conv2d: stride must be positive");
  const std::size_t n = input.dim(0), c = input.dim(1), h = input.dim(2), w = input.dim(3);
  const std::size_t f = kernel.dim(0), kh = kernel.dim(2), kw = kernel.dim(3);
  if (kernel.dim(1) != c) {
    throw DimensionError("conv2d: kernel " + shape_str(kernel.shape()) + " does not match input channels of " +
                         shape_str(input.shape()));
  }
  if (kh > h + 2 * padding || kw > w + 2 * padding) {
    throw DimensionError("conv2d: kernel " + shape_str(kernel.shape()) + " larger than padded input " +
                         shape_str(input.shape()) + " with padding " + std::to_string(padding));
  }
  const std::size_t oh = (h + 2 * padding - kh) / stride + 1;
  const std::size_t ow = (w + 2 * padding - kw) / stride + 1;
  Tensor out({n, f, oh, ow});
  auto o = out.data();
  auto x = input.data();
  auto k = kernel.data();
  const auto pad = static_cast<std::ptrdiff_t>(padding);
  for (std::size_t b = 0; b < n; ++b) {
    for (std::size_t fo = 0; fo < f; ++fo) {
      double* oplane = &o[((b * f + fo) * oh) * ow];
      for (std::size_t ci = 0; ci < c; ++ci) {
        const double* xplane = &x[((b * c + ci) * h) * w];
        const double* kplane = &k[((fo * c + ci) * kh) * kw];
        for (std::size_t i = 0; i < oh; ++i) {
          for (std::size_t j = 0; j < ow; ++j) {
            double acc = 0.0;
            for (std::size_t u = 0; u < kh; ++u) {
              const auto r = static_cast<std::ptrdiff_t>(i * stride + u) - pad;
              if (r < 0 || r >= static_cast<std::ptrdiff_t>(h)) continue;
              for (std::size_t v = 0; v < kw; ++v) {
                const auto s = static_cast<std::ptrdiff_t>(j * stride + v) - pad;
                if (s < 0 || s >= static_cast<std::ptrdiff_t>(w)) continue;
                acc += xplane[r * static_cast<std::ptrdiff_t>(w) + s] * kplane[u * kw + v];
              }
            }
            oplane[i * ow + j] += acc;
          }
        }
      }
    }
  }
  return out;
}

Var Tape::push(Tensor value, bool requires_grad, std::function<void(Tape&, std::size_t)> rule) {
  nodes_.push_back(Node{std::move(value), {}, requires_grad, std::move(rule)});
  return Var{nodes_.size() - 1};
}

std::vector<double>& Tape::grad_buffer(std::size_t id) {
  auto& node = nodes_[id];
  if (node.grad.size() != node.value.size()) node.grad.assign(node.value.size(), 0.0);
  return node.grad;
}

Var Tape::leaf(Tensor value, bool requires_grad) { return push(std::move(value), requires_grad, nullptr); }

Var Tape::matmul(Var a, Var b) {
  Tensor out = matmul_forward(value(a), value(b));
  const bool rg = requires_grad(a) || requires_grad(b);
  return push(std::move(out), rg, [a, b](Tape& t, std::size_t self) {
    const auto& av = t.nodes_[a.id].value;
    const auto& bv = t.nodes_[b.id].value;
    const std::size_t m = av.dim(0), k = av.dim(1), n = bv.dim(1);
    const auto g = std::span<const double>(t.nodes_[self].grad);
    if (t.nodes_[a.id].requires_grad) {
      auto& ga = t.grad_buffer(a.id);
      // ga += g * b^T
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t p = 0; p < k; ++p) {
          double acc = 0.0;
          for (std::size_t j = 0; j < n; ++j) acc += g[i * n + j] * bv[p * n + j];
          ga[i * k + p] += acc;
        }
    }
    if (t.nodes_[b.id].requires_grad) {
      auto& gb = t.grad_buffer(b.id);
      // gb += a^T * g
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t p = 0; p < k; ++p) {
          const double aip = av[i * k + p];
          if (aip == 0.0) continue;
          for (std::size_t j = 0; j < n; ++j) gb[p * n + j] += aip * g[i * n + j];
        }
    }
  });
}

Var Tape::add_bias(Var x, Var bias) {
  const Tensor& xv = value(x);
  const Tensor& bv = value(bias);
  if (xv.rank() < 2 || bv.rank() != 1 || xv.dim(1) != bv.dim(0)) {
    throw DimensionError("add_bias: bias " + shape_str(bv.shape()) + " does not match dimension 1 of " +
                         shape_str(xv.shape()));
  }
  const std::size_t n = xv.dim(0), f = xv.dim(1), inner = xv.size() / (n * f);
  Tensor out = xv;
  auto o = out.data();
  for (std::size_t b = 0; b < n; ++b)
    for (std::size_t c = 0; c < f; ++c)
      for (std::size_t i = 0; i < inner; ++i) o[(b * f + c) * inner + i] += bv[c];
  const bool rg = requires_grad(x) || requires_grad(bias);
  return push(std::move(out), rg, [x, bias, n, f, inner](Tape& t, std::size_t self) {
    const auto g = std::span<const double>(t.nodes_[self].grad);
    if (t.nodes_[x.id].requires_grad) {
      auto& gx = t.grad_buffer(x.id);
      for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
    }
    if (t.nodes_[bias.id].requires_grad) {
      auto& gb = t.grad_buffer(bias.id);
      for (std::size_t b = 0; b < n; ++b)
        for (std::size_t c = 0; c < f; ++c)
          for (std::size_t i = 0; i < inner; ++i) gb[c] += g[(b * f + c) * inner + i];
    }
  });
}

Var Tape::conv2d(Var input, Var kernel, std::size_t stride, std::size_t padding) {
  Tensor out = conv2d_forward(value(input), value(kernel), stride, padding);
  const bool rg = requires_grad(input) || requires_grad(kernel);
  return push(std::move(out), rg, [input, kernel, stride, padding](Tape& t, std::size_t self) {
    const auto& xv = t.nodes_[input.id].value;
    const auto& kv = t.nodes_[kernel.id].value;
    const auto& ov = t.nodes_[self].value;
    const auto g = std::span<const double>(t.nodes_[self].grad);
    const std::size_t n = xv.dim(0), c = xv.dim(1), h = xv.dim(2), w = xv.dim(3);
    const std::size_t f = kv.dim(0), kh = kv.dim(2), kw = kv.dim(3);
    const std::size_t oh = ov.dim(2), ow = ov.dim(3);
    const bool want_x = t.nodes_[input.id].requires_grad;
    const bool want_k = t.nodes_[kernel.id].requires_grad;
    double* gx = want_x ? t.grad_buffer(input.id).data() : nullptr;
    double* gk = want_k ? t.grad_buffer(kernel.id).data() : nullptr;
    auto x = xv.data();
    auto k = kv.data();
    const auto pad = static_cast<std::ptrdiff_t>(padding);
    const auto hh = static_cast<std::ptrdiff_t>(h), ww = static_cast<std::ptrdiff_t>(w);
    for (std::size_t b = 0; b < n; ++b)
      for (std::size_t fo = 0; fo < f; ++fo)
        for (std::size_t ci = 0; ci < c; ++ci) {
          const std::size_t xoff = ((b * c + ci) * h) * w;
          const std::size_t koff = ((fo * c + ci) * kh) * kw;
          const std::size_t goff = ((b * f + fo) * oh) * ow;
          for (std::size_t i = 0; i < oh; ++i)
            for (std::size_t j = 0; j < ow; ++j) {
              const double gij = g[goff + i * ow + j];
              if (gij == 0.0) continue;
              for (std::size_t u = 0; u < kh; ++u) {
                const auto r = static_cast<std::ptrdiff_t>(i * stride + u) - pad;
                if (r < 0 || r >= hh) continue;
                for (std::size_t v = 0; v < kw; ++v) {
                  const auto s = static_cast<std::ptrdiff_t>(j * stride + v) - pad;
                  if (s < 0 || s >= ww) continue;
                  const std::size_t xi = xoff + static_cast<std::size_t>(r * ww + s);
                  if (gx) gx[xi] += gij * k[koff + u * kw + v];
                  if (gk) gk[koff + u * kw + v] += gij * x[xi];
                }
              }
            }
        }
  });
}

Var Tape::relu(Var x) {
  Tensor out = value(x);
  for (auto& v : out.data()) v = v > 0.0 ? v : 0.0;
  return push(std::move(out), requires_grad(x), [x](Tape& t, std::size_t self) {
    if (!t.nodes_[x.id].requires_grad) return;
    const auto& xv = t.nodes_[x.id].value;
    const auto g = std::span<const double>(t.nodes_[self].grad);
    auto& gx = t.grad_buffer(x.id);
    for (std::size_t i = 0; i < g.size(); ++i)
      if (xv[i] > 0.0) gx[i] += g[i];
  });
}

Var Tape::flatten(Var x) {
  const Tensor& xv = value(x);
  const std::size_t n = xv.dim(0);
  Tensor out = xv.reshaped({n, xv.size() / n});
  return push(std::move(out), requires_grad(x), [x](Tape& t, std::size_t self) {
    if (!t.nodes_[x.id].requires_grad) return;
    const auto g = std::span<const double>(t.nodes_[self].grad);
    auto& gx = t.grad_buffer(x.id);
    for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
  });
}

Var Tape::add(Var a, Var b) {
  const Tensor& av = value(a);
  const Tensor& bv = value(b);
  if (av.shape() != bv.shape()) {
    throw DimensionError("add: shapes " + shape_str(av.shape()) + " and " + shape_str(bv.shape()) + " differ");
  }
  Tensor out = av;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += bv[i];
  const bool rg = requires_grad(a) || requires_grad(b);
  return push(std::move(out), rg, [a, b](Tape& t, std::size_t self) {
    const auto g = std::span<const double>(t.nodes_[self].grad);
    for (Var in : {a, b}) {
      if (!t.nodes_[in.id].requires_grad) continue;
      auto& gi = t.grad_buffer(in.id);
      for (std::size_t i = 0; i < g.size(); ++i) gi[i] += g[i];
    }
  });
}

Var Tape::scale(Var x, double factor) {
  Tensor out = value(x);
  for (auto& v : out.data()) v *= factor;
  return push(std::move(out), requires_grad(x), [x, factor](Tape& t, std::size_t self) {
    if (!t.nodes_[x.id].requires_grad) return;
    const auto g = std::span<const double>(t.nodes_[self].grad);
    auto& gx = t.grad_buffer(x.id);
    for (std::size_t i = 0; i < g.size(); ++i) gx[i] += factor * g[i];
  });
}

Var Tape::softmax_cross_entropy(Var logits, std::span<const int> labels) {
  const Tensor& lv = value(logits);
  require_rank(lv, 2, "softmax_cross_entropy", "logits");
  const std::size_t n = lv.dim(0), c = lv.dim(1);
  if (labels.size() != n) {
    throw DimensionError("softmax_cross_entropy: " + std::to_string(labels.size()) + " labels for logits " +
                         shape_str(lv.shape()));
  }
  std::vector<double> probs(n * c);
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const int y = labels[i];
    if (y < 0 || static_cast<std::size_t>(y) >= c) {
      throw IndexError("softmax_cross_entropy: label " + std::to_string(y) + " at row " + std::to_string(i) +
                       " outside [0, " + std::to_string(c) + ")");
    }
    const double* row = lv.data().data() + i * c;
    const double mx = *std::max_element(row, row + c);
    double z = 0.0;
    for (std::size_t j = 0; j < c; ++j) z += std::exp(row[j] - mx);
    const double log_z = std::log(z);
    for (std::size_t j = 0; j < c; ++j) probs[i * c + j] = std::exp(row[j] - mx - log_z);
    total += log_z - (row[y] - mx);
  }
  std::vector<int> ys(labels.begin(), labels.end());
  return push(Tensor::scalar(total / static_cast<double>(n)), requires_grad(logits),
              [logits, probs = std::move(probs), ys = std::move(ys), n, c](Tape& t, std::size_t self) {
                if (!t.nodes_[logits.id].requires_grad) return;
                const double g = t.nodes_[self].grad[0] / static_cast<double>(n);
                auto& gl = t.grad_buffer(logits.id);
                for (std::size_t i = 0; i < n; ++i)
                  for (std::size_t j = 0; j < c; ++j) {
                    const double onehot = static_cast<std::size_t>(ys[i]) == j ? 1.0 : 0.0;
                    gl[i * c + j] += g * (probs[i * c + j] - onehot);
                  }
              });
}

void Tape::backward(Var loss) {
  if (loss.id >= nodes_.size()) throw StateError("backward: unknown loss variable");
  if (value(loss).size() != 1) {
    throw DimensionError("backward: loss must be a single element, got " + shape_str(value(loss).shape()));
  }
  for (auto& node : nodes_) node.grad.clear();
  backward_order_.clear();
  grad_buffer(loss.id)[0] = 1.0;
  for (std::size_t id = loss.id + 1; id-- > 0;) {
    auto& node = nodes_[id];
    if (node.grad.empty() || !node.requires_grad) continue;
    backward_order_.push_back(id);
    if (node.backward) node.backward(*this, id);
  }
}

}  // namespace awdlab
