#include <cmath>

#include "awdlab/error.hpp"
#include "awdlab/gradcheck.hpp"
#include "awdlab/model.hpp"
#include "awdlab/rng.hpp"
#include "awdlab/tape.hpp"
#include "doctest.h"

using namespace awdlab;

namespace {

Tensor random_tensor(Shape shape, std::uint64_t seed, double lo = -1.0, double hi = 1.0) {
  CounterRng rng(seed);
  Tensor t(std::move(shape));
  for (auto& v : t.data()) v = rng.uniform(lo, hi);
  return t;
}

// Independent oracles: direct index arithmetic, no shared kernels.
std::vector<double> naive_matmul(const Tensor& a, const Tensor& b) {
  const auto m = a.dim(0), k = a.dim(1), n = b.dim(1);
  std::vector<double> out(m * n, 0.0);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j)
      for (std::size_t p = 0; p < k; ++p) out[i * n + j] += a[i * k + p] * b[p * n + j];
  return out;
}

double padded_at(const Tensor& x, std::size_t b, std::size_t c, long r, long s) {
  const long h = static_cast<long>(x.dim(2)), w = static_cast<long>(x.dim(3));
  if (r < 0 || s < 0 || r >= h || s >= w) return 0.0;
  return x[((b * x.dim(1) + c) * x.dim(2) + static_cast<std::size_t>(r)) * x.dim(3) + static_cast<std::size_t>(s)];
}

std::vector<double> naive_conv(const Tensor& x, const Tensor& k, std::size_t stride, std::size_t pad) {
  const auto n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  const auto f = k.dim(0), kh = k.dim(2), kw = k.dim(3);
  const auto oh = (h + 2 * pad - kh) / stride + 1, ow = (w + 2 * pad - kw) / stride + 1;
  std::vector<double> out;
  for (std::size_t b = 0; b < n; ++b)
    for (std::size_t fo = 0; fo < f; ++fo)
      for (std::size_t i = 0; i < oh; ++i)
        for (std::size_t j = 0; j < ow; ++j) {
          double acc = 0.0;
          for (std::size_t ci = 0; ci < c; ++ci)
            for (std::size_t u = 0; u < kh; ++u)
              for (std::size_t v = 0; v < kw; ++v)
                acc += padded_at(x, b, ci, static_cast<long>(i * stride + u) - static_cast<long>(pad),
                                 static_cast<long>(j * stride + v) - static_cast<long>(pad)) *
                       k[((fo * c + ci) * kh + u) * kw + v];
          out.push_back(acc);
        }
  return out;
}

// Central-difference gradient of a scalar function of one tensor.
template <typename F>
std::vector<double> numeric_grad(Tensor t, F&& f, double h = 1e-5) {
  std::vector<double> g(t.size());
  for (std::size_t i = 0; i < t.size(); ++i) {
    const double orig = t[i];
    t[i] = orig + h;
    const double up = f(t);
    t[i] = orig - h;
    const double down = f(t);
    t[i] = orig;
    g[i] = (up - down) / (2 * h);
  }
  return g;
}

}  // namespace

TEST_CASE("tensor rejects inconsistent shapes") {
  CHECK_THROWS_AS(Tensor({2, 3}, std::vector<double>(5)), DimensionError);
  CHECK_THROWS_AS(Tensor({0, 3}), DimensionError);
  Tensor t({2, 2}, {1, 2, 3, 4});
  CHECK_FALSE(t.has_grad());
  CHECK_THROWS_AS(t.set_grad({1.0}), DimensionError);
}

TEST_CASE("matmul examples") {
  Tape tape;
  auto eye = tape.leaf(Tensor({2, 2}, {1, 0, 0, 1}));
  auto b = tape.leaf(Tensor({2, 2}, {3, 1, 4, 2}));
  CHECK(tape.value(tape.matmul(eye, b)).values() == std::vector<double>{3, 1, 4, 2});
  auto r = tape.leaf(Tensor({1, 2}, {1, 2}));
  auto c = tape.leaf(Tensor({2, 1}, {3, 4}));
  CHECK(tape.value(tape.matmul(r, c)).values() == std::vector<double>{11});
}

TEST_CASE("matmul matches the triple-loop oracle") {
  const Tensor a = random_tensor({5, 7}, 1), b = random_tensor({7, 3}, 2);
  const Tensor out = matmul_forward(a, b);
  const auto want = naive_matmul(a, b);
  for (std::size_t i = 0; i < want.size(); ++i) CHECK(std::abs(out[i] - want[i]) <= 1e-12);
}

TEST_CASE("matmul shape mismatch names both shapes") {
  try {
    matmul_forward(Tensor({2, 3}), Tensor({4, 2}));
    FAIL("expected DimensionError");
  } catch (const DimensionError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("[2x3]") != std::string::npos);
    CHECK(msg.find("[4x2]") != std::string::npos);
  }
}

TEST_CASE("matmul backward matches central differences through cross-entropy") {
  const Tensor a = random_tensor({3, 4}, 3), b = random_tensor({4, 2}, 4);
  const std::vector<int> y{0, 1, 1};
  auto loss = [&](const Tensor& aa, const Tensor& bb) {
    Tape t;
    return t.value(t.softmax_cross_entropy(t.matmul(t.leaf(aa), t.leaf(bb)), y))[0];
  };
  Tape tape;
  auto va = tape.leaf(a), vb = tape.leaf(b);
  tape.backward(tape.softmax_cross_entropy(tape.matmul(va, vb), y));
  const auto ga = numeric_grad(a, [&](const Tensor& x) { return loss(x, b); });
  const auto gb = numeric_grad(b, [&](const Tensor& x) { return loss(a, x); });
  for (std::size_t i = 0; i < ga.size(); ++i) CHECK(tape.grad(va)[i] == doctest::Approx(ga[i]).epsilon(1e-6));
  for (std::size_t i = 0; i < gb.size(); ++i) CHECK(tape.grad(vb)[i] == doctest::Approx(gb[i]).epsilon(1e-6));
}

TEST_CASE("conv2d examples") {
  Tape tape;
  auto x = tape.leaf(Tensor({1, 1, 3, 3}, std::vector<double>(9, 1.0)));
  auto k = tape.leaf(Tensor({1, 1, 2, 2}, std::vector<double>(4, 1.0)));
  const Tensor& out = tape.value(tape.conv2d(x, k, 1, 0));
  CHECK(out.shape() == Shape{1, 1, 2, 2});
  CHECK(out.values() == std::vector<double>(4, 4.0));

  const Tensor img = random_tensor({2, 1, 4, 5}, 9);
  CHECK(conv2d_forward(img, Tensor({1, 1, 1, 1}, {1.0}), 1, 0) == img);
}

TEST_CASE("conv2d matches the nested-loop oracle") {
  for (auto [stride, pad] : {std::pair<std::size_t, std::size_t>{1, 0}, {1, 1}, {2, 1}, {2, 0}}) {
    const Tensor x = random_tensor({2, 3, 6, 5}, 11 + stride * 7 + pad), k = random_tensor({4, 3, 3, 3}, 12);
    const Tensor out = conv2d_forward(x, k, stride, pad);
    const auto want = naive_conv(x, k, stride, pad);
    REQUIRE(out.size() == want.size());
    CHECK(out.dim(2) == (6 + 2 * pad - 3) / stride + 1);
    for (std::size_t i = 0; i < want.size(); ++i) CHECK(std::abs(out[i] - want[i]) <= 1e-12);
  }
}

TEST_CASE("conv2d rejects a kernel larger than the padded input") {
  CHECK_THROWS_AS(conv2d_forward(Tensor({1, 1, 2, 2}), Tensor({1, 1, 3, 3}), 1, 0), DimensionError);
  CHECK_NOTHROW(conv2d_forward(Tensor({1, 1, 2, 2}), Tensor({1, 1, 3, 3}), 1, 1));
}

TEST_CASE("conv2d backward matches central differences") {
  const Tensor x = random_tensor({2, 2, 5, 5}, 21), k = random_tensor({3, 2, 3, 3}, 22);
  const std::vector<int> y{1, 4};
  auto loss = [&](const Tensor& xx, const Tensor& kk) {
    Tape t;
    auto z = t.flatten(t.conv2d(t.leaf(xx), t.leaf(kk), 2, 1));
    auto proj = t.leaf(random_tensor({27, 5}, 23), false);
    return t.value(t.softmax_cross_entropy(t.matmul(z, proj), y))[0];
  };
  Tape tape;
  auto vx = tape.leaf(x), vk = tape.leaf(k);
  auto z = tape.flatten(tape.conv2d(vx, vk, 2, 1));
  auto proj = tape.leaf(random_tensor({27, 5}, 23), false);
  tape.backward(tape.softmax_cross_entropy(tape.matmul(z, proj), y));
  const auto gx = numeric_grad(x, [&](const Tensor& t) { return loss(t, k); });
  const auto gk = numeric_grad(k, [&](const Tensor& t) { return loss(x, t); });
  for (std::size_t i = 0; i < gx.size(); ++i) CHECK(tape.grad(vx)[i] == doctest::Approx(gx[i]).epsilon(1e-6));
  for (std::size_t i = 0; i < gk.size(); ++i) CHECK(tape.grad(vk)[i] == doctest::Approx(gk[i]).epsilon(1e-6));
}

TEST_CASE("relu forward and subgradient") {
  Tape tape;
  auto x = tape.leaf(Tensor({3}, {-1, 0, 2}));
  CHECK(tape.value(tape.relu(x)).values() == std::vector<double>{0, 0, 2});

  Tape neg;
  auto xn = neg.leaf(Tensor({1, 3}, {-3, -2, -1}));
  auto rn = neg.relu(xn);
  CHECK(neg.value(rn).values() == std::vector<double>{0, 0, 0});
  neg.backward(neg.softmax_cross_entropy(rn, std::vector<int>{0}));
  for (double g : neg.grad(xn)) CHECK(g == 0.0);

  // Upstream gradient at relu([-1, 3]) is softmax([0, 3]) - e0; the first entry is blocked.
  Tape t;
  auto v = t.leaf(Tensor({1, 2}, {-1, 3}));
  t.backward(t.softmax_cross_entropy(t.relu(v), std::vector<int>{0}));
  const double p1 = std::exp(3.0) / (1.0 + std::exp(3.0));
  CHECK(t.grad(v)[0] == 0.0);
  CHECK(t.grad(v)[1] == doctest::Approx(p1).epsilon(1e-12));
}

TEST_CASE("softmax cross-entropy values") {
  Tape tape;
  auto u = tape.leaf(Tensor({2, 5}, std::vector<double>(10, 0.3)));
  CHECK(tape.value(tape.softmax_cross_entropy(u, std::vector<int>{0, 4}))[0] == doctest::Approx(std::log(5.0)).epsilon(1e-14));
  auto l = tape.leaf(Tensor({1, 2}, {10, -10}));
  const double v = tape.value(tape.softmax_cross_entropy(l, std::vector<int>{0}))[0];
  CHECK(v == doctest::Approx(std::log1p(std::exp(-20.0))).epsilon(1e-6));
  CHECK(v == doctest::Approx(2.06e-9).epsilon(1e-2));
}

TEST_CASE("softmax cross-entropy rejects labels out of range") {
  Tape tape;
  auto l = tape.leaf(Tensor({2, 3}));
  try {
    tape.softmax_cross_entropy(l, std::vector<int>{0, 3});
    FAIL("expected IndexError");
  } catch (const IndexError& e) {
    CHECK(std::string(e.what()).find("row 1") != std::string::npos);
  }
  CHECK_THROWS_AS(tape.softmax_cross_entropy(l, std::vector<int>{-1, 0}), IndexError);
}

TEST_CASE("softmax cross-entropy gradient: finite differences and zero row sums") {
  const Tensor z = random_tensor({4, 6}, 31, -3, 3);
  const std::vector<int> y{0, 5, 2, 2};
  Tape tape;
  auto vz = tape.leaf(z);
  tape.backward(tape.softmax_cross_entropy(vz, y));
  const auto fd = numeric_grad(z, [&](const Tensor& t) {
    Tape tt;
    return tt.value(tt.softmax_cross_entropy(tt.leaf(t), y))[0];
  });
  for (std::size_t i = 0; i < fd.size(); ++i) CHECK(tape.grad(vz)[i] == doctest::Approx(fd[i]).epsilon(1e-6));
  for (std::size_t r = 0; r < 4; ++r) {
    double s = 0;
    for (std::size_t c = 0; c < 6; ++c) s += tape.grad(vz)[r * 6 + c];
    CHECK(std::abs(s) < 1e-10);
  }
}

TEST_CASE("backward of a sum is the sum of the separate gradients") {
  const Tensor w = random_tensor({4, 3}, 41), x = random_tensor({5, 4}, 42);
  const std::vector<int> y1{0, 1, 2, 0, 1}, y2{2, 2, 1, 0, 0};
  auto grad_of = [&](int which) {
    Tape t;
    auto vw = t.leaf(w);
    auto logits = t.matmul(t.leaf(x, false), vw);
    Var loss;
    if (which == 1) loss = t.softmax_cross_entropy(logits, y1);
    if (which == 2) loss = t.softmax_cross_entropy(logits, y2);
    if (which == 3) loss = t.add(t.softmax_cross_entropy(logits, y1), t.softmax_cross_entropy(logits, y2));
    t.backward(loss);
    return std::vector<double>(t.grad(vw).begin(), t.grad(vw).end());
  };
  const auto g1 = grad_of(1), g2 = grad_of(2), g12 = grad_of(3);
  for (std::size_t i = 0; i < g1.size(); ++i) CHECK(std::abs(g12[i] - (g1[i] + g2[i])) <= 1e-12);
}

TEST_CASE("backward replays in exact reverse recording order") {
  Tape t;
  auto a = t.leaf(random_tensor({2, 3}, 51));
  auto b = t.leaf(random_tensor({3, 3}, 52));
  auto h = t.relu(t.matmul(a, b));
  auto loss = t.softmax_cross_entropy(h, std::vector<int>{0, 2});
  t.backward(loss);
  const auto& order = t.backward_order();
  REQUIRE(order.size() == t.size());
  for (std::size_t i = 1; i < order.size(); ++i) CHECK(order[i] < order[i - 1]);
}

TEST_CASE("finite_difference_check on a linear model") {
  const Model m = Model::mlp({6, 3}, 61);
  const Tensor x = random_tensor({5, 6}, 62, 0, 1);
  const std::vector<int> y{0, 1, 2, 1, 0};
  const auto report = finite_difference_check(m, x, y, 1e-5, 1e-6);
  CHECK(report.all_pass());
  CHECK(report.max_rel_error() < 1e-6);
  REQUIRE(report.tensors.size() == 2);
  CHECK(report.tensors[0].name == "fc0.weight");
  CHECK(report.tensors[0].checked == 18);
}

TEST_CASE("finite_difference_check with zero weights and zero input") {
  Model m = Model::mlp({4, 5, 3}, 63);
  for (auto& p : m.params())
    for (auto& v : p.tensor.data()) v = 0.0;
  const Tensor x({3, 4});
  const std::vector<int> y{0, 1, 2};
  const auto report = finite_difference_check(m, x, y);
  CHECK(report.all_pass());
  CHECK(std::isfinite(report.max_rel_error()));
}

TEST_CASE("finite_difference_check on the small CNN") {
  const Model m = Model::small_cnn(2, 8, 8, {3, 4}, 5, 64);
  const Tensor x = random_tensor({4, 2, 8, 8}, 65, 0, 1);
  const std::vector<int> y{0, 4, 2, 3};
  const auto report = finite_difference_check(m, x, y, 1e-5, 1e-4);
  CHECK(report.all_pass());
  for (const auto& e : report.tensors) CHECK(e.checked > 0);
}
