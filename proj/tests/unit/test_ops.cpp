#include <doctest.h>

#include <cmath>
#include <numeric>

#include "mixerbench/ops.hpp"
#include "mixerbench/reference.hpp"
#include "testing.hpp"

using namespace mixerbench;
using testing::gradient_error;
using testing::random_tensor;

TEST_CASE("matmul by identity") {
  Tensor eye = Tensor::from({1, 0, 0, 0, 1, 0, 0, 0, 1}, {3, 3}, DType::f64);
  Tensor a = random_tensor({3, 4}, 1);
  CHECK(testing::max_abs_diff(matmul(eye, a), a) == 0);
}

TEST_CASE("matmul matches a triple loop") {
  Tensor a = random_tensor({3, 4}, 2);
  Tensor b = random_tensor({4, 2}, 3);
  std::vector<double> c(6, 0.0);
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 2; ++j)
      for (int k = 0; k < 4; ++k) c[i * 2 + j] += a.at({i, k}) * b.at({k, j});
  CHECK(testing::max_abs_diff(matmul(a, b).to_vector(), c) < 1e-12);
}

TEST_CASE("matmul transposes and batching") {
  Tensor a = random_tensor({2, 5, 3}, 4);
  Tensor b = random_tensor({2, 4, 3}, 5);
  Tensor c = matmul(a, b, false, true);
  CHECK(c.shape() == Shape{2, 5, 4});
  for (int bi = 0; bi < 2; ++bi)
    for (int i = 0; i < 5; ++i)
      for (int j = 0; j < 4; ++j) {
        double acc = 0;
        for (int k = 0; k < 3; ++k) acc += a.at({bi, i, k}) * b.at({bi, j, k});
        CHECK(c.at({bi, i, j}) == doctest::Approx(acc).epsilon(1e-12));
      }
  CHECK_THROWS_AS(matmul(a, b), ShapeError);
}

TEST_CASE("sum of zeros is zero") { CHECK(sum(Tensor::zeros({3, 4}, DType::f64)).item() == 0); }

TEST_CASE("softmax examples") {
  Tensor u = Tensor::from({1, 1, 1}, {3}, DType::f64);
  for (double v : softmax(u, 0).to_vector()) CHECK(v == doctest::Approx(1.0 / 3).epsilon(1e-15));
  Tensor x = Tensor::from({0, std::log(2.0)}, {2}, DType::f64);
  auto y = softmax(x, 0).to_vector();
  CHECK(std::abs(y[0] - 1.0 / 3) < 1e-15);
  CHECK(std::abs(y[1] - 2.0 / 3) < 1e-15);
}

TEST_CASE("softmax rows sum to one and ignore shifts") {
  Tensor x = random_tensor({6, 9}, 7, -20, 20);
  Tensor y = softmax(x, 1);
  Tensor s = sum(y, 1);
  for (double v : s.to_vector()) CHECK(std::abs(v - 1) < 1e-12);
  Tensor shifted = softmax(add_scalar(x, 123.5), 1);
  CHECK(testing::max_abs_diff(y, shifted) < 1e-12);
  Tensor y0 = softmax(x, 0);
  for (double v : sum(y0, 0).to_vector()) CHECK(std::abs(v - 1) < 1e-12);
}

TEST_CASE("softmax over an empty axis is an error") {
  CHECK_THROWS_AS(softmax(Tensor::zeros({2, 0}, DType::f64), 1), ShapeError);
}

TEST_CASE("masked softmax gives exactly zero weight to -inf entries") {
  Tensor x = random_tensor({2, 4}, 8);
  Tensor bias = Tensor::from({0, -INFINITY, 0, -INFINITY}, {4}, DType::f64);
  auto y = masked_softmax(x, bias).to_vector();
  CHECK(y[1] == 0.0);
  CHECK(y[3] == 0.0);
  CHECK(y[0] + y[2] == doctest::Approx(1));
}

TEST_CASE("layer norm examples") {
  Tensor one = Tensor::full({4}, 1.0, DType::f64);
  Tensor zero = Tensor::zeros({4}, DType::f64);
  Tensor constant = Tensor::full({2, 4}, 3.5, DType::f64);
  for (double v : layer_norm(constant, one, zero, 1e-5).to_vector()) CHECK(v == 0);

  Tensor x = Tensor::from({-1, 1}, {2}, DType::f64);
  Tensor g2 = Tensor::full({2}, 1.0, DType::f64);
  Tensor b2 = Tensor::zeros({2}, DType::f64);
  CHECK(testing::max_abs_diff(layer_norm(x, g2, b2, 0.0), x) < 1e-15);

  Tensor r = random_tensor({8}, 9);
  Tensor gamma = random_tensor({8}, 10);
  Tensor beta = random_tensor({8}, 11);
  std::vector<double> expect(8);
  reference::layer_norm_rows<double>(r.data<double>().data(), gamma.data<double>().data(),
                                     beta.data<double>().data(), expect.data(), 1, 8, 1e-5);
  CHECK(testing::max_abs_diff(layer_norm(r, gamma, beta, 1e-5).to_vector(), expect) < 1e-12);

  Tensor y = layer_norm(random_tensor({3, 16}, 12, -5, 5), Tensor::full({16}, 1.0, DType::f64),
                        Tensor::zeros({16}, DType::f64), 0.0);
  for (int row = 0; row < 3; ++row) {
    double m = 0, v = 0;
    for (int j = 0; j < 16; ++j) m += y.at({row, j});
    m /= 16;
    for (int j = 0; j < 16; ++j) v += (y.at({row, j}) - m) * (y.at({row, j}) - m);
    CHECK(std::abs(m) < 1e-12);
    CHECK(std::abs(v / 16 - 1) < 1e-12);
  }
  CHECK_THROWS_AS(layer_norm(Tensor::zeros({2, 0}, DType::f64), Tensor::zeros({0}, DType::f64),
                             Tensor::zeros({0}, DType::f64), 1e-5),
                  ShapeError);
}

TEST_CASE("broadcasting and sum_to") {
  Tensor a = random_tensor({2, 3, 4}, 13);
  Tensor b = random_tensor({3, 1}, 14);
  Tensor c = add(a, b);
  CHECK(c.shape() == Shape{2, 3, 4});
  CHECK(c.at({1, 2, 3}) == doctest::Approx(a.at({1, 2, 3}) + b.at({2, 0})));
  Tensor s = sum_to(c, {3, 1});
  double acc = 0;
  for (int i = 0; i < 2; ++i)
    for (int k = 0; k < 4; ++k) acc += c.at({i, 1, k});
  CHECK(s.at({1, 0}) == doctest::Approx(acc));
  CHECK_THROWS_AS(add(a, random_tensor({2, 4}, 1)), ShapeError);
}

TEST_CASE("shape ops move the right elements") {
  Tensor x = Tensor::from({0, 1, 2, 3, 4, 5}, {2, 3}, DType::f64);
  CHECK(transpose(x, 0, 1).to_vector() == std::vector<double>{0, 3, 1, 4, 2, 5});
  CHECK(slice(x, 1, 1, 3).to_vector() == std::vector<double>{1, 2, 4, 5});
  CHECK(pad(x, 0, 1, 0).to_vector() == std::vector<double>{0, 0, 0, 0, 1, 2, 3, 4, 5});
  CHECK(concat({x, x}, 1).to_vector() == std::vector<double>{0, 1, 2, 0, 1, 2, 3, 4, 5, 3, 4, 5});
  CHECK(reshape(x, {3, -1}).shape() == Shape{3, 2});
  Tensor p = permute(random_tensor({2, 3, 4}, 15), {2, 0, 1});
  CHECK(p.shape() == Shape{4, 2, 3});
  std::vector<std::int64_t> idx{2, 0};
  CHECK(embedding(x.view({3, 2}), idx).to_vector() == std::vector<double>{4, 5, 0, 1});
  CHECK_THROWS_AS(slice(x, 1, 2, 5), ShapeError);
  CHECK_THROWS_AS(reshape(x, {4, 2}), ShapeError);
}

TEST_CASE("depthwise conv and causal conv match serial references") {
  Tensor x = random_tensor({2, 10, 3}, 16);
  Tensor w = random_tensor({3, 3}, 17);
  Tensor b = random_tensor({3}, 18);
  std::vector<double> expect(60);
  reference::depthwise_conv1d<double>(x.data<double>().data(), w.data<double>().data(),
                                      b.data<double>().data(), expect.data(), 2, 10, 3, 3);
  CHECK(testing::max_abs_diff(depthwise_conv1d(x, w, b).to_vector(), expect) < 1e-14);

  Tensor h = random_tensor({10, 3}, 19);
  reference::causal_conv_direct<double>(x.data<double>().data(), h.data<double>().data(),
                                        expect.data(), 2, 10, 3);
  CHECK(testing::max_abs_diff(causal_conv(x, h).to_vector(), expect) < 1e-12);
  CHECK_THROWS_AS(causal_conv(x, random_tensor({9, 3}, 1)), ShapeError);
}

TEST_CASE("selective scan rejects unstable A") {
  Tensor u = random_tensor({4, 2}, 20);
  Tensor d = random_tensor({4, 2}, 21, 0.1, 1);
  Tensor A = random_tensor({2, 3}, 22, 0.1, 1);
  Tensor B = random_tensor({4, 3}, 23);
  CHECK_THROWS_AS(selective_scan(u, d, A, B, B), Error);
}

TEST_CASE("cross entropy of uniform logits is log K") {
  Tensor logits = Tensor::zeros({3, 5}, DType::f64);
  std::vector<std::int32_t> labels{0, 4, 2};
  CHECK(cross_entropy(logits, labels).item() == doctest::Approx(std::log(5.0)).epsilon(1e-14));
  std::vector<std::int32_t> bad{0, 5, 2};
  CHECK_THROWS_AS(cross_entropy(logits, bad), ShapeError);
}

TEST_CASE("gaussian blur keeps a constant interior and is self-adjoint") {
  Tensor img = Tensor::full({1, 20, 20}, 2.0, DType::f64);
  Tensor y = gaussian_blur(img, 1.5);
  CHECK(y.at({0, 10, 10}) == doctest::Approx(2.0).epsilon(1e-12));
  CHECK(y.at({0, 0, 0}) < 2.0);
  Tensor a = random_tensor({1, 9, 7}, 24);
  Tensor b = random_tensor({1, 9, 7}, 25);
  const double lhs = sum(mul(gaussian_blur(a, 1.5), b)).item();
  const double rhs = sum(mul(a, gaussian_blur(b, 1.5))).item();
  CHECK(lhs == doctest::Approx(rhs).epsilon(1e-12));
}

TEST_CASE("flop counter counts matmul MACs twice") {
  reset_flop_counter();
  matmul(random_tensor({3, 4}, 1), random_tensor({4, 5}, 2));
  CHECK(flop_counter() == 2 * 3 * 4 * 5);
}

// --- adjoints vs central differences ---------------------------------------

namespace {

// A fixed random weighting keeps the loss from being a plain sum.
Tensor weighted(const Tensor& y, std::uint64_t seed = 99) {
  return sum(mul(y, random_tensor(y.shape(), seed)));
}

}  // namespace

TEST_CASE("elementwise adjoints") {
  auto a = random_tensor({3, 4}, 30);
  auto b = random_tensor({4}, 31);
  auto pos = random_tensor({3, 4}, 32, 0.5, 2);
  CHECK(gradient_error([](auto& v) { return weighted(add(v[0], v[1])); }, {a, b}) < 1e-7);
  CHECK(gradient_error([](auto& v) { return weighted(sub(v[0], v[1])); }, {a, b}) < 1e-7);
  CHECK(gradient_error([](auto& v) { return weighted(mul(v[0], v[1])); }, {a, b}) < 1e-7);
  CHECK(gradient_error([](auto& v) { return weighted(exp(v[0])); }, {a}) < 1e-7);
  CHECK(gradient_error([](auto& v) { return weighted(log(v[0])); }, {pos}) < 1e-7);
  CHECK(gradient_error([](auto& v) { return weighted(sqrt(v[0])); }, {pos}) < 1e-7);
  CHECK(gradient_error([](auto& v) { return weighted(reciprocal(v[0])); }, {pos}) < 1e-7);
  CHECK(gradient_error([](auto& v) { return weighted(square(v[0])); }, {a}) < 1e-7);
  CHECK(gradient_error([](auto& v) { return weighted(silu(v[0])); }, {a}) < 1e-7);
  CHECK(gradient_error([](auto& v) { return weighted(gelu(v[0])); }, {a}) < 1e-7);
  CHECK(gradient_error([](auto& v) { return weighted(softplus(v[0])); }, {a}) < 1e-7);
  CHECK(gradient_error([](auto& v) { return weighted(mul_scalar(add_scalar(v[0], 2), -3)); }, {a}) < 1e-7);
}

TEST_CASE("matmul adjoints for every transpose combination") {
  for (bool ta : {false, true})
    for (bool tb : {false, true}) {
      auto a = random_tensor(ta ? Shape{2, 4, 3} : Shape{2, 3, 4}, 40);
      auto b = random_tensor(tb ? Shape{5, 4} : Shape{4, 5}, 41);
      auto bb = random_tensor(tb ? Shape{2, 5, 4} : Shape{2, 4, 5}, 42);
      CHECK(gradient_error([=](auto& v) { return weighted(matmul(v[0], v[1], ta, tb)); }, {a, b}) < 1e-7);
      CHECK(gradient_error([=](auto& v) { return weighted(matmul(v[0], v[1], ta, tb)); }, {a, bb}) < 1e-7);
    }
  // shared left operand against a batched right one
  CHECK(gradient_error([](auto& v) { return weighted(matmul(v[0], v[1])); },
                       {random_tensor({3, 4}, 43), random_tensor({2, 4, 6}, 44)}) < 1e-7);
}

TEST_CASE("shape adjoints") {
  auto x = random_tensor({2, 3, 4}, 50);
  CHECK(gradient_error([](auto& v) { return weighted(transpose(v[0], 0, 2)); }, {x}) < 1e-7);
  CHECK(gradient_error([](auto& v) { return weighted(permute(v[0], {1, 2, 0})); }, {x}) < 1e-7);
  CHECK(gradient_error([](auto& v) { return weighted(reshape(v[0], {6, 4})); }, {x}) < 1e-7);
  CHECK(gradient_error([](auto& v) { return weighted(slice(v[0], 2, 1, 3)); }, {x}) < 1e-7);
  CHECK(gradient_error([](auto& v) { return weighted(pad(v[0], 1, 2, 1)); }, {x}) < 1e-7);
  CHECK(gradient_error([](auto& v) { return weighted(concat({v[0], v[1]}, 1)); }, {x, random_tensor({2, 2, 4}, 51)}) < 1e-7);
  std::vector<std::int64_t> idx{1, 0, 1};
  CHECK(gradient_error([&](auto& v) { return weighted(embedding(v[0], idx)); }, {random_tensor({2, 3}, 52)}) < 1e-7);
}

TEST_CASE("reduction adjoints") {
  auto x = random_tensor({2, 3, 4}, 60);
  CHECK(gradient_error([](auto& v) { return mul_scalar(sum(v[0]), 3); }, {x}) < 1e-7);
  CHECK(gradient_error([](auto& v) { return weighted(sum(v[0], 1)); }, {x}) < 1e-7);
  CHECK(gradient_error([](auto& v) { return weighted(mean(v[0], 2, true)); }, {x}) < 1e-7);
  CHECK(gradient_error([](auto& v) { return square(mean(v[0])); }, {x}) < 1e-7);
}

TEST_CASE("network primitive adjoints") {
  auto x = random_tensor({2, 3, 5}, 70, -2, 2);
  CHECK(gradient_error([](auto& v) { return weighted(softmax(v[0], -1)); }, {x}) < 1e-6);
  CHECK(gradient_error([](auto& v) { return weighted(softmax(v[0], 1)); }, {x}) < 1e-6);
  CHECK(gradient_error([](auto& v) { return weighted(log_softmax(v[0], -1)); }, {x}) < 1e-6);
  Tensor bias = Tensor::from({0, -INFINITY, 0, 0, -1e9}, {5}, DType::f64);
  CHECK(gradient_error([&](auto& v) { return weighted(masked_softmax(v[0], bias)); }, {x}) < 1e-6);
  CHECK(gradient_error([](auto& v) { return weighted(layer_norm(v[0], v[1], v[2], 1e-5)); },
                       {x, random_tensor({5}, 71), random_tensor({5}, 72)}) < 1e-6);
  auto seq = random_tensor({2, 7, 3}, 73);
  CHECK(gradient_error([](auto& v) { return weighted(depthwise_conv1d(v[0], v[1], v[2])); },
                       {seq, random_tensor({3, 3}, 74), random_tensor({3}, 75)}) < 1e-7);
  CHECK(gradient_error([](auto& v) { return weighted(causal_conv(v[0], v[1])); },
                       {seq, random_tensor({7, 3}, 76)}) < 1e-7);
  CHECK(gradient_error([](auto& v) { return weighted(gaussian_blur(v[0], 1.0)); },
                       {random_tensor({2, 6, 5}, 77)}) < 1e-7);
}

TEST_CASE("selective scan adjoint, sequential and chunked") {
  for (std::int64_t chunk : {std::int64_t{-1}, std::int64_t{3}}) {
    auto u = random_tensor({2, 9, 3}, 80);
    auto d = random_tensor({2, 9, 3}, 81, 0.05, 0.8);
    auto A = random_tensor({3, 4}, 82, -2, -0.2);
    auto B = random_tensor({2, 9, 4}, 83);
    auto C = random_tensor({2, 9, 4}, 84);
    CHECK(gradient_error([=](auto& v) { return weighted(selective_scan(v[0], v[1], v[2], v[3], v[4], chunk)); },
                         {u, d, A, B, C}) < 1e-6);
  }
}

TEST_CASE("softmax cross entropy gradient matches finite differences") {
  auto logits = random_tensor({4, 6}, 90, -3, 3);
  std::vector<std::int32_t> labels{1, 5, 0, 3};
  CHECK(gradient_error([&](auto& v) { return cross_entropy(v[0], labels); }, {logits}) < 1e-5);
}
