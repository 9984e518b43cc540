#include <doctest.h>

#include <cmath>
#include <limits>
#include <tuple>
#include <vector>

#include "choplab/rng.hpp"
#include "choplab/tensor.hpp"

using namespace choplab;

namespace {

// Independent triple-loop reference for every matmul flavor.
Tensor naive_matmul(const Tensor& a, const Tensor& b, bool ta, bool tb) {
  std::size_t m = ta ? a.cols() : a.rows();
  std::size_t k = ta ? a.rows() : a.cols();
  std::size_t n = tb ? b.rows() : b.cols();
  Tensor c = Tensor::zeros(m, n);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      double s = 0.0;
      for (std::size_t p = 0; p < k; ++p) {
        double av = ta ? a.at(p, i) : a.at(i, p);
        double bv = tb ? b.at(j, p) : b.at(p, j);
        s += av * bv;
      }
      c.at(i, j) = s;
    }
  return c;
}

Tensor random_tensor(std::size_t r, std::size_t c, Rng& rng) {
  Tensor t = Tensor::zeros(r, c);
  for (auto& v : t.data) v = rng.normal();
  return t;
}

}  // namespace

TEST_CASE("matmul variants agree with a triple-loop reference") {
  Rng rng(101);
  for (auto [m, k, n] : {std::tuple{1, 1, 1}, {3, 5, 4}, {7, 2, 9}, {16, 16, 16}}) {
    Tensor a = random_tensor(m, k, rng);
    Tensor b = random_tensor(k, n, rng);
    Tensor at = random_tensor(k, m, rng);
    Tensor bt = random_tensor(n, k, rng);
    CHECK(max_abs_diff(matmul(a, b), naive_matmul(a, b, false, false)) < 1e-12);
    CHECK(max_abs_diff(matmul_nt(a, bt), naive_matmul(a, bt, false, true)) < 1e-12);
    CHECK(max_abs_diff(matmul_tn(at, b), naive_matmul(at, b, true, false)) < 1e-12);
  }
}

TEST_CASE("matmul rejects mismatched inner dimensions") {
  Tensor a = Tensor::zeros(2, 3);
  Tensor b = Tensor::zeros(4, 2);
  CHECK_THROWS_AS(matmul(a, b), ShapeError);
}

TEST_CASE("accumulating matmul adds on top of existing values") {
  Rng rng(5);
  Tensor a = random_tensor(3, 4, rng);
  Tensor b = random_tensor(4, 2, rng);
  Tensor out = Tensor::full(3, 2, 1.5);
  add_matmul(out, a, b);
  Tensor expect = naive_matmul(a, b, false, false);
  for (auto& v : expect.data) v += 1.5;
  CHECK(max_abs_diff(out, expect) < 1e-12);
}

TEST_CASE("elementwise ops and bias broadcast") {
  Tensor a = Tensor::from_rows(2, 2, {1, 2, 3, 4});
  Tensor b = Tensor::from_rows(2, 2, {10, 20, 30, 40});
  CHECK(add(a, b).at(1, 1) == 44);
  CHECK(sub(b, a).at(0, 0) == 9);
  CHECK(scale(a, -2.0).at(0, 1) == -4);
  Tensor bias = Tensor::row({100, 200});
  Tensor y = add_bias_row(a, bias);
  CHECK(y.at(0, 0) == 101);
  CHECK(y.at(1, 1) == 204);
}

TEST_CASE("softmax rows: closed forms, normalization, shift invariance") {
  // softmax([0, 0]) = [1/2, 1/2]; softmax([ln 1, ln 3]) = [1/4, 3/4].
  Tensor x = Tensor::from_rows(2, 2, {0, 0, 0, std::log(3.0)});
  Tensor y = softmax_rows(x);
  CHECK(y.at(0, 0) == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(y.at(1, 1) == doctest::Approx(0.75).epsilon(1e-15));

  Rng rng(9);
  Tensor r = Tensor::zeros(4, 6);
  for (auto& v : r.data) v = rng.normal(0.0, 3.0);
  Tensor s = softmax_rows(r);
  for (std::size_t i = 0; i < 4; ++i) {
    double sum = 0.0;
    for (std::size_t j = 0; j < 6; ++j) sum += s.at(i, j);
    CHECK(sum == doctest::Approx(1.0).epsilon(1e-14));
  }
  Tensor shifted = r;
  for (std::size_t i = 0; i < 4; ++i)
    for (std::size_t j = 0; j < 6; ++j) shifted.at(i, j) += 123.0;
  CHECK(max_abs_diff(softmax_rows(shifted), s) < 1e-13);

  // Large magnitudes must not overflow thanks to row-max subtraction.
  Tensor big = Tensor::from_rows(1, 2, {1000.0, 999.0});
  Tensor sb = softmax_rows(big);
  CHECK(sb.all_finite());
  CHECK(sb.at(0, 0) == doctest::Approx(1.0 / (1.0 + std::exp(-1.0))).epsilon(1e-14));
}

TEST_CASE("layer_norm matches a direct two-pass computation") {
  Rng rng(21);
  Tensor x = random_tensor(3, 8, rng);
  Tensor g = random_tensor(1, 8, rng);
  Tensor b = random_tensor(1, 8, rng);
  const double eps = 1e-5;
  Tensor y = layer_norm(x, g, b, eps);
  for (std::size_t i = 0; i < 3; ++i) {
    double mean = 0.0;
    for (std::size_t j = 0; j < 8; ++j) mean += x.at(i, j);
    mean /= 8.0;
    double var = 0.0;
    for (std::size_t j = 0; j < 8; ++j) {
      double d = x.at(i, j) - mean;
      var += d * d;
    }
    var /= 8.0;
    for (std::size_t j = 0; j < 8; ++j) {
      double expect = (x.at(i, j) - mean) / std::sqrt(var + eps) * g.at(0, j) +
                      b.at(0, j);
      CHECK(y.at(i, j) == doctest::Approx(expect).epsilon(1e-13));
    }
  }
}

TEST_CASE("layer_norm of a constant row is pure bias") {
  Tensor x = Tensor::full(1, 4, 7.0);
  Tensor g = Tensor::full(1, 4, 2.0);
  Tensor b = Tensor::row({1, 2, 3, 4});
  Tensor y = layer_norm(x, g, b, 1e-5);
  for (std::size_t j = 0; j < 4; ++j)
    CHECK(y.at(0, j) == doctest::Approx(b.at(0, j)).epsilon(1e-12));
}

TEST_CASE("gelu closed-form values and identities") {
  CHECK(gelu_scalar(0.0) == 0.0);
  // gelu(1) = Phi(1) = 0.5(1 + erf(1/sqrt 2))
  double phi1 = 0.5 * (1.0 + std::erf(1.0 / std::sqrt(2.0)));
  CHECK(gelu_scalar(1.0) == doctest::Approx(phi1).epsilon(1e-15));
  // x*Phi(x) - (-x)*Phi(-x) = x since Phi(x) + Phi(-x) = 1.
  for (double x : {0.1, 0.7, 1.3, 2.5, 5.0}) {
    CHECK(gelu_scalar(x) - gelu_scalar(-x) == doctest::Approx(x).epsilon(1e-14));
    // derivative by central finite difference
    double h = 1e-6;
    double fd = (gelu_scalar(x + h) - gelu_scalar(x - h)) / (2 * h);
    CHECK(gelu_grad_scalar(x) == doctest::Approx(fd).epsilon(1e-7));
  }
  // Far tails: identity-like on the right, zero on the left.
  CHECK(gelu_scalar(10.0) == doctest::Approx(10.0).epsilon(1e-15));
  CHECK(std::abs(gelu_scalar(-10.0)) < 1e-15);
}

TEST_CASE("sigmoid is stable at extreme arguments") {
  CHECK(sigmoid_scalar(0.0) == 0.5);
  CHECK(sigmoid_scalar(800.0) == 1.0);
  CHECK(sigmoid_scalar(-700.0) > 0.0);
  CHECK(sigmoid_scalar(-700.0) < 1e-300);
  CHECK(std::isfinite(sigmoid_scalar(-800.0)));  // underflows to 0, never NaN
  CHECK(sigmoid_scalar(2.0) + sigmoid_scalar(-2.0) == doctest::Approx(1.0).epsilon(1e-15));
}

TEST_CASE("ensure_finite flags NaN and infinity") {
  Tensor t = Tensor::from_rows(1, 3, {1.0, 2.0, 3.0});
  CHECK_NOTHROW(ensure_finite(t, "t"));
  t.at(0, 1) = std::nan("");
  CHECK_THROWS_AS(ensure_finite(t, "t"), NumericError);
  t.at(0, 1) = std::numeric_limits<double>::infinity();
  CHECK_THROWS_AS(ensure_finite(t, "t"), NumericError);
}
