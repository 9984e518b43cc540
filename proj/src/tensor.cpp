#include "choplab/tensor.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <numbers>

#include "choplab/rng.hpp"

namespace choplab {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Map = Eigen::Map<RowMat>;
using CMap = Eigen::Map<const RowMat>;

CMap as_mat(const Tensor& t) {
  if (t.rank() != 2) throw ShapeError("expected rank-2 tensor");
  return CMap(t.data.data(), static_cast<Eigen::Index>(t.rows()),
              static_cast<Eigen::Index>(t.cols()));
}

Map as_mat(Tensor& t) {
  if (t.rank() != 2) throw ShapeError("expected rank-2 tensor");
  return Map(t.data.data(), static_cast<Eigen::Index>(t.rows()),
             static_cast<Eigen::Index>(t.cols()));
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (!a.same_shape(b)) throw ShapeError(std::string(op) + ": shape mismatch");
}

}  // namespace

void Tensor::resize(std::vector<std::size_t> s) {
  std::size_t n = 1;
  for (std::size_t e : s) {
    if (e == 0) throw ShapeError("zero extent in shape");
    n *= e;
  }
  shape = std::move(s);
  data.assign(n, 0.0);
}

Tensor Tensor::scalar(double v) {
  Tensor t({1});
  t.data[0] = v;
  return t;
}

Tensor Tensor::row(std::vector<double> values) {
  Tensor t({1, values.size()});
  t.data = std::move(values);
  return t;
}

Tensor Tensor::from_rows(std::size_t rows, std::size_t cols, std::vector<double> values) {
  if (values.size() != rows * cols) throw ShapeError("from_rows: size mismatch");
  Tensor t({rows, cols});
  t.data = std::move(values);
  return t;
}

Tensor Tensor::randn(std::size_t rows, std::size_t cols, double stddev, Rng& rng) {
  Tensor t({rows, cols});
  for (double& v : t.data) v = stddev * rng.normal();
  return t;
}

Tensor Tensor::full(std::size_t rows, std::size_t cols, double value) {
  Tensor t({rows, cols});
  std::fill(t.data.begin(), t.data.end(), value);
  return t;
}

double Tensor::item() const {
  if (size() != 1) throw ShapeError("item() on non-scalar tensor");
  return data[0];
}

bool Tensor::all_finite() const {
  for (double v : data)
    if (!std::isfinite(v)) return false;
  return true;
}

void ensure_finite(const Tensor& t, const std::string& what) {
  if (!t.all_finite()) throw NumericError(what + ": non-finite value");
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.cols() != b.rows()) throw ShapeError("matmul: inner extents disagree");
  Tensor c({a.rows(), b.cols()});
  as_mat(c).noalias() = as_mat(a) * as_mat(b);
  return c;
}

Tensor matmul_nt(const Tensor& a, const Tensor& b) {
  if (a.cols() != b.cols()) throw ShapeError("matmul_nt: inner extents disagree");
  Tensor c({a.rows(), b.rows()});
  as_mat(c).noalias() = as_mat(a) * as_mat(b).transpose();
  return c;
}

Tensor matmul_tn(const Tensor& a, const Tensor& b) {
  if (a.rows() != b.rows()) throw ShapeError("matmul_tn: inner extents disagree");
  Tensor c({a.cols(), b.cols()});
  as_mat(c).noalias() = as_mat(a).transpose() * as_mat(b);
  return c;
}

void add_matmul(Tensor& out, const Tensor& a, const Tensor& b) {
  as_mat(out).noalias() += as_mat(a) * as_mat(b);
}

void add_matmul_nt(Tensor& out, const Tensor& a, const Tensor& b) {
  as_mat(out).noalias() += as_mat(a) * as_mat(b).transpose();
}

void add_matmul_tn(Tensor& out, const Tensor& a, const Tensor& b) {
  as_mat(out).noalias() += as_mat(a).transpose() * as_mat(b);
}

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  Tensor c = a;
  for (std::size_t i = 0; i < c.size(); ++i) c.data[i] += b.data[i];
  return c;
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "sub");
  Tensor c = a;
  for (std::size_t i = 0; i < c.size(); ++i) c.data[i] -= b.data[i];
  return c;
}

Tensor scale(const Tensor& a, double c) {
  Tensor out = a;
  for (double& v : out.data) v *= c;
  return out;
}

Tensor add_bias_row(const Tensor& x, const Tensor& bias) {
  if (bias.size() != x.cols()) throw ShapeError("add_bias_row: bias length mismatch");
  Tensor y = x;
  const std::size_t n = x.cols();
  for (std::size_t r = 0; r < x.rows(); ++r)
    for (std::size_t c = 0; c < n; ++c) y.data[r * n + c] += bias.data[c];
  return y;
}

Tensor softmax_rows(const Tensor& x) {
  Tensor y = x;
  const std::size_t n = x.cols();
  for (std::size_t r = 0; r < x.rows(); ++r) {
    double* row = y.data.data() + r * n;
    double mx = row[0];
    for (std::size_t c = 1; c < n; ++c) mx = std::max(mx, row[c]);
    double sum = 0.0;
    for (std::size_t c = 0; c < n; ++c) {
      row[c] = std::exp(row[c] - mx);
      sum += row[c];
    }
    for (std::size_t c = 0; c < n; ++c) row[c] /= sum;
  }
  return y;
}

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps) {
  const std::size_t n = x.cols();
  if (gain.size() != n || bias.size() != n)
    throw ShapeError("layer_norm: gain/bias must match last extent");
  Tensor y = x;
  for (std::size_t r = 0; r < x.rows(); ++r) {
    double* row = y.data.data() + r * n;
    double mean = 0.0;
    for (std::size_t c = 0; c < n; ++c) mean += row[c];
    mean /= static_cast<double>(n);
    double var = 0.0;
    for (std::size_t c = 0; c < n; ++c) {
      const double d = row[c] - mean;
      var += d * d;
    }
    var /= static_cast<double>(n);
    const double inv = 1.0 / std::sqrt(var + eps);
    for (std::size_t c = 0; c < n; ++c)
      row[c] = (row[c] - mean) * inv * gain.data[c] + bias.data[c];
  }
  return y;
}

double gelu_scalar(double x) {
  return 0.5 * x * (1.0 + std::erf(x / std::sqrt(2.0)));
}

double gelu_grad_scalar(double x) {
  const double phi = 0.5 * (1.0 + std::erf(x / std::sqrt(2.0)));
  const double pdf = std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi);
  return phi + x * pdf;
}

Tensor gelu(const Tensor& x) {
  Tensor y = x;
  for (double& v : y.data) v = gelu_scalar(v);
  return y;
}

double sigmoid_scalar(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

Tensor sigmoid(const Tensor& x) {
  Tensor y = x;
  for (double& v : y.data) v = sigmoid_scalar(v);
  return y;
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
  if (!a.same_shape(b)) throw ShapeError("max_abs_diff: shape mismatch");
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i)
    m = std::max(m, std::abs(a.data[i] - b.data[i]));
  return m;
}

}  // namespace choplab
