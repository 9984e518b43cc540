#pragma once

#include <cstddef>
#include <initializer_list>
#include <stdexcept>
#include <string>
#include <vector>

namespace choplab {

class Rng;

// Dense row-major array of 64-bit floats. Everything numeric in the
// project flows through this type; most tensors are 2-D.
struct Tensor {
  std::vector<std::size_t> shape;
  std::vector<double> data;

  Tensor() = default;
  Tensor(std::initializer_list<std::size_t> s) { resize(std::vector<std::size_t>(s)); }
  explicit Tensor(std::vector<std::size_t> s) { resize(std::move(s)); }

  void resize(std::vector<std::size_t> s);

  static Tensor zeros(std::size_t rows, std::size_t cols) { return Tensor({rows, cols}); }
  static Tensor scalar(double v);
  static Tensor row(std::vector<double> values);
  static Tensor from_rows(std::size_t rows, std::size_t cols, std::vector<double> values);
  static Tensor randn(std::size_t rows, std::size_t cols, double stddev, Rng& rng);
  static Tensor full(std::size_t rows, std::size_t cols, double value);

  std::size_t size() const { return data.size(); }
  std::size_t rank() const { return shape.size(); }
  std::size_t rows() const { return shape.at(0); }
  std::size_t cols() const { return shape.at(1); }

  double& at(std::size_t r, std::size_t c) { return data[r * cols() + c]; }
  double at(std::size_t r, std::size_t c) const { return data[r * cols() + c]; }
  double item() const;

  bool same_shape(const Tensor& other) const { return shape == other.shape; }
  bool all_finite() const;
};

struct ShapeError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct NumericError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Throws NumericError if any entry is NaN or infinite.
void ensure_finite(const Tensor& t, const std::string& what);

// C = A (m×k) · B (k×n)
Tensor matmul(const Tensor& a, const Tensor& b);
// C = A (m×k) · Bᵀ (n×k)
Tensor matmul_nt(const Tensor& a, const Tensor& b);
// C = Aᵀ (k×m) · B (k×n)
Tensor matmul_tn(const Tensor& a, const Tensor& b);

// In-place accumulation variants used by the tape's adjoints.
void add_matmul(Tensor& out, const Tensor& a, const Tensor& b);
void add_matmul_nt(Tensor& out, const Tensor& a, const Tensor& b);
void add_matmul_tn(Tensor& out, const Tensor& a, const Tensor& b);

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double c);
// y[i,:] = x[i,:] + b
Tensor add_bias_row(const Tensor& x, const Tensor& bias);

// Row-wise softmax with row-max subtraction; rows sum to 1.
Tensor softmax_rows(const Tensor& x);

// Per-row normalization to zero mean / unit variance, then affine.
Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps);

// Exact GELU, x·Φ(x) with Φ via erf.
Tensor gelu(const Tensor& x);
double gelu_scalar(double x);
double gelu_grad_scalar(double x);

Tensor sigmoid(const Tensor& x);
double sigmoid_scalar(double x);

double max_abs_diff(const Tensor& a, const Tensor& b);

}  // namespace choplab
