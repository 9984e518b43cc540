#include <doctest.h>

#include <cmath>
#include <vector>

#include "choplab/adam.hpp"

using namespace choplab;

TEST_CASE("zero gradient leaves parameters untouched") {
  Tensor p = Tensor::from_rows(2, 2, {1, 2, 3, 4});
  Tensor g = Tensor::zeros(2, 2);
  std::vector<Tensor*> params{&p};
  AdamState st = AdamState::init(params, 1e-2);
  Tensor before = p;
  for (int i = 0; i < 5; ++i) adam_step(params, {&g}, st);
  CHECK(max_abs_diff(p, before) == 0.0);
}

TEST_CASE("first step moves each coordinate by about lr against the gradient") {
  // With bias correction, step 1 is lr · g / (|g| + eps') regardless of
  // the gradient magnitude — i.e. ±lr for nonzero entries.
  Tensor p = Tensor::zeros(1, 3);
  Tensor g = Tensor::from_rows(1, 3, {0.5, -30.0, 1e-3});
  std::vector<Tensor*> params{&p};
  AdamState st = AdamState::init(params, 1e-2);
  adam_step(params, {&g}, st);
  CHECK(p.at(0, 0) == doctest::Approx(-1e-2).epsilon(1e-6));
  CHECK(p.at(0, 1) == doctest::Approx(1e-2).epsilon(1e-6));
  CHECK(p.at(0, 2) == doctest::Approx(-1e-2).epsilon(1e-4));
}

TEST_CASE("lr_scale of zero freezes the parameters") {
  Tensor p = Tensor::from_rows(1, 2, {1, -1});
  Tensor g = Tensor::from_rows(1, 2, {3, 4});
  std::vector<Tensor*> params{&p};
  AdamState st = AdamState::init(params, 1e-2);
  adam_step(params, {&g}, st, 0.0);
  CHECK(p.at(0, 0) == 1.0);
  CHECK(p.at(0, 1) == -1.0);
  CHECK(st.step == 1);  // time still advances
}

TEST_CASE("converges on a separable quadratic") {
  // f(x) = 0.5·sum c_i (x_i - t_i)^2, gradient c_i (x_i - t_i).
  Tensor x = Tensor::from_rows(1, 3, {5, -4, 2});
  const double c[3] = {1.0, 10.0, 0.1};
  const double target[3] = {1.0, -2.0, 0.5};
  std::vector<Tensor*> params{&x};
  AdamState st = AdamState::init(params, 5e-2);
  for (int it = 0; it < 4000; ++it) {
    Tensor g = Tensor::zeros(1, 3);
    for (int i = 0; i < 3; ++i) g.at(0, i) = c[i] * (x.at(0, i) - target[i]);
    adam_step(params, {&g}, st);
  }
  for (int i = 0; i < 3; ++i)
    CHECK(x.at(0, i) == doctest::Approx(target[i]).epsilon(1e-3));
}

TEST_CASE("multiple tensors update independently") {
  Tensor a = Tensor::zeros(1, 1), b = Tensor::zeros(1, 1);
  Tensor ga = Tensor::from_rows(1, 1, {1.0});
  Tensor gb = Tensor::from_rows(1, 1, {0.0});
  std::vector<Tensor*> params{&a, &b};
  AdamState st = AdamState::init(params, 1e-2);
  adam_step(params, {&ga, &gb}, st);
  CHECK(a.item() != 0.0);
  CHECK(b.item() == 0.0);
}
