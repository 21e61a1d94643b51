#include <doctest.h>

#include "posrep/autograd.hpp"
#include "posrep/optim.hpp"

#include <cmath>

using namespace posrep;

namespace {

Matrix<double> random_matrix(Index r, Index c, Rng& rng) {
  Matrix<double> m(r, c);
  for (Index i = 0; i < m.size(); ++i) m.data()[i] = rng.normal();
  return m;
}

}  // namespace

TEST_SUITE("autograd") {

TEST_CASE("d/dx sum(x * x) at x = 3 is 6") {
  Tensor<double> x({1}, Matrix<double>::Constant(1, 1, 3.0));
  Graph<double> g;
  const Var vx = g.parameter(x);
  const Var y = sum(g, mul(g, vx, vx));
  g.backward(y);
  CHECK(g.value(y)(0, 0) == 9.0);
  CHECK(x.grad()(0, 0) == 6.0);
}

TEST_CASE("gradients accumulate across uses of one node") {
  Tensor<double> x({1, 2}, (Matrix<double>(1, 2) << 1.0, -2.0).finished());
  Graph<double> g;
  const Var vx = g.parameter(x);
  const Var y = sum(g, add(g, scale(g, vx, 3.0), vx));
  g.backward(y);
  CHECK(x.grad()(0, 0) == 4.0);
  CHECK(x.grad()(0, 1) == 4.0);
}

TEST_CASE("backward needs a scalar root") {
  Tensor<double> x({2, 2}, Matrix<double>::Ones(2, 2));
  Graph<double> g;
  const Var vx = g.parameter(x);
  CHECK_THROWS(g.backward(vx));
}

TEST_CASE("composite of every op passes a central-difference check") {
  Rng rng(11, 1);
  ParameterList<double> params{
      {"x", Tensor<double>({5, 4}, random_matrix(5, 4, rng))},
      {"w", Tensor<double>({4, 6}, random_matrix(4, 6, rng))},
      {"b", Tensor<double>({6}, random_matrix(1, 6, rng))},
      {"gamma", Tensor<double>({6}, random_matrix(1, 6, rng))},
      {"beta", Tensor<double>({6}, random_matrix(1, 6, rng))},
      {"table", Tensor<double>({7, 6}, random_matrix(7, 6, rng))},
  };
  const std::vector<int> ids{3, 1, 3, 6, 0};
  const std::vector<int> gold{2, 0, 5, 1, 4};
  auto loss = [&](bool accumulate) {
    Graph<double> g(false);
    const Var x = g.parameter(params[0].tensor);
    const Var h = linear(g, x, g.parameter(params[1].tensor), g.parameter(params[2].tensor));
    const Var n = layer_norm(g, relu(g, h), g.parameter(params[3].tensor), g.parameter(params[4].tensor));
    const Var e = embedding(g, g.parameter(params[5].tensor), ids, 0.5);
    const Var s = softmax_lastdim(g, add(g, n, e));
    const Var logits = add_row(g, mul(g, s, n), g.parameter(params[2].tensor));
    const Var l = cross_entropy_smoothed(g, logits, gold, 0.1, -1);
    if (accumulate) g.backward(l);
    return g.value(l)(0, 0);
  };
  GradCheckOptions opts;
  opts.step = 1e-5;
  const auto r = finite_diff_check(params, loss, opts);
  CHECK(r.coordinates_checked > 0);
  INFO(r.worst_parameter, " ", r.worst_index, " ", r.worst_analytic, " ", r.worst_numeric);
  // round-off on the central difference is about 1e-11 absolute
  CHECK(r.max_rel_error < 1e-4);
}

TEST_CASE("dropout is the identity outside training and rescales inside") {
  Rng rng(1, 1);
  const Matrix<double> ones = Matrix<double>::Ones(50, 40);
  {
    Graph<double> g(false);
    const Var y = dropout(g, g.constant(ones), 0.5, rng);
    CHECK(g.value(y) == ones);
  }
  Graph<double> g(true);
  const Var y = dropout(g, g.constant(ones), 0.25, rng);
  int kept = 0;
  for (Index i = 0; i < ones.size(); ++i) {
    const double v = g.value(y).data()[i];
    CHECK((v == 0.0 || v == doctest::Approx(1.0 / 0.75)));
    kept += v != 0.0;
  }
  CHECK(kept / 2000.0 == doctest::Approx(0.75).epsilon(0.05));
}

}

TEST_SUITE("optim") {

TEST_CASE("noam schedule reference value") {
  CHECK(std::abs(noam_lr(8000, 512, 8000, 2.0) - 9.8821e-4) < 1e-8);
  CHECK(noam_lr(100, 64, 400, 1.0) < noam_lr(400, 64, 400, 1.0));
  CHECK(noam_lr(1600, 64, 400, 1.0) < noam_lr(400, 64, 400, 1.0));
  CHECK(noam_lr(400, 64, 400, 1.0) == doctest::Approx(std::pow(64.0, -0.5) * std::pow(400.0, -0.5)));
  CHECK_THROWS(noam_lr(0, 64, 400, 1.0));
}

TEST_CASE("first adam step moves each weight by about lr against its gradient") {
  ParameterList<double> params{{"w", Tensor<double>({1, 3}, (Matrix<double>(1, 3) << 1.0, 2.0, 3.0).finished())}};
  auto state = OptimizerState<double>::for_parameters(params);
  params[0].tensor.grad() << 0.5, -2.0, 0.0;
  adam_step(state, params, 0.01);
  // m_hat = g, v_hat = g^2 after bias correction
  const double e = 1e-8;
  CHECK(params[0].tensor.matrix()(0, 0) == doctest::Approx(1.0 - 0.01 * 0.5 / (0.5 + e)).epsilon(1e-12));
  CHECK(params[0].tensor.matrix()(0, 1) == doctest::Approx(2.0 + 0.01 * 2.0 / (2.0 + e)).epsilon(1e-12));
  CHECK(params[0].tensor.matrix()(0, 2) == 3.0);
}

TEST_CASE("adam matches a scalar reference over several steps") {
  ParameterList<double> params{{"w", Tensor<double>({1}, Matrix<double>::Constant(1, 1, 0.3))}};
  auto state = OptimizerState<double>::for_parameters(params);
  double w = 0.3, m = 0.0, v = 0.0;
  for (int t = 1; t <= 5; ++t) {
    const double grad = 2.0 * w - 1.0;
    params[0].tensor.grad()(0, 0) = 2.0 * params[0].tensor.matrix()(0, 0) - 1.0;
    adam_step(state, params, 0.05);
    m = 0.9 * m + 0.1 * grad;
    v = 0.98 * v + 0.02 * grad * grad;
    const double mh = m / (1 - std::pow(0.9, t));
    const double vh = v / (1 - std::pow(0.98, t));
    w -= 0.05 * mh / (std::sqrt(vh) + 1e-8);
    CHECK(params[0].tensor.matrix()(0, 0) == doctest::Approx(w).epsilon(1e-12));
  }
}

TEST_CASE("adam refuses non-finite gradients") {
  ParameterList<float> params{{"w", Tensor<float>({1}, Matrix<float>::Ones(1, 1))}};
  auto state = OptimizerState<float>::for_parameters(params);
  params[0].tensor.grad()(0, 0) = std::nanf("");
  CHECK_THROWS_AS(adam_step(state, params, 0.1), NumericalError);
}

TEST_CASE("gradient check flags a wrong gradient") {
  ParameterList<double> params{{"x", Tensor<double>({1, 2}, (Matrix<double>(1, 2) << 0.7, -0.4).finished())}};
  auto loss = [&](bool accumulate) {
    const auto& x = params[0].tensor.matrix();
    if (accumulate) params[0].tensor.grad() += 3.0 * x;  // true gradient is 2x
    return x.squaredNorm();
  };
  const auto r = finite_diff_check(params, loss);
  CHECK(r.max_rel_error > 0.2);
}

}
