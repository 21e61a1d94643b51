#include <doctest.h>

#include "posrep/attention.hpp"
#include "posrep/optim.hpp"

#include <cmath>

using namespace posrep;

namespace {

Matrix<double> random_matrix(Index r, Index c, Rng& rng) {
  Matrix<double> m(r, c);
  for (Index i = 0; i < m.size(); ++i) m.data()[i] = rng.normal();
  return m;
}

// e_ij and z_i one pair at a time.
Matrix<double> brute_force(const Matrix<double>& q, const Matrix<double>& k, const Matrix<double>& v,
                           const RpeTable<double>* rpe, bool causal) {
  const Index lq = q.rows(), lk = k.rows(), d = q.cols();
  Matrix<double> z = Matrix<double>::Zero(lq, v.cols());
  for (Index i = 0; i < lq; ++i) {
    std::vector<double> e(static_cast<std::size_t>(lk), -INFINITY);
    double top = -INFINITY;
    for (Index j = 0; j < lk; ++j) {
      if (causal && j > i) continue;
      double s = 0.0;
      for (Index c = 0; c < d; ++c) {
        double key = k(j, c);
        if (rpe) {
          const Index row = std::clamp<Index>(j - i, -rpe->limit, rpe->limit) + rpe->limit;
          key += rpe->key(row, c);
        }
        s += q(i, c) * key;
      }
      e[j] = s / std::sqrt(static_cast<double>(d));
      top = std::max(top, e[j]);
    }
    double denom = 0.0;
    for (Index j = 0; j < lk; ++j) denom += std::isinf(e[j]) ? 0.0 : std::exp(e[j] - top);
    for (Index j = 0; j < lk; ++j) {
      if (std::isinf(e[j])) continue;
      const double a = std::exp(e[j] - top) / denom;
      for (Index c = 0; c < v.cols(); ++c) {
        double val = v(j, c);
        if (rpe) {
          const Index row = std::clamp<Index>(j - i, -rpe->limit, rpe->limit) + rpe->limit;
          val += rpe->value(row, c);
        }
        z(i, c) += a * val;
      }
    }
  }
  return z;
}

}  // namespace

TEST_SUITE("attention") {

TEST_CASE("relative attention matches the pairwise formula") {
  Rng rng(21, 3);
  for (const bool causal : {false, true}) {
    for (const int limit : {2, 16}) {
      const auto q = random_matrix(6, 8, rng);
      const auto k = random_matrix(6, 8, rng);
      const auto v = random_matrix(6, 8, rng);
      RpeTable<double> rpe{limit, random_matrix(2 * limit + 1, 8, rng), random_matrix(2 * limit + 1, 8, rng)};
      const auto got = attention_rpe(q, k, v, &rpe, causal);
      CHECK((got - brute_force(q, k, v, &rpe, causal)).cwiseAbs().maxCoeff() < 1e-10);
    }
  }
}

TEST_CASE("zero relative tables reduce to plain attention") {
  Rng rng(2, 2);
  const auto q = random_matrix(5, 4, rng);
  const auto k = random_matrix(7, 4, rng);
  const auto v = random_matrix(7, 3, rng);
  auto zero = RpeTable<double>::zeros(16, 4);
  zero.value = Matrix<double>::Zero(33, 3);
  CHECK((attention_rpe(q, k, v, &zero, false) - attention_rpe<double>(q, k, v, nullptr, false)).cwiseAbs().maxCoeff() <
        1e-12);
  CHECK((attention_rpe<double>(q, k, v, nullptr, false) - brute_force(q, k, v, nullptr, false)).cwiseAbs().maxCoeff() <
        1e-12);
}

TEST_CASE("packed multi-head attention equals per-segment, per-head attention") {
  Rng rng(5, 6);
  const int heads = 2, dh = 3, d = heads * dh;
  const auto q = random_matrix(9, d, rng);
  const auto k = random_matrix(9, d, rng);
  const auto v = random_matrix(9, d, rng);
  const int limit = 2;
  const auto tk = random_matrix(2 * limit + 1, dh, rng);
  const auto tv = random_matrix(2 * limit + 1, dh, rng);
  const std::vector<AttentionSegment> segs{{0, 4, 0, 4}, {4, 5, 4, 5}};
  for (const bool causal : {false, true}) {
    Graph<double> g;
    const RelativeTables rel{g.constant(tk), g.constant(tv), limit};
    const Var out = multi_head_attention(g, g.constant(q), g.constant(k), g.constant(v), heads, segs, causal, rel);
    const RpeTable<double> table{limit, tk, tv};
    for (const auto& s : segs) {
      for (int h = 0; h < heads; ++h) {
        const auto ref = attention_rpe<double>(q.block(s.q_begin, h * dh, s.q_len, dh),
                                               k.block(s.k_begin, h * dh, s.k_len, dh),
                                               v.block(s.k_begin, h * dh, s.k_len, dh), &table, causal);
        CHECK((g.value(out).block(s.q_begin, h * dh, s.q_len, dh) - ref).cwiseAbs().maxCoeff() < 1e-12);
      }
    }
  }
}

TEST_CASE("multi-head attention gradients, with and without relative tables") {
  Rng rng(8, 1);
  const int heads = 2, d = 4, limit = 1;
  ParameterList<double> params{
      {"q", Tensor<double>({7, d}, random_matrix(7, d, rng))},
      {"k", Tensor<double>({7, d}, random_matrix(7, d, rng))},
      {"v", Tensor<double>({7, d}, random_matrix(7, d, rng))},
      {"ak", Tensor<double>({2 * limit + 1, d / heads}, random_matrix(2 * limit + 1, d / heads, rng))},
      {"av", Tensor<double>({2 * limit + 1, d / heads}, random_matrix(2 * limit + 1, d / heads, rng))},
  };
  const Matrix<double> w = random_matrix(7, d, rng);
  const std::vector<AttentionSegment> segs{{0, 3, 0, 4}, {3, 4, 4, 3}};
  for (const bool use_rel : {false, true}) {
    auto loss = [&](bool accumulate) {
      Graph<double> g;
      RelativeTables rel;
      if (use_rel) rel = {g.parameter(params[3].tensor), g.parameter(params[4].tensor), limit};
      const Var z = multi_head_attention(g, g.parameter(params[0].tensor), g.parameter(params[1].tensor),
                                         g.parameter(params[2].tensor), heads, segs, false, rel);
      const Var l = sum(g, mul(g, z, g.constant(w)));
      if (accumulate) g.backward(l);
      return g.value(l)(0, 0);
    };
    GradCheckOptions opts;
    opts.step = 1e-5;
    CHECK(finite_diff_check(params, loss, opts).max_rel_error < 1e-4);
  }
}

}
