#include "posrep/ops.hpp"

#include <cmath>
#include <limits>

namespace posrep {

template <typename Scalar>
Matrix<Scalar> matmul(const Matrix<Scalar>& a, const Matrix<Scalar>& b) {
  if (a.cols() != b.rows()) {
    throw ShapeError("matmul inner dims differ: " + std::to_string(a.rows()) + "x" +
                     std::to_string(a.cols()) + " * " + std::to_string(b.rows()) + "x" +
                     std::to_string(b.cols()));
  }
  Matrix<Scalar> out(a.rows(), b.cols());
  out.noalias() = a * b;
  return out;
}

template <typename Scalar>
Tensor<Scalar> matmul(const Tensor<Scalar>& a, const Tensor<Scalar>& b) {
  if (a.rank() != 2 || b.rank() != 2) throw ShapeError("matmul expects rank-2 tensors");
  return Tensor<Scalar>::from_matrix(matmul(a.matrix(), b.matrix()));
}

template <typename Scalar>
void softmax_rows_inplace(Matrix<Scalar>& x) {
  for (Index r = 0; r < x.rows(); ++r) {
    auto row = x.row(r);
    const Scalar mx = row.maxCoeff();
    if (mx == -std::numeric_limits<Scalar>::infinity()) {
      row.setZero();
      continue;
    }
    row = (row.array() - mx).exp();
    row /= row.sum();
  }
}

template <typename Scalar>
Tensor<Scalar> softmax_lastdim(const Tensor<Scalar>& x) {
  Tensor<Scalar> out = x;
  softmax_rows_inplace(out.matrix());
  return out;
}

template <typename Scalar>
void layer_norm_rows(const Matrix<Scalar>& x, Scalar eps, Matrix<Scalar>& xhat,
                     Eigen::Matrix<Scalar, Eigen::Dynamic, 1>& inv_std) {
  const Index n = x.cols();
  xhat.resize(x.rows(), n);
  inv_std.resize(x.rows());
  for (Index r = 0; r < x.rows(); ++r) {
    const Scalar mean = x.row(r).sum() / Scalar(n);
    auto centered = x.row(r).array() - mean;
    const Scalar var = centered.square().sum() / Scalar(n);
    const Scalar istd = Scalar(1) / std::sqrt(var + eps);
    inv_std(r) = istd;
    xhat.row(r) = centered * istd;
  }
}

template <typename Scalar>
Tensor<Scalar> layer_norm(const Tensor<Scalar>& x, const Tensor<Scalar>& gamma,
                          const Tensor<Scalar>& beta, Scalar eps) {
  if (gamma.size() != x.cols() || beta.size() != x.cols()) {
    throw ShapeError("layer_norm: gamma/beta must match last dim " + std::to_string(x.cols()));
  }
  Matrix<Scalar> xhat;
  Eigen::Matrix<Scalar, Eigen::Dynamic, 1> inv_std;
  layer_norm_rows(x.matrix(), eps, xhat, inv_std);
  const auto g = Eigen::Map<const RowVector<Scalar>>(gamma.data(), x.cols());
  const auto b = Eigen::Map<const RowVector<Scalar>>(beta.data(), x.cols());
  for (Index r = 0; r < xhat.rows(); ++r) {
    xhat.row(r) = xhat.row(r).cwiseProduct(g) + b;
  }
  return Tensor<Scalar>(x.shape(), std::move(xhat));
}

template <typename Scalar>
Matrix<Scalar> log_softmax_rows(const Matrix<Scalar>& x) {
  Matrix<Scalar> out(x.rows(), x.cols());
  for (Index r = 0; r < x.rows(); ++r) {
    const Scalar mx = x.row(r).maxCoeff();
    const Scalar lse = mx + std::log((x.row(r).array() - mx).exp().sum());
    out.row(r) = x.row(r).array() - lse;
  }
  return out;
}

template <typename Scalar>
Scalar cross_entropy_smoothed(const Matrix<Scalar>& logits, std::span<const int> gold,
                              double epsilon, int pad_id) {
  const Index vocab = logits.cols();
  if (static_cast<Index>(gold.size()) != logits.rows()) {
    throw ShapeError("cross_entropy: " + std::to_string(gold.size()) + " gold ids for " +
                     std::to_string(logits.rows()) + " rows");
  }
  const Matrix<Scalar> logp = log_softmax_rows(logits);
  const Scalar on = Scalar(1.0 - epsilon);
  const Scalar off = Scalar(epsilon / static_cast<double>(vocab));
  Scalar total = 0;
  Index counted = 0;
  for (Index r = 0; r < logits.rows(); ++r) {
    const int y = gold[static_cast<std::size_t>(r)];
    if (y == pad_id) continue;
    if (y < 0 || y >= vocab) {
      throw std::out_of_range("cross_entropy: gold id " + std::to_string(y) +
                              " outside vocabulary of " + std::to_string(vocab));
    }
    Scalar row_loss = -on * logp(r, y);
    if (epsilon != 0.0) row_loss -= off * logp.row(r).sum();
    total += row_loss;
    ++counted;
  }
  return counted == 0 ? Scalar(0) : total / Scalar(counted);
}

template <typename Scalar>
Scalar cross_entropy_smoothed(const Tensor<Scalar>& logits, std::span<const int> gold,
                              double epsilon, int pad_id) {
  return cross_entropy_smoothed(logits.matrix(), gold, epsilon, pad_id);
}

#define POSREP_INSTANTIATE_OPS(S)                                                              \
  template Matrix<S> matmul(const Matrix<S>&, const Matrix<S>&);                               \
  template Tensor<S> matmul(const Tensor<S>&, const Tensor<S>&);                               \
  template void softmax_rows_inplace(Matrix<S>&);                                              \
  template Tensor<S> softmax_lastdim(const Tensor<S>&);                                        \
  template void layer_norm_rows(const Matrix<S>&, S, Matrix<S>&,                               \
                                Eigen::Matrix<S, Eigen::Dynamic, 1>&);                         \
  template Tensor<S> layer_norm(const Tensor<S>&, const Tensor<S>&, const Tensor<S>&, S);      \
  template Matrix<S> log_softmax_rows(const Matrix<S>&);                                       \
  template S cross_entropy_smoothed(const Matrix<S>&, std::span<const int>, double, int);      \
  template S cross_entropy_smoothed(const Tensor<S>&, std::span<const int>, double, int);

POSREP_INSTANTIATE_OPS(float)
POSREP_INSTANTIATE_OPS(double)

}  // namespace posrep
