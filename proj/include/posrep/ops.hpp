#pragma once

#include "posrep/tensor.hpp"

#include <span>

namespace posrep {

// Eager kernels shared by the graph ops and by inference code.

template <typename Scalar>
Matrix<Scalar> matmul(const Matrix<Scalar>& a, const Matrix<Scalar>& b);

template <typename Scalar>
Tensor<Scalar> matmul(const Tensor<Scalar>& a, const Tensor<Scalar>& b);

template <typename Scalar>
void softmax_rows_inplace(Matrix<Scalar>& x);

template <typename Scalar>
Tensor<Scalar> softmax_lastdim(const Tensor<Scalar>& x);

template <typename Scalar>
Tensor<Scalar> layer_norm(const Tensor<Scalar>& x, const Tensor<Scalar>& gamma,
                          const Tensor<Scalar>& beta, Scalar eps = Scalar(1e-5));

// Row-wise normalization. `xhat` receives (x - mean) / std and `inv_std`
// receives 1 / std per row; both are what the backward pass needs.
template <typename Scalar>
void layer_norm_rows(const Matrix<Scalar>& x, Scalar eps, Matrix<Scalar>& xhat,
                     Eigen::Matrix<Scalar, Eigen::Dynamic, 1>& inv_std);

template <typename Scalar>
Matrix<Scalar> log_softmax_rows(const Matrix<Scalar>& x);

// Label-smoothed cross-entropy. The smoothing mass epsilon is spread uniformly
// over all V classes, gold included: q = (1 - epsilon) * onehot(gold) + epsilon / V.
// Rows whose gold id equals pad_id do not contribute; the result is the mean
// over the remaining rows (0 when there are none).
template <typename Scalar>
Scalar cross_entropy_smoothed(const Matrix<Scalar>& logits, std::span<const int> gold,
                              double epsilon, int pad_id);

template <typename Scalar>
Scalar cross_entropy_smoothed(const Tensor<Scalar>& logits, std::span<const int> gold,
                              double epsilon, int pad_id);

}  // namespace posrep
