#pragma once

#include "posrep/autograd.hpp"
#include "posrep/position.hpp"

#include <span>

namespace posrep {

// Single-head scaled dot-product attention with optional relative embeddings:
//   e_ij = q_i . (k_j + aK[clip(j - i)]) / sqrt(d)
//   z_i  = sum_j softmax_j(e_ij) (v_j + aV[clip(j - i)])
// Positions of both q and k start at 0. With `causal`, keys j > i are masked.
template <typename Scalar>
Matrix<Scalar> attention_rpe(const Matrix<Scalar>& q, const Matrix<Scalar>& k, const Matrix<Scalar>& v,
                             const RpeTable<Scalar>* rpe, bool causal);

// One sequence inside a packed batch: query rows [q_begin, q_begin + q_len)
// attend to key rows [k_begin, k_begin + k_len).
struct AttentionSegment {
  Index q_begin = 0;
  Index q_len = 0;
  Index k_begin = 0;
  Index k_len = 0;
};

struct RelativeTables {
  Var key;
  Var value;
  int limit = 0;
  bool enabled() const { return key.valid(); }
};

// Multi-head attention core over packed q/k/v (already projected), one
// softmax per segment and head. Returns the concatenated head outputs.
template <typename Scalar>
Var multi_head_attention(Graph<Scalar>& g, Var q, Var k, Var v, int heads,
                         std::span<const AttentionSegment> segments, bool causal,
                         const RelativeTables& rel = {});

}  // namespace posrep
