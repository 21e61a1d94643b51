#include "posrep/attention.hpp"

#include <cmath>
#include <limits>
#include <memory>

namespace posrep {

namespace {

template <typename Scalar>
using Block = Eigen::Block<const Matrix<Scalar>>;

// Logits of one head for one segment, masked and softmaxed in place.
template <typename Scalar, typename QB, typename KB>
Matrix<Scalar> attention_probs(const QB& qh, const KB& kh, const Matrix<Scalar>* rel_key, int limit,
                               bool causal) {
  const Index lq = qh.rows();
  const Index lk = kh.rows();
  const Scalar inv_sqrt = Scalar(1) / std::sqrt(Scalar(qh.cols()));
  Matrix<Scalar> s(lq, lk);
  s.noalias() = qh * kh.transpose();
  if (rel_key != nullptr) {
    Matrix<Scalar> qa(lq, rel_key->rows());
    qa.noalias() = qh * rel_key->transpose();
    for (Index i = 0; i < lq; ++i) {
      for (Index j = 0; j < lk; ++j) {
        s(i, j) += qa(i, clip_distance(static_cast<int>(j - i), limit));
      }
    }
  }
  s *= inv_sqrt;
  if (causal) {
    for (Index i = 0; i < lq; ++i) {
      for (Index j = i + 1; j < lk; ++j) s(i, j) = -std::numeric_limits<Scalar>::infinity();
    }
  }
  for (Index i = 0; i < lq; ++i) {
    auto row = s.row(i);
    const Scalar mx = row.maxCoeff();
    row = (row.array() - mx).exp();
    row /= row.sum();
  }
  return s;
}

// Sum of probabilities per clipped distance: out(i, clip(j - i)) += p(i, j).
template <typename Scalar>
Matrix<Scalar> bucket_by_distance(const Matrix<Scalar>& p, int limit) {
  Matrix<Scalar> out = Matrix<Scalar>::Zero(p.rows(), 2 * limit + 1);
  for (Index i = 0; i < p.rows(); ++i) {
    for (Index j = 0; j < p.cols(); ++j) {
      out(i, clip_distance(static_cast<int>(j - i), limit)) += p(i, j);
    }
  }
  return out;
}

}  // namespace

template <typename Scalar>
Matrix<Scalar> attention_rpe(const Matrix<Scalar>& q, const Matrix<Scalar>& k, const Matrix<Scalar>& v,
                             const RpeTable<Scalar>* rpe, bool causal) {
  if (q.cols() != k.cols() || k.rows() != v.rows()) throw ShapeError("attention_rpe: q/k/v shapes differ");
  if (rpe != nullptr && (rpe->key.cols() != k.cols() || rpe->value.cols() != v.cols() ||
                         rpe->key.rows() != 2 * rpe->limit + 1 || rpe->value.rows() != 2 * rpe->limit + 1)) {
    throw ShapeError("attention_rpe: relative table shape does not match head dim / limit");
  }
  const Matrix<Scalar> p =
      attention_probs<Scalar>(q, k, rpe ? &rpe->key : nullptr, rpe ? rpe->limit : 0, causal);
  Matrix<Scalar> z = p * v;
  if (rpe != nullptr) z.noalias() += bucket_by_distance(p, rpe->limit) * rpe->value;
  return z;
}

template <typename Scalar>
Var multi_head_attention(Graph<Scalar>& g, Var q, Var k, Var v, int heads,
                         std::span<const AttentionSegment> segments, bool causal,
                         const RelativeTables& rel) {
  const auto& qv = g.value(q);
  const auto& kv = g.value(k);
  const auto& vv = g.value(v);
  const Index d = qv.cols();
  if (heads <= 0 || d % heads != 0) throw ShapeError("attention: width not divisible by heads");
  if (kv.cols() != d || vv.cols() != d || kv.rows() != vv.rows()) {
    throw ShapeError("attention: q/k/v widths differ");
  }
  const Index dh = d / heads;
  const int limit = rel.enabled() ? rel.limit : 0;
  const Matrix<Scalar>* rel_key = rel.enabled() ? &g.value(rel.key) : nullptr;
  const Matrix<Scalar>* rel_value = rel.enabled() ? &g.value(rel.value) : nullptr;
  if (rel.enabled() && (rel_key->rows() != 2 * limit + 1 || rel_key->cols() != dh ||
                        rel_value->rows() != 2 * limit + 1 || rel_value->cols() != dh)) {
    throw ShapeError("attention: relative tables must be [(2r+1) x head_dim]");
  }

  Matrix<Scalar> out = Matrix<Scalar>::Zero(qv.rows(), d);
  auto probs = std::make_shared<std::vector<Matrix<Scalar>>>();
  probs->reserve(segments.size() * static_cast<std::size_t>(heads));
  for (const auto& seg : segments) {
    if (seg.q_begin + seg.q_len > qv.rows() || seg.k_begin + seg.k_len > kv.rows()) {
      throw ShapeError("attention: segment outside packed rows");
    }
    for (int h = 0; h < heads; ++h) {
      const auto qh = qv.block(seg.q_begin, h * dh, seg.q_len, dh);
      const auto kh = kv.block(seg.k_begin, h * dh, seg.k_len, dh);
      const auto vh = vv.block(seg.k_begin, h * dh, seg.k_len, dh);
      Matrix<Scalar> p = attention_probs<Scalar>(qh, kh, rel_key, limit, causal);
      auto oh = out.block(seg.q_begin, h * dh, seg.q_len, dh);
      oh.noalias() = p * vh;
      if (rel_value != nullptr) oh.noalias() += bucket_by_distance(p, limit) * *rel_value;
      probs->push_back(std::move(p));
    }
  }

  const bool needs = g.requires_grad(q) || g.requires_grad(k) || g.requires_grad(v) ||
                     (rel.enabled() && (g.requires_grad(rel.key) || g.requires_grad(rel.value)));
  std::vector<AttentionSegment> segs(segments.begin(), segments.end());
  return g.record(
      std::move(out), needs,
      [q, k, v, heads, dh, rel, limit, probs, segs = std::move(segs)](Graph<Scalar>& gr, Index self) {
        const auto& dout = gr.grad(Var{self});
        const auto& qv = gr.value(q);
        const auto& kv = gr.value(k);
        const auto& vv = gr.value(v);
        const bool want_q = gr.requires_grad(q);
        const bool want_k = gr.requires_grad(k);
        const bool want_v = gr.requires_grad(v);
        const bool has_rel = rel.enabled();
        Matrix<Scalar>* dq = want_q ? &gr.grad(q) : nullptr;
        Matrix<Scalar>* dk = want_k ? &gr.grad(k) : nullptr;
        Matrix<Scalar>* dv = want_v ? &gr.grad(v) : nullptr;
        const Matrix<Scalar>* rk = has_rel ? &gr.value(rel.key) : nullptr;
        const Matrix<Scalar>* rv = has_rel ? &gr.value(rel.value) : nullptr;
        Matrix<Scalar>* drk = has_rel && gr.requires_grad(rel.key) ? &gr.grad(rel.key) : nullptr;
        Matrix<Scalar>* drv = has_rel && gr.requires_grad(rel.value) ? &gr.grad(rel.value) : nullptr;
        const Scalar inv_sqrt = Scalar(1) / std::sqrt(Scalar(dh));

        std::size_t idx = 0;
        for (const auto& seg : segs) {
          for (int h = 0; h < heads; ++h, ++idx) {
            const Matrix<Scalar>& p = (*probs)[idx];
            const auto qh = qv.block(seg.q_begin, h * dh, seg.q_len, dh);
            const auto kh = kv.block(seg.k_begin, h * dh, seg.k_len, dh);
            const auto vh = vv.block(seg.k_begin, h * dh, seg.k_len, dh);
            const auto dz = dout.block(seg.q_begin, h * dh, seg.q_len, dh);

            Matrix<Scalar> dp(seg.q_len, seg.k_len);
            dp.noalias() = dz * vh.transpose();
            if (has_rel) {
              Matrix<Scalar> dza(seg.q_len, rv->rows());
              dza.noalias() = dz * rv->transpose();
              for (Index i = 0; i < seg.q_len; ++i) {
                for (Index j = 0; j < seg.k_len; ++j) {
                  dp(i, j) += dza(i, clip_distance(static_cast<int>(j - i), limit));
                }
              }
              if (drv != nullptr) drv->noalias() += bucket_by_distance(p, limit).transpose() * dz;
            }
            if (dv != nullptr) dv->block(seg.k_begin, h * dh, seg.k_len, dh).noalias() += p.transpose() * dz;

            // Softmax backward, then the 1/sqrt(d) scale.
            Matrix<Scalar> ds = p.cwiseProduct(dp);
            for (Index i = 0; i < seg.q_len; ++i) {
              const Scalar dot = ds.row(i).sum();
              ds.row(i) -= p.row(i) * dot;
            }
            ds *= inv_sqrt;

            if (dq != nullptr) dq->block(seg.q_begin, h * dh, seg.q_len, dh).noalias() += ds * kh;
            if (dk != nullptr) dk->block(seg.k_begin, h * dh, seg.k_len, dh).noalias() += ds.transpose() * qh;
            if (has_rel) {
              const Matrix<Scalar> ds_rel = bucket_by_distance(ds, limit);
              if (dq != nullptr) dq->block(seg.q_begin, h * dh, seg.q_len, dh).noalias() += ds_rel * *rk;
              if (drk != nullptr) drk->noalias() += ds_rel.transpose() * qh;
            }
          }
        }
      });
}

template Matrix<float> attention_rpe(const Matrix<float>&, const Matrix<float>&, const Matrix<float>&,
                                     const RpeTable<float>*, bool);
template Matrix<double> attention_rpe(const Matrix<double>&, const Matrix<double>&, const Matrix<double>&,
                                      const RpeTable<double>*, bool);
template Var multi_head_attention(Graph<float>&, Var, Var, Var, int, std::span<const AttentionSegment>, bool,
                                  const RelativeTables&);
template Var multi_head_attention(Graph<double>&, Var, Var, Var, int, std::span<const AttentionSegment>,
                                  bool, const RelativeTables&);

}  // namespace posrep
