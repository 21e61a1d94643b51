#include "posrep/autograd.hpp"

#include "posrep/ops.hpp"

#include <cassert>
#include <cmath>
#include <memory>

namespace posrep {

template <typename Scalar>
Var Graph<Scalar>::constant(Mat value) {
  nodes_.push_back(Node{std::move(value), nullptr, {}, false, nullptr, {}});
  return Var{size() - 1};
}

template <typename Scalar>
Var Graph<Scalar>::parameter(Tensor<Scalar>& param) {
  nodes_.push_back(Node{{}, &param.matrix(), {}, true, &param, {}});
  return Var{size() - 1};
}

template <typename Scalar>
Var Graph<Scalar>::frozen(const Tensor<Scalar>& param) {
  nodes_.push_back(Node{{}, &param.matrix(), {}, false, nullptr, {}});
  return Var{size() - 1};
}

template <typename Scalar>
Var Graph<Scalar>::record(Mat value, bool requires_grad, BackwardFn fn) {
  nodes_.push_back(Node{std::move(value), nullptr, {}, requires_grad, nullptr,
                        requires_grad ? std::move(fn) : BackwardFn{}});
  return Var{size() - 1};
}

template <typename Scalar>
typename Graph<Scalar>::Mat& Graph<Scalar>::grad(Var v) {
  Node& n = nodes_.at(v.id);
  if (n.grad.size() == 0) {
    const Mat& val = n.ref != nullptr ? *n.ref : n.value;
    n.grad = Mat::Zero(val.rows(), val.cols());
  }
  return n.grad;
}

template <typename Scalar>
void Graph<Scalar>::backward(Var root) {
  Node& r = nodes_.at(root.id);
  if (value(root).size() != 1) throw ShapeError("backward: root must be a scalar");
  if (!r.requires_grad) return;
  grad(root)(0, 0) += Scalar(1);
  for (Index i = root.id; i >= 0; --i) {
    Node& n = nodes_[i];
    if (n.grad.size() == 0) continue;
    if (n.backward) n.backward(*this, i);
    if (n.param != nullptr) n.param->grad() += n.grad;
  }
}

// ---------------------------------------------------------------------------

namespace {

template <typename Scalar>
bool any_requires(const Graph<Scalar>& g, std::initializer_list<Var> vs) {
  for (const Var v : vs) {
    if (g.requires_grad(v)) return true;
  }
  return false;
}

template <typename Scalar>
void check_same_shape(const Graph<Scalar>& g, Var a, Var b, const char* op) {
  const auto& x = g.value(a);
  const auto& y = g.value(b);
  if (x.rows() != y.rows() || x.cols() != y.cols()) {
    throw ShapeError(std::string(op) + ": shape mismatch " + std::to_string(x.rows()) + "x" +
                     std::to_string(x.cols()) + " vs " + std::to_string(y.rows()) + "x" +
                     std::to_string(y.cols()));
  }
}

}  // namespace

template <typename Scalar>
Var matmul(Graph<Scalar>& g, Var a, Var b) {
  Matrix<Scalar> out = matmul(g.value(a), g.value(b));
  return g.record(std::move(out), any_requires(g, {a, b}), [a, b](Graph<Scalar>& gr, Index self) {
    const auto& dout = gr.grad(Var{self});
    if (gr.requires_grad(a)) gr.grad(a).noalias() += dout * gr.value(b).transpose();
    if (gr.requires_grad(b)) gr.grad(b).noalias() += gr.value(a).transpose() * dout;
  });
}

template <typename Scalar>
Var add(Graph<Scalar>& g, Var a, Var b) {
  check_same_shape(g, a, b, "add");
  Matrix<Scalar> out = g.value(a) + g.value(b);
  return g.record(std::move(out), any_requires(g, {a, b}), [a, b](Graph<Scalar>& gr, Index self) {
    const auto& dout = gr.grad(Var{self});
    if (gr.requires_grad(a)) gr.grad(a) += dout;
    if (gr.requires_grad(b)) gr.grad(b) += dout;
  });
}

template <typename Scalar>
Var mul(Graph<Scalar>& g, Var a, Var b) {
  check_same_shape(g, a, b, "mul");
  Matrix<Scalar> out = g.value(a).cwiseProduct(g.value(b));
  return g.record(std::move(out), any_requires(g, {a, b}), [a, b](Graph<Scalar>& gr, Index self) {
    const auto& dout = gr.grad(Var{self});
    if (gr.requires_grad(a)) gr.grad(a) += dout.cwiseProduct(gr.value(b));
    if (gr.requires_grad(b)) gr.grad(b) += dout.cwiseProduct(gr.value(a));
  });
}

template <typename Scalar>
Var scale(Graph<Scalar>& g, Var x, Scalar s) {
  Matrix<Scalar> out = g.value(x) * s;
  return g.record(std::move(out), g.requires_grad(x), [x, s](Graph<Scalar>& gr, Index self) {
    gr.grad(x) += gr.grad(Var{self}) * s;
  });
}

template <typename Scalar>
Var add_row(Graph<Scalar>& g, Var x, Var bias) {
  const auto& b = g.value(bias);
  if (b.size() != g.value(x).cols()) throw ShapeError("add_row: bias length differs from cols");
  const auto brow = Eigen::Map<const RowVector<Scalar>>(b.data(), b.size());
  Matrix<Scalar> out = g.value(x).rowwise() + brow;
  return g.record(std::move(out), any_requires(g, {x, bias}),
                  [x, bias](Graph<Scalar>& gr, Index self) {
                    const auto& dout = gr.grad(Var{self});
                    if (gr.requires_grad(x)) gr.grad(x) += dout;
                    if (gr.requires_grad(bias)) {
                      auto& db = gr.grad(bias);
                      Eigen::Map<RowVector<Scalar>>(db.data(), db.size()) += dout.colwise().sum();
                    }
                  });
}

template <typename Scalar>
Var add_constant(Graph<Scalar>& g, Var x, const Matrix<Scalar>& c) {
  const auto& xv = g.value(x);
  if (xv.rows() != c.rows() || xv.cols() != c.cols()) throw ShapeError("add_constant: shape mismatch");
  Matrix<Scalar> out = xv + c;
  return g.record(std::move(out), g.requires_grad(x), [x](Graph<Scalar>& gr, Index self) {
    gr.grad(x) += gr.grad(Var{self});
  });
}

template <typename Scalar>
Var linear(Graph<Scalar>& g, Var x, Var weight, Var bias) {
  const auto& w = g.value(weight);
  const auto& b = g.value(bias);
  if (b.size() != w.cols()) throw ShapeError("linear: bias length differs from output width");
  Matrix<Scalar> out = matmul(g.value(x), w);
  out.rowwise() += Eigen::Map<const RowVector<Scalar>>(b.data(), b.size());
  return g.record(std::move(out), any_requires(g, {x, weight, bias}),
                  [x, weight, bias](Graph<Scalar>& gr, Index self) {
                    const auto& dout = gr.grad(Var{self});
                    if (gr.requires_grad(x)) gr.grad(x).noalias() += dout * gr.value(weight).transpose();
                    if (gr.requires_grad(weight)) {
                      gr.grad(weight).noalias() += gr.value(x).transpose() * dout;
                    }
                    if (gr.requires_grad(bias)) {
                      auto& db = gr.grad(bias);
                      Eigen::Map<RowVector<Scalar>>(db.data(), db.size()) += dout.colwise().sum();
                    }
                  });
}

template <typename Scalar>
Var relu(Graph<Scalar>& g, Var x) {
  Matrix<Scalar> out = g.value(x).cwiseMax(Scalar(0));
  return g.record(std::move(out), g.requires_grad(x), [x](Graph<Scalar>& gr, Index self) {
    const auto& dout = gr.grad(Var{self});
    const auto& xv = gr.value(x);
    gr.grad(x).array() += (xv.array() > Scalar(0)).select(dout.array(), Scalar(0));
  });
}

template <typename Scalar>
Var dropout(Graph<Scalar>& g, Var x, double rate, Rng& rng) {
  if (!g.training() || rate <= 0.0) return x;
  const auto& xv = g.value(x);
  auto mask = std::make_shared<Matrix<Scalar>>(xv.rows(), xv.cols());
  const Scalar keep_scale = Scalar(1.0 / (1.0 - rate));
  const float threshold = static_cast<float>(rate);
  Scalar* m = mask->data();
  for (Index i = 0; i < mask->size(); ++i) {
    m[i] = rng.uniform_float() < threshold ? Scalar(0) : keep_scale;
  }
  Matrix<Scalar> out = xv.cwiseProduct(*mask);
  return g.record(std::move(out), g.requires_grad(x), [x, mask](Graph<Scalar>& gr, Index self) {
    gr.grad(x) += gr.grad(Var{self}).cwiseProduct(*mask);
  });
}

template <typename Scalar>
Var softmax_lastdim(Graph<Scalar>& g, Var x) {
  Matrix<Scalar> out = g.value(x);
  softmax_rows_inplace(out);
  return g.record(std::move(out), g.requires_grad(x), [x](Graph<Scalar>& gr, Index self) {
    const auto& y = gr.value(Var{self});
    const auto& dy = gr.grad(Var{self});
    auto& dx = gr.grad(x);
    for (Index r = 0; r < y.rows(); ++r) {
      const Scalar dot = y.row(r).dot(dy.row(r));
      dx.row(r).array() += y.row(r).array() * (dy.row(r).array() - dot);
    }
  });
}

template <typename Scalar>
Var layer_norm(Graph<Scalar>& g, Var x, Var gamma, Var beta, Scalar eps) {
  const auto& xv = g.value(x);
  const Index n = xv.cols();
  if (g.value(gamma).size() != n || g.value(beta).size() != n) {
    throw ShapeError("layer_norm: gamma/beta must match last dim " + std::to_string(n));
  }
  auto xhat = std::make_shared<Matrix<Scalar>>();
  auto inv_std = std::make_shared<Eigen::Matrix<Scalar, Eigen::Dynamic, 1>>();
  layer_norm_rows(xv, eps, *xhat, *inv_std);
  const auto& gm = g.value(gamma);
  const auto& bt = g.value(beta);
  const auto grow = Eigen::Map<const RowVector<Scalar>>(gm.data(), n);
  const auto brow = Eigen::Map<const RowVector<Scalar>>(bt.data(), n);
  Matrix<Scalar> out = (xhat->array().rowwise() * grow.array()).matrix();
  out.rowwise() += brow;
  return g.record(
      std::move(out), any_requires(g, {x, gamma, beta}),
      [x, gamma, beta, xhat, inv_std, n](Graph<Scalar>& gr, Index self) {
        const auto& dy = gr.grad(Var{self});
        if (gr.requires_grad(gamma)) {
          auto& dg = gr.grad(gamma);
          Eigen::Map<RowVector<Scalar>>(dg.data(), n) += dy.cwiseProduct(*xhat).colwise().sum();
        }
        if (gr.requires_grad(beta)) {
          auto& db = gr.grad(beta);
          Eigen::Map<RowVector<Scalar>>(db.data(), n) += dy.colwise().sum();
        }
        if (gr.requires_grad(x)) {
          const auto& gm = gr.value(gamma);
          const auto grow = Eigen::Map<const RowVector<Scalar>>(gm.data(), n);
          auto& dx = gr.grad(x);
          for (Index r = 0; r < dy.rows(); ++r) {
            const RowVector<Scalar> dxhat = dy.row(r).cwiseProduct(grow);
            const Scalar mean_d = dxhat.sum() / Scalar(n);
            const Scalar mean_dx = dxhat.dot(xhat->row(r)) / Scalar(n);
            dx.row(r).array() +=
                (*inv_std)(r) * (dxhat.array() - mean_d - xhat->row(r).array() * mean_dx);
          }
        }
      });
}

template <typename Scalar>
Var embedding(Graph<Scalar>& g, Var table, std::span<const int> ids, Scalar scale) {
  const auto& t = g.value(table);
  Matrix<Scalar> out(static_cast<Index>(ids.size()), t.cols());
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] < 0 || ids[i] >= t.rows()) {
      throw std::out_of_range("embedding: id " + std::to_string(ids[i]) + " outside table of " +
                              std::to_string(t.rows()) + " rows");
    }
    out.row(static_cast<Index>(i)) = t.row(ids[i]) * scale;
  }
  auto saved = std::make_shared<std::vector<int>>(ids.begin(), ids.end());
  return g.record(std::move(out), g.requires_grad(table),
                  [table, saved, scale](Graph<Scalar>& gr, Index self) {
                    const auto& dout = gr.grad(Var{self});
                    auto& dt = gr.grad(table);
                    for (std::size_t i = 0; i < saved->size(); ++i) {
                      dt.row((*saved)[i]) += dout.row(static_cast<Index>(i)) * scale;
                    }
                  });
}

template <typename Scalar>
Var sum(Graph<Scalar>& g, Var x) {
  Matrix<Scalar> out(1, 1);
  out(0, 0) = g.value(x).sum();
  return g.record(std::move(out), g.requires_grad(x), [x](Graph<Scalar>& gr, Index self) {
    gr.grad(x).array() += gr.grad(Var{self})(0, 0);
  });
}

template <typename Scalar>
Var cross_entropy_smoothed(Graph<Scalar>& g, Var logits, std::span<const int> gold, double epsilon,
                           int pad_id) {
  const auto& z = g.value(logits);
  Matrix<Scalar> out(1, 1);
  out(0, 0) = cross_entropy_smoothed(z, gold, epsilon, pad_id);
  auto saved = std::make_shared<std::vector<int>>(gold.begin(), gold.end());
  return g.record(std::move(out), g.requires_grad(logits),
                  [logits, saved, epsilon, pad_id](Graph<Scalar>& gr, Index self) {
                    const Scalar upstream = gr.grad(Var{self})(0, 0);
                    const auto& zv = gr.value(logits);
                    const Index vocab = zv.cols();
                    Index counted = 0;
                    for (const int y : *saved) counted += (y != pad_id);
                    if (counted == 0) return;
                    const Scalar w = upstream / Scalar(counted);
                    const Scalar off = Scalar(epsilon / static_cast<double>(vocab));
                    const Scalar on = Scalar(1.0 - epsilon);
                    auto& dz = gr.grad(logits);
                    for (Index r = 0; r < zv.rows(); ++r) {
                      const int y = (*saved)[static_cast<std::size_t>(r)];
                      if (y == pad_id) continue;
                      const Scalar mx = zv.row(r).maxCoeff();
                      RowVector<Scalar> p = (zv.row(r).array() - mx).exp();
                      p /= p.sum();
                      p.array() -= off;
                      p(y) -= on;
                      dz.row(r) += w * p;
                    }
                  });
}

#define POSREP_INSTANTIATE_GRAPH(S)                                                       \
  template class Graph<S>;                                                                \
  template Var matmul(Graph<S>&, Var, Var);                                               \
  template Var add(Graph<S>&, Var, Var);                                                  \
  template Var mul(Graph<S>&, Var, Var);                                                  \
  template Var scale(Graph<S>&, Var, S);                                                  \
  template Var add_row(Graph<S>&, Var, Var);                                              \
  template Var add_constant(Graph<S>&, Var, const Matrix<S>&);                            \
  template Var linear(Graph<S>&, Var, Var, Var);                                          \
  template Var relu(Graph<S>&, Var);                                                      \
  template Var dropout(Graph<S>&, Var, double, Rng&);                                     \
  template Var softmax_lastdim(Graph<S>&, Var);                                           \
  template Var layer_norm(Graph<S>&, Var, Var, Var, S);                                   \
  template Var embedding(Graph<S>&, Var, std::span<const int>, S);                        \
  template Var sum(Graph<S>&, Var);                                                       \
  template Var cross_entropy_smoothed(Graph<S>&, Var, std::span<const int>, double, int);

POSREP_INSTANTIATE_GRAPH(float)
POSREP_INSTANTIATE_GRAPH(double)

}  // namespace posrep
