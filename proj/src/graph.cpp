#include "polygen/graph.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

#include "polygen/kernels.hpp"

namespace polygen {

namespace {

template <typename T>
std::string shapes(const char* op, const Tensor<T>& a, const Tensor<T>& b) {
  return std::string(op) + ": shapes " + a.shape_string() + " and " + b.shape_string() +
         " do not match";
}

}  // namespace

template <typename T>
Var Graph<T>::push(Tensor<T> value, bool needs_grad, std::function<void()> backward) {
  Node n;
  n.value = std::move(value);
  n.needs_grad = needs_grad;
  if (needs_grad) n.backward = std::move(backward);
  nodes_.push_back(std::move(n));
  return {static_cast<int>(nodes_.size()) - 1};
}

template <typename T>
void Graph<T>::check(Var v, const char* op) const {
  if (v.id < 0 || v.id >= static_cast<int>(nodes_.size())) {
    throw std::invalid_argument(std::string(op) + ": invalid variable");
  }
}

template <typename T>
Tensor<T>& Graph<T>::grad_ref(int id) {
  Node& n = nodes_[id];
  if (n.grad.empty()) n.grad = Tensor<T>(val(id).rows(), val(id).cols());
  return n.grad;
}

template <typename T>
Var Graph<T>::input(Tensor<T> value) {
  return push(std::move(value), false, nullptr);
}

template <typename T>
Var Graph<T>::variable(Tensor<T> value) {
  const Var v = push(std::move(value), false, nullptr);
  nodes_[v.id].needs_grad = true;
  return v;
}

template <typename T>
Var Graph<T>::param(int index) {
  if (params_ == nullptr || index < 0 || index >= params_->size()) {
    throw std::out_of_range("graph: parameter index " + std::to_string(index) + " out of range");
  }
  if (param_nodes_.empty()) param_nodes_.assign(static_cast<std::size_t>(params_->size()), -1);
  int& slot = param_nodes_[index];
  if (slot < 0) {
    Node n;
    n.external = &params_->value(index);
    n.needs_grad = true;
    n.param_index = index;
    nodes_.push_back(std::move(n));
    slot = static_cast<int>(nodes_.size()) - 1;
  }
  return {slot};
}

template <typename T>
Var Graph<T>::param(std::string_view name) {
  if (params_ == nullptr) throw std::out_of_range("graph: no parameter store");
  return param(params_->index(name));
}

template <typename T>
Var Graph<T>::matmul(Var a, Var b, bool trans_b) {
  check(a, "matmul");
  check(b, "matmul");
  const Tensor<T>& A = val(a.id);
  const Tensor<T>& B = val(b.id);
  const int m = A.rows(), k = A.cols();
  const int kb = trans_b ? B.cols() : B.rows();
  const int n = trans_b ? B.rows() : B.cols();
  if (k != kb) {
    throw ShapeError(std::string("matmul: shapes ") + A.shape_string() + " and " +
                     B.shape_string() + (trans_b ? " (transposed)" : "") + " do not match");
  }
  Tensor<T> C(m, n);
  kernels::gemm<T>(false, trans_b, m, n, k, 1, A.data(), k, B.data(), B.cols(), 0, C.data(), n);
  const int out = static_cast<int>(nodes_.size());
  return push(std::move(C), needs(a.id) || needs(b.id), [this, a, b, out, trans_b, m, n, k] {
    const Tensor<T>& dC = nodes_[out].grad;
    const Tensor<T>& A = val(a.id);
    const Tensor<T>& B = val(b.id);
    if (needs(a.id)) {
      kernels::gemm<T>(false, !trans_b, m, k, n, 1, dC.data(), n, B.data(), B.cols(), 1,
                       grad_ref(a.id).data(), k);
    }
    if (needs(b.id)) {
      if (!trans_b) {
        kernels::gemm<T>(true, false, k, n, m, 1, A.data(), k, dC.data(), n, 1,
                         grad_ref(b.id).data(), n);
      } else {
        kernels::gemm<T>(true, false, n, k, m, 1, dC.data(), n, A.data(), k, 1,
                         grad_ref(b.id).data(), k);
      }
    }
  });
}

template <typename T>
Var Graph<T>::linear(Var x, Var w, Var bias) {
  check(x, "linear");
  check(w, "linear");
  const Tensor<T>& X = val(x.id);
  const Tensor<T>& W = val(w.id);
  if (X.cols() != W.rows()) throw ShapeError(shapes("linear", X, W));
  const int n = X.rows(), in = X.cols(), outd = W.cols();
  Tensor<T> Y(n, outd);
  if (bias.valid()) {
    check(bias, "linear");
    const Tensor<T>& B = val(bias.id);
    if (B.rows() != 1 || B.cols() != outd) throw ShapeError(shapes("linear bias", W, B));
    for (int r = 0; r < n; ++r) std::copy(B.data(), B.data() + outd, Y.row(r));
  }
  kernels::gemm<T>(false, false, n, outd, in, 1, X.data(), in, W.data(), outd,
                   bias.valid() ? 1 : 0, Y.data(), outd);
  const bool ng = needs(x.id) || needs(w.id) || (bias.valid() && needs(bias.id));
  const int out = static_cast<int>(nodes_.size());
  return push(std::move(Y), ng, [this, x, w, bias, out, n, in, outd] {
    const Tensor<T>& dY = nodes_[out].grad;
    if (needs(x.id)) {
      kernels::gemm<T>(false, true, n, in, outd, 1, dY.data(), outd, val(w.id).data(), outd, 1,
                       grad_ref(x.id).data(), in);
    }
    if (needs(w.id)) {
      kernels::gemm<T>(true, false, in, outd, n, 1, val(x.id).data(), in, dY.data(), outd, 1,
                       grad_ref(w.id).data(), outd);
    }
    if (bias.valid() && needs(bias.id)) {
      T* db = grad_ref(bias.id).data();
      for (int r = 0; r < n; ++r) {
        const T* g = dY.row(r);
        for (int c = 0; c < outd; ++c) db[c] += g[c];
      }
    }
  });
}

template <typename T>
Var Graph<T>::add(Var a, Var b) {
  check(a, "add");
  check(b, "add");
  const Tensor<T>& A = val(a.id);
  const Tensor<T>& B = val(b.id);
  if (!A.same_shape(B)) throw ShapeError(shapes("add", A, B));
  Tensor<T> C = A;
  for (std::size_t i = 0; i < C.size(); ++i) C[i] += B[i];
  const int out = static_cast<int>(nodes_.size());
  return push(std::move(C), needs(a.id) || needs(b.id), [this, a, b, out] {
    const Tensor<T>& d = nodes_[out].grad;
    for (Var v : {a, b}) {
      if (!needs(v.id)) continue;
      Tensor<T>& g = grad_ref(v.id);
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += d[i];
    }
  });
}

template <typename T>
Var Graph<T>::add_row(Var a, Var row) {
  check(a, "add_row");
  check(row, "add_row");
  const Tensor<T>& A = val(a.id);
  const Tensor<T>& R = val(row.id);
  if (R.rows() != 1 || R.cols() != A.cols()) throw ShapeError(shapes("add_row", A, R));
  Tensor<T> C = A;
  for (int r = 0; r < C.rows(); ++r) {
    T* p = C.row(r);
    for (int c = 0; c < C.cols(); ++c) p[c] += R[c];
  }
  const int out = static_cast<int>(nodes_.size());
  return push(std::move(C), needs(a.id) || needs(row.id), [this, a, row, out] {
    const Tensor<T>& d = nodes_[out].grad;
    if (needs(a.id)) {
      Tensor<T>& g = grad_ref(a.id);
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += d[i];
    }
    if (needs(row.id)) {
      Tensor<T>& g = grad_ref(row.id);
      for (int r = 0; r < d.rows(); ++r) {
        const T* p = d.row(r);
        for (int c = 0; c < d.cols(); ++c) g[c] += p[c];
      }
    }
  });
}

template <typename T>
Var Graph<T>::mul(Var a, Var b) {
  check(a, "mul");
  check(b, "mul");
  const Tensor<T>& A = val(a.id);
  const Tensor<T>& B = val(b.id);
  if (!A.same_shape(B)) throw ShapeError(shapes("mul", A, B));
  Tensor<T> C = A;
  for (std::size_t i = 0; i < C.size(); ++i) C[i] *= B[i];
  const int out = static_cast<int>(nodes_.size());
  return push(std::move(C), needs(a.id) || needs(b.id), [this, a, b, out] {
    const Tensor<T>& d = nodes_[out].grad;
    if (needs(a.id)) {
      Tensor<T>& g = grad_ref(a.id);
      const Tensor<T>& B = val(b.id);
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += d[i] * B[i];
    }
    if (needs(b.id)) {
      Tensor<T>& g = grad_ref(b.id);
      const Tensor<T>& A = val(a.id);
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += d[i] * A[i];
    }
  });
}

template <typename T>
Var Graph<T>::scale(Var a, T s) {
  check(a, "scale");
  Tensor<T> C = val(a.id);
  for (std::size_t i = 0; i < C.size(); ++i) C[i] *= s;
  const int out = static_cast<int>(nodes_.size());
  return push(std::move(C), needs(a.id), [this, a, out, s] {
    const Tensor<T>& d = nodes_[out].grad;
    Tensor<T>& g = grad_ref(a.id);
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += s * d[i];
  });
}

template <typename T>
Var Graph<T>::relu(Var a) {
  check(a, "relu");
  Tensor<T> C = val(a.id);
  for (std::size_t i = 0; i < C.size(); ++i) C[i] = C[i] > 0 ? C[i] : T(0);
  const int out = static_cast<int>(nodes_.size());
  return push(std::move(C), needs(a.id), [this, a, out] {
    const Tensor<T>& d = nodes_[out].grad;
    const Tensor<T>& y = nodes_[out].value;
    Tensor<T>& g = grad_ref(a.id);
    for (std::size_t i = 0; i < g.size(); ++i) {
      if (y[i] > 0) g[i] += d[i];
    }
  });
}

template <typename T>
Var Graph<T>::dropout(Var a, T rate, Rng& rng) {
  check(a, "dropout");
  if (rate < 0 || rate >= 1) throw std::invalid_argument("dropout: rate must be in [0, 1)");
  if (rate == 0) return a;
  const Tensor<T>& A = val(a.id);
  Tensor<T> keep(A.rows(), A.cols());
  const T scale_kept = T(1) / (T(1) - rate);
  const double threshold = static_cast<double>(rate);
  for (std::size_t i = 0; i < keep.size(); ++i) {
    const double u = static_cast<double>(rng() >> 11) * 0x1.0p-53;
    keep[i] = u < threshold ? T(0) : scale_kept;
  }
  Tensor<T> C = A;
  for (std::size_t i = 0; i < C.size(); ++i) C[i] *= keep[i];
  const int out = static_cast<int>(nodes_.size());
  return push(std::move(C), needs(a.id), [this, a, out, keep = std::move(keep)] {
    const Tensor<T>& d = nodes_[out].grad;
    Tensor<T>& g = grad_ref(a.id);
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += d[i] * keep[i];
  });
}

template <typename T>
Var Graph<T>::layer_norm(Var x, Var gain, Var bias) {
  check(x, "layer_norm");
  check(gain, "layer_norm");
  check(bias, "layer_norm");
  const Tensor<T>& X = val(x.id);
  const Tensor<T>& G = val(gain.id);
  const Tensor<T>& B = val(bias.id);
  if (G.rows() != 1 || G.cols() != X.cols()) throw ShapeError(shapes("layer_norm gain", X, G));
  if (!B.same_shape(G)) throw ShapeError(shapes("layer_norm bias", G, B));
  const int n = X.rows(), c = X.cols();
  Tensor<T> Y(n, c), xhat(n, c), rstd(n, 1);
  kernels::layer_norm_rows<T>(X.data(), n, c, G.data(), B.data(), T(1e-5), Y.data(), xhat.data(),
                              rstd.data());
  const bool ng = needs(x.id) || needs(gain.id) || needs(bias.id);
  const int out = static_cast<int>(nodes_.size());
  return push(std::move(Y), ng,
              [this, x, gain, bias, out, n, c, xhat = std::move(xhat), rstd = std::move(rstd)] {
                const Tensor<T>& dY = nodes_[out].grad;
                const Tensor<T>& G = val(gain.id);
                if (needs(gain.id) || needs(bias.id)) {
                  Tensor<T>* dg = needs(gain.id) ? &grad_ref(gain.id) : nullptr;
                  Tensor<T>* db = needs(bias.id) ? &grad_ref(bias.id) : nullptr;
                  for (int r = 0; r < n; ++r) {
                    const T* d = dY.row(r);
                    const T* h = xhat.row(r);
                    for (int k = 0; k < c; ++k) {
                      if (dg) (*dg)[k] += d[k] * h[k];
                      if (db) (*db)[k] += d[k];
                    }
                  }
                }
                if (!needs(x.id)) return;
                Tensor<T>& dX = grad_ref(x.id);
                std::vector<T> dh(static_cast<std::size_t>(c));
                for (int r = 0; r < n; ++r) {
                  const T* d = dY.row(r);
                  const T* h = xhat.row(r);
                  T mean_dh = 0, mean_dhh = 0;
                  for (int k = 0; k < c; ++k) {
                    dh[k] = d[k] * G[k];
                    mean_dh += dh[k];
                    mean_dhh += dh[k] * h[k];
                  }
                  mean_dh /= c;
                  mean_dhh /= c;
                  T* dx = dX.row(r);
                  for (int k = 0; k < c; ++k) dx[k] += rstd[r] * (dh[k] - mean_dh - h[k] * mean_dhh);
                }
              });
}

template <typename T>
Var Graph<T>::softmax(Var a) {
  check(a, "softmax");
  Tensor<T> Y = val(a.id);
  kernels::softmax_rows<T>(Y.data(), Y.rows(), Y.cols(), Y.cols());
  const int out = static_cast<int>(nodes_.size());
  return push(std::move(Y), needs(a.id), [this, a, out] {
    const Tensor<T>& d = nodes_[out].grad;
    const Tensor<T>& y = nodes_[out].value;
    Tensor<T>& g = grad_ref(a.id);
    for (int r = 0; r < y.rows(); ++r) {
      const T* yr = y.row(r);
      const T* dr = d.row(r);
      T dot = 0;
      for (int c = 0; c < y.cols(); ++c) dot += dr[c] * yr[c];
      T* gr = g.row(r);
      for (int c = 0; c < y.cols(); ++c) gr[c] += yr[c] * (dr[c] - dot);
    }
  });
}

template <typename T>
Var Graph<T>::gather_rows(Var table, std::vector<int> ids) {
  check(table, "gather_rows");
  const Tensor<T>& W = val(table.id);
  Tensor<T> Y(static_cast<int>(ids.size()), W.cols());
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] < 0 || ids[i] >= W.rows()) {
      throw std::out_of_range("gather_rows: row " + std::to_string(ids[i]) + " outside table " +
                              W.shape_string());
    }
    std::copy(W.row(ids[i]), W.row(ids[i]) + W.cols(), Y.row(static_cast<int>(i)));
  }
  const int out = static_cast<int>(nodes_.size());
  return push(std::move(Y), needs(table.id), [this, table, out, ids = std::move(ids)] {
    const Tensor<T>& d = nodes_[out].grad;
    Tensor<T>& g = grad_ref(table.id);
    for (std::size_t i = 0; i < ids.size(); ++i) {
      const T* src = d.row(static_cast<int>(i));
      T* dst = g.row(ids[i]);
      for (int c = 0; c < g.cols(); ++c) dst[c] += src[c];
    }
  });
}

template <typename T>
Var Graph<T>::concat_rows(const std::vector<Var>& parts) {
  if (parts.empty()) throw std::invalid_argument("concat_rows: no inputs");
  int rows = 0;
  const int cols = val(parts[0].id).cols();
  bool ng = false;
  for (Var p : parts) {
    check(p, "concat_rows");
    if (val(p.id).cols() != cols) throw ShapeError(shapes("concat_rows", val(parts[0].id), val(p.id)));
    rows += val(p.id).rows();
    ng = ng || needs(p.id);
  }
  Tensor<T> Y(rows, cols);
  int at = 0;
  for (Var p : parts) {
    const Tensor<T>& P = val(p.id);
    std::copy(P.data(), P.data() + P.size(), Y.row(at));
    at += P.rows();
  }
  const int out = static_cast<int>(nodes_.size());
  return push(std::move(Y), ng, [this, parts, out] {
    const Tensor<T>& d = nodes_[out].grad;
    int at = 0;
    for (Var p : parts) {
      const int r = val(p.id).rows();
      if (needs(p.id)) {
        Tensor<T>& g = grad_ref(p.id);
        const T* src = d.row(at);
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += src[i];
      }
      at += r;
    }
  });
}

template <typename T>
Var Graph<T>::slice_rows(Var a, int begin, int end) {
  check(a, "slice_rows");
  const Tensor<T>& A = val(a.id);
  if (begin < 0 || end > A.rows() || begin > end) {
    throw ShapeError("slice_rows: [" + std::to_string(begin) + ", " + std::to_string(end) +
                     ") outside " + A.shape_string());
  }
  Tensor<T> Y(end - begin, A.cols());
  std::copy(A.row(begin), A.row(begin) + Y.size(), Y.data());
  const int out = static_cast<int>(nodes_.size());
  return push(std::move(Y), needs(a.id), [this, a, out, begin] {
    const Tensor<T>& d = nodes_[out].grad;
    T* dst = grad_ref(a.id).row(begin);
    for (std::size_t i = 0; i < d.size(); ++i) dst[i] += d[i];
  });
}

template <typename T>
Var Graph<T>::transpose(Var a) {
  check(a, "transpose");
  const Tensor<T>& A = val(a.id);
  Tensor<T> Y(A.cols(), A.rows());
  for (int r = 0; r < A.rows(); ++r) {
    for (int c = 0; c < A.cols(); ++c) Y(c, r) = A(r, c);
  }
  const int out = static_cast<int>(nodes_.size());
  return push(std::move(Y), needs(a.id), [this, a, out] {
    const Tensor<T>& d = nodes_[out].grad;
    Tensor<T>& g = grad_ref(a.id);
    for (int r = 0; r < g.rows(); ++r) {
      for (int c = 0; c < g.cols(); ++c) g(r, c) += d(c, r);
    }
  });
}

template <typename T>
Var Graph<T>::sum(Var a) {
  check(a, "sum");
  const Tensor<T>& A = val(a.id);
  double s = 0;
  for (std::size_t i = 0; i < A.size(); ++i) s += A[i];
  const int out = static_cast<int>(nodes_.size());
  return push(Tensor<T>(1, 1, static_cast<T>(s)), needs(a.id), [this, a, out] {
    const T d = nodes_[out].grad[0];
    Tensor<T>& g = grad_ref(a.id);
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += d;
  });
}

template <typename T>
Var Graph<T>::attention(Var q, Var k, Var v, int heads, bool causal, const Tensor<T>* additive) {
  check(q, "attention");
  check(k, "attention");
  check(v, "attention");
  const Tensor<T>& Q = val(q.id);
  const Tensor<T>& K = val(k.id);
  const Tensor<T>& V = val(v.id);
  const int nq = Q.rows(), nk = K.rows(), e = Q.cols();
  if (K.cols() != e || !V.same_shape(K)) throw ShapeError(shapes("attention", Q, K));
  if (heads < 1 || e % heads != 0) {
    throw ShapeError("attention: width " + std::to_string(e) + " not divisible into " +
                     std::to_string(heads) + " heads");
  }
  if (causal && nq != nk) throw ShapeError(shapes("causal attention", Q, K));
  if (additive != nullptr && (additive->rows() != nq || additive->cols() != nk)) {
    throw ShapeError(shapes("attention mask", Q, *additive));
  }
  const int d = e / heads;
  const T sc = T(1) / std::sqrt(static_cast<T>(d));
  constexpr T kNegInf = -std::numeric_limits<T>::infinity();
  Tensor<T> probs(heads * nq, nk);
  Tensor<T> Y(nq, e);
  for (int h = 0; h < heads; ++h) {
    T* P = probs.row(h * nq);
    kernels::gemm<T>(false, true, nq, nk, d, sc, Q.data() + h * d, e, K.data() + h * d, e, 0, P,
                     nk);
    if (additive != nullptr) {
      for (std::size_t i = 0; i < static_cast<std::size_t>(nq) * nk; ++i) P[i] += (*additive)[i];
    }
    if (causal) {
      for (int i = 0; i < nq; ++i) {
        for (int j = i + 1; j < nk; ++j) P[static_cast<std::size_t>(i) * nk + j] = kNegInf;
      }
    }
    kernels::softmax_rows<T>(P, nq, nk, nk);
    kernels::gemm<T>(false, false, nq, d, nk, 1, P, nk, V.data() + h * d, e, 0, Y.data() + h * d,
                     e);
  }
  const bool ng = needs(q.id) || needs(k.id) || needs(v.id);
  const int out = static_cast<int>(nodes_.size());
  return push(std::move(Y), ng,
              [this, q, k, v, out, heads, nq, nk, e, d, sc, probs = std::move(probs)] {
                const Tensor<T>& dY = nodes_[out].grad;
                const Tensor<T>& Q = val(q.id);
                const Tensor<T>& K = val(k.id);
                const Tensor<T>& V = val(v.id);
                Tensor<T> dS(nq, nk);
                for (int h = 0; h < heads; ++h) {
                  const T* P = probs.row(h * nq);
                  const T* dO = dY.data() + h * d;
                  if (needs(v.id)) {
                    kernels::gemm<T>(true, false, nk, d, nq, 1, P, nk, dO, e, 1,
                                     grad_ref(v.id).data() + h * d, e);
                  }
                  if (!needs(q.id) && !needs(k.id)) continue;
                  kernels::gemm<T>(false, true, nq, nk, d, 1, dO, e, V.data() + h * d, e, 0,
                                   dS.data(), nk);
                  for (int i = 0; i < nq; ++i) {
                    T* s = dS.row(i);
                    const T* p = P + static_cast<std::size_t>(i) * nk;
                    T dot = 0;
                    for (int j = 0; j < nk; ++j) dot += s[j] * p[j];
                    for (int j = 0; j < nk; ++j) s[j] = p[j] * (s[j] - dot);
                  }
                  if (needs(q.id)) {
                    kernels::gemm<T>(false, false, nq, d, nk, sc, dS.data(), nk, K.data() + h * d,
                                     e, 1, grad_ref(q.id).data() + h * d, e);
                  }
                  if (needs(k.id)) {
                    kernels::gemm<T>(true, false, nk, d, nq, sc, dS.data(), nk, Q.data() + h * d,
                                     e, 1, grad_ref(k.id).data() + h * d, e);
                  }
                }
              });
}

template <typename T>
Var Graph<T>::cross_entropy(Var logits, std::span<const int> targets,
                            const std::vector<MaskVector>* masks) {
  check(logits, "cross_entropy");
  const Tensor<T>& L = val(logits.id);
  const int n = L.rows(), vocab = L.cols();
  if (static_cast<int>(targets.size()) != n) {
    throw ShapeError("cross_entropy: " + std::to_string(targets.size()) + " targets for logits " +
                     L.shape_string());
  }
  if (masks != nullptr && static_cast<int>(masks->size()) != n) {
    throw ShapeError("cross_entropy: " + std::to_string(masks->size()) + " masks for logits " +
                     L.shape_string());
  }
  Tensor<T> probs(n, vocab);
  double total = 0.0;
  for (int r = 0; r < n; ++r) {
    const int t = targets[r];
    if (t < 0 || t >= vocab) {
      throw std::out_of_range("cross_entropy: target " + std::to_string(t) + " outside vocab " +
                              std::to_string(vocab));
    }
    const std::uint8_t* allow = nullptr;
    if (masks != nullptr) {
      const MaskVector& m = (*masks)[r];
      if (static_cast<int>(m.size()) != vocab) throw ShapeError("cross_entropy: mask width");
      if (!m[t]) {
        throw std::domain_error("cross_entropy: target masked out at row " + std::to_string(r));
      }
      allow = m.data();
    }
    const T* x = L.row(r);
    double mx = -std::numeric_limits<double>::infinity();
    for (int c = 0; c < vocab; ++c) {
      if (allow == nullptr || allow[c]) mx = std::max(mx, static_cast<double>(x[c]));
    }
    double s = 0.0;
    T* p = probs.row(r);
    for (int c = 0; c < vocab; ++c) {
      if (allow == nullptr || allow[c]) s += std::exp(static_cast<double>(x[c]) - mx);
    }
    for (int c = 0; c < vocab; ++c) {
      p[c] = (allow == nullptr || allow[c])
                 ? static_cast<T>(std::exp(static_cast<double>(x[c]) - mx) / s)
                 : T(0);
    }
    total += mx + std::log(s) - static_cast<double>(x[t]);
  }
  std::vector<int> tgt(targets.begin(), targets.end());
  const int out = static_cast<int>(nodes_.size());
  return push(Tensor<T>(1, 1, static_cast<T>(total)), needs(logits.id),
              [this, logits, out, n, vocab, probs = std::move(probs), tgt = std::move(tgt)] {
                const T d = nodes_[out].grad[0];
                Tensor<T>& g = grad_ref(logits.id);
                for (int r = 0; r < n; ++r) {
                  const T* p = probs.row(r);
                  T* gr = g.row(r);
                  for (int c = 0; c < vocab; ++c) gr[c] += d * p[c];
                  gr[tgt[r]] -= d;
                }
              });
}

template <typename T>
void Graph<T>::backward(Var loss) {
  check(loss, "backward");
  const Tensor<T>& L = val(loss.id);
  if (L.rows() != 1 || L.cols() != 1) {
    throw ShapeError("backward: loss must be 1 x 1, got " + L.shape_string());
  }
  if (!needs(loss.id)) return;
  grad_ref(loss.id)[0] += T(1);
  for (int id = loss.id; id >= 0; --id) {
    Node& node = nodes_[id];
    if (node.needs_grad && node.backward && !node.grad.empty()) node.backward();
  }
}

template <typename T>
const Tensor<T>& Graph<T>::value(Var v) const {
  check(v, "value");
  return val(v.id);
}

template <typename T>
Tensor<T> Graph<T>::grad(Var v) const {
  check(v, "grad");
  const Node& n = nodes_[v.id];
  if (n.grad.empty()) return Tensor<T>(val(v.id).rows(), val(v.id).cols());
  return n.grad;
}

template <typename T>
void Graph<T>::accumulate_param_grads(std::vector<Tensor<T>>& into) const {
  for (std::size_t i = 0; i < param_nodes_.size(); ++i) {
    const int id = param_nodes_[i];
    if (id < 0 || nodes_[id].grad.empty()) continue;
    Tensor<T>& dst = into.at(i);
    const Tensor<T>& src = nodes_[id].grad;
    if (!dst.same_shape(src)) throw ShapeError(shapes("param grad", dst, src));
    for (std::size_t k = 0; k < dst.size(); ++k) dst[k] += src[k];
  }
}

template class Graph<float>;
template class Graph<double>;

}  // namespace polygen
