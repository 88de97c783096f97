#pragma once

#include <functional>
#include <span>
#include <string_view>
#include <vector>

#include "polygen/params.hpp"
#include "polygen/rng.hpp"
#include "polygen/sequencing.hpp"
#include "polygen/tensor.hpp"

namespace polygen {

struct Var {
  int id = -1;
  bool valid() const { return id >= 0; }
};

/// Tape for reverse-mode differentiation. Every op records its output and a
/// closure that pushes the output gradient to its inputs. Parameters are
/// referenced in place from the store, never copied.
template <typename T>
class Graph {
 public:
  explicit Graph(const ParamStore<T>* params = nullptr) : params_(params) {}
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  Var input(Tensor<T> value);
  /// Leaf whose gradient is kept (used by tests).
  Var variable(Tensor<T> value);
  Var param(int index);
  Var param(std::string_view name);

  /// a [m, k] x b [k, n], or b [n, k] transposed.
  Var matmul(Var a, Var b, bool trans_b = false);
  /// x [n, in] w [in, out] + bias [1, out] (bias optional).
  Var linear(Var x, Var w, Var bias = {});
  Var add(Var a, Var b);
  /// a [n, c] + row [1, c] broadcast over rows.
  Var add_row(Var a, Var row);
  Var mul(Var a, Var b);
  Var scale(Var a, T s);
  Var relu(Var a);
  /// Inverted dropout: kept entries scaled by 1 / (1 - rate).
  Var dropout(Var a, T rate, Rng& rng);
  /// Row-wise, epsilon 1e-5; gain and bias are [1, c].
  Var layer_norm(Var x, Var gain, Var bias);
  /// Row-wise softmax.
  Var softmax(Var a);
  Var gather_rows(Var table, std::vector<int> ids);
  Var concat_rows(const std::vector<Var>& parts);
  Var slice_rows(Var a, int begin, int end);
  Var transpose(Var a);
  Var sum(Var a);
  /// Multi-head scaled dot-product attention on already projected q [nq, E],
  /// k and v [nk, E]. Heads split E evenly. `causal` needs nq == nk and lets
  /// query i see keys <= i. `additive` [nq, nk] is added to the scores.
  Var attention(Var q, Var k, Var v, int heads, bool causal, const Tensor<T>* additive = nullptr);
  /// Sum over rows of -log softmax(logits)[target] in nats, as a 1 x 1
  /// tensor. With masks, disallowed entries are removed before the softmax;
  /// a masked target throws std::domain_error.
  Var cross_entropy(Var logits, std::span<const int> targets,
                    const std::vector<MaskVector>* masks = nullptr);

  /// Requires a 1 x 1 loss.
  void backward(Var loss);

  const Tensor<T>& value(Var v) const;
  /// Zeros if no gradient reached v.
  Tensor<T> grad(Var v) const;
  /// Adds the gradient of every used parameter into into[index].
  void accumulate_param_grads(std::vector<Tensor<T>>& into) const;
  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Tensor<T> value;
    const Tensor<T>* external = nullptr;
    Tensor<T> grad;
    bool needs_grad = false;
    int param_index = -1;
    std::function<void()> backward;
  };

  const Tensor<T>& val(int id) const {
    return nodes_[id].external != nullptr ? *nodes_[id].external : nodes_[id].value;
  }
  Tensor<T>& grad_ref(int id);
  bool needs(int id) const { return nodes_[id].needs_grad; }
  Var push(Tensor<T> value, bool needs_grad, std::function<void()> backward);
  void check(Var v, const char* op) const;

  const ParamStore<T>* params_;
  std::vector<Node> nodes_;
  std::vector<int> param_nodes_;
};

}  // namespace polygen
