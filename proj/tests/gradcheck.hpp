#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>
#include <vector>

#include "polygen/graph.hpp"

namespace polygen::testing {

struct GradCheckResult {
  double max_rel_error = 0.0;
  int checked = 0;
};

// Relative error with a floor so that coordinates whose true gradient is ~0
// are judged on absolute error.
inline double rel_error(double analytic, double numeric) {
  return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), 1e-4});
}

using Builder = std::function<Var(Graph<double>&, const std::vector<Var>&)>;

// Central differences on `coords` random coordinates (per input tensor)
// against the graph's reverse-mode gradient.
inline GradCheckResult check_gradients(const Builder& build, std::vector<Tensor<double>> inputs,
                                       std::mt19937_64& rng, int coords = 20, double h = 1e-6) {
  auto evaluate = [&](std::vector<Tensor<double>>* grads) {
    Graph<double> g;
    std::vector<Var> vars;
    for (const auto& t : inputs) vars.push_back(g.variable(t));
    const Var loss = build(g, vars);
    if (grads != nullptr) {
      g.backward(loss);
      grads->clear();
      for (Var v : vars) grads->push_back(g.grad(v));
    }
    return g.value(loss)[0];
  };
  std::vector<Tensor<double>> grads;
  evaluate(&grads);
  GradCheckResult r;
  for (std::size_t t = 0; t < inputs.size(); ++t) {
    if (inputs[t].empty()) continue;
    std::uniform_int_distribution<std::size_t> pick(0, inputs[t].size() - 1);
    for (int c = 0; c < coords; ++c) {
      const std::size_t i = pick(rng);
      const double keep = inputs[t][i];
      inputs[t][i] = keep + h;
      const double up = evaluate(nullptr);
      inputs[t][i] = keep - h;
      const double down = evaluate(nullptr);
      inputs[t][i] = keep;
      const double numeric = (up - down) / (2 * h);
      r.max_rel_error = std::max(r.max_rel_error, rel_error(grads[t][i], numeric));
      ++r.checked;
    }
  }
  return r;
}

inline Tensor<double> random_tensor(int rows, int cols, std::mt19937_64& rng, double scale = 1.0) {
  std::normal_distribution<double> n(0.0, scale);
  Tensor<double> t(rows, cols);
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = n(rng);
  return t;
}

// Reduces any tensor to a scalar through fixed random weights so the whole
// Jacobian is exercised.
inline Var project(Graph<double>& g, Var x, std::uint64_t seed = 99) {
  std::mt19937_64 rng(seed);
  const Tensor<double>& v = g.value(x);
  const Var w = g.input(random_tensor(v.rows(), v.cols(), rng));
  return g.sum(g.mul(x, w));
}

}  // namespace polygen::testing
