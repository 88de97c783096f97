#include "polygen/params.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace polygen {

template <typename T>
int ParamStore<T>::add(std::string name, Tensor<T> init) {
  if (lookup_.count(name) != 0) throw std::invalid_argument("duplicate parameter " + name);
  const int id = size();
  lookup_.emplace(name, id);
  names_.push_back(std::move(name));
  m_.emplace_back(init.rows(), init.cols());
  v_.emplace_back(init.rows(), init.cols());
  values_.push_back(std::move(init));
  return id;
}

template <typename T>
int ParamStore<T>::find(std::string_view name) const {
  const auto it = lookup_.find(std::string(name));
  return it == lookup_.end() ? -1 : it->second;
}

template <typename T>
int ParamStore<T>::index(std::string_view name) const {
  const int i = find(name);
  if (i < 0) throw std::out_of_range("no parameter named " + std::string(name));
  return i;
}

template <typename T>
std::size_t ParamStore<T>::parameter_count() const {
  std::size_t n = 0;
  for (const auto& v : values_) n += v.size();
  return n;
}

template <typename T>
std::vector<Tensor<T>> ParamStore<T>::zeros_like() const {
  std::vector<Tensor<T>> out;
  out.reserve(values_.size());
  for (const auto& v : values_) out.emplace_back(v.rows(), v.cols());
  return out;
}

template <typename T>
Tensor<T> truncated_normal(int rows, int cols, double std, Rng& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  Tensor<T> t(rows, cols);
  for (std::size_t i = 0; i < t.size(); ++i) {
    double x = n(rng);
    while (std::abs(x) > 2.0) x = n(rng);
    t[i] = static_cast<T>(x * std);
  }
  return t;
}

template <typename T>
void adam_step(ParamStore<T>& store, const std::vector<Tensor<T>>& grads, double lr,
               const AdamConfig& cfg) {
  if (static_cast<int>(grads.size()) != store.size()) {
    throw std::invalid_argument("adam_step: gradient count does not match parameters");
  }
  store.set_step(store.step() + 1);
  const double t = static_cast<double>(store.step());
  const double c1 = 1.0 - std::pow(cfg.beta1, t);
  const double c2 = 1.0 - std::pow(cfg.beta2, t);
  for (int i = 0; i < store.size(); ++i) {
    Tensor<T>& p = store.value(i);
    Tensor<T>& m = store.m(i);
    Tensor<T>& v = store.v(i);
    const Tensor<T>& g = grads[i];
    if (!g.same_shape(p)) {
      throw ShapeError("adam_step: gradient " + g.shape_string() + " for parameter " +
                       store.name(i) + " " + p.shape_string());
    }
    for (std::size_t k = 0; k < p.size(); ++k) {
      const double gk = g[k];
      const double mk = cfg.beta1 * m[k] + (1.0 - cfg.beta1) * gk;
      const double vk = cfg.beta2 * v[k] + (1.0 - cfg.beta2) * gk * gk;
      m[k] = static_cast<T>(mk);
      v[k] = static_cast<T>(vk);
      const double mhat = mk / c1;
      const double vhat = vk / c2;
      p[k] = static_cast<T>(p[k] - lr * mhat / (std::sqrt(vhat) + cfg.eps));
    }
  }
}

template <typename T>
double clip_global_norm(std::vector<Tensor<T>>& grads, double max_norm) {
  double sq = 0.0;
  for (const auto& g : grads) {
    for (std::size_t k = 0; k < g.size(); ++k) sq += static_cast<double>(g[k]) * g[k];
  }
  const double norm = std::sqrt(sq);
  if (norm > max_norm) {
    const T s = static_cast<T>(max_norm / norm);
    for (auto& g : grads) {
      for (std::size_t k = 0; k < g.size(); ++k) g[k] *= s;
    }
  }
  return norm;
}

void LrSchedule::validate() const {
  if (!(max_lr > 0.0)) throw std::invalid_argument("schedule: max_lr must be positive");
  if (warmup_steps < 0 || warmup_steps >= total_steps) {
    throw std::invalid_argument("schedule: need 0 <= warmup_steps < total_steps");
  }
}

double LrSchedule::lr_at(std::int64_t step) const {
  if (step <= 0) return 0.0;
  if (step >= total_steps) return 0.0;
  if (step < warmup_steps) return max_lr * static_cast<double>(step) / warmup_steps;
  const double f =
      static_cast<double>(step - warmup_steps) / static_cast<double>(total_steps - warmup_steps);
  return max_lr * 0.5 * (1.0 + std::cos(std::numbers::pi * f));
}

template class ParamStore<float>;
template class ParamStore<double>;
template Tensor<float> truncated_normal<float>(int, int, double, Rng&);
template Tensor<double> truncated_normal<double>(int, int, double, Rng&);
template void adam_step<float>(ParamStore<float>&, const std::vector<Tensor<float>>&, double,
                               const AdamConfig&);
template void adam_step<double>(ParamStore<double>&, const std::vector<Tensor<double>>&, double,
                                const AdamConfig&);
template double clip_global_norm<float>(std::vector<Tensor<float>>&, double);
template double clip_global_norm<double>(std::vector<Tensor<double>>&, double);

}  // namespace polygen
