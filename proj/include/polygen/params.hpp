#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "polygen/rng.hpp"
#include "polygen/tensor.hpp"

namespace polygen {

/// Named parameters plus Adam moments and the update counter.
template <typename T>
class ParamStore {
 public:
  /// Registers a parameter; names must be unique.
  int add(std::string name, Tensor<T> init);
  /// -1 if absent.
  int find(std::string_view name) const;
  /// Throws std::out_of_range if absent.
  int index(std::string_view name) const;

  int size() const { return static_cast<int>(values_.size()); }
  const std::string& name(int i) const { return names_[i]; }
  Tensor<T>& value(int i) { return values_[i]; }
  const Tensor<T>& value(int i) const { return values_[i]; }
  Tensor<T>& m(int i) { return m_[i]; }
  const Tensor<T>& m(int i) const { return m_[i]; }
  Tensor<T>& v(int i) { return v_[i]; }
  const Tensor<T>& v(int i) const { return v_[i]; }
  std::int64_t step() const { return step_; }
  void set_step(std::int64_t s) { step_ = s; }

  std::size_t parameter_count() const;
  /// Zero tensors shaped like each parameter.
  std::vector<Tensor<T>> zeros_like() const;

  template <typename U>
  ParamStore<U> cast() const {
    ParamStore<U> out;
    for (int i = 0; i < size(); ++i) {
      const int j = out.add(names_[i], values_[i].template cast<U>());
      out.m(j) = m_[i].template cast<U>();
      out.v(j) = v_[i].template cast<U>();
    }
    out.set_step(step_);
    return out;
  }

 private:
  std::vector<std::string> names_;
  std::vector<Tensor<T>> values_;
  std::vector<Tensor<T>> m_;
  std::vector<Tensor<T>> v_;
  std::unordered_map<std::string, int> lookup_;
  std::int64_t step_ = 0;
};

/// Normal(0, std) truncated to two standard deviations.
template <typename T>
Tensor<T> truncated_normal(int rows, int cols, double std, Rng& rng);

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// One bias-corrected Adam update; increments the store's step first.
template <typename T>
void adam_step(ParamStore<T>& store, const std::vector<Tensor<T>>& grads, double lr,
               const AdamConfig& cfg = {});

/// Scales grads by max_norm / g when the global L2 norm g exceeds max_norm.
/// Returns g (before clipping).
template <typename T>
double clip_global_norm(std::vector<Tensor<T>>& grads, double max_norm = 1.0);

struct LrSchedule {
  double max_lr = 3e-4;
  std::int64_t warmup_steps = 500;
  std::int64_t total_steps = 10000;

  /// Throws std::invalid_argument unless 0 <= warmup < total and max_lr > 0.
  void validate() const;
  /// Linear ramp 0 -> max_lr over warmup, then cosine down to 0 at total.
  double lr_at(std::int64_t step) const;
};

}  // namespace polygen
