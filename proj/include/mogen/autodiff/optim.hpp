#pragma once

// Named parameter store and the AdamW update rule (decoupled weight decay).

#include <cmath>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "mogen/autodiff/rng.hpp"
#include "mogen/autodiff/tensor.hpp"
#include "mogen/kernels/kernels.hpp"

namespace mogen::ad {

// Ordered, named collection of trainable leaves. Order of creation defines
// checkpoint manifest order and optimizer state order.
template <typename T>
class ParamStore {
 public:
  Var<T> create(const std::string& name, Shape shape, std::vector<T> vals) {
    if (index_.count(name))
      throw std::invalid_argument("params: duplicate name '" + name + "'");
    auto v = Var<T>::leaf(std::move(shape), std::move(vals), true);
    index_[name] = params_.size();
    params_.emplace_back(name, v);
    return v;
  }

  Var<T> create_normal(const std::string& name, Shape shape, Rng& rng,
                       T stddev, T mean = T(0)) {
    std::vector<T> vals(static_cast<std::size_t>(numel_of(shape)));
    for (auto& x : vals) x = static_cast<T>(rng.normal(mean, stddev));
    return create(name, std::move(shape), std::move(vals));
  }

  Var<T> create_zeros(const std::string& name, Shape shape) {
    std::vector<T> vals(static_cast<std::size_t>(numel_of(shape)), T(0));
    return create(name, std::move(shape), std::move(vals));
  }

  Var<T> create_full(const std::string& name, Shape shape, T fill) {
    std::vector<T> vals(static_cast<std::size_t>(numel_of(shape)), fill);
    return create(name, std::move(shape), std::move(vals));
  }

  Var<T> get(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end())
      throw std::invalid_argument("params: unknown name '" + name + "'");
    return params_[it->second].second;
  }

  bool has(const std::string& name) const { return index_.count(name) != 0; }

  const std::vector<std::pair<std::string, Var<T>>>& entries() const {
    return params_;
  }

  std::vector<Var<T>> vars() const {
    std::vector<Var<T>> out;
    out.reserve(params_.size());
    for (const auto& [unused, v] : params_) out.push_back(v);
    return out;
  }

  void zero_grad() {
    for (auto& [unused, v] : params_) v.zero_grad();
  }

  std::int64_t total_elements() const {
    std::int64_t n = 0;
    for (const auto& [unused, v] : params_) n += v.numel();
    return n;
  }

 private:
  std::vector<std::pair<std::string, Var<T>>> params_;
  std::map<std::string, std::size_t> index_;
};

template <typename T>
struct AdamWConfig {
  T beta1 = T(0.9);
  T beta2 = T(0.99);
  T eps = T(1e-8);
  T weight_decay = T(0);
};

template <typename T>
class AdamW {
 public:
  AdamW(std::vector<Var<T>> params, AdamWConfig<T> cfg)
      : params_(std::move(params)), cfg_(cfg) {
    m_.resize(params_.size());
    v_.resize(params_.size());
    for (std::size_t i = 0; i < params_.size(); ++i) {
      m_[i].assign(static_cast<std::size_t>(params_[i].numel()), T(0));
      v_[i].assign(static_cast<std::size_t>(params_[i].numel()), T(0));
    }
  }

  // Applies one update. A non-finite gradient anywhere rejects the whole
  // step (moments and step count untouched) and bumps the skip counter.
  bool step(T lr) {
    for (const auto& p : params_)
      for (const T g : p.grad())
        if (!std::isfinite(g)) {
          ++skipped_;
          return false;
        }
    ++step_count_;
    const T bc1 = T(1) - std::pow(cfg_.beta1, static_cast<T>(step_count_));
    const T bc2 = T(1) - std::pow(cfg_.beta2, static_cast<T>(step_count_));
    const auto& k = kern::table<T>();
    for (std::size_t i = 0; i < params_.size(); ++i) {
      auto& p = params_[i];
      k.adamw(p.val().data(), p.grad().data(), m_[i].data(), v_[i].data(),
              p.val().size(), lr, cfg_.beta1, cfg_.beta2, cfg_.eps,
              cfg_.weight_decay, bc1, bc2);
    }
    return true;
  }

  void zero_grad() {
    for (auto& p : params_) p.zero_grad();
  }

  std::int64_t step_count() const { return step_count_; }
  std::int64_t skipped_steps() const { return skipped_; }

  std::vector<std::vector<T>>& moment1() { return m_; }
  std::vector<std::vector<T>>& moment2() { return v_; }
  void set_step_count(std::int64_t t) { step_count_ = t; }

 private:
  std::vector<Var<T>> params_;
  AdamWConfig<T> cfg_;
  std::vector<std::vector<T>> m_, v_;
  std::int64_t step_count_ = 0;
  std::int64_t skipped_ = 0;
};

}  // namespace mogen::ad
