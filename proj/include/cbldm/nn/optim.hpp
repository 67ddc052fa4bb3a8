#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "cbldm/nn/tape.hpp"

namespace cbldm {

/// Ordered, named parameter set. Binding order onto a tape is the insertion
/// order, which also fixes the checkpoint tensor order.
template <typename S>
class ParamStoreT {
 public:
  struct Item {
    std::string name;
    TensorT<S> value;
  };

  int add(std::string name, TensorT<S> value) {
    for (const Item& it : items_)
      require(it.name != name, "params: duplicate name " + name);
    items_.push_back(Item{std::move(name), std::move(value)});
    return int(items_.size()) - 1;
  }

  size_t size() const { return items_.size(); }
  Item& item(int i) { return items_[size_t(i)]; }
  const Item& item(int i) const { return items_[size_t(i)]; }

  int find(const std::string& name) const {
    for (size_t i = 0; i < items_.size(); ++i)
      if (items_[i].name == name) return int(i);
    return -1;
  }

  /// One leaf per parameter, in order. Gradients are read back per index.
  std::vector<VarT<S>> bind(TapeT<S>& tape) const {
    std::vector<VarT<S>> vars;
    vars.reserve(items_.size());
    for (const Item& it : items_) vars.push_back(tape.leaf(it.value));
    return vars;
  }

  std::vector<TensorT<S>> collect_grads(const TapeT<S>& tape,
                                        const std::vector<VarT<S>>& bound) const {
    require(bound.size() == items_.size(), "params: bound var count mismatch");
    std::vector<TensorT<S>> grads;
    grads.reserve(bound.size());
    for (const VarT<S>& v : bound) grads.push_back(tape.grad(v));
    return grads;
  }

 private:
  std::vector<Item> items_;
};

struct AdamWConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0;
};

/// Adam with decoupled weight decay. Moments kept in float32, per-element
/// update math in double so the result is deterministic across platforms.
template <typename S>
class AdamWT {
 public:
  explicit AdamWT(AdamWConfig cfg) : cfg_(cfg) {}

  int step_count() const { return t_; }

  /// Mutable so training drivers can run learning-rate schedules.
  AdamWConfig& config() { return cfg_; }

  void step(ParamStoreT<S>& params, const std::vector<TensorT<S>>& grads) {
    require(grads.size() == params.size(), "optimizer: gradient count mismatch");
    if (m_.empty()) {
      m_.resize(params.size());
      v_.resize(params.size());
      for (size_t i = 0; i < params.size(); ++i) {
        size_t n = params.item(int(i)).value.numel();
        m_[i].assign(n, 0.0f);
        v_[i].assign(n, 0.0f);
      }
    }
    for (size_t i = 0; i < grads.size(); ++i) {
      require(grads[i].shape == params.item(int(i)).value.shape,
              "optimizer: gradient shape mismatch for " + params.item(int(i)).name);
      for (S g : grads[i].data)
        require(std::isfinite(double(g)),
                "optimizer: non-finite gradient in " + params.item(int(i)).name);
    }
    ++t_;
    double bc1 = 1.0 - std::pow(cfg_.beta1, double(t_));
    double bc2 = 1.0 - std::pow(cfg_.beta2, double(t_));
    for (size_t i = 0; i < grads.size(); ++i) {
      TensorT<S>& p = params.item(int(i)).value;
      for (size_t j = 0; j < p.numel(); ++j) {
        double g = double(grads[i].data[j]);
        double m = cfg_.beta1 * double(m_[i][j]) + (1.0 - cfg_.beta1) * g;
        double v = cfg_.beta2 * double(v_[i][j]) + (1.0 - cfg_.beta2) * g * g;
        m_[i][j] = float(m);
        v_[i][j] = float(v);
        double update = (m / bc1) / (std::sqrt(v / bc2) + cfg_.eps);
        double next = double(p.data[j]) - cfg_.lr * update -
                      cfg_.lr * cfg_.weight_decay * double(p.data[j]);
        p.data[j] = S(next);
      }
    }
  }

 private:
  AdamWConfig cfg_;
  int t_ = 0;
  std::vector<std::vector<float>> m_, v_;
};

using ParamStore = ParamStoreT<float>;
using AdamW = AdamWT<float>;

}  // namespace cbldm
