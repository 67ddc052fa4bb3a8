#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "cbldm/nn/optim.hpp"
#include "cbldm/nn/tape.hpp"
#include "cbldm/rng.hpp"

namespace cbldm {

// He-style fan-in init; fan_in is everything past the output dim
template <typename S>
TensorT<S> init_weight(RngStream& rng, const std::vector<int>& shape) {
  long long fan_in = 1;
  for (size_t k = 1; k < shape.size(); ++k) fan_in *= shape[size_t(k)];
  TensorT<S> w = sample_gaussian<S>(rng, shape);
  S scale = S(std::sqrt(2.0 / double(fan_in)));
  for (S& v : w.data) v *= scale;
  return w;
}

// Registration helper: adds weight + bias pairs with deterministic init and
// returns the index of the weight in the store's bind order.
template <typename S>
struct ParamBuilder {
  ParamStoreT<S>& store;
  RngStream& rng;
  int count = 0;

  int weight(const std::string& name, const std::vector<int>& shape) {
    store.add(name, init_weight<S>(rng, shape));
    return count++;
  }
  int zeros(const std::string& name, const std::vector<int>& shape) {
    store.add(name, TensorT<S>::zeros(shape));
    return count++;
  }
  int constant(const std::string& name, const std::vector<int>& shape, S v) {
    TensorT<S> t = TensorT<S>::zeros(shape);
    for (S& x : t.data) x = v;
    store.add(name, std::move(t));
    return count++;
  }
};

// x + conv(silu(conv(silu(x)))), both convs 3x3 same-channel
template <typename S>
VarT<S> resblock2d(TapeT<S>& t, VarT<S> x, VarT<S> w1, VarT<S> b1, VarT<S> w2,
                   VarT<S> b2) {
  VarT<S> h = conv2d(silu(x), w1, b1, 1, 1);
  h = conv2d(silu(h), w2, b2, 1, 1);
  return add(x, h);
}

// sinusoidal position features for an integer step, sin half then cos half
template <typename S>
TensorT<S> sinusoidal_embedding(int t, int dim) {
  require(dim >= 2 && dim % 2 == 0, "time embedding: dim must be even");
  const int half = dim / 2;
  TensorT<S> out = TensorT<S>::zeros({dim});
  for (int i = 0; i < half; ++i) {
    double freq = std::exp(-std::log(10000.0) * double(i) /
                           double(half > 1 ? half - 1 : 1));
    out.data[size_t(i)] = S(std::sin(t * freq));
    out.data[size_t(half + i)] = S(std::cos(t * freq));
  }
  return out;
}

// float <-> double tensor conversions at module boundaries
template <typename To, typename From>
TensorT<To> tensor_cast(const TensorT<From>& x) {
  TensorT<To> out = TensorT<To>::zeros(x.shape);
  for (size_t k = 0; k < x.data.size(); ++k) out.data[k] = To(x.data[k]);
  return out;
}

}  // namespace cbldm
