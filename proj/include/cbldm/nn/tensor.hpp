#pragma once

#include <vector>

#include "cbldm/common.hpp"
#include "cbldm/rng.hpp"

namespace cbldm {

inline size_t shape_numel(const std::vector<int>& shape) {
  size_t n = 1;
  for (int d : shape) {
    require(d > 0, "tensor: nonpositive dimension");
    n *= size_t(d);
  }
  return n;
}

/// Dense row-major tensor with value semantics. S is float in the product;
/// double instantiations exist for finite-difference gradient oracles.
template <typename S>
struct TensorT {
  std::vector<int> shape;
  std::vector<S> data;

  TensorT() = default;
  TensorT(std::vector<int> sh, std::vector<S> d)
      : shape(std::move(sh)), data(std::move(d)) {
    require(data.size() == shape_numel(shape),
            "tensor: data length does not match shape");
  }

  static TensorT zeros(std::vector<int> sh) {
    size_t n = shape_numel(sh);
    return TensorT(std::move(sh), std::vector<S>(n, S(0)));
  }
  static TensorT full(std::vector<int> sh, S v) {
    size_t n = shape_numel(sh);
    return TensorT(std::move(sh), std::vector<S>(n, v));
  }
  static TensorT scalar(S v) { return TensorT({1}, {v}); }

  size_t numel() const { return data.size(); }
  int dim(size_t i) const { return shape[i]; }
  size_t rank() const { return shape.size(); }
};

template <typename S>
TensorT<S> sample_gaussian(RngStream& rng, std::vector<int> shape) {
  size_t n = shape_numel(shape);
  std::vector<S> d(n);
  for (size_t i = 0; i < n; ++i) d[i] = S(rng.normal());
  return TensorT<S>(std::move(shape), std::move(d));
}

using Tensor = TensorT<float>;

}  // namespace cbldm
