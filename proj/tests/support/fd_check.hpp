#pragma once

#include <cmath>
#include <functional>
#include <vector>

#include "cbldm/nn/tape.hpp"
#include "cbldm/rng.hpp"

// Central finite-difference harness, run at double precision so roundoff
// stays far below the 1e-5 relative tolerance being verified.
namespace fdcheck {

using DTensor = cbldm::TensorT<double>;
using DVar = cbldm::VarT<double>;
using DTape = cbldm::TapeT<double>;
using Builder = std::function<DVar(DTape&, std::vector<DVar>&)>;

inline double eval_loss(const std::vector<DTensor>& inputs, const Builder& build) {
  DTape tape;
  std::vector<DVar> vars;
  vars.reserve(inputs.size());
  for (const auto& in : inputs) vars.push_back(tape.leaf(in));
  DVar loss = build(tape, vars);
  return tape.val(loss.id).data[0];
}

/// Max over all input elements of |analytic - central difference| relative
/// to max(|fd|, 1e-3); the floor makes near-zero gradients an absolute test.
inline double max_rel_error(std::vector<DTensor> inputs, const Builder& build,
                            double h = 1e-5) {
  DTape tape;
  std::vector<DVar> vars;
  vars.reserve(inputs.size());
  for (const auto& in : inputs) vars.push_back(tape.leaf(in));
  DVar loss = build(tape, vars);
  tape.backward(loss);
  std::vector<DTensor> analytic;
  analytic.reserve(vars.size());
  for (auto& v : vars) analytic.push_back(tape.grad(v));

  double worst = 0.0;
  for (size_t i = 0; i < inputs.size(); ++i) {
    for (size_t j = 0; j < inputs[i].numel(); ++j) {
      double keep = inputs[i].data[j];
      inputs[i].data[j] = keep + h;
      double fp = eval_loss(inputs, build);
      inputs[i].data[j] = keep - h;
      double fm = eval_loss(inputs, build);
      inputs[i].data[j] = keep;
      double fd = (fp - fm) / (2.0 * h);
      double rel = std::abs(analytic[i].data[j] - fd) / std::max(std::abs(fd), 1e-3);
      worst = std::max(worst, rel);
    }
  }
  return worst;
}

inline DTensor rand_tensor(cbldm::RngStream& rng, std::vector<int> shape,
                           double lo = -1.0, double hi = 1.0) {
  size_t n = cbldm::shape_numel(shape);
  std::vector<double> d(n);
  for (size_t i = 0; i < n; ++i) d[i] = lo + (hi - lo) * rng.uniform();
  return DTensor(std::move(shape), std::move(d));
}

/// Dot the op output against fixed random weights; a plain sum would be
/// blind to index permutation bugs.
inline DVar scalarize(DTape& tape, DVar out, const DTensor& weights) {
  DVar w = tape.leaf(weights);
  return cbldm::sum_all(cbldm::mul(out, w));
}

/// Runs the full primitive sweep; returns the worst relative error seen.
/// Shared by the unit tests and the acceptance gate.
inline double primitive_sweep() {
  using namespace cbldm;
  RngStream rng(2024);
  double worst = 0.0;
  auto track = [&](double e) { worst = std::max(worst, e); };

  {  // elementwise binary ops
    DTensor a = rand_tensor(rng, {3, 4});
    DTensor b = rand_tensor(rng, {3, 4});
    DTensor w = rand_tensor(rng, {3, 4});
    track(max_rel_error({a, b}, [&](DTape& t, std::vector<DVar>& v) {
      return scalarize(t, add(v[0], v[1]), w);
    }));
    track(max_rel_error({a, b}, [&](DTape& t, std::vector<DVar>& v) {
      return scalarize(t, sub(v[0], v[1]), w);
    }));
    track(max_rel_error({a, b}, [&](DTape& t, std::vector<DVar>& v) {
      return scalarize(t, mul(v[0], v[1]), w);
    }));
  }
  {  // elementwise unary, smooth
    DTensor a = rand_tensor(rng, {2, 5});
    DTensor w = rand_tensor(rng, {2, 5});
    auto unary = [&](DVar (*op)(DVar)) {
      return max_rel_error({a}, [&, op](DTape& t, std::vector<DVar>& v) {
        return scalarize(t, op(v[0]), w);
      });
    };
    track(unary(&neg<double>));
    track(unary(&exp_op<double>));
    track(unary(&tanh_op<double>));
    track(unary(&sigmoid<double>));
    track(unary(&silu<double>));
    track(max_rel_error({a}, [&](DTape& t, std::vector<DVar>& v) {
      return scalarize(t, scale(v[0], 1.7), w);
    }));
    track(max_rel_error({a}, [&](DTape& t, std::vector<DVar>& v) {
      return scalarize(t, add_const(v[0], -0.4), w);
    }));
  }
  {  // log needs positive input
    DTensor a = rand_tensor(rng, {6}, 0.5, 2.0);
    DTensor w = rand_tensor(rng, {6});
    track(max_rel_error({a}, [&](DTape& t, std::vector<DVar>& v) {
      return scalarize(t, log_op(v[0]), w);
    }));
  }
  {  // abs and clamp, sampled away from their kinks
    DTensor a = rand_tensor(rng, {8}, 0.2, 1.0);
    for (size_t i = 0; i < 8; i += 2) a.data[i] = -a.data[i];
    DTensor w = rand_tensor(rng, {8});
    track(max_rel_error({a}, [&](DTape& t, std::vector<DVar>& v) {
      return scalarize(t, abs_op(v[0]), w);
    }));
    // clamp to [-0.5, 0.5]: inputs lie in (0.2, 1.0) in magnitude, none
    // within h of the breakpoints
    track(max_rel_error({a}, [&](DTape& t, std::vector<DVar>& v) {
      return scalarize(t, clamp(v[0], -0.5, 0.5), w);
    }));
  }
  {  // shape ops
    DTensor a = rand_tensor(rng, {2, 3, 4});
    DTensor b = rand_tensor(rng, {2, 2, 4});
    DTensor w_cat = rand_tensor(rng, {2, 5, 4});
    track(max_rel_error({a, b}, [&](DTape& t, std::vector<DVar>& v) {
      return scalarize(t, concat(v[0], v[1], 1), w_cat);
    }));
    DTensor w_slc = rand_tensor(rng, {2, 2, 4});
    track(max_rel_error({a}, [&](DTape& t, std::vector<DVar>& v) {
      return scalarize(t, slice(v[0], 1, 1, 2), w_slc);
    }));
    DTensor w_rs = rand_tensor(rng, {6, 4});
    track(max_rel_error({a}, [&](DTape& t, std::vector<DVar>& v) {
      return scalarize(t, reshape(v[0], {6, 4}), w_rs);
    }));
    DTensor w_up = rand_tensor(rng, {2, 6, 8});
    track(max_rel_error({a}, [&](DTape& t, std::vector<DVar>& v) {
      return scalarize(t, upsample2x(v[0]), w_up);
    }));
  }
  {  // reductions
    DTensor a = rand_tensor(rng, {3, 3});
    DTensor one = DTensor::scalar(1.0);
    track(max_rel_error({a}, [&](DTape& t, std::vector<DVar>& v) {
      return scalarize(t, sum_all(v[0]), one);
    }));
    track(max_rel_error({a}, [&](DTape& t, std::vector<DVar>& v) {
      return scalarize(t, mean_all(v[0]), one);
    }));
  }
  {  // affine
    DTensor x = rand_tensor(rng, {5});
    DTensor W = rand_tensor(rng, {4, 5});
    DTensor b = rand_tensor(rng, {4});
    DTensor w = rand_tensor(rng, {4});
    track(max_rel_error({x, W, b}, [&](DTape& t, std::vector<DVar>& v) {
      return scalarize(t, affine(v[0], v[1], v[2]), w);
    }));
  }
  {  // conv1d, strided and padded
    DTensor x = rand_tensor(rng, {2, 9});
    DTensor k = rand_tensor(rng, {3, 2, 5});
    DTensor b = rand_tensor(rng, {3});
    DTensor w = rand_tensor(rng, {3, 5});
    track(max_rel_error({x, k, b}, [&](DTape& t, std::vector<DVar>& v) {
      return scalarize(t, conv1d(v[0], v[1], v[2], 2, 2), w);
    }));
  }
  {  // conv2d, stride 1 and stride 2
    DTensor x = rand_tensor(rng, {2, 5, 6});
    DTensor k = rand_tensor(rng, {3, 2, 3, 3});
    DTensor b = rand_tensor(rng, {3});
    DTensor w1 = rand_tensor(rng, {3, 5, 6});
    track(max_rel_error({x, k, b}, [&](DTape& t, std::vector<DVar>& v) {
      return scalarize(t, conv2d(v[0], v[1], v[2], 1, 1), w1);
    }));
    DTensor w2 = rand_tensor(rng, {3, 3, 3});
    track(max_rel_error({x, k, b}, [&](DTape& t, std::vector<DVar>& v) {
      return scalarize(t, conv2d(v[0], v[1], v[2], 2, 1), w2);
    }));
  }
  {  // add_channel broadcast
    DTensor x = rand_tensor(rng, {3, 4, 4});
    DTensor c = rand_tensor(rng, {3});
    DTensor w = rand_tensor(rng, {3, 4, 4});
    track(max_rel_error({x, c}, [&](DTape& t, std::vector<DVar>& v) {
      return scalarize(t, add_channel(v[0], v[1]), w);
    }));
  }
  {  // composite losses used by the models
    DTensor mu = rand_tensor(rng, {6});
    DTensor lv = rand_tensor(rng, {6}, -0.8, 0.8);
    DTensor mu2 = rand_tensor(rng, {6});
    DTensor lv2 = rand_tensor(rng, {6}, -0.8, 0.8);
    track(max_rel_error({mu, lv}, [&](DTape& t, std::vector<DVar>& v) {
      return kl_standard(v[0], v[1]);
    }));
    track(max_rel_error({mu, lv, mu2, lv2}, [&](DTape& t, std::vector<DVar>& v) {
      return kl_gaussians(v[0], v[1], v[2], v[3]);
    }));
    DTensor a = rand_tensor(rng, {7});
    DTensor b = rand_tensor(rng, {7});
    track(max_rel_error({a, b}, [&](DTape& t, std::vector<DVar>& v) {
      return mse_loss(v[0], v[1]);
    }));
    // keep |a-b| away from 0 so the L1 kink is not sampled
    DTensor b_off = b;
    for (auto& x : b_off.data) x += 3.0;
    track(max_rel_error({a, b_off}, [&](DTape& t, std::vector<DVar>& v) {
      return l1_loss(v[0], v[1]);
    }));
  }
  return worst;
}

}  // namespace fdcheck
