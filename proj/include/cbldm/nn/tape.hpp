#pragma once

#include <cmath>
#include <functional>
#include <utility>
#include <vector>

#include "cbldm/nn/tensor.hpp"

namespace cbldm {

template <typename S>
class TapeT;

/// Handle to a node on a tape. Cheap to copy; valid as long as the tape lives.
template <typename S>
struct VarT {
  TapeT<S>* tape = nullptr;
  int id = -1;

  const TensorT<S>& val() const { return tape->val(id); }
  const std::vector<int>& shape() const { return val().shape; }
};

/// Define-by-run reverse-mode tape. Node ids are topological by construction,
/// so the backward pass is a single reverse sweep.
template <typename S>
class TapeT {
 public:
  using BackwardFn = std::function<void(TapeT&, int)>;

  int push(TensorT<S> value, BackwardFn bw, const char* op) {
    nodes_.push_back(Node{std::move(value), std::move(bw), op});
    return int(nodes_.size()) - 1;
  }

  /// New leaf holding a copy of v. Leaves have no backward; constants and
  /// parameters are both leaves, the caller keeps track of which is which.
  VarT<S> leaf(TensorT<S> v) {
    return VarT<S>{this, push(std::move(v), nullptr, "leaf")};
  }

  const TensorT<S>& val(int id) const { return nodes_[size_t(id)].value; }
  const char* op_name(int id) const { return nodes_[size_t(id)].op; }
  size_t size() const { return nodes_.size(); }

  /// Gradient of the last backward() loss w.r.t. node id. Zero for nodes
  /// that do not participate in the loss.
  const TensorT<S>& grad(int id) const { return grads_[size_t(id)]; }
  const TensorT<S>& grad(VarT<S> v) const { return grads_[size_t(v.id)]; }
  TensorT<S>& grad_ref(int id) { return grads_[size_t(id)]; }

  void backward(VarT<S> loss) {
    require(loss.tape == this, "backward: var belongs to another tape");
    require(val(loss.id).numel() == 1, "backward: loss must be scalar");
    grads_.clear();
    grads_.reserve(nodes_.size());
    for (const Node& n : nodes_) grads_.push_back(TensorT<S>::zeros(n.value.shape));
    grads_[size_t(loss.id)].data[0] = S(1);
    for (int i = loss.id; i >= 0; --i) {
      if (nodes_[size_t(i)].bw) nodes_[size_t(i)].bw(*this, i);
    }
  }

 private:
  struct Node {
    TensorT<S> value;
    BackwardFn bw;
    const char* op;
  };
  std::vector<Node> nodes_;
  std::vector<TensorT<S>> grads_;
};

namespace detail {

template <typename S>
TapeT<S>& same_tape(VarT<S> a, VarT<S> b, const char* op) {
  require(a.tape != nullptr && a.tape == b.tape,
          std::string(op) + ": vars on different tapes");
  return *a.tape;
}

}  // namespace detail

// ---- elementwise arithmetic ----

template <typename S>
VarT<S> add(VarT<S> a, VarT<S> b) {
  TapeT<S>& t = detail::same_tape(a, b, "add");
  const TensorT<S>& av = t.val(a.id);
  const TensorT<S>& bv = t.val(b.id);
  require(av.shape == bv.shape, "add: shape mismatch");
  TensorT<S> out = av;
  for (size_t i = 0; i < out.numel(); ++i) out.data[i] += bv.data[i];
  int aid = a.id, bid = b.id;
  int id = t.push(std::move(out),
                  [aid, bid](TapeT<S>& t, int self) {
                    const TensorT<S>& g = t.grad(self);
                    TensorT<S>& ga = t.grad_ref(aid);
                    TensorT<S>& gb = t.grad_ref(bid);
                    for (size_t i = 0; i < g.numel(); ++i) {
                      ga.data[i] += g.data[i];
                      gb.data[i] += g.data[i];
                    }
                  },
                  "add");
  return VarT<S>{&t, id};
}

template <typename S>
VarT<S> sub(VarT<S> a, VarT<S> b) {
  TapeT<S>& t = detail::same_tape(a, b, "sub");
  const TensorT<S>& av = t.val(a.id);
  const TensorT<S>& bv = t.val(b.id);
  require(av.shape == bv.shape, "sub: shape mismatch");
  TensorT<S> out = av;
  for (size_t i = 0; i < out.numel(); ++i) out.data[i] -= bv.data[i];
  int aid = a.id, bid = b.id;
  int id = t.push(std::move(out),
                  [aid, bid](TapeT<S>& t, int self) {
                    const TensorT<S>& g = t.grad(self);
                    TensorT<S>& ga = t.grad_ref(aid);
                    TensorT<S>& gb = t.grad_ref(bid);
                    for (size_t i = 0; i < g.numel(); ++i) {
                      ga.data[i] += g.data[i];
                      gb.data[i] -= g.data[i];
                    }
                  },
                  "sub");
  return VarT<S>{&t, id};
}

template <typename S>
VarT<S> mul(VarT<S> a, VarT<S> b) {
  TapeT<S>& t = detail::same_tape(a, b, "mul");
  const TensorT<S>& av = t.val(a.id);
  const TensorT<S>& bv = t.val(b.id);
  require(av.shape == bv.shape, "mul: shape mismatch");
  TensorT<S> out = av;
  for (size_t i = 0; i < out.numel(); ++i) out.data[i] *= bv.data[i];
  int aid = a.id, bid = b.id;
  int id = t.push(std::move(out),
                  [aid, bid](TapeT<S>& t, int self) {
                    const TensorT<S>& g = t.grad(self);
                    const TensorT<S>& av = t.val(aid);
                    const TensorT<S>& bv = t.val(bid);
                    TensorT<S>& ga = t.grad_ref(aid);
                    TensorT<S>& gb = t.grad_ref(bid);
                    for (size_t i = 0; i < g.numel(); ++i) {
                      ga.data[i] += g.data[i] * bv.data[i];
                      gb.data[i] += g.data[i] * av.data[i];
                    }
                  },
                  "mul");
  return VarT<S>{&t, id};
}

template <typename S>
VarT<S> neg(VarT<S> a) {
  TapeT<S>& t = *a.tape;
  TensorT<S> out = t.val(a.id);
  for (S& v : out.data) v = -v;
  int aid = a.id;
  int id = t.push(std::move(out),
                  [aid](TapeT<S>& t, int self) {
                    const TensorT<S>& g = t.grad(self);
                    TensorT<S>& ga = t.grad_ref(aid);
                    for (size_t i = 0; i < g.numel(); ++i) ga.data[i] -= g.data[i];
                  },
                  "neg");
  return VarT<S>{&t, id};
}

template <typename S>
VarT<S> scale(VarT<S> a, S c) {
  TapeT<S>& t = *a.tape;
  TensorT<S> out = t.val(a.id);
  for (S& v : out.data) v *= c;
  int aid = a.id;
  int id = t.push(std::move(out),
                  [aid, c](TapeT<S>& t, int self) {
                    const TensorT<S>& g = t.grad(self);
                    TensorT<S>& ga = t.grad_ref(aid);
                    for (size_t i = 0; i < g.numel(); ++i) ga.data[i] += c * g.data[i];
                  },
                  "scale");
  return VarT<S>{&t, id};
}

template <typename S>
VarT<S> add_const(VarT<S> a, S c) {
  TapeT<S>& t = *a.tape;
  TensorT<S> out = t.val(a.id);
  for (S& v : out.data) v += c;
  int aid = a.id;
  int id = t.push(std::move(out),
                  [aid](TapeT<S>& t, int self) {
                    const TensorT<S>& g = t.grad(self);
                    TensorT<S>& ga = t.grad_ref(aid);
                    for (size_t i = 0; i < g.numel(); ++i) ga.data[i] += g.data[i];
                  },
                  "add_const");
  return VarT<S>{&t, id};
}

// ---- elementwise transcendental / activation ----

template <typename S>
VarT<S> exp_op(VarT<S> a) {
  TapeT<S>& t = *a.tape;
  TensorT<S> out = t.val(a.id);
  for (S& v : out.data) v = std::exp(v);
  int aid = a.id;
  int id = t.push(std::move(out),
                  [aid](TapeT<S>& t, int self) {
                    const TensorT<S>& g = t.grad(self);
                    const TensorT<S>& y = t.val(self);
                    TensorT<S>& ga = t.grad_ref(aid);
                    for (size_t i = 0; i < g.numel(); ++i)
                      ga.data[i] += g.data[i] * y.data[i];
                  },
                  "exp");
  return VarT<S>{&t, id};
}

template <typename S>
VarT<S> log_op(VarT<S> a) {
  TapeT<S>& t = *a.tape;
  TensorT<S> out = t.val(a.id);
  for (S& v : out.data) {
    require(v > S(0), "log: nonpositive input");
    v = std::log(v);
  }
  int aid = a.id;
  int id = t.push(std::move(out),
                  [aid](TapeT<S>& t, int self) {
                    const TensorT<S>& g = t.grad(self);
                    const TensorT<S>& x = t.val(aid);
                    TensorT<S>& ga = t.grad_ref(aid);
                    for (size_t i = 0; i < g.numel(); ++i)
                      ga.data[i] += g.data[i] / x.data[i];
                  },
                  "log");
  return VarT<S>{&t, id};
}

template <typename S>
VarT<S> tanh_op(VarT<S> a) {
  TapeT<S>& t = *a.tape;
  TensorT<S> out = t.val(a.id);
  for (S& v : out.data) v = std::tanh(v);
  int aid = a.id;
  int id = t.push(std::move(out),
                  [aid](TapeT<S>& t, int self) {
                    const TensorT<S>& g = t.grad(self);
                    const TensorT<S>& y = t.val(self);
                    TensorT<S>& ga = t.grad_ref(aid);
                    for (size_t i = 0; i < g.numel(); ++i)
                      ga.data[i] += g.data[i] * (S(1) - y.data[i] * y.data[i]);
                  },
                  "tanh");
  return VarT<S>{&t, id};
}

template <typename S>
VarT<S> sigmoid(VarT<S> a) {
  TapeT<S>& t = *a.tape;
  TensorT<S> out = t.val(a.id);
  for (S& v : out.data) v = S(1) / (S(1) + std::exp(-v));
  int aid = a.id;
  int id = t.push(std::move(out),
                  [aid](TapeT<S>& t, int self) {
                    const TensorT<S>& g = t.grad(self);
                    const TensorT<S>& y = t.val(self);
                    TensorT<S>& ga = t.grad_ref(aid);
                    for (size_t i = 0; i < g.numel(); ++i)
                      ga.data[i] += g.data[i] * y.data[i] * (S(1) - y.data[i]);
                  },
                  "sigmoid");
  return VarT<S>{&t, id};
}

template <typename S>
VarT<S> silu(VarT<S> a) {
  TapeT<S>& t = *a.tape;
  TensorT<S> out = t.val(a.id);
  for (S& v : out.data) v = v / (S(1) + std::exp(-v));
  int aid = a.id;
  int id = t.push(std::move(out),
                  [aid](TapeT<S>& t, int self) {
                    const TensorT<S>& g = t.grad(self);
                    const TensorT<S>& x = t.val(aid);
                    TensorT<S>& ga = t.grad_ref(aid);
                    for (size_t i = 0; i < g.numel(); ++i) {
                      S s = S(1) / (S(1) + std::exp(-x.data[i]));
                      ga.data[i] += g.data[i] * s * (S(1) + x.data[i] * (S(1) - s));
                    }
                  },
                  "silu");
  return VarT<S>{&t, id};
}

template <typename S>
VarT<S> abs_op(VarT<S> a) {
  TapeT<S>& t = *a.tape;
  TensorT<S> out = t.val(a.id);
  for (S& v : out.data) v = std::abs(v);
  int aid = a.id;
  int id = t.push(std::move(out),
                  [aid](TapeT<S>& t, int self) {
                    const TensorT<S>& g = t.grad(self);
                    const TensorT<S>& x = t.val(aid);
                    TensorT<S>& ga = t.grad_ref(aid);
                    for (size_t i = 0; i < g.numel(); ++i) {
                      S s = x.data[i] > S(0) ? S(1) : (x.data[i] < S(0) ? S(-1) : S(0));
                      ga.data[i] += g.data[i] * s;
                    }
                  },
                  "abs");
  return VarT<S>{&t, id};
}

/// Gradient passes inside [lo, hi] inclusive, zero outside.
template <typename S>
VarT<S> clamp(VarT<S> a, S lo, S hi) {
  require(lo <= hi, "clamp: lo > hi");
  TapeT<S>& t = *a.tape;
  TensorT<S> out = t.val(a.id);
  for (S& v : out.data) v = v < lo ? lo : (v > hi ? hi : v);
  int aid = a.id;
  int id = t.push(std::move(out),
                  [aid, lo, hi](TapeT<S>& t, int self) {
                    const TensorT<S>& g = t.grad(self);
                    const TensorT<S>& x = t.val(aid);
                    TensorT<S>& ga = t.grad_ref(aid);
                    for (size_t i = 0; i < g.numel(); ++i) {
                      if (x.data[i] >= lo && x.data[i] <= hi) ga.data[i] += g.data[i];
                    }
                  },
                  "clamp");
  return VarT<S>{&t, id};
}

// ---- shape ops ----

template <typename S>
VarT<S> reshape(VarT<S> a, std::vector<int> new_shape) {
  TapeT<S>& t = *a.tape;
  const TensorT<S>& av = t.val(a.id);
  require(shape_numel(new_shape) == av.numel(), "reshape: element count mismatch");
  TensorT<S> out(std::move(new_shape), av.data);
  int aid = a.id;
  int id = t.push(std::move(out),
                  [aid](TapeT<S>& t, int self) {
                    const TensorT<S>& g = t.grad(self);
                    TensorT<S>& ga = t.grad_ref(aid);
                    for (size_t i = 0; i < g.numel(); ++i) ga.data[i] += g.data[i];
                  },
                  "reshape");
  return VarT<S>{&t, id};
}

template <typename S>
VarT<S> concat(VarT<S> a, VarT<S> b, int axis) {
  TapeT<S>& t = detail::same_tape(a, b, "concat");
  const TensorT<S>& av = t.val(a.id);
  const TensorT<S>& bv = t.val(b.id);
  require(av.rank() == bv.rank(), "concat: rank mismatch");
  require(axis >= 0 && size_t(axis) < av.rank(), "concat: axis out of range");
  for (size_t i = 0; i < av.rank(); ++i)
    require(int(i) == axis || av.shape[i] == bv.shape[i], "concat: shape mismatch");

  size_t outer = 1, inner = 1;
  for (int i = 0; i < axis; ++i) outer *= size_t(av.shape[size_t(i)]);
  for (size_t i = size_t(axis) + 1; i < av.rank(); ++i) inner *= size_t(av.shape[i]);
  size_t a_ax = size_t(av.shape[size_t(axis)]);
  size_t b_ax = size_t(bv.shape[size_t(axis)]);

  std::vector<int> osh = av.shape;
  osh[size_t(axis)] = int(a_ax + b_ax);
  TensorT<S> out = TensorT<S>::zeros(osh);
  for (size_t o = 0; o < outer; ++o) {
    S* dst = out.data.data() + o * (a_ax + b_ax) * inner;
    const S* pa = av.data.data() + o * a_ax * inner;
    const S* pb = bv.data.data() + o * b_ax * inner;
    for (size_t i = 0; i < a_ax * inner; ++i) dst[i] = pa[i];
    for (size_t i = 0; i < b_ax * inner; ++i) dst[a_ax * inner + i] = pb[i];
  }
  int aid = a.id, bid = b.id;
  int id = t.push(std::move(out),
                  [aid, bid, outer, inner, a_ax, b_ax](TapeT<S>& t, int self) {
                    const TensorT<S>& g = t.grad(self);
                    TensorT<S>& ga = t.grad_ref(aid);
                    TensorT<S>& gb = t.grad_ref(bid);
                    for (size_t o = 0; o < outer; ++o) {
                      const S* src = g.data.data() + o * (a_ax + b_ax) * inner;
                      S* pa = ga.data.data() + o * a_ax * inner;
                      S* pb = gb.data.data() + o * b_ax * inner;
                      for (size_t i = 0; i < a_ax * inner; ++i) pa[i] += src[i];
                      for (size_t i = 0; i < b_ax * inner; ++i)
                        pb[i] += src[a_ax * inner + i];
                    }
                  },
                  "concat");
  return VarT<S>{&t, id};
}

template <typename S>
VarT<S> slice(VarT<S> a, int axis, int start, int len) {
  TapeT<S>& t = *a.tape;
  const TensorT<S>& av = t.val(a.id);
  require(axis >= 0 && size_t(axis) < av.rank(), "slice: axis out of range");
  require(start >= 0 && len > 0 && start + len <= av.shape[size_t(axis)],
          "slice: range out of bounds");

  size_t outer = 1, inner = 1;
  for (int i = 0; i < axis; ++i) outer *= size_t(av.shape[size_t(i)]);
  for (size_t i = size_t(axis) + 1; i < av.rank(); ++i) inner *= size_t(av.shape[i]);
  size_t ax = size_t(av.shape[size_t(axis)]);

  std::vector<int> osh = av.shape;
  osh[size_t(axis)] = len;
  TensorT<S> out = TensorT<S>::zeros(osh);
  for (size_t o = 0; o < outer; ++o) {
    const S* src = av.data.data() + (o * ax + size_t(start)) * inner;
    S* dst = out.data.data() + o * size_t(len) * inner;
    for (size_t i = 0; i < size_t(len) * inner; ++i) dst[i] = src[i];
  }
  int aid = a.id;
  size_t ustart = size_t(start), ulen = size_t(len);
  int id = t.push(std::move(out),
                  [aid, outer, inner, ax, ustart, ulen](TapeT<S>& t, int self) {
                    const TensorT<S>& g = t.grad(self);
                    TensorT<S>& ga = t.grad_ref(aid);
                    for (size_t o = 0; o < outer; ++o) {
                      S* dst = ga.data.data() + (o * ax + ustart) * inner;
                      const S* src = g.data.data() + o * ulen * inner;
                      for (size_t i = 0; i < ulen * inner; ++i) dst[i] += src[i];
                    }
                  },
                  "slice");
  return VarT<S>{&t, id};
}

// ---- reductions (64-bit accumulation) ----

template <typename S>
VarT<S> sum_all(VarT<S> a) {
  TapeT<S>& t = *a.tape;
  const TensorT<S>& av = t.val(a.id);
  double acc = 0.0;
  for (S v : av.data) acc += double(v);
  int aid = a.id;
  int id = t.push(TensorT<S>::scalar(S(acc)),
                  [aid](TapeT<S>& t, int self) {
                    S g0 = t.grad(self).data[0];
                    TensorT<S>& ga = t.grad_ref(aid);
                    for (size_t i = 0; i < ga.numel(); ++i) ga.data[i] += g0;
                  },
                  "sum_all");
  return VarT<S>{&t, id};
}

template <typename S>
VarT<S> mean_all(VarT<S> a) {
  TapeT<S>& t = *a.tape;
  const TensorT<S>& av = t.val(a.id);
  double acc = 0.0;
  for (S v : av.data) acc += double(v);
  double n = double(av.numel());
  int aid = a.id;
  int id = t.push(TensorT<S>::scalar(S(acc / n)),
                  [aid, n](TapeT<S>& t, int self) {
                    S g0 = S(double(t.grad(self).data[0]) / n);
                    TensorT<S>& ga = t.grad_ref(aid);
                    for (size_t i = 0; i < ga.numel(); ++i) ga.data[i] += g0;
                  },
                  "mean_all");
  return VarT<S>{&t, id};
}

// ---- linear layers ----

/// y = W x + b with x: [in], W: [out, in], b: [out].
template <typename S>
VarT<S> affine(VarT<S> x, VarT<S> W, VarT<S> b) {
  TapeT<S>& t = detail::same_tape(x, W, "affine");
  detail::same_tape(x, b, "affine");
  const TensorT<S>& xv = t.val(x.id);
  const TensorT<S>& wv = t.val(W.id);
  const TensorT<S>& bv = t.val(b.id);
  require(xv.rank() == 1 && wv.rank() == 2 && bv.rank() == 1,
          "affine: expected ranks x:1 W:2 b:1");
  int nout = wv.shape[0], nin = wv.shape[1];
  require(xv.shape[0] == nin && bv.shape[0] == nout, "affine: shape mismatch");

  TensorT<S> out = TensorT<S>::zeros({nout});
  for (int o = 0; o < nout; ++o) {
    S acc = bv.data[size_t(o)];
    const S* wrow = wv.data.data() + size_t(o) * size_t(nin);
    for (int i = 0; i < nin; ++i) acc += wrow[i] * xv.data[size_t(i)];
    out.data[size_t(o)] = acc;
  }
  int xid = x.id, wid = W.id, bid = b.id;
  int id = t.push(std::move(out),
                  [xid, wid, bid, nout, nin](TapeT<S>& t, int self) {
                    const TensorT<S>& g = t.grad(self);
                    const TensorT<S>& xv = t.val(xid);
                    const TensorT<S>& wv = t.val(wid);
                    TensorT<S>& gx = t.grad_ref(xid);
                    TensorT<S>& gw = t.grad_ref(wid);
                    TensorT<S>& gb = t.grad_ref(bid);
                    for (int o = 0; o < nout; ++o) {
                      S go = g.data[size_t(o)];
                      gb.data[size_t(o)] += go;
                      const S* wrow = wv.data.data() + size_t(o) * size_t(nin);
                      S* gwrow = gw.data.data() + size_t(o) * size_t(nin);
                      for (int i = 0; i < nin; ++i) {
                        gx.data[size_t(i)] += go * wrow[i];
                        gwrow[i] += go * xv.data[size_t(i)];
                      }
                    }
                  },
                  "affine");
  return VarT<S>{&t, id};
}

/// 2-D convolution. x: [IC, H, W], w: [OC, IC, KH, KW], b: [OC].
template <typename S>
VarT<S> conv2d(VarT<S> x, VarT<S> w, VarT<S> b, int stride, int pad) {
  TapeT<S>& t = detail::same_tape(x, w, "conv2d");
  detail::same_tape(x, b, "conv2d");
  const TensorT<S>& xv = t.val(x.id);
  const TensorT<S>& wv = t.val(w.id);
  const TensorT<S>& bv = t.val(b.id);
  require(xv.rank() == 3 && wv.rank() == 4 && bv.rank() == 1,
          "conv2d: expected ranks x:3 w:4 b:1");
  require(stride >= 1 && pad >= 0, "conv2d: bad stride/pad");
  int IC = xv.shape[0], H = xv.shape[1], W = xv.shape[2];
  int OC = wv.shape[0], KH = wv.shape[2], KW = wv.shape[3];
  require(wv.shape[1] == IC, "conv2d: channel mismatch");
  require(bv.shape[0] == OC, "conv2d: bias mismatch");
  int OH = (H + 2 * pad - KH) / stride + 1;
  int OW = (W + 2 * pad - KW) / stride + 1;
  require(OH >= 1 && OW >= 1 && H + 2 * pad >= KH && W + 2 * pad >= KW,
          "conv2d: kernel larger than padded input");

  TensorT<S> out = TensorT<S>::zeros({OC, OH, OW});
  for (int oc = 0; oc < OC; ++oc)
    for (int oh = 0; oh < OH; ++oh)
      for (int ow = 0; ow < OW; ++ow) {
        S acc = bv.data[size_t(oc)];
        for (int ic = 0; ic < IC; ++ic) {
          const S* xc = xv.data.data() + size_t(ic) * size_t(H) * size_t(W);
          const S* wc = wv.data.data() +
                        (size_t(oc) * size_t(IC) + size_t(ic)) * size_t(KH) * size_t(KW);
          for (int kh = 0; kh < KH; ++kh) {
            int ih = oh * stride + kh - pad;
            if (ih < 0 || ih >= H) continue;
            for (int kw = 0; kw < KW; ++kw) {
              int iw = ow * stride + kw - pad;
              if (iw < 0 || iw >= W) continue;
              acc += wc[kh * KW + kw] * xc[ih * W + iw];
            }
          }
        }
        out.data[(size_t(oc) * size_t(OH) + size_t(oh)) * size_t(OW) + size_t(ow)] = acc;
      }

  int xid = x.id, wid = w.id, bid = b.id;
  int id = t.push(
      std::move(out),
      [xid, wid, bid, IC, H, W, OC, KH, KW, OH, OW, stride, pad](TapeT<S>& t, int self) {
        const TensorT<S>& g = t.grad(self);
        const TensorT<S>& xv = t.val(xid);
        const TensorT<S>& wv = t.val(wid);
        TensorT<S>& gx = t.grad_ref(xid);
        TensorT<S>& gw = t.grad_ref(wid);
        TensorT<S>& gb = t.grad_ref(bid);
        for (int oc = 0; oc < OC; ++oc)
          for (int oh = 0; oh < OH; ++oh)
            for (int ow = 0; ow < OW; ++ow) {
              S go = g.data[(size_t(oc) * size_t(OH) + size_t(oh)) * size_t(OW) +
                            size_t(ow)];
              gb.data[size_t(oc)] += go;
              for (int ic = 0; ic < IC; ++ic) {
                const S* xc = xv.data.data() + size_t(ic) * size_t(H) * size_t(W);
                S* gxc = gx.data.data() + size_t(ic) * size_t(H) * size_t(W);
                size_t wbase =
                    (size_t(oc) * size_t(IC) + size_t(ic)) * size_t(KH) * size_t(KW);
                for (int kh = 0; kh < KH; ++kh) {
                  int ih = oh * stride + kh - pad;
                  if (ih < 0 || ih >= H) continue;
                  for (int kw = 0; kw < KW; ++kw) {
                    int iw = ow * stride + kw - pad;
                    if (iw < 0 || iw >= W) continue;
                    gxc[ih * W + iw] += go * wv.data[wbase + size_t(kh * KW + kw)];
                    gw.data[wbase + size_t(kh * KW + kw)] += go * xc[ih * W + iw];
                  }
                }
              }
            }
      },
      "conv2d");
  return VarT<S>{&t, id};
}

/// 1-D convolution. x: [IC, L], w: [OC, IC, K], b: [OC].
template <typename S>
VarT<S> conv1d(VarT<S> x, VarT<S> w, VarT<S> b, int stride, int pad) {
  TapeT<S>& t = detail::same_tape(x, w, "conv1d");
  detail::same_tape(x, b, "conv1d");
  const TensorT<S>& xv = t.val(x.id);
  const TensorT<S>& wv = t.val(w.id);
  const TensorT<S>& bv = t.val(b.id);
  require(xv.rank() == 2 && wv.rank() == 3 && bv.rank() == 1,
          "conv1d: expected ranks x:2 w:3 b:1");
  require(stride >= 1 && pad >= 0, "conv1d: bad stride/pad");
  int IC = xv.shape[0], L = xv.shape[1];
  int OC = wv.shape[0], K = wv.shape[2];
  require(wv.shape[1] == IC, "conv1d: channel mismatch");
  require(bv.shape[0] == OC, "conv1d: bias mismatch");
  int OL = (L + 2 * pad - K) / stride + 1;
  require(OL >= 1 && L + 2 * pad >= K, "conv1d: kernel larger than padded input");

  TensorT<S> out = TensorT<S>::zeros({OC, OL});
  for (int oc = 0; oc < OC; ++oc)
    for (int ol = 0; ol < OL; ++ol) {
      S acc = bv.data[size_t(oc)];
      for (int ic = 0; ic < IC; ++ic) {
        const S* xc = xv.data.data() + size_t(ic) * size_t(L);
        const S* wc = wv.data.data() + (size_t(oc) * size_t(IC) + size_t(ic)) * size_t(K);
        for (int k = 0; k < K; ++k) {
          int il = ol * stride + k - pad;
          if (il < 0 || il >= L) continue;
          acc += wc[k] * xc[il];
        }
      }
      out.data[size_t(oc) * size_t(OL) + size_t(ol)] = acc;
    }

  int xid = x.id, wid = w.id, bid = b.id;
  int id = t.push(
      std::move(out),
      [xid, wid, bid, IC, L, OC, K, OL, stride, pad](TapeT<S>& t, int self) {
        const TensorT<S>& g = t.grad(self);
        const TensorT<S>& xv = t.val(xid);
        const TensorT<S>& wv = t.val(wid);
        TensorT<S>& gx = t.grad_ref(xid);
        TensorT<S>& gw = t.grad_ref(wid);
        TensorT<S>& gb = t.grad_ref(bid);
        for (int oc = 0; oc < OC; ++oc)
          for (int ol = 0; ol < OL; ++ol) {
            S go = g.data[size_t(oc) * size_t(OL) + size_t(ol)];
            gb.data[size_t(oc)] += go;
            for (int ic = 0; ic < IC; ++ic) {
              const S* xc = xv.data.data() + size_t(ic) * size_t(L);
              S* gxc = gx.data.data() + size_t(ic) * size_t(L);
              size_t wbase = (size_t(oc) * size_t(IC) + size_t(ic)) * size_t(K);
              for (int k = 0; k < K; ++k) {
                int il = ol * stride + k - pad;
                if (il < 0 || il >= L) continue;
                gxc[il] += go * wv.data[wbase + size_t(k)];
                gw.data[wbase + size_t(k)] += go * xc[il];
              }
            }
          }
      },
      "conv1d");
  return VarT<S>{&t, id};
}

/// Broadcast per-channel bias over the leading axis: x: [C, ...], v: [C].
template <typename S>
VarT<S> add_channel(VarT<S> x, VarT<S> v) {
  TapeT<S>& t = detail::same_tape(x, v, "add_channel");
  const TensorT<S>& xv = t.val(x.id);
  const TensorT<S>& vv = t.val(v.id);
  require(xv.rank() >= 1 && vv.rank() == 1, "add_channel: expected x rank >= 1, v rank 1");
  int C = xv.shape[0];
  require(vv.shape[0] == C, "add_channel: channel mismatch");
  size_t inner = xv.numel() / size_t(C);

  TensorT<S> out = xv;
  for (int c = 0; c < C; ++c) {
    S bias = vv.data[size_t(c)];
    S* p = out.data.data() + size_t(c) * inner;
    for (size_t i = 0; i < inner; ++i) p[i] += bias;
  }
  int xid = x.id, vid = v.id;
  int id = t.push(std::move(out),
                  [xid, vid, C, inner](TapeT<S>& t, int self) {
                    const TensorT<S>& g = t.grad(self);
                    TensorT<S>& gx = t.grad_ref(xid);
                    TensorT<S>& gv = t.grad_ref(vid);
                    for (int c = 0; c < C; ++c) {
                      const S* gp = g.data.data() + size_t(c) * inner;
                      S* gxp = gx.data.data() + size_t(c) * inner;
                      S acc = S(0);
                      for (size_t i = 0; i < inner; ++i) {
                        gxp[i] += gp[i];
                        acc += gp[i];
                      }
                      gv.data[size_t(c)] += acc;
                    }
                  },
                  "add_channel");
  return VarT<S>{&t, id};
}

// ---- composite expressions ----

/// Nearest-neighbor 2x upsampling of [C, H, W], composed from reshape/concat.
template <typename S>
VarT<S> upsample2x(VarT<S> x) {
  const std::vector<int>& sh = x.shape();
  require(sh.size() == 3, "upsample2x: expected [C, H, W]");
  int C = sh[0], H = sh[1], W = sh[2];
  VarT<S> r = reshape(x, {C, H, W, 1});
  VarT<S> wdup = reshape(concat(r, r, 3), {C, H, 1, 2 * W});
  return reshape(concat(wdup, wdup, 2), {C, 2 * H, 2 * W});
}

/// Nearest-neighbor 2x upsampling of [C, L], same construction in 1-D.
template <typename S>
VarT<S> upsample1d_2x(VarT<S> x) {
  const std::vector<int>& sh = x.shape();
  require(sh.size() == 2, "upsample1d_2x: expected [C, L]");
  int C = sh[0], L = sh[1];
  VarT<S> r = reshape(x, {C, L, 1});
  return reshape(concat(r, r, 2), {C, 2 * L});
}

template <typename S>
VarT<S> mse_loss(VarT<S> a, VarT<S> b) {
  VarT<S> d = sub(a, b);
  return mean_all(mul(d, d));
}

template <typename S>
VarT<S> l1_loss(VarT<S> a, VarT<S> b) {
  return mean_all(abs_op(sub(a, b)));
}

/// KL(N(mu, e^lv) || N(0, I)), summed over elements.
template <typename S>
VarT<S> kl_standard(VarT<S> mu, VarT<S> logvar) {
  VarT<S> term = sub(add(mul(mu, mu), exp_op(logvar)), logvar);
  return scale(sum_all(add_const(term, S(-1))), S(0.5));
}

/// KL(N(mu_q, e^lv_q) || N(mu_p, e^lv_p)), summed over elements.
template <typename S>
VarT<S> kl_gaussians(VarT<S> mu_q, VarT<S> lv_q, VarT<S> mu_p, VarT<S> lv_p) {
  VarT<S> d = sub(mu_q, mu_p);
  VarT<S> ratio = scale(mul(add(exp_op(lv_q), mul(d, d)), exp_op(neg(lv_p))), S(0.5));
  VarT<S> first = scale(sub(lv_p, lv_q), S(0.5));
  return sum_all(add_const(add(first, ratio), S(-0.5)));
}

/// z = mu + exp(lv/2) * eps with eps a constant leaf.
template <typename S>
VarT<S> reparam(VarT<S> mu, VarT<S> logvar, VarT<S> eps) {
  return add(mu, mul(exp_op(scale(logvar, S(0.5))), eps));
}

}  // namespace cbldm
