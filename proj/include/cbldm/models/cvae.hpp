#pragma once

#include "cbldm/models/blocks.hpp"

namespace cbldm {

// Compressive VAE over the reshaped PDF curve. The two stride-2 stages fix
// length/4 latent positions, matching both the desk (6,100)->(2,25) and full
// (6,500)->(2,125) layouts.
struct CvaeConfig {
  int in_ch = 6;
  int in_len = 100;
  int lat_ch = 2;
  int lat_len = 25;
  int w1 = 16;
  int w2 = 32;
  int w3 = 32;
  float beta_kl = 1e-3f;
};

// channel k of the condition tensor holds samples [k*len, (k+1)*len)
template <typename S>
TensorT<S> reshape_condition(const std::vector<double>& g, int ch, int len) {
  require(int(g.size()) == ch * len,
          strfmt("condition reshape: %d samples cannot fill (%d, %d)",
                 int(g.size()), ch, len));
  TensorT<S> out = TensorT<S>::zeros({ch, len});
  for (size_t k = 0; k < g.size(); ++k) out.data[k] = S(g[k]);
  return out;
}

template <typename S>
class CvaeT {
 public:
  CvaeT(const CvaeConfig& cfg, RngStream rng) : cfg_(cfg) {
    require(cfg.in_len == 4 * cfg.lat_len,
            "cvae: encoder reduces length by 4, shapes disagree");
    require(cfg.in_ch > 0 && cfg.lat_ch > 0, "cvae: bad channel counts");
    ParamBuilder<S> b{store_, rng};
    e1w_ = b.weight("cvae.enc1.w", {cfg.w1, cfg.in_ch, 5});
    e1b_ = b.zeros("cvae.enc1.b", {cfg.w1});
    e2w_ = b.weight("cvae.enc2.w", {cfg.w2, cfg.w1, 5});
    e2b_ = b.zeros("cvae.enc2.b", {cfg.w2});
    e3w_ = b.weight("cvae.enc3.w", {cfg.w3, cfg.w2, 3});
    e3b_ = b.zeros("cvae.enc3.b", {cfg.w3});
    muw_ = b.weight("cvae.mu.w", {cfg.lat_ch, cfg.w3, 1});
    mub_ = b.zeros("cvae.mu.b", {cfg.lat_ch});
    lvw_ = b.weight("cvae.lv.w", {cfg.lat_ch, cfg.w3, 1});
    // start the posterior narrow so codes carry signal from the first steps
    lvb_ = b.constant("cvae.lv.b", {cfg.lat_ch}, S(-4));
    d0w_ = b.weight("cvae.dec0.w", {cfg.w3 * cfg.lat_len, cfg.lat_ch * cfg.lat_len});
    d0b_ = b.zeros("cvae.dec0.b", {cfg.w3 * cfg.lat_len});
    d1w_ = b.weight("cvae.dec1.w", {cfg.w2, cfg.w3, 3});
    d1b_ = b.zeros("cvae.dec1.b", {cfg.w2});
    d2w_ = b.weight("cvae.dec2.w", {cfg.w1, cfg.w2, 5});
    d2b_ = b.zeros("cvae.dec2.b", {cfg.w1});
    d3w_ = b.weight("cvae.dec3.w", {cfg.in_ch, cfg.w1, 5});
    d3b_ = b.zeros("cvae.dec3.b", {cfg.in_ch});
  }

  const CvaeConfig& config() const { return cfg_; }
  /// Training drivers anneal beta_kl through this; shape fields must stay put.
  CvaeConfig& config_mut() { return cfg_; }
  ParamStoreT<S>& params() { return store_; }
  const ParamStoreT<S>& params() const { return store_; }

  struct Post {
    VarT<S> mu, lv;
  };

  Post encode(TapeT<S>& t, const std::vector<VarT<S>>& p, VarT<S> x) const {
    VarT<S> h = silu(conv1d(x, p[e1w_], p[e1b_], 2, 2));
    h = silu(conv1d(h, p[e2w_], p[e2b_], 2, 2));
    h = silu(conv1d(h, p[e3w_], p[e3b_], 1, 1));
    VarT<S> mu = conv1d(h, p[muw_], p[mub_], 1, 0);
    VarT<S> lv = clamp(conv1d(h, p[lvw_], p[lvb_], 1, 0), S(-10), S(10));
    (void)t;
    return {mu, lv};
  }

  VarT<S> decode(TapeT<S>& t, const std::vector<VarT<S>>& p, VarT<S> z) const {
    VarT<S> flat = reshape(z, {cfg_.lat_ch * cfg_.lat_len});
    VarT<S> h = affine(flat, p[d0w_], p[d0b_]);
    h = silu(reshape(h, {cfg_.w3, cfg_.lat_len}));
    h = silu(conv1d(h, p[d1w_], p[d1b_], 1, 1));
    h = upsample1d_2x(h);
    h = silu(conv1d(h, p[d2w_], p[d2b_], 1, 2));
    h = upsample1d_2x(h);
    (void)t;
    return conv1d(h, p[d3w_], p[d3b_], 1, 2);
  }

  struct Loss {
    VarT<S> total, rec, kl;
  };

  Loss loss(TapeT<S>& t, const std::vector<VarT<S>>& p, VarT<S> x,
            RngStream& rng) const {
    Post post = encode(t, p, x);
    VarT<S> eps = t.leaf(sample_gaussian<S>(rng, {cfg_.lat_ch, cfg_.lat_len}));
    VarT<S> z = reparam(post.mu, post.lv, eps);
    VarT<S> rec = mse_loss(decode(t, p, z), x);
    VarT<S> kl = kl_standard(post.mu, post.lv);
    VarT<S> total = add(rec, scale(kl, S(cfg_.beta_kl)));
    return {total, rec, kl};
  }

  // deterministic condition embedding: posterior mean on a scratch tape
  TensorT<S> condition_embedding(const TensorT<S>& x) const {
    TapeT<S> t;
    std::vector<VarT<S>> p = store_.bind(t);
    Post post = encode(t, p, t.leaf(x));
    return post.mu.val();
  }

  TensorT<S> reconstruct(const TensorT<S>& x) const {
    TapeT<S> t;
    std::vector<VarT<S>> p = store_.bind(t);
    Post post = encode(t, p, t.leaf(x));
    return decode(t, p, post.mu).val();
  }

 private:
  CvaeConfig cfg_;
  ParamStoreT<S> store_;
  int e1w_, e1b_, e2w_, e2b_, e3w_, e3b_, muw_, mub_, lvw_, lvb_;
  int d0w_, d0b_, d1w_, d1b_, d2w_, d2b_, d3w_, d3b_;
};

using Cvae = CvaeT<float>;

}  // namespace cbldm
