#pragma once

#include "cbldm/models/blocks.hpp"

namespace cbldm {

// Conditional noise predictor for the latent diffusion stage. Operates at a
// single spatial resolution (the latent is already small), conditioned on the
// timestep via a sinusoidal embedding and on c0 via a projected extra channel.
struct DenoiserConfig {
  int lat_ch = 1;
  int lat_hw = 8;
  int cond_dim = 50;
  int width = 24;
  int t_emb_dim = 32;
  int n_res = 2;
};

template <typename S>
class DenoiserT {
 public:
  DenoiserT(const DenoiserConfig& cfg, RngStream rng) : cfg_(cfg) {
    require(cfg.lat_ch >= 1 && cfg.lat_hw >= 1 && cfg.width >= 1 &&
                cfg.n_res >= 0,
            "denoiser: bad config");
    ParamBuilder<S> b{store_, rng};
    cw_ = b.weight("ddm.cond.w", {cfg.lat_hw * cfg.lat_hw, cfg.cond_dim});
    cb_ = b.zeros("ddm.cond.b", {cfg.lat_hw * cfg.lat_hw});
    inw_ = b.weight("ddm.in.w", {cfg.width, cfg.lat_ch + 1, 3, 3});
    inb_ = b.zeros("ddm.in.b", {cfg.width});
    tw_ = b.weight("ddm.temb.w", {cfg.width, cfg.t_emb_dim});
    tb_ = b.zeros("ddm.temb.b", {cfg.width});
    for (int i = 0; i < cfg.n_res; ++i) {
      std::array<int, 4> r{};
      r[0] = b.weight(strfmt("ddm.res%d.w1", i), {cfg.width, cfg.width, 3, 3});
      r[1] = b.zeros(strfmt("ddm.res%d.b1", i), {cfg.width});
      r[2] = b.weight(strfmt("ddm.res%d.w2", i), {cfg.width, cfg.width, 3, 3});
      r[3] = b.zeros(strfmt("ddm.res%d.b2", i), {cfg.width});
      res_.push_back(r);
    }
    // zero-init head: the untrained net predicts zero noise, which keeps
    // early training steps bounded
    outw_ = b.zeros("ddm.out.w", {cfg.lat_ch, cfg.width, 3, 3});
    outb_ = b.zeros("ddm.out.b", {cfg.lat_ch});
  }

  const DenoiserConfig& config() const { return cfg_; }
  ParamStoreT<S>& params() { return store_; }
  const ParamStoreT<S>& params() const { return store_; }

  VarT<S> forward(TapeT<S>& t, const std::vector<VarT<S>>& p, VarT<S> z_t,
                  int step, VarT<S> c0flat) const {
    VarT<S> cond = reshape(affine(c0flat, p[cw_], p[cb_]),
                           {1, cfg_.lat_hw, cfg_.lat_hw});
    VarT<S> h = silu(conv2d(concat(z_t, cond, 0), p[inw_], p[inb_], 1, 1));
    VarT<S> temb = t.leaf(sinusoidal_embedding<S>(step, cfg_.t_emb_dim));
    h = add_channel(h, affine(temb, p[tw_], p[tb_]));
    for (const std::array<int, 4>& r : res_)
      h = resblock2d(t, h, p[r[0]], p[r[1]], p[r[2]], p[r[3]]);
    return conv2d(h, p[outw_], p[outb_], 1, 1);
  }

  TensorT<S> predict(const TensorT<S>& z_t, int step,
                     const TensorT<S>& c0flat) const {
    TapeT<S> t;
    std::vector<VarT<S>> p = store_.bind(t);
    return forward(t, p, t.leaf(z_t), step, t.leaf(c0flat)).val();
  }

 private:
  DenoiserConfig cfg_;
  ParamStoreT<S> store_;
  int cw_, cb_, inw_, inb_, tw_, tb_;
  std::vector<std::array<int, 4>> res_;
  int outw_, outb_;
};

using Denoiser = DenoiserT<float>;

}  // namespace cbldm
