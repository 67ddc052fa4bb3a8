#pragma once

#include "cbldm/models/blocks.hpp"

namespace cbldm {

// Compressive VAE over the block-split Laplacian, with a learned conditional
// prior over the latent. Stride-2 stages are derived from the spatial ratio,
// so (4,32,32)->(1,8,8) takes two and (4,128,128)->(1,16,16) takes three.
struct XvaeConfig {
  int in_ch = 4;
  int in_hw = 32;
  int lat_ch = 1;
  int lat_hw = 8;
  int cond_dim = 50;               // flattened condition embedding
  int cond_ch = 2;                 // channels the condition projects onto
  std::vector<int> enc_widths{12, 24};
  std::vector<int> dec_widths{16, 8};
  int prior_hidden = 128;
  float beta_kl = 1e-3f;
};

template <typename S>
class XvaeT {
 public:
  XvaeT(const XvaeConfig& cfg, RngStream rng) : cfg_(cfg) {
    int ratio = cfg.in_hw / cfg.lat_hw;
    require(cfg.lat_hw >= 1 && cfg.in_hw == cfg.lat_hw * ratio &&
                (ratio & (ratio - 1)) == 0 && ratio >= 2,
            "xvae: spatial sizes must differ by a power-of-two factor");
    n_down_ = 0;
    while ((1 << n_down_) < ratio) ++n_down_;
    require(int(cfg.enc_widths.size()) == n_down_,
            strfmt("xvae: need %d encoder widths", n_down_));
    require(int(cfg.dec_widths.size()) == n_down_,
            strfmt("xvae: need %d decoder widths", n_down_));

    ParamBuilder<S> b{store_, rng};
    cw_ = b.weight("xvae.cond.w", {cfg.cond_ch * cfg.in_hw * cfg.in_hw, cfg.cond_dim});
    cb_ = b.zeros("xvae.cond.b", {cfg.cond_ch * cfg.in_hw * cfg.in_hw});

    int ch = cfg.in_ch + cfg.cond_ch;
    for (int i = 0; i < n_down_; ++i) {
      int out = cfg.enc_widths[size_t(i)];
      ew_.push_back(b.weight(strfmt("xvae.enc%d.w", i), {out, ch, 3, 3}));
      eb_.push_back(b.zeros(strfmt("xvae.enc%d.b", i), {out}));
      ch = out;
    }
    etw_ = b.weight("xvae.enctop.w", {ch, ch, 3, 3});
    etb_ = b.zeros("xvae.enctop.b", {ch});
    muw_ = b.weight("xvae.mu.w", {cfg.lat_ch, ch, 1, 1});
    mub_ = b.zeros("xvae.mu.b", {cfg.lat_ch});
    lvw_ = b.weight("xvae.lv.w", {cfg.lat_ch, ch, 1, 1});
    // start the posterior narrow so codes carry signal from the first steps
    lvb_ = b.constant("xvae.lv.b", {cfg.lat_ch}, S(-4));

    // decoder: entry conv + resblock, then per stage upsample/conv/resblock
    int dch = cfg.dec_widths[0];
    dinw_ = b.weight("xvae.dec_in.w", {dch, cfg.lat_ch, 3, 3});
    dinb_ = b.zeros("xvae.dec_in.b", {dch});
    auto res = [&](const std::string& tag, int c, std::array<int, 4>& idx) {
      idx[0] = b.weight("xvae." + tag + ".r1w", {c, c, 3, 3});
      idx[1] = b.zeros("xvae." + tag + ".r1b", {c});
      idx[2] = b.weight("xvae." + tag + ".r2w", {c, c, 3, 3});
      idx[3] = b.zeros("xvae." + tag + ".r2b", {c});
    };
    res("dec_in", dch, dinres_);
    for (int s = 0; s < n_down_; ++s) {
      int next = cfg.dec_widths[size_t(std::min(s + 1, n_down_ - 1))];
      dw_.push_back(b.weight(strfmt("xvae.dec%d.w", s), {next, dch, 3, 3}));
      db_.push_back(b.zeros(strfmt("xvae.dec%d.b", s), {next}));
      std::array<int, 4> r{};
      res(strfmt("dec%d", s), next, r);
      dres_.push_back(r);
      dch = next;
    }
    doutw_ = b.weight("xvae.dec_out.w", {cfg.in_ch, dch, 3, 3});
    // start the whole canvas slightly on the empty side of the sign cone;
    // occupied pixels climb out through the leak, padding stays put
    doutb_ = b.constant("xvae.dec_out.b", {cfg.in_ch}, S(-0.02));

    // Sign-cone output weights. The merged matrix diagonal lives on the
    // diagonals of the TL and BR blocks (channels 0 and 3); diagonal
    // entries want to be >= 0 and everything else <= 0. The head keeps
    // full slope on the valid side and a small leak on the other, so the
    // padding region settles on the valid-sign side of zero (which the
    // atom-count inference depends on) while wrong-side pixels keep
    // enough gradient to recover.
    const S leak = S(0.1);
    TensorT<S> dmask = TensorT<S>::zeros({cfg.in_ch, cfg.in_hw, cfg.in_hw});
    if (cfg.in_ch == 4) {
      size_t plane = size_t(cfg.in_hw) * size_t(cfg.in_hw);
      for (int i = 0; i < cfg.in_hw; ++i) {
        dmask.data[size_t(i) * size_t(cfg.in_hw) + size_t(i)] = S(1);
        dmask.data[3 * plane + size_t(i) * size_t(cfg.in_hw) + size_t(i)] = S(1);
      }
    }
    wpos_ = dmask;
    wneg_ = dmask;
    for (size_t i = 0; i < dmask.data.size(); ++i) {
      S d = dmask.data[i];
      wpos_.data[i] = d + leak * (S(1) - d);
      wneg_.data[i] = leak * d + (S(1) - d);
    }

    // conditional prior MLP; the zero-initialized head makes the untrained
    // prior exactly standard normal
    int lat_flat = cfg.lat_ch * cfg.lat_hw * cfg.lat_hw;
    p1w_ = b.weight("xvae.prior1.w", {cfg.prior_hidden, cfg.cond_dim});
    p1b_ = b.zeros("xvae.prior1.b", {cfg.prior_hidden});
    p2w_ = b.weight("xvae.prior2.w", {cfg.prior_hidden, cfg.prior_hidden});
    p2b_ = b.zeros("xvae.prior2.b", {cfg.prior_hidden});
    p3w_ = b.zeros("xvae.prior3.w", {2 * lat_flat, cfg.prior_hidden});
    p3b_ = b.zeros("xvae.prior3.b", {2 * lat_flat});
  }

  const XvaeConfig& config() const { return cfg_; }
  /// Training drivers anneal beta_kl through this; shape fields must stay put.
  XvaeConfig& config_mut() { return cfg_; }
  ParamStoreT<S>& params() { return store_; }
  const ParamStoreT<S>& params() const { return store_; }

  struct Post {
    VarT<S> mu, lv;
  };

  Post encode(TapeT<S>& t, const std::vector<VarT<S>>& p, VarT<S> x,
              VarT<S> c0flat) const {
    VarT<S> cond = reshape(affine(c0flat, p[cw_], p[cb_]),
                           {cfg_.cond_ch, cfg_.in_hw, cfg_.in_hw});
    VarT<S> h = concat(x, cond, 0);
    for (int i = 0; i < n_down_; ++i)
      h = silu(conv2d(h, p[ew_[size_t(i)]], p[eb_[size_t(i)]], 2, 1));
    h = silu(conv2d(h, p[etw_], p[etb_], 1, 1));
    VarT<S> mu = conv2d(h, p[muw_], p[mub_], 1, 0);
    VarT<S> lv = clamp(conv2d(h, p[lvw_], p[lvb_], 1, 0), S(-10), S(10));
    (void)t;
    return {mu, lv};
  }

  VarT<S> decode(TapeT<S>& t, const std::vector<VarT<S>>& p, VarT<S> z) const {
    VarT<S> h = silu(conv2d(z, p[dinw_], p[dinb_], 1, 1));
    h = resblock2d(t, h, p[dinres_[0]], p[dinres_[1]], p[dinres_[2]],
                   p[dinres_[3]]);
    for (int s = 0; s < n_down_; ++s) {
      h = upsample2x(h);
      h = silu(conv2d(h, p[dw_[size_t(s)]], p[db_[size_t(s)]], 1, 1));
      const std::array<int, 4>& r = dres_[size_t(s)];
      h = resblock2d(t, h, p[r[0]], p[r[1]], p[r[2]], p[r[3]]);
    }
    VarT<S> out = conv2d(h, p[doutw_], p[doutb_], 1, 1);
    // leaky sign-cone head (see the weight-mask comment in the ctor)
    VarT<S> up = clamp(out, S(0), S(1e6));
    VarT<S> dn = clamp(neg(out), S(0), S(1e6));
    return sub(mul(t.leaf(wpos_), up), mul(t.leaf(wneg_), dn));
  }

  Post prior(TapeT<S>& t, const std::vector<VarT<S>>& p, VarT<S> c0flat) const {
    VarT<S> h = silu(affine(c0flat, p[p1w_], p[p1b_]));
    h = silu(affine(h, p[p2w_], p[p2b_]));
    VarT<S> out = affine(h, p[p3w_], p[p3b_]);
    int lat_flat = cfg_.lat_ch * cfg_.lat_hw * cfg_.lat_hw;
    VarT<S> mu = reshape(slice(out, 0, 0, lat_flat),
                         {cfg_.lat_ch, cfg_.lat_hw, cfg_.lat_hw});
    VarT<S> lv = clamp(reshape(slice(out, 0, lat_flat, lat_flat),
                               {cfg_.lat_ch, cfg_.lat_hw, cfg_.lat_hw}),
                       S(-10), S(10));
    (void)t;
    return {mu, lv};
  }

  struct Loss {
    VarT<S> total, rec, kl;
  };

  Loss loss(TapeT<S>& t, const std::vector<VarT<S>>& p, VarT<S> x,
            VarT<S> c0flat, RngStream& rng) const {
    Post q = encode(t, p, x, c0flat);
    VarT<S> eps = t.leaf(
        sample_gaussian<S>(rng, {cfg_.lat_ch, cfg_.lat_hw, cfg_.lat_hw}));
    VarT<S> z = reparam(q.mu, q.lv, eps);
    VarT<S> rec = mse_loss(decode(t, p, z), x);
    Post pr = prior(t, p, c0flat);
    VarT<S> kl = kl_gaussians(q.mu, q.lv, pr.mu, pr.lv);
    VarT<S> total = add(rec, scale(kl, S(cfg_.beta_kl)));
    return {total, rec, kl};
  }

  // scratch-tape inference helpers
  TensorT<S> encode_mean(const TensorT<S>& x, const TensorT<S>& c0flat) const {
    TapeT<S> t;
    std::vector<VarT<S>> p = store_.bind(t);
    return encode(t, p, t.leaf(x), t.leaf(c0flat)).mu.val();
  }

  TensorT<S> decode_value(const TensorT<S>& z) const {
    TapeT<S> t;
    std::vector<VarT<S>> p = store_.bind(t);
    return decode(t, p, t.leaf(z)).val();
  }

  std::pair<TensorT<S>, TensorT<S>> prior_value(const TensorT<S>& c0flat) const {
    TapeT<S> t;
    std::vector<VarT<S>> p = store_.bind(t);
    Post pr = prior(t, p, t.leaf(c0flat));
    return {pr.mu.val(), pr.lv.val()};
  }

 private:
  XvaeConfig cfg_;
  ParamStoreT<S> store_;
  int n_down_ = 0;
  int cw_, cb_;
  std::vector<int> ew_, eb_;
  int etw_, etb_, muw_, mub_, lvw_, lvb_;
  int dinw_, dinb_;
  std::array<int, 4> dinres_{};
  std::vector<int> dw_, db_;
  std::vector<std::array<int, 4>> dres_;
  int doutw_, doutb_;
  int p1w_, p1b_, p2w_, p2b_, p3w_, p3b_;
  TensorT<S> wpos_, wneg_;  // fixed sign-cone head weights, not parameters
};

using Xvae = XvaeT<float>;

}  // namespace cbldm
