#include "cbldm/diffusion.hpp"

#include <cmath>

#include "cbldm/common.hpp"

namespace cbldm {

double NoiseSchedule::beta_at(int t) const {
  require(t >= 1 && t <= T, strfmt("schedule: step %d outside 1..%d", t, T));
  return beta[size_t(t - 1)];
}

double NoiseSchedule::alpha_at(int t) const {
  require(t >= 1 && t <= T, strfmt("schedule: step %d outside 1..%d", t, T));
  return alpha[size_t(t - 1)];
}

double NoiseSchedule::abar(int t) const {
  require(t >= 0 && t <= T, strfmt("schedule: step %d outside 0..%d", t, T));
  return t == 0 ? 1.0 : alpha_bar[size_t(t - 1)];
}

NoiseSchedule make_schedule(int T, double beta_start, double beta_end) {
  require(T >= 1, "schedule: need at least one step");
  require(beta_start > 0.0 && beta_end < 1.0 && beta_start <= beta_end,
          "schedule: need 0 < beta_start <= beta_end < 1");
  NoiseSchedule s;
  s.T = T;
  s.beta.resize(size_t(T));
  s.alpha.resize(size_t(T));
  s.alpha_bar.resize(size_t(T));
  double run = 1.0;
  for (int t = 1; t <= T; ++t) {
    double frac = T == 1 ? 0.0 : double(t - 1) / double(T - 1);
    double b = beta_start + (beta_end - beta_start) * frac;
    s.beta[size_t(t - 1)] = b;
    s.alpha[size_t(t - 1)] = 1.0 - b;
    run *= 1.0 - b;
    s.alpha_bar[size_t(t - 1)] = run;
  }
  return s;
}

TensorT<double> q_sample(const TensorT<double>& z0, int t,
                         const NoiseSchedule& s, const TensorT<double>& eps) {
  require(z0.shape == eps.shape, "q_sample: z0/eps shape mismatch");
  double ab = s.abar(t);
  require(t >= 1, "q_sample: need t >= 1");
  double c0 = std::sqrt(ab), ce = std::sqrt(1.0 - ab);
  TensorT<double> out = z0;
  for (size_t i = 0; i < out.data.size(); ++i)
    out.data[i] = c0 * z0.data[i] + ce * eps.data[i];
  return out;
}

double ddm_loss_value(const TensorT<double>& z0, int t, const NoiseSchedule& s,
                      const DenoiseFn& fn, RngStream& rng) {
  TensorT<double> eps = sample_gaussian<double>(rng, z0.shape);
  TensorT<double> zt = q_sample(z0, t, s, eps);
  TensorT<double> eps_hat = fn(zt, t);
  require(eps_hat.shape == z0.shape, "ddm loss: predictor changed the shape");
  double acc = 0.0;
  for (size_t i = 0; i < eps.data.size(); ++i)
    acc += std::abs(eps.data[i] - eps_hat.data[i]);
  return acc / double(eps.data.size());
}

double ancestral_sigma(const NoiseSchedule& s, int t) {
  require(t >= 1 && t <= s.T, strfmt("reverse step %d outside 1..%d", t, s.T));
  if (t == 1) return 0.0;
  double var = s.beta_at(t) * (1.0 - s.abar(t - 1)) / (1.0 - s.abar(t));
  return std::sqrt(var);
}

TensorT<double> ancestral_step_with_noise(const TensorT<double>& z_t, int t,
                                          const NoiseSchedule& s,
                                          const TensorT<double>& eps_hat,
                                          const TensorT<double>& xi) {
  require(z_t.shape == eps_hat.shape && z_t.shape == xi.shape,
          "reverse step: shape mismatch");
  double ab = s.abar(t);
  double scale = s.beta_at(t) / std::sqrt(1.0 - ab);
  double inv_sqrt_alpha = 1.0 / std::sqrt(s.alpha_at(t));
  double sigma = ancestral_sigma(s, t);
  TensorT<double> out = z_t;
  for (size_t i = 0; i < out.data.size(); ++i)
    out.data[i] = (z_t.data[i] - scale * eps_hat.data[i]) * inv_sqrt_alpha +
                  sigma * xi.data[i];
  return out;
}

TensorT<double> ancestral_step(const TensorT<double>& z_t, int t,
                               const NoiseSchedule& s,
                               const TensorT<double>& eps_hat, RngStream& rng) {
  if (t == 1) {
    TensorT<double> zero = TensorT<double>::zeros(z_t.shape);
    return ancestral_step_with_noise(z_t, t, s, eps_hat, zero);
  }
  TensorT<double> xi = sample_gaussian<double>(rng, z_t.shape);
  return ancestral_step_with_noise(z_t, t, s, eps_hat, xi);
}

namespace {

/// Steps t_hi, t_hi-1, ..., t_lo+1 applied to z. Per-step noise comes from
/// lane fork(3 + t) of the caller's base stream.
TensorT<double> run_chain_segment(TensorT<double> z, int t_hi, int t_lo,
                                  const DenoiseFn& fn, const NoiseSchedule& s,
                                  const RngStream& base) {
  for (int t = t_hi; t > t_lo; --t) {
    TensorT<double> eps_hat = fn(z, t);
    require(eps_hat.shape == z.shape, "chain: predictor changed the shape");
    RngStream lane = base.fork(uint64_t(3 + t));
    z = ancestral_step(z, t, s, eps_hat, lane);
  }
  return z;
}

}  // namespace

TensorT<double> sample_chain(const DenoiseFn& fn, const std::vector<int>& shape,
                             const NoiseSchedule& s, const RngStream& rng) {
  RngStream init = rng.fork(2);
  TensorT<double> z = sample_gaussian<double>(init, shape);
  return run_chain_segment(std::move(z), s.T, 0, fn, s, rng);
}

SkipCoeffs skip_coeffs(const NoiseSchedule& s, int t1, int t2) {
  require(1 <= t1 && t1 <= t2 && t2 <= s.T,
          strfmt("skip coefficients: need 1 <= %d <= %d <= %d", t1, t2, s.T));
  double ab1 = s.abar(t1), ab2 = s.abar(t2);
  double u = std::sqrt(1.0 - ab1) / std::sqrt(1.0 - ab2);
  double a = std::sqrt(ab1) - std::sqrt(ab2) * u;
  return {a, u};
}

TensorT<double> skip_sample(const DenoiseFn& fn, const PriorFn& prior,
                            const NoiseSchedule& s, int t1, int t2,
                            const RngStream& rng, const SkipOpts& opts) {
  require(0 <= t1 && t1 <= t2 && t2 <= s.T,
          strfmt("skip plan: need 0 <= %d <= %d <= %d", t1, t2, s.T));
  RngStream prior_lane = rng.fork(0);
  TensorT<double> x0 = prior(prior_lane);
  if (t1 == 0) return x0;

  RngStream init = rng.fork(2);
  TensorT<double> start = sample_gaussian<double>(init, x0.shape);
  TensorT<double> x_t2 =
      run_chain_segment(std::move(start), s.T, t2, fn, s, rng);

  TensorT<double> x_t1;
  if (t1 == t2) {
    // the blend is the identity here; reuse the chain state untouched so the
    // full-chain and skip paths stay bitwise identical
    x_t1 = std::move(x_t2);
  } else {
    RngStream noise_lane = rng.fork(1);
    TensorT<double> eps1 = sample_gaussian<double>(noise_lane, x0.shape);
    double ab1 = s.abar(t1);
    SkipCoeffs c = skip_coeffs(s, t1, t2);
    x_t1 = TensorT<double>::zeros(x0.shape);
    if (opts.blend_unnoised) {
      for (size_t i = 0; i < x_t1.data.size(); ++i)
        x_t1.data[i] = c.a * x0.data[i] + c.u * x_t2.data[i];
    } else {
      double c0 = std::sqrt(ab1), ce = std::sqrt(1.0 - ab1);
      for (size_t i = 0; i < x_t1.data.size(); ++i) {
        double noised = c0 * x0.data[i] + ce * eps1.data[i];
        x_t1.data[i] = c.a * noised + c.u * x_t2.data[i];
      }
    }
  }
  return run_chain_segment(std::move(x_t1), t1, 0, fn, s, rng);
}

TuneResult tune_skip(const std::vector<SkipPlan>& grid, const MedianFn& eval,
                     const NoiseSchedule& s, double slack) {
  require(!grid.empty(), "skip tuning: empty plan grid");
  require(slack >= 0.0, "skip tuning: negative slack");
  for (const SkipPlan& p : grid)
    require(0 <= p.t1 && p.t1 <= p.t2 && p.t2 <= s.T,
            strfmt("skip tuning: bad plan (%d, %d)", p.t1, p.t2));

  TuneResult res;
  res.baseline_median = eval(s.T, s.T);
  double limit = (1.0 + slack) * res.baseline_median;

  // the full chain is feasible by definition; it is also the fallback plan
  res.best = {s.T, s.T};
  int best_gap = -1;
  for (const SkipPlan& p : grid) {
    TuneRow row;
    row.t1 = p.t1;
    row.t2 = p.t2;
    row.median_rwp = (p.t1 == s.T && p.t2 == s.T) ? res.baseline_median
                                                  : eval(p.t1, p.t2);
    row.feasible = row.median_rwp <= limit;
    res.rows.push_back(row);
    int gap = p.t2 - p.t1;
    if (row.feasible && gap > best_gap) {
      best_gap = gap;
      res.best = p;
    }
  }
  return res;
}

}  // namespace cbldm
