#pragma once

#include <functional>
#include <vector>

#include "cbldm/nn/tensor.hpp"
#include "cbldm/rng.hpp"

namespace cbldm {

/// Linear variance schedule. Index convention: beta[t-1], alpha[t-1],
/// alpha_bar[t-1] belong to step t in 1..T; abar(0) is defined as 1.
struct NoiseSchedule {
  int T = 0;
  std::vector<double> beta;
  std::vector<double> alpha;
  std::vector<double> alpha_bar;

  double beta_at(int t) const;
  double alpha_at(int t) const;
  double abar(int t) const;
};

NoiseSchedule make_schedule(int T, double beta_start, double beta_end);

/// eps_hat = fn(z_t, t); must be deterministic in its inputs.
using DenoiseFn =
    std::function<TensorT<double>(const TensorT<double>&, int)>;
/// Draws a clean-latent sample from the conditional prior.
using PriorFn = std::function<TensorT<double>(RngStream&)>;

/// z_t = sqrt(abar_t) z0 + sqrt(1 - abar_t) eps
TensorT<double> q_sample(const TensorT<double>& z0, int t,
                         const NoiseSchedule& s, const TensorT<double>& eps);

/// Mean |eps - fn(z_t, t)| over one forward draw.
double ddm_loss_value(const TensorT<double>& z0, int t, const NoiseSchedule& s,
                      const DenoiseFn& fn, RngStream& rng);

/// Posterior std for the reverse step; sigma(1) = 0 by construction.
double ancestral_sigma(const NoiseSchedule& s, int t);

/// One reverse step with explicit noise (oracle and testing entry point).
TensorT<double> ancestral_step_with_noise(const TensorT<double>& z_t, int t,
                                          const NoiseSchedule& s,
                                          const TensorT<double>& eps_hat,
                                          const TensorT<double>& xi);

/// One reverse step; draws xi from rng except at t = 1 where no noise is
/// added (and the stream is not advanced).
TensorT<double> ancestral_step(const TensorT<double>& z_t, int t,
                               const NoiseSchedule& s,
                               const TensorT<double>& eps_hat, RngStream& rng);

/// Full reverse chain T -> 0 from a standard-normal start. Noise lanes are
/// keyed by timestep (fork(2) for the start, fork(3 + t) for step t) so a
/// partial chain run by skip_sample consumes bit-identical draws.
TensorT<double> sample_chain(const DenoiseFn& fn, const std::vector<int>& shape,
                             const NoiseSchedule& s, const RngStream& rng);

struct SkipCoeffs {
  double a, u;
};

/// Blend coefficients for bridging a prior draw noised to t1 with a chain
/// state at t2. Requires 1 <= t1 <= t2 <= T.
SkipCoeffs skip_coeffs(const NoiseSchedule& s, int t1, int t2);

struct SkipOpts {
  /// Blend the clean prior draw instead of its noised version. Keeps the
  /// schedule identities exact for the z0 coefficient; off by default.
  bool blend_unnoised = false;
};

/// Shortcut sampler: run the chain only T -> t2, jump to t1 by blending with
/// a noised prior draw, then finish t1 -> 0. t1 = 0 returns the prior draw
/// unchanged; t1 = t2 reduces bitwise to the plain chain.
TensorT<double> skip_sample(const DenoiseFn& fn, const PriorFn& prior,
                            const NoiseSchedule& s, int t1, int t2,
                            const RngStream& rng, const SkipOpts& opts = {});

struct SkipPlan {
  int t1 = 0, t2 = 0;
};

struct TuneRow {
  int t1 = 0, t2 = 0;
  double median_rwp = 0.0;
  bool feasible = false;
};

struct TuneResult {
  SkipPlan best;
  double baseline_median = 0.0;
  std::vector<TuneRow> rows;
};

using MedianFn = std::function<double(int t1, int t2)>;

/// Picks the widest feasible (t2 - t1) gap from the grid; a plan is feasible
/// when its median metric stays within (1 + slack) of the full-chain (T, T)
/// baseline. Falls back to the baseline plan when nothing qualifies.
TuneResult tune_skip(const std::vector<SkipPlan>& grid, const MedianFn& eval,
                     const NoiseSchedule& s, double slack = 0.1);

}  // namespace cbldm
