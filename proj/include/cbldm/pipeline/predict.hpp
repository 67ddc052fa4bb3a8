#pragma once

#include <string>
#include <vector>

#include "cbldm/diffusion.hpp"
#include "cbldm/geomrecover.hpp"
#include "cbldm/models/cvae.hpp"
#include "cbldm/models/denoiser.hpp"
#include "cbldm/models/xvae.hpp"
#include "cbldm/pipeline/dataio.hpp"
#include "cbldm/pipeline/profile.hpp"

namespace cbldm {

struct Candidate {
  AtomCloud cloud;
  PdfCurve pdf;   // simulated curve of the recovered structure
  double rwp = 0;
  int lane = 0;   // rng lane that produced the candidate
};

struct PredictOutcome {
  std::vector<Candidate> kept;       // ascending R_wp
  std::vector<std::string> dropped;  // one reason per discarded candidate
};

// The full curve-to-structure chain under one profile: condition encoding,
// skip-sampled latent, Laplacian decoding, spectral recovery, refinement,
// and R_wp scoring. All three checkpoints must carry the profile's hash.
class Predictor {
 public:
  Predictor(const Profile& prof, const std::string& cvae_ckpt,
            const std::string& xvae_ckpt, const std::string& ddm_ckpt);

  // k candidates from one observed curve; candidate i draws from rng lane
  // RngStream(seed).fork(i), so a longer run extends a shorter one.
  // Degenerate decodes (fewer than 2 atoms) are dropped with a reason;
  // k > 0 with nothing kept is an error, k == 0 is an empty result.
  PredictOutcome predict(const PdfCurve& observed, int k, const SkipPlan& plan,
                         uint64_t seed, const SkipOpts& sopts = {}) const;

  // Median best-of-1 R_wp of a plan over a set; failed predictions count
  // as +infinity rather than aborting the scan.
  double plan_median(const std::vector<Sample>& set, const SkipPlan& plan,
                     uint64_t seed) const;

  // tune_skip over the grid using plan_median as the objective.
  TuneResult tune(const std::vector<SkipPlan>& grid,
                  const std::vector<Sample>& set, uint64_t seed,
                  double slack) const;

  const Profile& profile() const { return prof_; }
  Cvae& cvae() { return cvae_; }
  Xvae& xvae() { return xvae_; }
  Denoiser& denoiser() { return ddm_; }

 private:
  Profile prof_;
  NoiseSchedule sched_;
  Cvae cvae_;
  Xvae xvae_;
  Denoiser ddm_;
};

// "t1-t2" pairs separated by commas, e.g. "20-60,10-80,100-100".
std::vector<SkipPlan> parse_plan_grid(const std::string& text);

void write_tune_report(const std::string& path, const TuneResult& result);

}  // namespace cbldm
