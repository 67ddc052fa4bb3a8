#pragma once

#include <map>
#include <string>
#include <vector>

#include "cbldm/diffusion.hpp"
#include "cbldm/models/cvae.hpp"
#include "cbldm/models/denoiser.hpp"
#include "cbldm/models/xvae.hpp"
#include "cbldm/pdfsim.hpp"

namespace cbldm {

// One named bundle of every knob the pipeline needs: grids, model shapes,
// schedule, and training budgets. "desk" fits a laptop CPU; "paper" is the
// full-resolution variant and is exercised for shape checks only.
struct Profile {
  std::string name = "desk";

  // cluster capacity and Laplacian encoding
  int n_max = 64;
  double sigma = 5.0;
  double norm_constant = 16.0;

  // PDF grid, shared by simulation, conditioning, and the R_wp metric
  DebyeParams debye;

  // condition image; cond_ch * cond_len must equal the r-grid length
  int cond_ch = 6;
  int cond_len = 100;

  // condition VAE
  int cvae_lat_ch = 2;
  int cvae_lat_len = 25;
  int cvae_w1 = 16, cvae_w2 = 32, cvae_w3 = 32;
  double cvae_beta_kl = 1e-3;

  // Laplacian VAE; encoder sees {4, n_max/2, n_max/2} block stacks
  int xvae_lat_ch = 1;
  int xvae_lat_hw = 8;
  std::vector<int> xvae_enc_widths = {12, 24};
  std::vector<int> xvae_dec_widths = {16, 8};
  int xvae_prior_hidden = 128;
  double xvae_beta_kl = 1e-3;

  // latent denoiser
  int ddm_width = 24;
  int ddm_t_emb = 32;
  int ddm_n_res = 2;

  // noise schedule
  int t_steps = 100;
  double beta_start = 1e-4;
  double beta_end = 0.02;

  // training budgets (single-sample steps) and optimizer knobs
  int cvae_steps = 3000;
  int xvae_steps = 3000;
  int ddm_steps = 4000;
  double cvae_lr = 2e-3;
  double xvae_lr = 2e-3;
  double ddm_lr = 2e-3;
  int lr_half_life = 1500;  // steps per halving; 0 keeps the rate constant
  int kl_warmup = 500;      // steps to ramp beta_kl in from zero
  double split = 0.95;      // train fraction
  uint64_t split_seed = 42;

  int cond_dim() const { return cvae_lat_ch * cvae_lat_len; }
  int block_hw() const { return n_max / 2; }

  CvaeConfig cvae_config() const;
  XvaeConfig xvae_config() const;
  DenoiserConfig ddm_config() const;
  NoiseSchedule schedule() const;
};

// Throws on any inconsistency (grid/condition mismatch, bad widths, ...).
void validate_profile(const Profile& p);

// Hash of every shape- and schedule-determining field. Training budgets,
// learning rates, and the profile name do not participate, so retuning a
// profile keeps its checkpoints loadable.
uint64_t profile_hash(const Profile& p);

// "desk" or "paper"; anything else throws.
Profile builtin_profile(const std::string& name);

// Built-ins overlaid with an optional config file. Sections look like
//   [profile.desk]
//   cvae_steps = 8000
// and start from the builtin of the same name when one exists, from the
// desk defaults otherwise. Unknown keys and malformed lines are errors.
std::map<std::string, Profile> load_profiles(const std::string& config_path = "");

// Single lookup + validate. Empty config_path means built-ins only.
Profile resolve_profile(const std::string& name,
                        const std::string& config_path = "");

}  // namespace cbldm
