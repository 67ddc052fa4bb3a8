#pragma once

#include <string>

#include "cbldm/pipeline/profile.hpp"

namespace cbldm {

struct TrainOpts {
  int steps = -1;        // < 0 takes the profile budget
  uint64_t seed = 42;
  int log_every = 200;   // 0 silences progress lines
  std::string log_path;  // optional loss-curve TSV
  bool quiet = false;
};

struct TrainSummary {
  int steps = 0;
  double final_loss = 0;  // mean total loss over the last log window
};

// The three stages must run in order; each later stage refuses to start
// when the checkpoint of an earlier one is missing (a stage-order error,
// distinct from a bad file). Frozen upstream models are loaded read-only
// and never written back.
TrainSummary train_cvae(const Profile& prof, const std::string& data_dir,
                        const std::string& out_ckpt, const TrainOpts& opts = {});

TrainSummary train_xvae(const Profile& prof, const std::string& data_dir,
                        const std::string& cvae_ckpt,
                        const std::string& out_ckpt, const TrainOpts& opts = {});

TrainSummary train_ddm(const Profile& prof, const std::string& data_dir,
                       const std::string& cvae_ckpt,
                       const std::string& xvae_ckpt,
                       const std::string& out_ckpt, const TrainOpts& opts = {});

}  // namespace cbldm
