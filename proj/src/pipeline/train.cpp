#include "cbldm/pipeline/train.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "cbldm/models/cvae.hpp"
#include "cbldm/models/denoiser.hpp"
#include "cbldm/models/xvae.hpp"
#include "cbldm/nn/optim.hpp"
#include "cbldm/pipeline/checkpoint.hpp"
#include "cbldm/pipeline/dataio.hpp"

namespace cbldm {

namespace fs = std::filesystem;

namespace {

// Missing prerequisite checkpoints are a usage error (wrong stage order),
// not a file-format problem, and say so.
Checkpoint load_stage(const std::string& path, const Profile& prof,
                      const char* stage, const char* needed_by) {
  if (!fs::exists(path))
    fail(strfmt("stage order error: %s training needs the %s checkpoint; "
                "run 'train %s' first (missing %s)",
                needed_by, stage, stage, path.c_str()));
  Checkpoint ck = load_checkpoint(path);
  require_profile_hash(ck, profile_hash(prof), path);
  return ck;
}

double lr_at(const Profile& p, double base, int step) {
  if (p.lr_half_life <= 0) return base;
  return base * std::pow(0.5, double(step) / double(p.lr_half_life));
}

double kl_ramp(const Profile& p, int step) {
  if (p.kl_warmup <= 0) return 1.0;
  return std::min(1.0, double(step) / double(p.kl_warmup));
}

// Windowed loss averaging shared by the three drivers. Writes an optional
// TSV curve and mirrors it to stdout unless quiet.
class LossLog {
 public:
  LossLog(const TrainOpts& opts, const char* stage)
      : every_(opts.log_every), quiet_(opts.quiet), stage_(stage) {
    if (!opts.log_path.empty()) {
      file_.open(opts.log_path);
      require(file_.good(), "cannot open training log: " + opts.log_path);
      file_ << "step\tloss\trec\tkl\n";
    }
  }

  void add(int step, double total, double rec, double kl) {
    require(std::isfinite(total),
            strfmt("%s training diverged: non-finite loss at step %d", stage_,
                   step));
    sum_ += total;
    rec_ += rec;
    kl_ += kl;
    ++count_;
    bool boundary = every_ > 0 && (step + 1) % every_ == 0;
    if (boundary) flush(step + 1);
  }

  void finish(int steps) {
    if (count_ > 0) flush(steps);
  }

  double last_mean() const { return last_mean_; }

 private:
  void flush(int step) {
    last_mean_ = sum_ / count_;
    double rec = rec_ / count_, kl = kl_ / count_;
    if (file_.is_open())
      file_ << step << "\t" << strfmt("%.12g\t%.12g\t%.12g", last_mean_, rec, kl)
            << "\n";
    if (!quiet_)
      std::printf("[%s] step %d loss %.6f rec %.6f kl %.6f\n", stage_, step,
                  last_mean_, rec, kl);
    sum_ = rec_ = kl_ = 0;
    count_ = 0;
  }

  std::ofstream file_;
  int every_;
  bool quiet_;
  const char* stage_;
  double sum_ = 0, rec_ = 0, kl_ = 0;
  int count_ = 0;
  double last_mean_ = 0;
};

std::vector<int> train_ids(const Profile& prof, int n) {
  Split sp = split_indices(n, prof.split, prof.split_seed);
  require(!sp.train.empty(), "training split is empty");
  return sp.train;
}

}  // namespace

TrainSummary train_cvae(const Profile& prof, const std::string& data_dir,
                        const std::string& out_ckpt, const TrainOpts& opts) {
  validate_profile(prof);
  std::vector<Sample> samples = load_dataset(data_dir, prof, true);
  std::vector<int> ids = train_ids(prof, int(samples.size()));
  std::vector<TensorT<float>> xs;
  xs.reserve(ids.size());
  for (int id : ids) xs.push_back(condition_from_pdf(samples[size_t(id)].pdf, prof));

  RngStream base(opts.seed);
  Cvae model(prof.cvae_config(), base.fork(0));
  RngStream pick = base.fork(1);
  RngStream noise = base.fork(2);
  AdamWConfig ac;
  ac.lr = prof.cvae_lr;
  AdamWT<float> opt(ac);

  int steps = opts.steps < 0 ? prof.cvae_steps : opts.steps;
  LossLog log(opts, "cvae");
  for (int step = 0; step < steps; ++step) {
    int idx = int(pick.uniform_int(uint64_t(xs.size())));
    RngStream srng = noise.fork(uint64_t(step));
    model.config_mut().beta_kl = float(prof.cvae_beta_kl * kl_ramp(prof, step));
    opt.config().lr = lr_at(prof, prof.cvae_lr, step);

    TapeT<float> t;
    std::vector<VarT<float>> p = model.params().bind(t);
    Cvae::Loss L = model.loss(t, p, t.leaf(xs[size_t(idx)]), srng);
    t.backward(L.total);
    opt.step(model.params(), model.params().collect_grads(t, p));
    log.add(step, L.total.val().data[0], L.rec.val().data[0], L.kl.val().data[0]);
  }
  log.finish(steps);
  save_checkpoint(out_ckpt, checkpoint_from_store(model.params(), profile_hash(prof)));
  return {steps, log.last_mean()};
}

TrainSummary train_xvae(const Profile& prof, const std::string& data_dir,
                        const std::string& cvae_ckpt,
                        const std::string& out_ckpt, const TrainOpts& opts) {
  validate_profile(prof);
  Cvae cvae(prof.cvae_config(), RngStream(0));
  load_into_store(load_stage(cvae_ckpt, prof, "cvae", "xvae"), cvae.params());

  std::vector<Sample> samples = load_dataset(data_dir, prof, true);
  std::vector<int> ids = train_ids(prof, int(samples.size()));
  std::vector<TensorT<float>> xs, cs;
  xs.reserve(ids.size());
  cs.reserve(ids.size());
  for (int id : ids) {
    const Sample& s = samples[size_t(id)];
    xs.push_back(blocks_from_cloud(s.cloud, prof));
    cs.push_back(flatten_code(
        cvae.condition_embedding(condition_from_pdf(s.pdf, prof))));
  }

  RngStream base(opts.seed);
  Xvae model(prof.xvae_config(), base.fork(0));
  RngStream pick = base.fork(1);
  RngStream noise = base.fork(2);
  AdamWConfig ac;
  ac.lr = prof.xvae_lr;
  AdamWT<float> opt(ac);

  int steps = opts.steps < 0 ? prof.xvae_steps : opts.steps;
  LossLog log(opts, "xvae");
  for (int step = 0; step < steps; ++step) {
    int idx = int(pick.uniform_int(uint64_t(xs.size())));
    RngStream srng = noise.fork(uint64_t(step));
    model.config_mut().beta_kl = float(prof.xvae_beta_kl * kl_ramp(prof, step));
    opt.config().lr = lr_at(prof, prof.xvae_lr, step);

    TapeT<float> t;
    std::vector<VarT<float>> p = model.params().bind(t);
    Xvae::Loss L = model.loss(t, p, t.leaf(xs[size_t(idx)]),
                              t.leaf(cs[size_t(idx)]), srng);
    t.backward(L.total);
    opt.step(model.params(), model.params().collect_grads(t, p));
    log.add(step, L.total.val().data[0], L.rec.val().data[0], L.kl.val().data[0]);
  }
  log.finish(steps);
  save_checkpoint(out_ckpt, checkpoint_from_store(model.params(), profile_hash(prof)));
  return {steps, log.last_mean()};
}

TrainSummary train_ddm(const Profile& prof, const std::string& data_dir,
                       const std::string& cvae_ckpt,
                       const std::string& xvae_ckpt,
                       const std::string& out_ckpt, const TrainOpts& opts) {
  validate_profile(prof);
  Cvae cvae(prof.cvae_config(), RngStream(0));
  load_into_store(load_stage(cvae_ckpt, prof, "cvae", "ddm"), cvae.params());
  Xvae xvae(prof.xvae_config(), RngStream(0));
  load_into_store(load_stage(xvae_ckpt, prof, "xvae", "ddm"), xvae.params());

  std::vector<Sample> samples = load_dataset(data_dir, prof, true);
  std::vector<int> ids = train_ids(prof, int(samples.size()));
  // both upstream stages are frozen, so the latent codes are precomputable
  std::vector<TensorT<float>> zs, cs;
  zs.reserve(ids.size());
  cs.reserve(ids.size());
  for (int id : ids) {
    const Sample& s = samples[size_t(id)];
    TensorT<float> c0 = flatten_code(
        cvae.condition_embedding(condition_from_pdf(s.pdf, prof)));
    zs.push_back(xvae.encode_mean(blocks_from_cloud(s.cloud, prof), c0));
    cs.push_back(std::move(c0));
  }

  NoiseSchedule sched = prof.schedule();
  RngStream base(opts.seed);
  Denoiser model(prof.ddm_config(), base.fork(0));
  RngStream pick = base.fork(1);
  RngStream noise = base.fork(2);
  AdamWConfig ac;
  ac.lr = prof.ddm_lr;
  AdamWT<float> opt(ac);

  int steps = opts.steps < 0 ? prof.ddm_steps : opts.steps;
  LossLog log(opts, "ddm");
  for (int step = 0; step < steps; ++step) {
    int idx = int(pick.uniform_int(uint64_t(zs.size())));
    RngStream srng = noise.fork(uint64_t(step));
    int ts = 1 + int(srng.uniform_int(uint64_t(sched.T)));
    TensorT<float> eps = sample_gaussian<float>(srng, zs[size_t(idx)].shape);
    float c0 = float(std::sqrt(sched.abar(ts)));
    float ce = float(std::sqrt(1.0 - sched.abar(ts)));
    TensorT<float> zt = zs[size_t(idx)];
    for (size_t j = 0; j < zt.data.size(); ++j)
      zt.data[j] = c0 * zt.data[j] + ce * eps.data[j];

    opt.config().lr = lr_at(prof, prof.ddm_lr, step);
    TapeT<float> t;
    std::vector<VarT<float>> p = model.params().bind(t);
    VarT<float> eps_hat = model.forward(t, p, t.leaf(zt), ts, t.leaf(cs[size_t(idx)]));
    VarT<float> L = l1_loss(eps_hat, t.leaf(eps));
    t.backward(L);
    opt.step(model.params(), model.params().collect_grads(t, p));
    double lv = L.val().data[0];
    log.add(step, lv, lv, 0.0);
  }
  log.finish(steps);
  save_checkpoint(out_ckpt, checkpoint_from_store(model.params(), profile_hash(prof)));
  return {steps, log.last_mean()};
}

}  // namespace cbldm
