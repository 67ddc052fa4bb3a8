#include <cstdio>
#include <filesystem>
#include <string>

#include "CLI11.hpp"
#include "cbldm/geomrecover.hpp"
#include "cbldm/pipeline/checkpoint.hpp"
#include "cbldm/pipeline/dataio.hpp"
#include "cbldm/pipeline/metrics.hpp"
#include "cbldm/pipeline/predict.hpp"
#include "cbldm/pipeline/profile.hpp"
#include "cbldm/pipeline/train.hpp"
#include "cbldm/structgen.hpp"

namespace fs = std::filesystem;
using namespace cbldm;

namespace {

// Sibling-file convention: stage checkpoints live together as
// <dir>/{cvae,xvae,ddm}.ckpt unless an explicit path overrides one.
std::string sibling(const std::string& anchor, const char* name) {
  return (fs::path(anchor).parent_path() / name).string();
}

std::string in_dir(const std::string& dir, const char* name) {
  return (fs::path(dir) / name).string();
}

struct TrainCli {
  std::string profile = "desk";
  std::string data;
  std::string out;
  std::string cvae_ckpt;  // optional explicit prerequisite paths
  std::string xvae_ckpt;
  std::string log_path;
  int steps = -1;
  int log_every = 200;
  uint64_t seed = 42;
  bool quiet = false;
};

void add_train_flags(CLI::App* cmd, TrainCli& t) {
  cmd->add_option("--profile", t.profile, "profile name")->capture_default_str();
  cmd->add_option("--data", t.data, "dataset directory (manifest.tsv)")->required();
  cmd->add_option("--out", t.out, "checkpoint to write")->required();
  cmd->add_option("--steps", t.steps, "override the profile's step budget");
  cmd->add_option("--seed", t.seed, "training seed")->capture_default_str();
  cmd->add_option("--log", t.log_path, "loss curve TSV");
  cmd->add_option("--log-every", t.log_every, "steps per progress line")
      ->capture_default_str();
  cmd->add_flag("--quiet", t.quiet, "suppress progress lines");
}

TrainOpts to_opts(const TrainCli& t) {
  TrainOpts o;
  o.steps = t.steps;
  o.seed = t.seed;
  o.log_every = t.log_every;
  o.log_path = t.log_path;
  o.quiet = t.quiet;
  return o;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"desk-scale PDF-to-structure pipeline"};
  app.require_subcommand(1);
  std::string config_path;
  app.add_option("--config", config_path,
                 "profile overrides ([profile.<name>] sections)");

  // gen structures / gen pdf
  auto* gen = app.add_subcommand("gen", "build datasets");
  gen->require_subcommand(1);

  std::string gs_spec, gs_out;
  auto* gs = gen->add_subcommand("structures", "sample clusters per a spec file");
  gs->add_option("--spec", gs_spec, "dataset spec (key=value text)")->required();
  gs->add_option("--out", gs_out, "output directory")->required();
  gs->callback([&] {
    DatasetSpec spec = load_dataset_spec(gs_spec);
    fs::create_directories(gs_out);
    auto entries = generate_dataset(spec, gs_out);
    std::printf("wrote %d structures and manifest.tsv to %s\n",
                int(entries.size()), gs_out.c_str());
  });

  std::string gp_in, gp_profile = "desk";
  auto* gp = gen->add_subcommand("pdf", "simulate curves for every manifest entry");
  gp->add_option("--in", gp_in, "dataset directory")->required();
  gp->add_option("--profile", gp_profile, "profile name")->capture_default_str();
  gp->callback([&] {
    Profile prof = resolve_profile(gp_profile, config_path);
    int n = write_pdf_files(gp_in, prof);
    std::printf("wrote %d curves to %s\n", n, gp_in.c_str());
  });

  // train cvae / xvae / ddm
  auto* train = app.add_subcommand("train", "fit one pipeline stage");
  train->require_subcommand(1);

  TrainCli tc;
  auto* t_cvae = train->add_subcommand("cvae", "condition encoder stage");
  add_train_flags(t_cvae, tc);
  t_cvae->callback([&] {
    Profile prof = resolve_profile(tc.profile, config_path);
    TrainSummary s = train_cvae(prof, tc.data, tc.out, to_opts(tc));
    std::printf("cvae: %d steps, final loss %.6f, saved %s\n", s.steps,
                s.final_loss, tc.out.c_str());
  });

  TrainCli tx;
  auto* t_xvae = train->add_subcommand("xvae", "Laplacian autoencoder stage");
  add_train_flags(t_xvae, tx);
  t_xvae->add_option("--cvae", tx.cvae_ckpt,
                     "condition encoder checkpoint (default: sibling cvae.ckpt)");
  t_xvae->callback([&] {
    Profile prof = resolve_profile(tx.profile, config_path);
    std::string cv = tx.cvae_ckpt.empty() ? sibling(tx.out, "cvae.ckpt") : tx.cvae_ckpt;
    TrainSummary s = train_xvae(prof, tx.data, cv, tx.out, to_opts(tx));
    std::printf("xvae: %d steps, final loss %.6f, saved %s\n", s.steps,
                s.final_loss, tx.out.c_str());
  });

  TrainCli td;
  auto* t_ddm = train->add_subcommand("ddm", "latent denoiser stage");
  add_train_flags(t_ddm, td);
  t_ddm->add_option("--cvae", td.cvae_ckpt,
                    "condition encoder checkpoint (default: sibling cvae.ckpt)");
  t_ddm->add_option("--xvae", td.xvae_ckpt,
                    "autoencoder checkpoint (default: sibling xvae.ckpt)");
  t_ddm->callback([&] {
    Profile prof = resolve_profile(td.profile, config_path);
    std::string cv = td.cvae_ckpt.empty() ? sibling(td.out, "cvae.ckpt") : td.cvae_ckpt;
    std::string xv = td.xvae_ckpt.empty() ? sibling(td.out, "xvae.ckpt") : td.xvae_ckpt;
    TrainSummary s = train_ddm(prof, td.data, cv, xv, td.out, to_opts(td));
    std::printf("ddm: %d steps, final loss %.6f, saved %s\n", s.steps,
                s.final_loss, td.out.c_str());
  });

  // tune-skip
  std::string ts_grid, ts_profile = "desk", ts_data, ts_ckpts;
  std::string ts_out = "plan.txt", ts_report;
  uint64_t ts_seed = 42;
  double ts_slack = 0.1;
  auto* tune = app.add_subcommand("tune-skip", "pick the widest viable skip plan");
  tune->add_option("--grid", ts_grid, "comma list of t1-t2 pairs, e.g. 20-60,10-80")
      ->required();
  tune->add_option("--profile", ts_profile, "profile name")->capture_default_str();
  tune->add_option("--data", ts_data, "dataset directory")->required();
  tune->add_option("--ckpts", ts_ckpts, "directory holding the three stage checkpoints")
      ->required();
  tune->add_option("--out", ts_out, "plan file to write")->capture_default_str();
  tune->add_option("--report", ts_report, "grid scan TSV");
  tune->add_option("--seed", ts_seed, "sampling seed")->capture_default_str();
  tune->add_option("--slack", ts_slack, "feasibility slack over the baseline median")
      ->capture_default_str();
  tune->callback([&] {
    Profile prof = resolve_profile(ts_profile, config_path);
    Predictor pred(prof, in_dir(ts_ckpts, "cvae.ckpt"), in_dir(ts_ckpts, "xvae.ckpt"),
                   in_dir(ts_ckpts, "ddm.ckpt"));
    std::vector<Sample> all = load_dataset(ts_data, prof, true);
    Split sp = split_indices(int(all.size()), prof.split, prof.split_seed);
    const std::vector<int>& ids = sp.val.empty() ? sp.train : sp.val;
    if (sp.val.empty())
      std::fprintf(stderr, "tune-skip: validation split is empty, using the "
                           "training side\n");
    std::vector<Sample> set;
    for (int id : ids) set.push_back(all[size_t(id)]);
    TuneResult res = pred.tune(parse_plan_grid(ts_grid), set, ts_seed, ts_slack);
    write_plan(ts_out, res.best);
    if (!ts_report.empty()) write_tune_report(ts_report, res);
    std::printf("baseline median %.6f; chose t1=%d t2=%d; plan saved to %s\n",
                res.baseline_median, res.best.t1, res.best.t2, ts_out.c_str());
  });

  // predict
  std::string pr_pdf, pr_plan, pr_out, pr_ckpts, pr_profile = "desk";
  int pr_k = 1;
  uint64_t pr_seed = 42;
  bool pr_blend = false;
  auto* predict = app.add_subcommand("predict", "structures from an observed curve");
  predict->add_option("--pdf", pr_pdf, "observed curve (two-column text)")->required();
  predict->add_option("-k,--candidates", pr_k, "candidate count")
      ->capture_default_str();
  predict->add_option("--plan", pr_plan, "skip plan file")->required();
  predict->add_option("--out", pr_out, "output directory")->required();
  predict->add_option("--ckpts", pr_ckpts, "directory holding the three stage checkpoints")
      ->required();
  predict->add_option("--profile", pr_profile, "profile name")->capture_default_str();
  predict->add_option("--seed", pr_seed, "sampling seed")->capture_default_str();
  predict->add_flag("--blend-unnoised", pr_blend,
                    "skip bridge blends the clean prior draw instead of its "
                    "noised image");
  predict->callback([&] {
    Profile prof = resolve_profile(pr_profile, config_path);
    SkipPlan plan = read_plan(pr_plan);
    PdfCurve obs = read_pdf(pr_pdf, prof.debye);
    Predictor pred(prof, in_dir(pr_ckpts, "cvae.ckpt"), in_dir(pr_ckpts, "xvae.ckpt"),
                   in_dir(pr_ckpts, "ddm.ckpt"));
    SkipOpts sopts;
    sopts.blend_unnoised = pr_blend;
    PredictOutcome out = pred.predict(obs, pr_k, plan, pr_seed, sopts);
    for (const std::string& reason : out.dropped)
      std::fprintf(stderr, "dropped %s\n", reason.c_str());
    fs::create_directories(pr_out);
    std::FILE* rep = std::fopen(in_dir(pr_out, "report.tsv").c_str(), "w");
    require(rep != nullptr, "cannot open report in " + pr_out);
    std::fprintf(rep, "rank\tlane\tnatoms\trwp\n");
    for (size_t r = 0; r < out.kept.size(); ++r) {
      const Candidate& c = out.kept[r];
      std::string stem = strfmt("pred_%02d", int(r));
      write_xyz(in_dir(pr_out, (stem + ".xyz").c_str()), c.cloud);
      write_pdf(in_dir(pr_out, (stem + ".pdf").c_str()), c.pdf);
      std::fprintf(rep, "%d\t%d\t%d\t%.12g\n", int(r), c.lane, c.cloud.size(),
                   c.rwp);
    }
    std::fclose(rep);
    if (!out.kept.empty())
      std::printf("kept %d of %d candidates; best rwp %.6f (%d atoms)\n",
                  int(out.kept.size()), pr_k, out.kept.front().rwp,
                  out.kept.front().cloud.size());
    else
      std::printf("kept 0 candidates\n");
  });

  // recover
  std::string rc_lap, rc_out;
  double rc_sigma = 5.0;
  auto* recover = app.add_subcommand("recover", "coordinates from a raw Laplacian");
  recover->add_option("--laplacian", rc_lap, "whitespace-separated n x n matrix")
      ->required();
  recover->add_option("--out", rc_out, "XYZ file to write")->required();
  recover->add_option("--sigma", rc_sigma, "kernel width used in refinement")
      ->capture_default_str();
  recover->callback([&] {
    TensorT<double> mat = read_matrix(rc_lap);
    require(mat.shape[0] == mat.shape[1],
            strfmt("recover: matrix is %d x %d, need square", mat.shape[0],
                   mat.shape[1]));
    require(mat.shape[0] >= 2, "recover: need at least 2 atoms");
    LaplacianImage img;
    img.mat = mat;
    img.n_atoms = mat.shape[0];
    img.sigma = rc_sigma;
    img.norm_constant = 1.0;  // input is already physical scale
    AtomCloud cloud = recover_structure(img);
    write_xyz(rc_out, cloud);
    std::printf("recovered %d atoms to %s\n", cloud.size(), rc_out.c_str());
  });

  // eval
  std::string ev_pred, ev_truth, ev_report, ev_profile = "desk";
  auto* eval = app.add_subcommand("eval", "score predicted curves against truth");
  eval->add_option("--pred", ev_pred, "directory of predicted .pdf curves")->required();
  eval->add_option("--truth", ev_truth, "directory of reference .pdf curves")
      ->required();
  eval->add_option("--report", ev_report, "TSV to write")->required();
  eval->add_option("--profile", ev_profile, "profile name")->capture_default_str();
  eval->callback([&] {
    Profile prof = resolve_profile(ev_profile, config_path);
    EvalReport rep = eval_directories(ev_pred, ev_truth, prof);
    write_eval_report(ev_report, rep);
    std::printf("%d curves, median rwp %.6f\n", int(rep.rows.size()),
                rep.median_all);
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "cbldm: %s\n", e.what());
    return 1;
  }
  return 0;
}
