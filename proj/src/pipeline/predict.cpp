#include "cbldm/pipeline/predict.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

#include "cbldm/graphrep.hpp"
#include "cbldm/models/blocks.hpp"
#include "cbldm/pipeline/checkpoint.hpp"
#include "cbldm/pipeline/metrics.hpp"

namespace cbldm {

namespace {

void load_model_ckpt(const std::string& path, const Profile& prof,
                     ParamStoreT<float>& store) {
  Checkpoint ck = load_checkpoint(path);
  require_profile_hash(ck, profile_hash(prof), path);
  load_into_store(ck, store);
}

}  // namespace

Predictor::Predictor(const Profile& prof, const std::string& cvae_ckpt,
                     const std::string& xvae_ckpt, const std::string& ddm_ckpt)
    : prof_(prof),
      sched_(prof.schedule()),
      cvae_(prof.cvae_config(), RngStream(0)),
      xvae_(prof.xvae_config(), RngStream(0)),
      ddm_(prof.ddm_config(), RngStream(0)) {
  validate_profile(prof_);
  load_model_ckpt(cvae_ckpt, prof_, cvae_.params());
  load_model_ckpt(xvae_ckpt, prof_, xvae_.params());
  load_model_ckpt(ddm_ckpt, prof_, ddm_.params());
}

PredictOutcome Predictor::predict(const PdfCurve& observed, int k,
                                  const SkipPlan& plan, uint64_t seed,
                                  const SkipOpts& sopts) const {
  require(k >= 0, "predict: negative candidate count");
  TensorT<float> cond = condition_from_pdf(observed, prof_);
  TensorT<float> c0 = flatten_code(cvae_.condition_embedding(cond));

  PriorFn prior = [&](RngStream& r) {
    auto [mu, lv] = xvae_.prior_value(c0);
    TensorT<double> z = TensorT<double>::zeros(
        {prof_.xvae_lat_ch, prof_.xvae_lat_hw, prof_.xvae_lat_hw});
    for (size_t j = 0; j < z.data.size(); ++j)
      z.data[j] =
          double(mu.data[j]) + std::exp(0.5 * double(lv.data[j])) * r.normal();
    return z;
  };
  DenoiseFn fn = [&](const TensorT<double>& z, int t) {
    return tensor_cast<double>(ddm_.predict(tensor_cast<float>(z), t, c0));
  };

  RngStream base(seed);
  PredictOutcome out;
  for (int i = 0; i < k; ++i) {
    RngStream lane = base.fork(uint64_t(i));
    TensorT<double> z0 = skip_sample(fn, prior, sched_, plan.t1, plan.t2, lane, sopts);
    TensorT<double> raw = block_merge(
        tensor_cast<double>(xvae_.decode_value(tensor_cast<float>(z0))));
    LaplacianImage img;
    try {
      img = symmetrize(raw, prof_.sigma, prof_.norm_constant);
    } catch (const Error& e) {
      out.dropped.push_back(
          strfmt("candidate %d: degenerate decode (%s)", i, e.what()));
      continue;
    }
    if (img.n_atoms < 2) {
      out.dropped.push_back(strfmt(
          "candidate %d: decoded Laplacian is degenerate (%d atoms)", i,
          img.n_atoms));
      continue;
    }
    Candidate cand;
    cand.lane = i;
    try {
      cand.cloud = recover_structure(img);
      cand.pdf = pdf_from_structure(cand.cloud, prof_.debye);
      cand.rwp = rwp(observed, cand.pdf);
    } catch (const Error& e) {
      out.dropped.push_back(
          strfmt("candidate %d: recovery failed (%s)", i, e.what()));
      continue;
    }
    out.kept.push_back(std::move(cand));
  }

  if (k > 0 && out.kept.empty()) {
    std::string msg = strfmt("prediction kept none of %d candidates:", k);
    for (const std::string& r : out.dropped) msg += "\n  " + r;
    fail(msg);
  }
  std::stable_sort(out.kept.begin(), out.kept.end(),
                   [](const Candidate& a, const Candidate& b) {
                     return a.rwp < b.rwp;
                   });
  return out;
}

double Predictor::plan_median(const std::vector<Sample>& set,
                              const SkipPlan& plan, uint64_t seed) const {
  require(!set.empty(), "plan_median: empty sample set");
  RngStream base(seed);
  std::vector<double> scores;
  scores.reserve(set.size());
  for (size_t j = 0; j < set.size(); ++j) {
    uint64_t s = base.fork(uint64_t(j)).seed();
    try {
      PredictOutcome one = predict(set[j].pdf, 1, plan, s);
      scores.push_back(one.kept.front().rwp);
    } catch (const Error&) {
      // a plan whose chain cannot produce a single structure scores worst
      scores.push_back(std::numeric_limits<double>::infinity());
    }
  }
  return median(std::move(scores));
}

TuneResult Predictor::tune(const std::vector<SkipPlan>& grid,
                           const std::vector<Sample>& set, uint64_t seed,
                           double slack) const {
  MedianFn eval = [&](int t1, int t2) {
    return plan_median(set, SkipPlan{t1, t2}, seed);
  };
  return tune_skip(grid, eval, sched_, slack);
}

std::vector<SkipPlan> parse_plan_grid(const std::string& text) {
  std::vector<SkipPlan> grid;
  std::istringstream in(text);
  std::string item;
  while (std::getline(in, item, ',')) {
    size_t dash = item.find('-');
    require(dash != std::string::npos && dash > 0 && dash + 1 < item.size(),
            "grid spec entries look like 't1-t2', got '" + item + "'");
    try {
      size_t used = 0;
      int t1 = std::stoi(item.substr(0, dash), &used);
      require(used == dash, "grid spec: bad t1 in '" + item + "'");
      int t2 = std::stoi(item.substr(dash + 1), &used);
      require(used == item.size() - dash - 1, "grid spec: bad t2 in '" + item + "'");
      grid.push_back(SkipPlan{t1, t2});
    } catch (const std::invalid_argument&) {
      fail("grid spec entries look like 't1-t2', got '" + item + "'");
    } catch (const std::out_of_range&) {
      fail("grid spec value out of range in '" + item + "'");
    }
  }
  require(!grid.empty(), "grid spec is empty");
  return grid;
}

void write_tune_report(const std::string& path, const TuneResult& result) {
  std::ofstream f(path);
  require(f.good(), "cannot open tune report for writing: " + path);
  f << "t1\tt2\tmedian_rwp\tfeasible\n";
  for (const TuneRow& r : result.rows)
    f << r.t1 << "\t" << r.t2 << "\t" << strfmt("%.12g", r.median_rwp) << "\t"
      << (r.feasible ? 1 : 0) << "\n";
  f << "# baseline_median\t" << strfmt("%.12g", result.baseline_median) << "\n";
  f << "# chosen\t" << result.best.t1 << "\t" << result.best.t2 << "\n";
  require(f.good(), "failed writing tune report: " + path);
}

}  // namespace cbldm
