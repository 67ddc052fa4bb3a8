#include "cbldm/pipeline/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>

namespace cbldm {

namespace {

void require_same_grid(const PdfCurve& a, const PdfCurve& b) {
  require(a.size() == b.size(),
          strfmt("rwp: curves have %d and %d points", a.size(), b.size()));
  const DebyeParams& pa = a.params;
  const DebyeParams& pb = b.params;
  bool same = std::abs(pa.r_min - pb.r_min) < 1e-9 &&
              std::abs(pa.r_max - pb.r_max) < 1e-9 &&
              std::abs(pa.r_step - pb.r_step) < 1e-9;
  require(same, "rwp: curves live on different r grids");
}

}  // namespace

double rwp(const PdfCurve& obs, const PdfCurve& calc,
           const std::vector<double>* weights) {
  require_same_grid(obs, calc);
  int n = obs.size();
  require(n > 0, "rwp: empty curves");
  if (weights != nullptr) {
    require(int(weights->size()) == n, "rwp: weight vector length mismatch");
    for (double w : *weights)
      require(w >= 0 && std::isfinite(w), "rwp: weights must be finite and nonnegative");
  }

  std::vector<double> y = obs.g;
  std::vector<double> yh = calc.g;
  double sy = max_abs_normalize(y);
  require(sy > 0, "rwp: undefined metric, observed curve is identically zero");
  max_abs_normalize(yh);  // zero calc stays zero; R_wp is then exactly 1

  double num = 0, den = 0;
  for (int j = 0; j < n; ++j) {
    double w = weights ? (*weights)[size_t(j)] : 1.0;
    double d = y[size_t(j)] - yh[size_t(j)];
    num += w * d * d;
    den += w * y[size_t(j)] * y[size_t(j)];
  }
  require(den > 0, "rwp: undefined metric, weighted observed power is zero");
  return std::sqrt(num / den);
}

double median(std::vector<double> v) {
  require(!v.empty(), "median of an empty set");
  std::sort(v.begin(), v.end());
  size_t n = v.size();
  if (n % 2 == 1) return v[n / 2];
  return 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

EvalReport report_from_rows(std::vector<EvalRow> rows) {
  EvalReport rep;
  rep.rows = std::move(rows);
  require(!rep.rows.empty(), "eval: no rows to summarize");
  std::vector<double> all;
  std::map<StructKind, std::vector<double>> per;
  for (const EvalRow& r : rep.rows) {
    all.push_back(r.rwp);
    per[r.kind].push_back(r.rwp);
  }
  rep.median_all = median(all);
  for (auto& [k, vals] : per) rep.median_by_kind[k] = median(std::move(vals));
  return rep;
}

EvalReport eval_directories(const std::string& pred_dir,
                            const std::string& truth_dir, const Profile& prof) {
  namespace fs = std::filesystem;
  require(fs::is_directory(truth_dir), "eval: not a directory: " + truth_dir);
  require(fs::is_directory(pred_dir), "eval: not a directory: " + pred_dir);

  std::vector<std::string> names;
  for (const auto& ent : fs::directory_iterator(truth_dir))
    if (ent.is_regular_file() && ent.path().extension() == ".pdf")
      names.push_back(ent.path().filename().string());
  std::sort(names.begin(), names.end());
  require(!names.empty(), "eval: no .pdf curves in " + truth_dir);

  std::vector<EvalRow> rows;
  for (const std::string& name : names) {
    fs::path pred = fs::path(pred_dir) / name;
    require(fs::exists(pred), "eval: missing prediction for " + name);
    PdfCurve truth = read_pdf((fs::path(truth_dir) / name).string(), prof.debye);
    PdfCurve guess = read_pdf(pred.string(), prof.debye);
    EvalRow row;
    row.name = fs::path(name).stem().string();
    size_t us = row.name.find('_');
    if (us != std::string::npos && us > 0) {
      try {
        row.kind = kind_from_name(row.name.substr(0, us));
      } catch (const Error&) {
        row.kind = StructKind::NA;
      }
    }
    row.rwp = rwp(truth, guess);
    rows.push_back(std::move(row));
  }
  return report_from_rows(std::move(rows));
}

void write_eval_report(const std::string& path, const EvalReport& report) {
  std::ofstream f(path);
  require(f.good(), "cannot open report for writing: " + path);
  f << "name\tkind\trwp\n";
  for (const EvalRow& r : report.rows)
    f << r.name << "\t" << kind_name(r.kind) << "\t" << strfmt("%.12g", r.rwp)
      << "\n";
  f << "# median\tall\t" << strfmt("%.12g", report.median_all) << "\n";
  for (const auto& [k, m] : report.median_by_kind)
    f << "# median\t" << kind_name(k) << "\t" << strfmt("%.12g", m) << "\n";
  require(f.good(), "failed writing report: " + path);
}

}  // namespace cbldm
