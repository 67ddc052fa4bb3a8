#include "cbldm/pipeline/dataio.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "cbldm/graphrep.hpp"
#include "cbldm/models/blocks.hpp"
#include "cbldm/models/cvae.hpp"
#include "cbldm/pdfsim.hpp"
#include "cbldm/rng.hpp"

namespace cbldm {

namespace fs = std::filesystem;

namespace {

std::string pdf_path_for(const std::string& dir, const std::string& rel_xyz) {
  fs::path p = fs::path(dir) / rel_xyz;
  p.replace_extension(".pdf");
  return p.string();
}

}  // namespace

std::vector<Sample> load_dataset(const std::string& dir, const Profile& prof,
                                 bool with_pdf) {
  std::vector<ManifestEntry> entries = read_manifest(
      (fs::path(dir) / "manifest.tsv").string());
  require(!entries.empty(), "dataset is empty: " + dir);
  std::vector<Sample> out;
  out.reserve(entries.size());
  for (const ManifestEntry& e : entries) {
    Sample s;
    s.entry = e;
    s.cloud = read_xyz((fs::path(dir) / e.path).string());
    require(s.cloud.size() <= prof.n_max,
            strfmt("%s has %d atoms, beyond the profile capacity %d",
                   e.path.c_str(), s.cloud.size(), prof.n_max));
    if (with_pdf) {
      std::string pp = pdf_path_for(dir, e.path);
      if (fs::exists(pp))
        s.pdf = read_pdf(pp, prof.debye);
      else
        s.pdf = pdf_from_structure(s.cloud, prof.debye);
    } else {
      s.pdf.params = prof.debye;
    }
    out.push_back(std::move(s));
  }
  return out;
}

int write_pdf_files(const std::string& dir, const Profile& prof) {
  std::vector<ManifestEntry> entries = read_manifest(
      (fs::path(dir) / "manifest.tsv").string());
  require(!entries.empty(), "dataset is empty: " + dir);
  int written = 0;
  for (const ManifestEntry& e : entries) {
    AtomCloud cloud = read_xyz((fs::path(dir) / e.path).string());
    PdfCurve curve = pdf_from_structure(cloud, prof.debye);
    write_pdf(pdf_path_for(dir, e.path), curve);
    ++written;
  }
  return written;
}

Split split_indices(int n, double train_frac, uint64_t seed) {
  require(n >= 0, "split: negative count");
  require(train_frac > 0 && train_frac <= 1, "split: fraction must lie in (0, 1]");
  std::vector<int> ids(static_cast<size_t>(n));
  for (int i = 0; i < n; ++i) ids[size_t(i)] = i;
  RngStream rng(seed);
  for (int i = n - 1; i > 0; --i) {
    int j = int(rng.uniform_int(uint64_t(i) + 1));
    std::swap(ids[size_t(i)], ids[size_t(j)]);
  }
  int n_train = int(std::min<long long>(n, std::llround(train_frac * n)));
  Split sp;
  sp.train.assign(ids.begin(), ids.begin() + n_train);
  sp.val.assign(ids.begin() + n_train, ids.end());
  std::sort(sp.train.begin(), sp.train.end());
  std::sort(sp.val.begin(), sp.val.end());
  return sp;
}

TensorT<float> condition_from_pdf(const PdfCurve& curve, const Profile& prof) {
  require(curve.size() == prof.cond_ch * prof.cond_len,
          strfmt("condition: curve has %d points, profile needs %d",
                 curve.size(), prof.cond_ch * prof.cond_len));
  std::vector<double> y = curve.g;
  double scale = max_abs_normalize(y);
  require(scale > 0, "condition: PDF curve is identically zero");
  return reshape_condition<float>(y, prof.cond_ch, prof.cond_len);
}

TensorT<float> flatten_code(const TensorT<float>& code) {
  return TensorT<float>({int(code.data.size())}, code.data);
}

TensorT<float> blocks_from_cloud(const AtomCloud& cloud, const Profile& prof) {
  LaplacianImage img =
      laplacian_encode(cloud, prof.sigma, prof.n_max, prof.norm_constant);
  return tensor_cast<float>(block_split(img.mat));
}

SkipPlan read_plan(const std::string& path) {
  std::ifstream f(path);
  require(f.good(), "cannot open plan file: " + path);
  SkipPlan plan{-1, -1};
  std::string line;
  int lineno = 0;
  while (std::getline(f, line)) {
    ++lineno;
    std::string t = line;
    t.erase(0, t.find_first_not_of(" \t\r"));
    if (t.empty() || t[0] == '#') continue;
    size_t eq = t.find('=');
    require(eq != std::string::npos,
            strfmt("plan %s line %d: expected key = value", path.c_str(), lineno));
    std::istringstream key(t.substr(0, eq));
    std::istringstream val(t.substr(eq + 1));
    std::string k;
    key >> k;
    long long v;
    require(bool(val >> v),
            strfmt("plan %s line %d: bad value", path.c_str(), lineno));
    if (k == "t1") plan.t1 = int(v);
    else if (k == "t2") plan.t2 = int(v);
    else fail(strfmt("plan %s line %d: unknown key '%s'", path.c_str(), lineno,
                     k.c_str()));
  }
  require(plan.t1 >= 0 && plan.t2 >= 0,
          "plan file must set both t1 and t2: " + path);
  require(plan.t1 <= plan.t2, "plan file has t1 > t2: " + path);
  return plan;
}

void write_plan(const std::string& path, const SkipPlan& plan) {
  std::ofstream f(path);
  require(f.good(), "cannot open plan for writing: " + path);
  f << "# skip sampling plan\n";
  f << "t1 = " << plan.t1 << "\n";
  f << "t2 = " << plan.t2 << "\n";
  require(f.good(), "failed writing plan: " + path);
}

TensorT<double> read_matrix(const std::string& path) {
  std::ifstream f(path);
  require(f.good(), "cannot open matrix file: " + path);
  std::vector<std::vector<double>> rows;
  std::string line;
  int lineno = 0;
  while (std::getline(f, line)) {
    ++lineno;
    size_t hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    std::istringstream in(line);
    std::vector<double> row;
    double v;
    while (in >> v) row.push_back(v);
    if (row.empty()) continue;
    if (!rows.empty())
      require(row.size() == rows.front().size(),
              strfmt("matrix %s line %d: ragged row", path.c_str(), lineno));
    rows.push_back(std::move(row));
  }
  require(!rows.empty(), "matrix file has no data: " + path);
  int r = int(rows.size());
  int c = int(rows.front().size());
  TensorT<double> out = TensorT<double>::zeros({r, c});
  for (int i = 0; i < r; ++i)
    for (int j = 0; j < c; ++j)
      out.data[size_t(i) * size_t(c) + size_t(j)] = rows[size_t(i)][size_t(j)];
  return out;
}

void write_matrix(const std::string& path, const TensorT<double>& mat) {
  require(mat.shape.size() == 2, "write_matrix: rank-2 tensors only");
  std::ofstream f(path);
  require(f.good(), "cannot open matrix for writing: " + path);
  int r = mat.shape[0], c = mat.shape[1];
  for (int i = 0; i < r; ++i) {
    for (int j = 0; j < c; ++j) {
      if (j) f << "\t";
      f << strfmt("%.12g", mat.data[size_t(i) * size_t(c) + size_t(j)]);
    }
    f << "\n";
  }
  require(f.good(), "failed writing matrix: " + path);
}

}  // namespace cbldm
