#include "cbldm/pdfsim.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace cbldm {

void validate_params(const DebyeParams& p) {
  require(p.r_min < p.r_max, "pdf params: r_min must be below r_max");
  require(p.r_step > 0, "pdf params: r_step must be positive");
  require(p.q_min < p.q_max, "pdf params: Q_min must be below Q_max");
  require(p.q_min > 0, "pdf params: Q_min must be positive");
  require(p.q_damp >= 0, "pdf params: Q_damp must be nonnegative");
  require(p.b_iso >= 0, "pdf params: B_iso must be nonnegative");
  if (p.delta2 != 0.0)
    fail(strfmt("pdf params: delta2=%g unsupported, only 0 is implemented",
                p.delta2));
}

int grid_length(const DebyeParams& p) {
  validate_params(p);
  return int(llround((p.r_max - p.r_min) / p.r_step));
}

std::vector<double> debye_structure_function(const AtomCloud& cloud,
                                             const DebyeParams& p,
                                             const std::vector<double>& q_grid) {
  validate_params(p);
  require(cloud.size() > 0, "debye: empty cloud");
  for (size_t k = 0; k < q_grid.size(); ++k) {
    require(q_grid[k] >= p.q_min - 1e-12 && q_grid[k] <= p.q_max + 1e-12,
            "debye: Q grid leaves [Q_min, Q_max]");
    if (k > 0) require(q_grid[k] > q_grid[k - 1], "debye: Q grid not increasing");
  }

  const int n = cloud.size();
  std::vector<double> dist;
  dist.reserve(size_t(n) * size_t(n - 1) / 2);
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j) {
      double d2 = 0;
      for (int k = 0; k < 3; ++k) {
        double t = cloud.coords[size_t(i)][k] - cloud.coords[size_t(j)][k];
        d2 += t * t;
      }
      double d = std::sqrt(d2);
      if (d < 1e-9) fail(strfmt("debye: atoms %d and %d coincide", i, j));
      dist.push_back(d);
    }

  const double dw_coef = p.b_iso / (8.0 * M_PI * M_PI);
  std::vector<double> f(q_grid.size(), 0.0);
  for (size_t k = 0; k < q_grid.size(); ++k) {
    double q = q_grid[k];
    double acc = 0.0;
    for (double d : dist) acc += std::sin(q * d) / (q * d);
    f[k] = q * (2.0 / n) * acc * std::exp(-dw_coef * q * q);
  }
  return f;
}

namespace {

std::vector<double> simpson_q_grid(const DebyeParams& p, double q_step_max,
                                   double& h_out) {
  int n_int = int(std::ceil((p.q_max - p.q_min) / q_step_max - 1e-12));
  if (n_int < 2) n_int = 2;
  if (n_int % 2) ++n_int;  // composite Simpson needs an even interval count
  h_out = (p.q_max - p.q_min) / n_int;
  std::vector<double> q(size_t(n_int) + 1);
  for (int k = 0; k <= n_int; ++k) q[size_t(k)] = p.q_min + k * h_out;
  q.back() = p.q_max;
  return q;
}

}  // namespace

PdfCurve pdf_from_structure(const AtomCloud& cloud, const DebyeParams& p,
                            double q_step_max) {
  require(q_step_max > 0, "pdf: Q integration step must be positive");
  double h = 0;
  std::vector<double> q = simpson_q_grid(p, q_step_max, h);
  std::vector<double> f = debye_structure_function(cloud, p, q);

  // fold the Simpson weights into F once; the r loop then just sums sines
  const size_t m = q.size();
  std::vector<double> wf(m);
  for (size_t k = 0; k < m; ++k) {
    double w = (k == 0 || k == m - 1) ? 1.0 : (k % 2 ? 4.0 : 2.0);
    wf[k] = f[k] * w * (h / 3.0);
  }

  PdfCurve curve;
  curve.params = p;
  const int len = grid_length(p);
  curve.g.resize(size_t(len));
  for (int j = 0; j < len; ++j) {
    double r = p.r_min + j * p.r_step;
    double acc = 0.0;
    for (size_t k = 0; k < m; ++k) acc += wf[k] * std::sin(q[k] * r);
    double env = std::exp(-0.5 * (p.q_damp * r) * (p.q_damp * r));
    curve.g[size_t(j)] = (2.0 / M_PI) * acc * env;
  }
  return curve;
}

Histogram distance_histogram(const AtomCloud& cloud, double bin_width,
                             double r_max) {
  require(bin_width > 0, "histogram: bin width must be positive");
  std::vector<double> d = pair_distances(cloud);
  double cover = r_max;
  if (cover <= 0) {
    cover = bin_width;  // at least one bin even for a single atom
    for (double v : d) cover = std::max(cover, v + bin_width);
  }
  Histogram h;
  h.bin_width = bin_width;
  h.counts.assign(size_t(std::ceil(cover / bin_width - 1e-12)), 0);
  for (double v : d) {
    int bin = int(v / bin_width);
    if (bin >= 0 && bin < h.size()) ++h.counts[size_t(bin)];
  }
  return h;
}

double max_abs_normalize(std::vector<double>& y) {
  double m = 0;
  for (double v : y) m = std::max(m, std::abs(v));
  if (m == 0) return 0;
  for (double& v : y) v /= m;
  return m;
}

void write_pdf(const std::string& path, const PdfCurve& curve) {
  std::ofstream out(path);
  if (!out) fail("pdf write: cannot open " + path);
  out << "# qdamp=" << curve.params.q_damp << "\n";
  char line[80];
  for (int j = 0; j < curve.size(); ++j) {
    std::snprintf(line, sizeof line, "%.10g %.12g\n", curve.r_at(j),
                  curve.g[size_t(j)]);
    out << line;
  }
  if (!out) fail("pdf write: failed writing " + path);
}

PdfCurve read_pdf(const std::string& path, const DebyeParams& target) {
  validate_params(target);
  std::ifstream in(path);
  if (!in) fail("pdf read: cannot open " + path);

  PdfCurve curve;
  curve.params = target;
  std::vector<double> rs, gs;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    size_t first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos) continue;
    if (line[first] == '#') {
      size_t tag = line.find("qdamp=");
      if (tag != std::string::npos)
        curve.params.q_damp = std::stod(line.substr(tag + 6));
      continue;
    }
    std::istringstream ls(line);
    double r, g;
    if (!(ls >> r >> g))
      fail(strfmt("pdf read: %s line %d: expected two columns", path.c_str(),
                  lineno));
    if (!rs.empty() && r <= rs.back())
      fail(strfmt("pdf read: %s line %d: r grid not increasing", path.c_str(),
                  lineno));
    rs.push_back(r);
    gs.push_back(g);
  }
  if (rs.empty()) fail("pdf read: no samples in " + path);

  const int len = grid_length(target);
  curve.g.assign(size_t(len), 0.0);
  for (int j = 0; j < len; ++j) {
    double r = curve.r_at(j);
    // the tolerance keeps grid endpoints that round differently in text form
    if (r < rs.front() - 1e-9 || r > rs.back() + 1e-9) continue;
    auto it = std::lower_bound(rs.begin(), rs.end(), r);
    size_t hi = size_t(it - rs.begin());
    if (hi == 0) {
      curve.g[size_t(j)] = gs[0];
      continue;
    }
    if (hi >= rs.size()) hi = rs.size() - 1;
    size_t lo = hi - 1;
    double t = (r - rs[lo]) / (rs[hi] - rs[lo]);
    curve.g[size_t(j)] = (1 - t) * gs[lo] + t * gs[hi];
  }
  return curve;
}

}  // namespace cbldm
