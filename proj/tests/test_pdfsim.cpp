#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>

#include "cbldm/pdfsim.hpp"
#include "doctest.h"

using namespace cbldm;

namespace {

AtomCloud pair_cloud(double d) {
  AtomCloud c;
  c.coords = {{0, 0, 0}, {d, 0, 0}};
  return c;
}

DebyeParams desk() {
  DebyeParams p;
  p.r_step = 0.05;
  return p;
}

// local maxima above r_floor, largest first
std::vector<double> peak_positions(const PdfCurve& c, double r_floor, int top) {
  std::vector<std::pair<double, double>> peaks;  // height, position
  for (int j = 1; j + 1 < c.size(); ++j) {
    double r = c.r_at(j);
    if (r <= r_floor) continue;
    if (c.g[size_t(j)] > c.g[size_t(j) - 1] && c.g[size_t(j)] >= c.g[size_t(j) + 1])
      peaks.push_back({c.g[size_t(j)], r});
  }
  std::sort(peaks.rbegin(), peaks.rend());
  std::vector<double> out;
  for (int i = 0; i < top && i < int(peaks.size()); ++i)
    out.push_back(peaks[size_t(i)].second);
  return out;
}

}  // namespace

TEST_CASE("single atom scatters nothing") {
  AtomCloud c;
  c.coords = {{1, 2, 3}};
  DebyeParams p = desk();
  auto f = debye_structure_function(c, p, {0.7, 5.0, 25.0});
  for (double v : f) CHECK(v == 0.0);
  PdfCurve g = pdf_from_structure(c, p);
  CHECK(g.size() == 600);
  for (double v : g.g) CHECK(v == 0.0);
}

TEST_CASE("two-atom structure function at Q=0.7 matches hand evaluation") {
  DebyeParams p;
  auto f = debye_structure_function(pair_cloud(2.5), p, {0.7});
  // sin(1.75)/1.75 * exp(-0.3*0.49/(8 pi^2)) = 0.561232, times Q
  CHECK(f[0] == doctest::Approx(0.392862).epsilon(1e-5));
}

TEST_CASE("two-atom peak lands on the pair distance") {
  DebyeParams p;  // full resolution, r_step 0.01
  PdfCurve g = pdf_from_structure(pair_cloud(2.5), p);
  CHECK(g.size() == 3000);
  int best = int(std::max_element(g.g.begin(), g.g.end()) - g.g.begin());
  CHECK(std::abs(g.r_at(best) - 2.5) <= p.r_step + 1e-12);

  // scaling coordinates scales the peak position
  PdfCurve gs = pdf_from_structure(pair_cloud(2.5 * 1.2), p);
  int best_s = int(std::max_element(gs.g.begin(), gs.g.end()) - gs.g.begin());
  CHECK(std::abs(gs.r_at(best_s) - 3.0) <= p.r_step + 1e-12);
}

TEST_CASE("instrument envelope is an exact pointwise factor") {
  DebyeParams p0 = desk();
  DebyeParams p1 = desk();
  p1.q_damp = 0.1;
  PdfCurve g0 = pdf_from_structure(pair_cloud(2.5), p0);
  PdfCurve g1 = pdf_from_structure(pair_cloud(2.5), p1);
  for (int j = 0; j < g0.size(); ++j) {
    double r = g0.r_at(j);
    double env = std::exp(-0.5 * (0.1 * r) * (0.1 * r));
    CHECK(g1.g[size_t(j)] == doctest::Approx(g0.g[size_t(j)] * env).epsilon(1e-12));
  }
  // at r = 25 the attenuation is exp(-3.125) = 0.0439
  int j25 = int(llround((25.0 - p0.r_min) / p0.r_step));
  CHECK(g1.g[size_t(j25)] / g0.g[size_t(j25)] ==
        doctest::Approx(0.043937).epsilon(1e-4));
}

TEST_CASE("G(r) ignores rigid motion") {
  SizeParams sp;
  sp.m = 3;
  AtomCloud c = generate_cluster(StructKind::OCT, sp, 4.0);
  AtomCloud moved = c;
  double t = 0.7;
  for (auto& v : moved.coords) {
    double x = std::cos(t) * v[0] - std::sin(t) * v[2];
    double z = std::sin(t) * v[0] + std::cos(t) * v[2];
    v = {x + 11.0, v[1] - 3.0, z + 0.5};
  }
  DebyeParams p = desk();
  PdfCurve a = pdf_from_structure(c, p);
  PdfCurve b = pdf_from_structure(moved, p);
  double worst = 0;
  for (int j = 0; j < a.size(); ++j)
    worst = std::max(worst, std::abs(a.g[size_t(j)] - b.g[size_t(j)]));
  CHECK(worst < 1e-9);
}

TEST_CASE("Simpson integration is converged at the default step") {
  SizeParams sp;
  sp.shells = 1;
  AtomCloud c = generate_cluster(StructKind::ICO, sp, 4.0);
  DebyeParams p = desk();
  PdfCurve a = pdf_from_structure(c, p);          // default step
  PdfCurve b = pdf_from_structure(c, p, 0.0025);  // doubled resolution
  double worst = 0;
  for (int j = 0; j < a.size(); ++j)
    worst = std::max(worst, std::abs(a.g[size_t(j)] - b.g[size_t(j)]));
  CHECK(worst < 1e-6);
}

TEST_CASE("thermal attenuation factors out exactly") {
  DebyeParams p1;
  DebyeParams p2;
  p2.b_iso = 0.6;
  std::vector<double> q{0.7, 3.0, 12.5, 25.0};
  AtomCloud c = pair_cloud(2.5);
  auto f1 = debye_structure_function(c, p1, q);
  auto f2 = debye_structure_function(c, p2, q);
  for (size_t k = 0; k < q.size(); ++k) {
    double ratio = std::exp(-(0.6 - 0.3) * q[k] * q[k] / (8 * M_PI * M_PI));
    CHECK(f2[k] == doctest::Approx(f1[k] * ratio).epsilon(1e-12));
    CHECK(std::abs(f2[k]) <= std::abs(f1[k]) + 1e-15);
  }
}

TEST_CASE("distance histogram counts unordered pairs") {
  Histogram h = distance_histogram(pair_cloud(2.5), 0.2);
  long long total = 0;
  for (int i = 0; i < h.size(); ++i) {
    total += h.counts[size_t(i)];
    if (h.counts[size_t(i)] > 0) {
      CHECK(i == 12);  // [2.4, 2.6)
      CHECK(h.counts[size_t(i)] == 1);
    }
  }
  CHECK(total == 1);

  SizeParams sp;
  sp.m = 3;
  AtomCloud c = generate_cluster(StructKind::OCT, sp, 4.0);
  Histogram hc = distance_histogram(c, 0.2);
  long long n = c.size();
  long long tot = 0;
  for (long long v : hc.counts) tot += v;
  CHECK(tot == n * (n - 1) / 2);

  // truncation drops far pairs
  Histogram ht = distance_histogram(c, 0.2, 4.0);
  long long tot_t = 0;
  for (long long v : ht.counts) tot_t += v;
  CHECK(tot_t < tot);
  CHECK(ht.size() == 20);
}

TEST_CASE("cuboctahedron histogram peaks match the simulated curve") {
  SizeParams sp;
  sp.cutoff = 4.0 / std::sqrt(2.0) * 1.01;
  AtomCloud c = generate_cluster(StructKind::FCC, sp, 4.0);
  REQUIRE(c.size() == 13);

  Histogram h = distance_histogram(c, 0.2, 30.0);
  std::vector<std::pair<long long, int>> ranked;
  for (int i = 0; i < h.size(); ++i)
    if (h.counts[size_t(i)] > 0) ranked.push_back({h.counts[size_t(i)], i});
  std::sort(ranked.rbegin(), ranked.rend());
  REQUIRE(ranked.size() >= 3);

  PdfCurve g = pdf_from_structure(c, desk());
  std::vector<double> peaks = peak_positions(g, 1.0, 3);
  REQUIRE(peaks.size() == 3);

  std::vector<double> hist_pos, curve_pos;
  for (int i = 0; i < 3; ++i) hist_pos.push_back(h.bin_center(ranked[size_t(i)].second));
  curve_pos = peaks;
  std::sort(hist_pos.begin(), hist_pos.end());
  std::sort(curve_pos.begin(), curve_pos.end());
  for (int i = 0; i < 3; ++i)
    CHECK(std::abs(hist_pos[size_t(i)] - curve_pos[size_t(i)]) <= 0.2 + 1e-12);
}

TEST_CASE("parameter validation") {
  DebyeParams p;
  p.delta2 = 0.1;
  CHECK_THROWS_AS(validate_params(p), Error);
  p = DebyeParams{};
  p.r_min = 5;
  p.r_max = 5;
  CHECK_THROWS_AS(validate_params(p), Error);
  p = DebyeParams{};
  p.q_damp = -0.1;
  CHECK_THROWS_AS(validate_params(p), Error);

  AtomCloud dup;
  dup.coords = {{0, 0, 0}, {0, 0, 0}};
  CHECK_THROWS_AS(debye_structure_function(dup, DebyeParams{}, {1.0}), Error);
}

TEST_CASE("grid length follows the parameters") {
  DebyeParams p;
  CHECK(grid_length(p) == 3000);
  CHECK(grid_length(desk()) == 600);
}

TEST_CASE("max-abs normalization") {
  std::vector<double> y{1.0, -4.0, 2.0};
  double s = max_abs_normalize(y);
  CHECK(s == 4.0);
  CHECK(y[0] == doctest::Approx(0.25));
  CHECK(y[1] == doctest::Approx(-1.0));
  CHECK(y[2] == doctest::Approx(0.5));
  std::vector<double> z{0.0, 0.0};
  CHECK(max_abs_normalize(z) == 0.0);
  CHECK(z[0] == 0.0);
}

TEST_CASE("pdf file round trip and resampling") {
  std::filesystem::create_directories("tmp_pdf");
  DebyeParams p = desk();
  p.q_damp = 0.05;
  PdfCurve g = pdf_from_structure(pair_cloud(2.5), p);
  write_pdf("tmp_pdf/pair.pdf", g);
  PdfCurve back = read_pdf("tmp_pdf/pair.pdf", desk());
  REQUIRE(back.size() == g.size());
  CHECK(back.params.q_damp == doctest::Approx(0.05));  // from the header
  for (int j = 0; j < g.size(); ++j)
    CHECK(back.g[size_t(j)] == doctest::Approx(g.g[size_t(j)]).epsilon(1e-9));

  // coarse external grid resampled onto the configured one
  {
    std::ofstream f("tmp_pdf/coarse.pdf");
    f << "# synthetic ramp\n10.0 1.0\n20.0 3.0\n";
  }
  PdfCurve ramp = read_pdf("tmp_pdf/coarse.pdf", desk());
  auto at = [&](double r) { return ramp.g[size_t(llround(r / 0.05))]; };
  CHECK(at(5.0) == 0.0);    // outside the input range
  CHECK(at(29.5) == 0.0);
  CHECK(at(10.0) == doctest::Approx(1.0));
  CHECK(at(15.0) == doctest::Approx(2.0));
  CHECK(at(17.5) == doctest::Approx(2.5));

  {
    std::ofstream f("tmp_pdf/bad.pdf");
    f << "1.0 0.5\n0.5 0.2\n";
  }
  CHECK_THROWS_AS(read_pdf("tmp_pdf/bad.pdf", desk()), Error);
  CHECK_THROWS_AS(read_pdf("tmp_pdf/nonexistent.pdf", desk()), Error);
  std::filesystem::remove_all("tmp_pdf");
}
