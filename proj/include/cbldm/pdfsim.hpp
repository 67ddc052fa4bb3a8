#pragma once

#include <string>
#include <vector>

#include "cbldm/common.hpp"
#include "cbldm/structgen.hpp"

namespace cbldm {

// Debye simulation parameters. Defaults are the full-resolution profile;
// the desk profile overrides r_step to 0.05.
struct DebyeParams {
  double r_min = 0.0;
  double r_max = 30.0;
  double r_step = 0.01;
  double q_min = 0.7;
  double q_max = 25.0;
  double q_damp = 0.0;  // instrument envelope width, 0 disables
  double b_iso = 0.3;   // isotropic displacement, Å²
  double delta2 = 0.0;  // correlated-motion sharpening: unsupported, must be 0
};

void validate_params(const DebyeParams& p);

struct PdfCurve {
  std::vector<double> g;
  DebyeParams params;

  int size() const { return int(g.size()); }
  double r_at(int j) const { return params.r_min + j * params.r_step; }
};

// number of r samples: round((r_max - r_min) / r_step)
int grid_length(const DebyeParams& p);

// F(Q) = Q * (2/N) sum_{i<j} sin(Q r_ij)/(Q r_ij) * exp(-B_iso Q^2 / (8 pi^2))
// with unit scattering factors. Throws on coincident atoms.
std::vector<double> debye_structure_function(const AtomCloud& cloud,
                                             const DebyeParams& p,
                                             const std::vector<double>& q_grid);

// G(r) = (2/pi) \int F(Q) sin(Qr) dQ via composite Simpson with Q step
// at most q_step_max, then damped by exp(-(Q_damp r)^2 / 2). The default
// step keeps the integration error comfortably below curve resolution:
// halving it again moves G(r) by under 1e-6.
PdfCurve pdf_from_structure(const AtomCloud& cloud, const DebyeParams& p,
                            double q_step_max = 0.005);

struct Histogram {
  double bin_width = 0.2;
  std::vector<long long> counts;

  double bin_center(int i) const { return (i + 0.5) * bin_width; }
  int size() const { return int(counts.size()); }
};

// Unordered pair counts per bin [k*w, (k+1)*w). r_max <= 0 sizes the
// histogram to cover every pair; otherwise pairs beyond r_max are dropped.
Histogram distance_histogram(const AtomCloud& cloud, double bin_width,
                             double r_max = 0.0);

// In-place x /= max|x|. Returns the scale; an all-zero input is left
// untouched and reports scale 0 so callers can decide whether that is fatal.
double max_abs_normalize(std::vector<double>& y);

// Two-column text: '#' comments (a "# qdamp=<v>" header survives round
// trips), then "r g" per line.
void write_pdf(const std::string& path, const PdfCurve& curve);

// Accepts any strictly increasing r grid and resamples onto the grid implied
// by target via linear interpolation; zero outside the input range.
PdfCurve read_pdf(const std::string& path, const DebyeParams& target);

}  // namespace cbldm
