#include "cbldm/graphrep.hpp"

#include <algorithm>
#include <cmath>

namespace cbldm {

LaplacianImage laplacian_encode(const AtomCloud& cloud, double sigma, int n_max,
                                double norm_constant) {
  require(sigma > 0, "laplacian: sigma must be positive");
  require(n_max >= 1, "laplacian: capacity must be positive");
  require(norm_constant > 0, "laplacian: norm constant must be positive");
  const int n = cloud.size();
  if (n > n_max)
    fail(strfmt("laplacian: %d atoms exceed capacity %d", n, n_max));

  LaplacianImage img;
  img.mat = TensorT<double>::zeros({n_max, n_max});
  img.n_atoms = n;
  img.sigma = sigma;
  img.norm_constant = norm_constant;

  const double inv = 1.0 / (2.0 * sigma * sigma);
  for (int i = 0; i < n; ++i) {
    double deg = 0;
    for (int j = 0; j < n; ++j) {
      if (j == i) continue;
      double d2 = 0;
      for (int k = 0; k < 3; ++k) {
        double t = cloud.coords[size_t(i)][k] - cloud.coords[size_t(j)][k];
        d2 += t * t;
      }
      double w = std::exp(-d2 * inv);
      img.at(i, j) = -w / norm_constant;
      deg += w;
    }
    img.at(i, i) = deg / norm_constant;
  }
  return img;
}

TensorT<double> physical_block(const LaplacianImage& img) {
  const int n = img.n_atoms;
  require(n >= 1, "laplacian: empty image");
  TensorT<double> out = TensorT<double>::zeros({n, n});
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      out.data[size_t(i) * size_t(n) + size_t(j)] =
          img.at(i, j) * img.norm_constant;
  return out;
}

TensorT<double> block_split(const TensorT<double>& mat) {
  require(mat.rank() == 2 && mat.shape[0] == mat.shape[1],
          "block split: expected a square matrix");
  const int n = mat.shape[0];
  require(n % 2 == 0, "block split: matrix side must be even");
  const int h = n / 2;
  TensorT<double> out = TensorT<double>::zeros({4, h, h});
  for (int q = 0; q < 4; ++q) {
    int r0 = (q / 2) * h, c0 = (q % 2) * h;  // TL, TR, BL, BR
    for (int i = 0; i < h; ++i)
      for (int j = 0; j < h; ++j)
        out.data[size_t(q) * size_t(h) * size_t(h) + size_t(i) * size_t(h) +
                 size_t(j)] =
            mat.data[size_t(r0 + i) * size_t(n) + size_t(c0 + j)];
  }
  return out;
}

TensorT<double> block_merge(const TensorT<double>& blocks) {
  require(blocks.rank() == 3 && blocks.shape[0] == 4 &&
              blocks.shape[1] == blocks.shape[2],
          "block merge: expected {4, h, h}");
  const int h = blocks.shape[1];
  const int n = 2 * h;
  TensorT<double> out = TensorT<double>::zeros({n, n});
  for (int q = 0; q < 4; ++q) {
    int r0 = (q / 2) * h, c0 = (q % 2) * h;
    for (int i = 0; i < h; ++i)
      for (int j = 0; j < h; ++j)
        out.data[size_t(r0 + i) * size_t(n) + size_t(c0 + j)] =
            blocks.data[size_t(q) * size_t(h) * size_t(h) +
                        size_t(i) * size_t(h) + size_t(j)];
  }
  return out;
}

LaplacianImage symmetrize(const TensorT<double>& raw, double sigma,
                          double norm_constant) {
  require(raw.rank() == 2 && raw.shape[0] == raw.shape[1],
          "symmetrize: expected a square matrix");
  const int n_max = raw.shape[0];
  for (double v : raw.data)
    require(std::isfinite(v), "symmetrize: non-finite entry");

  LaplacianImage img;
  img.mat = TensorT<double>::zeros({n_max, n_max});
  img.sigma = sigma;
  img.norm_constant = norm_constant;

  for (int i = 0; i < n_max; ++i)
    for (int j = 0; j < n_max; ++j)
      img.at(i, j) = 0.5 * (raw.data[size_t(i) * size_t(n_max) + size_t(j)] +
                            raw.data[size_t(j) * size_t(n_max) + size_t(i)]);

  // atom count: rows whose diagonal clears half the median positive diagonal
  std::vector<double> diag;
  for (int i = 0; i < n_max; ++i)
    if (img.at(i, i) > 0) diag.push_back(img.at(i, i));
  if (diag.empty()) fail("symmetrize: no positive diagonal, degenerate output");
  std::sort(diag.begin(), diag.end());
  double median = diag.size() % 2
                      ? diag[diag.size() / 2]
                      : 0.5 * (diag[diag.size() / 2 - 1] + diag[diag.size() / 2]);
  int n = 0;
  for (int i = 0; i < n_max; ++i)
    if (img.at(i, i) > 0.5 * median) ++n;
  if (n < 2) fail(strfmt("symmetrize: inferred %d atoms, degenerate output", n));
  img.n_atoms = n;

  for (int i = 0; i < n_max; ++i)
    for (int j = 0; j < n_max; ++j)
      if (i >= n || j >= n) img.at(i, j) = 0;

  for (int i = 0; i < n; ++i) {
    double rowsum = 0;
    for (int j = 0; j < n; ++j) {
      if (j == i) continue;
      if (img.at(i, j) > 0) img.at(i, j) = 0;  // weights cannot be negative
      rowsum += img.at(i, j);
    }
    img.at(i, i) = -rowsum;
  }
  return img;
}

}  // namespace cbldm
