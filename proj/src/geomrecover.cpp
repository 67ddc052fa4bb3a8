#include "cbldm/geomrecover.hpp"

#include <Eigen/Dense>
#include <cmath>

namespace cbldm {

namespace {

Eigen::MatrixXd coords_matrix(const TensorT<double>& t) {
  require(t.rank() == 2 && t.shape[1] == 3, "coords: expected {n, 3}");
  Eigen::MatrixXd z(t.shape[0], 3);
  for (int i = 0; i < t.shape[0]; ++i)
    for (int k = 0; k < 3; ++k) z(i, k) = t.data[size_t(i) * 3 + size_t(k)];
  return z;
}

TensorT<double> coords_tensor(const Eigen::MatrixXd& z) {
  TensorT<double> t = TensorT<double>::zeros({int(z.rows()), 3});
  for (int i = 0; i < z.rows(); ++i)
    for (int k = 0; k < 3; ++k) t.data[size_t(i) * 3 + size_t(k)] = z(i, k);
  return t;
}

// Gaussian-kernel Laplacian of a coordinate matrix, physical scale
Eigen::MatrixXd laplacian_of(const Eigen::MatrixXd& z, double sigma) {
  const int n = int(z.rows());
  const double inv = 1.0 / (2.0 * sigma * sigma);
  Eigen::MatrixXd l = Eigen::MatrixXd::Zero(n, n);
  for (int i = 0; i < n; ++i) {
    double deg = 0;
    for (int j = 0; j < n; ++j) {
      if (j == i) continue;
      double w = std::exp(-(z.row(i) - z.row(j)).squaredNorm() * inv);
      l(i, j) = -w;
      deg += w;
    }
    l(i, i) = deg;
  }
  return l;
}

Eigen::MatrixXd target_matrix(const LaplacianImage& img) {
  TensorT<double> t = physical_block(img);
  const int n = t.shape[0];
  Eigen::MatrixXd m(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) m(i, j) = t.data[size_t(i) * size_t(n) + size_t(j)];
  return m;
}

double objective(const Eigen::MatrixXd& z, const Eigen::MatrixXd& t,
                 double sigma) {
  const int n = int(z.rows());
  Eigen::MatrixXd e = laplacian_of(z, sigma) - t;
  return e.squaredNorm() / double(n) / double(n);
}

}  // namespace

SpectralInit spectral_embed(const LaplacianImage& img) {
  const int n = img.n_atoms;
  require(n >= 2, "spectral embed: need at least 2 atoms");
  Eigen::MatrixXd l = target_matrix(img);

  Eigen::VectorXd d = l.diagonal();
  for (int i = 0; i < n; ++i)
    if (!(d(i) > 0))
      fail(strfmt("spectral embed: nonpositive degree at row %d, invalid "
                  "laplacian", i));

  Eigen::VectorXd dis = d.cwiseSqrt().cwiseInverse();
  Eigen::MatrixXd b = dis.asDiagonal() * l * dis.asDiagonal();
  b = 0.5 * (b + b.transpose());  // keep the solver on the symmetric path

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(b);
  require(es.info() == Eigen::Success, "spectral embed: eigensolver failed");
  const Eigen::VectorXd& ev = es.eigenvalues();  // ascending

  double lam_max = std::max(ev(n - 1), 0.0);
  double tol = 1e-8 * lam_max;
  const int want = std::min(3, n - 1);

  SpectralInit out;
  out.coords = TensorT<double>::zeros({n, 3});
  int col = 0;
  for (int k = 0; k < n && col < want; ++k) {
    if (ev(k) <= tol) continue;  // null or numerically-null mode
    double lam = ev(k);
    Eigen::VectorXd y = dis.asDiagonal() * es.eigenvectors().col(k);
    double scale = 1.0 / std::sqrt(lam);
    for (int i = 0; i < n; ++i)
      out.coords.data[size_t(i) * 3 + size_t(col)] = y(i) * scale;
    out.eigenvalues.push_back(lam);
    ++col;
  }
  if (col < want)
    fail(strfmt("spectral embed: only %d positive eigenvalues for %d atoms, "
                "degenerate embedding", col, n));
  return out;
}

double laplacian_mse(const LaplacianImage& target, const TensorT<double>& coords) {
  Eigen::MatrixXd z = coords_matrix(coords);
  require(int(z.rows()) == target.n_atoms, "laplacian mse: atom count mismatch");
  return objective(z, target_matrix(target), target.sigma);
}

TensorT<double> laplacian_mse_grad(const LaplacianImage& target,
                                   const TensorT<double>& coords) {
  Eigen::MatrixXd z = coords_matrix(coords);
  const int n = int(z.rows());
  require(n == target.n_atoms, "laplacian mse: atom count mismatch");
  const double sigma = target.sigma;
  Eigen::MatrixXd e = laplacian_of(z, sigma) - target_matrix(target);

  // df/dz_i = (2/(n^2 s^2)) sum_j W_ij (E_ii + E_jj - 2 E_ij)(z_j - z_i)
  const double inv = 1.0 / (2.0 * sigma * sigma);
  const double c = 2.0 / (double(n) * double(n) * sigma * sigma);
  Eigen::MatrixXd g = Eigen::MatrixXd::Zero(n, 3);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      if (j == i) continue;
      double w = std::exp(-(z.row(i) - z.row(j)).squaredNorm() * inv);
      double coef = c * w * (e(i, i) + e(j, j) - 2.0 * e(i, j));
      g.row(i) += coef * (z.row(j) - z.row(i));
    }
  return coords_tensor(g);
}

namespace {

// LM over a 3x3 linear map of fixed base coordinates: repairs the scale and
// per-axis stretch of the spectral initialization before the free-coordinate
// stage. Returns the mapped coordinates, only ever improving the objective.
Eigen::MatrixXd fit_linear_map(const Eigen::MatrixXd& z0,
                               const Eigen::MatrixXd& t, double sigma,
                               double& f_io) {
  const int n = int(z0.rows());
  const double inv = 1.0 / (2.0 * sigma * sigma);
  Eigen::Matrix3d a = Eigen::Matrix3d::Identity();
  Eigen::MatrixXd z = z0;
  double f = f_io;
  double lm = 1e-3;

  auto flat = [](const Eigen::Matrix3d& m) {
    Eigen::Matrix<double, 9, 1> v;
    for (int r = 0; r < 3; ++r)
      for (int c = 0; c < 3; ++c) v(3 * r + c) = m(r, c);
    return v;
  };

  for (int iter = 0; iter < 40; ++iter) {
    Eigen::MatrixXd w(n, n), e(n, n);
    {
      Eigen::MatrixXd l = Eigen::MatrixXd::Zero(n, n);
      for (int i = 0; i < n; ++i) {
        double deg = 0;
        for (int j = 0; j < n; ++j) {
          if (j == i) {
            w(i, i) = 0;
            continue;
          }
          double wij = std::exp(-(z.row(i) - z.row(j)).squaredNorm() * inv);
          w(i, j) = wij;
          l(i, j) = -wij;
          deg += wij;
        }
        l(i, i) = deg;
      }
      e = l - t;
    }

    Eigen::Matrix<double, 9, 9> jtj = Eigen::Matrix<double, 9, 9>::Zero();
    Eigen::Matrix<double, 9, 1> jtr = Eigen::Matrix<double, 9, 1>::Zero();
    for (int i = 0; i < n; ++i)
      for (int j = i + 1; j < n; ++j) {
        Eigen::Vector3d di = -std::sqrt(2.0) / n * w(i, j) / (sigma * sigma) *
                             (z.row(j) - z.row(i)).transpose();
        Eigen::Matrix3d g = di * (z0.row(i) - z0.row(j));
        Eigen::Matrix<double, 9, 1> gv = flat(g);
        double r = std::sqrt(2.0) * e(i, j) / n;
        jtr += gv * r;
        jtj += gv * gv.transpose();
      }
    for (int i = 0; i < n; ++i) {
      Eigen::Matrix3d g = Eigen::Matrix3d::Zero();
      for (int j = 0; j < n; ++j) {
        if (j == i) continue;
        Eigen::Vector3d dji =
            w(i, j) / (n * sigma * sigma) * (z.row(j) - z.row(i)).transpose();
        g += dji * (z0.row(i) - z0.row(j));
      }
      Eigen::Matrix<double, 9, 1> gv = flat(g);
      jtr += gv * (e(i, i) / n);
      jtj += gv * gv.transpose();
    }

    if (2.0 * jtr.lpNorm<Eigen::Infinity>() < 1e-12) break;
    bool stepped = false;
    for (int attempt = 0; attempt < 20; ++attempt) {
      Eigen::Matrix<double, 9, 9> m = jtj;
      for (int k = 0; k < 9; ++k) m(k, k) += lm * (jtj(k, k) + 1e-12);
      Eigen::Matrix<double, 9, 1> delta = m.ldlt().solve(-jtr);
      if (!delta.allFinite()) {
        lm *= 3.0;
        continue;
      }
      Eigen::Matrix3d at = a;
      for (int r = 0; r < 3; ++r)
        for (int c = 0; c < 3; ++c) at(r, c) += delta(3 * r + c);
      Eigen::MatrixXd zt = z0 * at.transpose();
      double ft = objective(zt, t, sigma);
      if (std::isfinite(ft) && ft < f) {
        a = at;
        z = zt;
        f = ft;
        lm = std::max(lm * 0.3, 1e-12);
        stepped = true;
        break;
      }
      lm *= 3.0;
    }
    if (!stepped) break;
  }
  f_io = f;
  return z;
}

// Classical multidimensional scaling on distances recovered from the target
// weights (d = sigma sqrt(-2 ln W)). Exact for a clean Laplacian; for model
// outputs it is the usual distance-geometry starting point. Used only as a
// candidate: the caller keeps it solely when it beats the current objective.
Eigen::MatrixXd mds_candidate(const Eigen::MatrixXd& t, double sigma) {
  const int n = int(t.rows());
  Eigen::MatrixXd d2(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      if (i == j) {
        d2(i, j) = 0;
        continue;
      }
      double w = std::min(std::max(-t(i, j), 1e-12), 1.0);
      d2(i, j) = -2.0 * sigma * sigma * std::log(w);
    }

  Eigen::VectorXd rm = d2.rowwise().mean();
  double gm = d2.mean();
  Eigen::MatrixXd g(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      g(i, j) = -0.5 * (d2(i, j) - rm(i) - rm(j) + gm);

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(0.5 * (g + g.transpose()));
  Eigen::MatrixXd z = Eigen::MatrixXd::Zero(n, 3);
  for (int k = 0; k < 3 && k < n; ++k) {
    double lam = es.eigenvalues()(n - 1 - k);  // ascending order: take the top
    if (lam <= 0) break;
    z.col(k) = es.eigenvectors().col(n - 1 - k) * std::sqrt(lam);
  }
  return z;
}

}  // namespace

RefineResult refine_coords(const LaplacianImage& target,
                           const TensorT<double>& init,
                           const RefineOpts& opts) {
  Eigen::MatrixXd z = coords_matrix(init);
  const int n = int(z.rows());
  require(n == target.n_atoms, "refine: atom count mismatch");
  require(z.allFinite(), "refine: non-finite initial coordinates");
  const double sigma = target.sigma;
  const double inv = 1.0 / (2.0 * sigma * sigma);
  Eigen::MatrixXd t = target_matrix(target);

  double f = objective(z, t, sigma);
  require(std::isfinite(f), "refine: non-finite initial objective");

  RefineResult res;
  res.coords = coords_tensor(z);
  res.final_mse = f;

  if (f >= opts.f_tol && n >= 2) {
    z = fit_linear_map(z, t, sigma, f);
    Eigen::MatrixXd zm = mds_candidate(t, sigma);
    double fm = objective(zm, t, sigma);
    if (std::isfinite(fm) && fm < f) {
      z = zm;
      f = fm;
    }
  }

  const int p = 3 * n;
  double lm = 1e-4;  // Marquardt damping
  for (int iter = 0; iter < opts.max_iters; ++iter) {
    if (f < opts.f_tol) {
      res.converged = true;
      break;
    }

    // residuals: sqrt(2)(L_ij - T_ij)/n for i<j, (L_ii - T_ii)/n on the
    // diagonal, so that sum of squares equals f exactly
    Eigen::MatrixXd w(n, n);
    Eigen::MatrixXd e(n, n);
    {
      Eigen::MatrixXd l = Eigen::MatrixXd::Zero(n, n);
      for (int i = 0; i < n; ++i) {
        double deg = 0;
        for (int j = 0; j < n; ++j) {
          if (j == i) {
            w(i, i) = 0;
            continue;
          }
          double wij = std::exp(-(z.row(i) - z.row(j)).squaredNorm() * inv);
          w(i, j) = wij;
          l(i, j) = -wij;
          deg += wij;
        }
        l(i, i) = deg;
      }
      e = l - t;
    }

    Eigen::MatrixXd jtj = Eigen::MatrixXd::Zero(p, p);
    Eigen::VectorXd jtr = Eigen::VectorXd::Zero(p);

    // off-diagonal residuals touch only atoms i and j
    for (int i = 0; i < n; ++i)
      for (int j = i + 1; j < n; ++j) {
        double r = std::sqrt(2.0) * e(i, j) / n;
        // d r / d z_i = -sqrt(2)/n * dW_ij/dz_i; dW_ij/dz_i = W(z_j - z_i)/s^2
        Eigen::Vector3d di =
            -std::sqrt(2.0) / n * w(i, j) / (sigma * sigma) *
            (z.row(j) - z.row(i)).transpose();
        Eigen::Vector3d dj = -di;
        for (int a = 0; a < 3; ++a) {
          jtr(3 * i + a) += di(a) * r;
          jtr(3 * j + a) += dj(a) * r;
          for (int b = 0; b < 3; ++b) {
            jtj(3 * i + a, 3 * i + b) += di(a) * di(b);
            jtj(3 * j + a, 3 * j + b) += dj(a) * dj(b);
            jtj(3 * i + a, 3 * j + b) += di(a) * dj(b);
            jtj(3 * j + a, 3 * i + b) += dj(a) * di(b);
          }
        }
      }

    // diagonal residuals touch every atom
    Eigen::MatrixXd jrow(n, p);  // row i: d r_diag(i) / d z
    jrow.setZero();
    for (int i = 0; i < n; ++i) {
      for (int j = 0; j < n; ++j) {
        if (j == i) continue;
        Eigen::Vector3d dji =
            w(i, j) / (sigma * sigma) * (z.row(j) - z.row(i)).transpose();
        // dL_ii/dz_i accumulates, dL_ii/dz_j is the single-pair term
        for (int a = 0; a < 3; ++a) {
          jrow(i, 3 * i + a) += dji(a) / n;
          jrow(i, 3 * j + a) = -dji(a) / n;
        }
      }
      double r = e(i, i) / n;
      jtr += jrow.row(i).transpose() * r;
    }
    jtj.noalias() += jrow.transpose() * jrow;

    double gnorm = 2.0 * jtr.lpNorm<Eigen::Infinity>();
    if (gnorm < opts.grad_tol) {
      res.converged = true;
      break;
    }

    bool stepped = false;
    for (int attempt = 0; attempt < 25; ++attempt) {
      Eigen::MatrixXd a = jtj;
      for (int k = 0; k < p; ++k) a(k, k) += lm * (jtj(k, k) + 1e-12);
      Eigen::VectorXd delta = a.ldlt().solve(-jtr);
      if (!delta.allFinite()) {
        lm *= 3.0;
        continue;
      }
      Eigen::MatrixXd zt = z;
      for (int i = 0; i < n; ++i)
        for (int k = 0; k < 3; ++k) zt(i, k) += delta(3 * i + k);
      double ft = objective(zt, t, sigma);
      if (std::isfinite(ft) && ft < f) {
        z = zt;
        f = ft;
        lm = std::max(lm * 0.3, 1e-12);
        stepped = true;
        break;
      }
      lm *= 3.0;
    }
    res.iterations = iter + 1;
    if (!stepped) break;  // damping exhausted at the last good iterate
  }

  res.coords = coords_tensor(z);
  res.final_mse = f;
  if (f < opts.f_tol) res.converged = true;
  return res;
}

double align_rmsd(const TensorT<double>& a, const TensorT<double>& b) {
  Eigen::MatrixXd x = coords_matrix(a);
  Eigen::MatrixXd y = coords_matrix(b);
  require(x.rows() == y.rows(), "align: atom count mismatch");
  require(x.rows() > 0, "align: empty clouds");
  const int n = int(x.rows());

  Eigen::RowVector3d cx = x.colwise().mean();
  Eigen::RowVector3d cy = y.colwise().mean();
  x.rowwise() -= cx;
  y.rowwise() -= cy;

  Eigen::Matrix3d h = x.transpose() * y;
  Eigen::JacobiSVD<Eigen::Matrix3d> svd(h, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Eigen::Matrix3d r = svd.matrixV() * svd.matrixU().transpose();

  double ss = 0;
  for (int i = 0; i < n; ++i)
    ss += (y.row(i).transpose() - r * x.row(i).transpose()).squaredNorm();
  return std::sqrt(ss / n);
}

AtomCloud recover_structure(const LaplacianImage& img, const RefineOpts& opts) {
  SpectralInit init = spectral_embed(img);
  RefineResult res = refine_coords(img, init.coords, opts);
  AtomCloud cloud;
  cloud.kind = StructKind::NA;
  for (int i = 0; i < res.coords.shape[0]; ++i)
    cloud.coords.push_back({res.coords.data[size_t(i) * 3],
                            res.coords.data[size_t(i) * 3 + 1],
                            res.coords.data[size_t(i) * 3 + 2]});
  return cloud;
}

}  // namespace cbldm
