#pragma once

#include <vector>

#include "cbldm/graphrep.hpp"
#include "cbldm/nn/tensor.hpp"

namespace cbldm {

// Coordinates from the generalized eigenproblem L y = lambda D y, D = diag(L).
struct SpectralInit {
  TensorT<double> coords;           // {n, 3}; trailing dims zero when n < 4
  std::vector<double> eigenvalues;  // selected, ascending, strictly positive
};

// Eigenvectors of the min(3, n-1) smallest positive generalized eigenvalues,
// via the symmetric reduction D^(-1/2) L D^(-1/2), each column scaled by
// 1/sqrt(lambda). Eigenvalues below 1e-8 * lambda_max count as null modes.
SpectralInit spectral_embed(const LaplacianImage& img);

// f(Z) = (1/n^2) |L(Z) - T|_F^2 with L(Z) the Gaussian-kernel Laplacian of Z
// at the image's sigma, compared against the physical-scale target block.
double laplacian_mse(const LaplacianImage& target, const TensorT<double>& coords);
TensorT<double> laplacian_mse_grad(const LaplacianImage& target,
                                   const TensorT<double>& coords);

struct RefineOpts {
  int max_iters = 200;
  double grad_tol = 1e-8;  // infinity norm of the gradient
  double f_tol = 1e-12;
};

struct RefineResult {
  TensorT<double> coords;  // {n, 3}
  double final_mse = 0;
  int iterations = 0;
  bool converged = false;
};

// Levenberg-Marquardt on the Laplacian residuals; accepts only strict
// decreases of f, so the result never exceeds the initial objective.
RefineResult refine_coords(const LaplacianImage& target,
                           const TensorT<double>& init,
                           const RefineOpts& opts = {});

// RMSD after centroid removal and optimal rotation; reflections allowed
// because the Laplacian cannot see chirality.
double align_rmsd(const TensorT<double>& a, const TensorT<double>& b);

// spectral_embed + refine_coords, packaged as a cloud for XYZ output
AtomCloud recover_structure(const LaplacianImage& img,
                            const RefineOpts& opts = {});

}  // namespace cbldm
