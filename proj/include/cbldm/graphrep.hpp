#pragma once

#include "cbldm/common.hpp"
#include "cbldm/nn/tensor.hpp"
#include "cbldm/structgen.hpp"

namespace cbldm {

// Gaussian-kernel graph Laplacian of a cluster, stored padded to
// norm capacity and divided by norm_constant for model I/O.
struct LaplacianImage {
  TensorT<double> mat;       // {N_max, N_max}, normalized scale
  int n_atoms = 0;           // true atom count, top-left block
  double sigma = 5.0;        // kernel width, Å
  double norm_constant = 1;  // divisor applied to the stored matrix

  int capacity() const { return mat.shape.empty() ? 0 : mat.shape[0]; }
  double at(int i, int j) const {
    return mat.data[size_t(i) * size_t(capacity()) + size_t(j)];
  }
  double& at(int i, int j) {
    return mat.data[size_t(i) * size_t(capacity()) + size_t(j)];
  }
};

// W_ij = exp(-|v_i - v_j|^2 / 2 sigma^2), L = diag(row sums of W) - W on the
// n x n block, zero padding beyond, all entries divided by norm_constant.
LaplacianImage laplacian_encode(const AtomCloud& cloud, double sigma, int n_max,
                                double norm_constant);

// physical-scale n x n Laplacian (normalization undone, padding dropped)
TensorT<double> physical_block(const LaplacianImage& img);

// {N, N} -> {4, N/2, N/2}, quadrants ordered TL, TR, BL, BR; exact inverse
TensorT<double> block_split(const TensorT<double>& mat);
TensorT<double> block_merge(const TensorT<double>& blocks);

// Clean a raw model output into a valid Laplacian: average with the
// transpose, infer the atom count from the diagonal, zero the padding,
// clamp off-diagonals to <= 0, rebuild the diagonal from row sums.
LaplacianImage symmetrize(const TensorT<double>& raw, double sigma,
                          double norm_constant);

}  // namespace cbldm
