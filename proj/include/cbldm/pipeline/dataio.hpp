#pragma once

#include <string>
#include <vector>

#include "cbldm/diffusion.hpp"
#include "cbldm/nn/tensor.hpp"
#include "cbldm/pipeline/profile.hpp"
#include "cbldm/structgen.hpp"

namespace cbldm {

// One manifest entry materialized: coordinates plus the PDF curve on the
// profile grid (read from the sibling .pdf file when present, simulated
// otherwise).
struct Sample {
  ManifestEntry entry;
  AtomCloud cloud;
  PdfCurve pdf;
};

std::vector<Sample> load_dataset(const std::string& dir, const Profile& prof,
                                 bool with_pdf = true);

// Simulates and writes <stem>.pdf next to every manifest entry. Returns the
// number of curves written.
int write_pdf_files(const std::string& dir, const Profile& prof);

// Deterministic shuffled split; indices come back sorted within each side.
struct Split {
  std::vector<int> train, val;
};
Split split_indices(int n, double train_frac, uint64_t seed);

// Max-abs normalized curve reshaped to the profile's {cond_ch, cond_len}
// image. Throws on an identically zero curve.
TensorT<float> condition_from_pdf(const PdfCurve& curve, const Profile& prof);

// Flattened condition code {cond_dim} for the latent stages.
TensorT<float> flatten_code(const TensorT<float>& code);

// Gaussian-kernel Laplacian, padded to n_max, quadrant-split to
// {4, n_max/2, n_max/2}, cast to float.
TensorT<float> blocks_from_cloud(const AtomCloud& cloud, const Profile& prof);

// Skip plans live in tiny key=value files: "t1 = 10" and "t2 = 60" lines.
SkipPlan read_plan(const std::string& path);
void write_plan(const std::string& path, const SkipPlan& plan);

// Whitespace-separated numeric matrix with '#' comments; all rows must have
// equal length. Used for raw Laplacian input and output.
TensorT<double> read_matrix(const std::string& path);
void write_matrix(const std::string& path, const TensorT<double>& mat);

}  // namespace cbldm
