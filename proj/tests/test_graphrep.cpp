#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <Eigen/Dense>
#include <cmath>

#include "cbldm/graphrep.hpp"
#include "cbldm/rng.hpp"
#include "doctest.h"

using namespace cbldm;

namespace {

AtomCloud random_cloud(RngStream& rng, int n, double box = 10.0) {
  AtomCloud c;
  for (int i = 0; i < n; ++i)
    c.coords.push_back(
        {rng.uniform() * box, rng.uniform() * box, rng.uniform() * box});
  return c;
}

Eigen::MatrixXd to_eigen(const TensorT<double>& t) {
  Eigen::MatrixXd m(t.shape[0], t.shape[1]);
  for (int i = 0; i < t.shape[0]; ++i)
    for (int j = 0; j < t.shape[1]; ++j)
      m(i, j) = t.data[size_t(i) * size_t(t.shape[1]) + size_t(j)];
  return m;
}

}  // namespace

TEST_CASE("two atoms at sqrt(2) sigma apart") {
  AtomCloud c;
  c.coords = {{0, 0, 0}, {std::sqrt(2.0), 0, 0}};
  LaplacianImage img = laplacian_encode(c, 1.0, 2, 1.0);
  const double e1 = std::exp(-1.0);
  CHECK(img.at(0, 0) == doctest::Approx(e1).epsilon(1e-9));
  CHECK(img.at(0, 1) == doctest::Approx(-e1).epsilon(1e-9));
  CHECK(img.at(1, 0) == doctest::Approx(-e1).epsilon(1e-9));
  CHECK(img.at(1, 1) == doctest::Approx(e1).epsilon(1e-9));
}

TEST_CASE("equilateral triangle with side sqrt(2) sigma") {
  double s = std::sqrt(2.0) * 5.0;
  AtomCloud c;
  c.coords = {{0, 0, 0}, {s, 0, 0}, {s / 2, s * std::sqrt(3.0) / 2, 0}};
  LaplacianImage img = laplacian_encode(c, 5.0, 3, 1.0);
  const double e1 = std::exp(-1.0);
  for (int i = 0; i < 3; ++i) {
    CHECK(img.at(i, i) == doctest::Approx(2 * e1).epsilon(1e-9));
    for (int j = 0; j < 3; ++j)
      if (i != j) CHECK(img.at(i, j) == doctest::Approx(-e1).epsilon(1e-9));
  }
}

TEST_CASE("single atom encodes to a zero matrix") {
  AtomCloud c;
  c.coords = {{1, 2, 3}};
  LaplacianImage img = laplacian_encode(c, 5.0, 4, 4.0);
  CHECK(img.n_atoms == 1);
  for (double v : img.mat.data) CHECK(v == 0.0);
}

TEST_CASE("capacity and parameter errors") {
  RngStream rng(1);
  AtomCloud c = random_cloud(rng, 5);
  CHECK_THROWS_WITH_AS(laplacian_encode(c, 5.0, 4, 4.0),
                       "laplacian: 5 atoms exceed capacity 4", Error);
  CHECK_THROWS_AS(laplacian_encode(c, 0.0, 8, 8.0), Error);
  CHECK_THROWS_AS(laplacian_encode(c, 5.0, 8, 0.0), Error);
}

TEST_CASE("normalization divides every entry") {
  RngStream rng(2);
  AtomCloud c = random_cloud(rng, 6);
  LaplacianImage a = laplacian_encode(c, 5.0, 8, 1.0);
  LaplacianImage b = laplacian_encode(c, 5.0, 8, 8.0);
  for (size_t k = 0; k < a.mat.data.size(); ++k)
    CHECK(b.mat.data[k] == doctest::Approx(a.mat.data[k] / 8.0).epsilon(1e-12));
  TensorT<double> phys = physical_block(b);
  CHECK(phys.shape == std::vector<int>{6, 6});
  for (int i = 0; i < 6; ++i)
    for (int j = 0; j < 6; ++j)
      CHECK(phys.data[size_t(i) * 6 + size_t(j)] ==
            doctest::Approx(a.at(i, j)).epsilon(1e-12));
}

TEST_CASE("padding beyond the atom count stays zero") {
  RngStream rng(3);
  AtomCloud c = random_cloud(rng, 5);
  LaplacianImage img = laplacian_encode(c, 5.0, 8, 8.0);
  for (int i = 0; i < 8; ++i)
    for (int j = 0; j < 8; ++j)
      if (i >= 5 || j >= 5) CHECK(img.at(i, j) == 0.0);
}

TEST_CASE("laplacian algebra on random clouds") {
  RngStream rng(7);
  for (int trial = 0; trial < 20; ++trial) {
    int n = 2 + int(rng.uniform_int(15));
    AtomCloud c = random_cloud(rng, n);
    LaplacianImage img = laplacian_encode(c, 5.0, n, 1.0);
    Eigen::MatrixXd L = to_eigen(physical_block(img));

    for (int i = 0; i < n; ++i) CHECK(std::abs(L.row(i).sum()) < 1e-9);
    CHECK((L - L.transpose()).cwiseAbs().maxCoeff() < 1e-12);

    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(L);
    CHECK(es.eigenvalues().minCoeff() > -1e-9);
    // all-positive weights make the graph connected: one zero eigenvalue
    int near_zero = 0;
    for (int i = 0; i < n; ++i)
      if (std::abs(es.eigenvalues()(i)) < 1e-9) ++near_zero;
    CHECK(near_zero == 1);
  }
}

TEST_CASE("farther pairs couple more weakly") {
  AtomCloud c;
  c.coords = {{0, 0, 0}, {2.0, 0, 0}, {5.0, 0, 0}};
  LaplacianImage img = laplacian_encode(c, 5.0, 3, 1.0);
  CHECK(std::abs(img.at(0, 1)) > std::abs(img.at(0, 2)));
  CHECK(std::abs(img.at(1, 2)) > std::abs(img.at(0, 2)));
}

TEST_CASE("isometry leaves the encoding unchanged") {
  RngStream rng(11);
  AtomCloud c = random_cloud(rng, 12);
  AtomCloud moved = c;
  double t = 1.1;
  for (auto& v : moved.coords) {
    double x = std::cos(t) * v[0] - std::sin(t) * v[1];
    double y = std::sin(t) * v[0] + std::cos(t) * v[1];
    v = {x + 7.0, y - 2.0, v[2] + 3.3};
  }
  LaplacianImage a = laplacian_encode(c, 5.0, 16, 16.0);
  LaplacianImage b = laplacian_encode(moved, 5.0, 16, 16.0);
  double worst = 0;
  for (size_t k = 0; k < a.mat.data.size(); ++k)
    worst = std::max(worst, std::abs(a.mat.data[k] - b.mat.data[k]));
  CHECK(worst < 1e-9);
}

TEST_CASE("block split places quadrants and merge inverts bitwise") {
  TensorT<double> m = TensorT<double>::zeros({4, 4});
  for (int k = 0; k < 16; ++k) m.data[size_t(k)] = k + 1;  // distinct entries
  TensorT<double> b = block_split(m);
  CHECK(b.shape == std::vector<int>{4, 2, 2});
  // TL = [1 2; 5 6], TR = [3 4; 7 8], BL = [9 10; 13 14], BR = [11 12; 15 16]
  CHECK(b.data[0] == 1);
  CHECK(b.data[3] == 6);
  CHECK(b.data[4] == 3);
  CHECK(b.data[7] == 8);
  CHECK(b.data[8] == 9);
  CHECK(b.data[12] == 11);
  CHECK(b.data[15] == 16);

  TensorT<double> back = block_merge(b);
  REQUIRE(back.shape == m.shape);
  for (int k = 0; k < 16; ++k) CHECK(back.data[size_t(k)] == m.data[size_t(k)]);

  double sum_m = 0, sum_b = 0;
  for (double v : m.data) sum_m += v;
  for (double v : b.data) sum_b += v;
  CHECK(sum_m == sum_b);

  CHECK_THROWS_AS(block_split(TensorT<double>::zeros({3, 3})), Error);
  CHECK_THROWS_AS(block_merge(TensorT<double>::zeros({4, 2, 3})), Error);
  CHECK_THROWS_AS(block_merge(TensorT<double>::zeros({3, 2, 2})), Error);
}

TEST_CASE("round trip through split and merge on a real encoding") {
  RngStream rng(13);
  AtomCloud c = random_cloud(rng, 9);
  LaplacianImage img = laplacian_encode(c, 5.0, 16, 16.0);
  TensorT<double> back = block_merge(block_split(img.mat));
  for (size_t k = 0; k < img.mat.data.size(); ++k)
    CHECK(back.data[k] == img.mat.data[k]);  // exact
}

TEST_CASE("symmetrize averages mismatched off-diagonals") {
  TensorT<double> raw = TensorT<double>::zeros({4, 4});
  auto set = [&](int i, int j, double v) { raw.data[size_t(i) * 4 + size_t(j)] = v; };
  set(0, 0, 0.3);
  set(1, 1, 0.3);
  set(0, 1, -0.2);
  set(1, 0, -0.4);
  LaplacianImage img = symmetrize(raw, 5.0, 1.0);
  CHECK(img.n_atoms == 2);
  CHECK(img.at(0, 1) == doctest::Approx(-0.3).epsilon(1e-12));
  CHECK(img.at(1, 0) == doctest::Approx(-0.3).epsilon(1e-12));
  // diagonal rebuilt from the row sum
  CHECK(img.at(0, 0) == doctest::Approx(0.3).epsilon(1e-12));
}

TEST_CASE("a valid laplacian is a symmetrize fixed point") {
  RngStream rng(17);
  AtomCloud c = random_cloud(rng, 6);
  LaplacianImage img = laplacian_encode(c, 5.0, 8, 8.0);
  LaplacianImage out = symmetrize(img.mat, 5.0, 8.0);
  CHECK(out.n_atoms == 6);
  for (size_t k = 0; k < img.mat.data.size(); ++k)
    CHECK(std::abs(out.mat.data[k] - img.mat.data[k]) < 1e-9);
}

TEST_CASE("symmetrize clamps positive off-diagonals and zeroes padding") {
  TensorT<double> raw = TensorT<double>::zeros({4, 4});
  auto set = [&](int i, int j, double v) { raw.data[size_t(i) * 4 + size_t(j)] = v; };
  set(0, 0, 1.0);
  set(1, 1, 1.0);
  set(2, 2, 1.0);
  set(0, 1, 0.5);  // positive coupling is unphysical, must clamp away
  set(1, 0, 0.5);
  set(0, 2, -0.4);
  set(2, 0, -0.4);
  set(1, 2, -0.3);
  set(2, 1, -0.3);
  set(0, 3, -0.2);  // row 3 has tiny diagonal: treated as padding
  set(3, 0, -0.2);
  set(3, 3, 0.01);
  LaplacianImage img = symmetrize(raw, 5.0, 1.0);
  CHECK(img.n_atoms == 3);
  CHECK(img.at(0, 1) == 0.0);
  for (int i = 0; i < 3; ++i) {
    double rowsum = 0;
    for (int j = 0; j < 4; ++j) {
      rowsum += img.at(i, j);
      if (i != j) CHECK(img.at(i, j) <= 0.0);
    }
    CHECK(std::abs(rowsum) < 1e-12);
    CHECK(img.at(3, i) == 0.0);
    CHECK(img.at(i, 3) == 0.0);
  }
}

TEST_CASE("symmetrize rejects degenerate outputs") {
  TensorT<double> zeros = TensorT<double>::zeros({4, 4});
  CHECK_THROWS_AS(symmetrize(zeros, 5.0, 1.0), Error);

  TensorT<double> one = TensorT<double>::zeros({4, 4});
  one.data[0] = 1.0;  // single active row
  CHECK_THROWS_AS(symmetrize(one, 5.0, 1.0), Error);

  TensorT<double> nan = TensorT<double>::zeros({2, 2});
  nan.data[0] = std::nan("");
  CHECK_THROWS_AS(symmetrize(nan, 5.0, 1.0), Error);
}
