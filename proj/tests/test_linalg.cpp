#include "doctest.h"
#include "oracles.hpp"
#include "topo/common.hpp"
#include "topo/linalg.hpp"

using namespace topo;

namespace {

Matrix random_matrix(int r, int c, Rng& rng) {
  Matrix m(r, c);
  for (double& v : m.data) v = rng.uniform(-1.0, 1.0);
  return m;
}

}  // namespace

TEST_CASE("parallel gemm kernels are bitwise identical to the serial references") {
  Rng rng(11);
  for (int trial = 0; trial < 10; ++trial) {
    const int m = 1 + static_cast<int>(rng.below(80));
    const int k = 1 + static_cast<int>(rng.below(80));
    const int n = 1 + static_cast<int>(rng.below(80));
    const Matrix a = random_matrix(m, k, rng);
    const Matrix b = random_matrix(k, n, rng);
    Matrix c1, c2;
    gemm_nn_serial(a, b, c1);
    gemm_nn(a, b, c2);
    CHECK(c1.data == c2.data);

    const Matrix at = random_matrix(k, m, rng);
    gemm_tn_serial(at, b, c1);
    gemm_tn(at, b, c2);
    CHECK(c1.data == c2.data);

    const Matrix bt = random_matrix(n, k, rng);
    gemm_nt_serial(a, bt, c1);
    gemm_nt(a, bt, c2);
    CHECK(c1.data == c2.data);
  }
}

TEST_CASE("gemm against a tiny hand computation") {
  Matrix a(2, 2), b(2, 2), c;
  a(0, 0) = 1;
  a(0, 1) = 2;
  a(1, 0) = 3;
  a(1, 1) = 4;
  b(0, 0) = 5;
  b(0, 1) = 6;
  b(1, 0) = 7;
  b(1, 1) = 8;
  gemm_nn(a, b, c);
  CHECK(c(0, 0) == 19);
  CHECK(c(0, 1) == 22);
  CHECK(c(1, 0) == 43);
  CHECK(c(1, 1) == 50);

  gemm_tn(a, b, c);  // a^T b
  CHECK(c(0, 0) == 26);
  CHECK(c(0, 1) == 30);
  CHECK(c(1, 0) == 38);
  CHECK(c(1, 1) == 44);

  gemm_nt(a, b, c);  // a b^T
  CHECK(c(0, 0) == 17);
  CHECK(c(0, 1) == 23);
  CHECK(c(1, 0) == 39);
  CHECK(c(1, 1) == 53);
}

TEST_CASE("dimension mismatches are rejected") {
  Matrix a(2, 3), b(2, 2), c;
  CHECK_THROWS_AS(gemm_nn(a, b, c), std::invalid_argument);
}
