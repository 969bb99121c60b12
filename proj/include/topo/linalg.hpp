#pragma once

#include <cstddef>
#include <span>
#include <stdexcept>
#include <vector>

namespace topo {

// Dense row-major matrix of doubles. Small by design: the networks in this
// project are tiny and we want full control over evaluation order so that
// serial and OpenMP execution produce bitwise-identical results.
struct Matrix {
  int rows = 0;
  int cols = 0;
  std::vector<double> data;

  Matrix() = default;
  Matrix(int r, int c) : rows(r), cols(c), data(static_cast<size_t>(r) * static_cast<size_t>(c), 0.0) {}

  double& operator()(int r, int c) { return data[static_cast<size_t>(r) * cols + c]; }
  double operator()(int r, int c) const { return data[static_cast<size_t>(r) * cols + c]; }

  double* row(int r) { return data.data() + static_cast<size_t>(r) * cols; }
  const double* row(int r) const { return data.data() + static_cast<size_t>(r) * cols; }

  std::span<const double> row_span(int r) const { return {row(r), static_cast<size_t>(cols)}; }

  void fill(double v) { std::fill(data.begin(), data.end(), v); }
};

// C = A * B. The `_serial` kernels are the reference implementations; the
// unsuffixed entry points run the same loop nest with OpenMP across output
// rows. Each output element is produced by exactly one thread with the same
// inner-loop order, so both paths are bitwise identical.
void gemm_nn_serial(const Matrix& a, const Matrix& b, Matrix& c);
void gemm_nn(const Matrix& a, const Matrix& b, Matrix& c);

// C = A^T * B
void gemm_tn_serial(const Matrix& a, const Matrix& b, Matrix& c);
void gemm_tn(const Matrix& a, const Matrix& b, Matrix& c);

// C = A * B^T
void gemm_nt_serial(const Matrix& a, const Matrix& b, Matrix& c);
void gemm_nt(const Matrix& a, const Matrix& b, Matrix& c);

}  // namespace topo
