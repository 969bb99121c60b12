#include "topo/linalg.hpp"

#include <algorithm>
#include <cstring>

namespace topo {

namespace {

void check_nn(const Matrix& a, const Matrix& b, Matrix& c) {
  if (a.cols != b.rows) throw std::invalid_argument("gemm_nn: inner dimensions differ");
  if (c.rows != a.rows || c.cols != b.cols) c = Matrix(a.rows, b.cols);
}

// Work estimate used by the `if` clauses below: spawning threads for the tiny
// per-step matmuls of a 25-unit network costs more than it saves.
constexpr long kParallelCutoff = 1 << 15;

}  // namespace

void gemm_nn_serial(const Matrix& a, const Matrix& b, Matrix& c) {
  check_nn(a, b, c);
  c.fill(0.0);
  for (int i = 0; i < a.rows; ++i) {
    double* ci = c.row(i);
    const double* ai = a.row(i);
    for (int k = 0; k < a.cols; ++k) {
      const double aik = ai[k];
      const double* bk = b.row(k);
      for (int j = 0; j < b.cols; ++j) ci[j] += aik * bk[j];
    }
  }
}

void gemm_nn(const Matrix& a, const Matrix& b, Matrix& c) {
  check_nn(a, b, c);
  c.fill(0.0);
  const long work = static_cast<long>(a.rows) * a.cols * b.cols;
#pragma omp parallel for schedule(static) if (work > kParallelCutoff)
  for (int i = 0; i < a.rows; ++i) {
    double* ci = c.row(i);
    const double* ai = a.row(i);
    for (int k = 0; k < a.cols; ++k) {
      const double aik = ai[k];
      const double* bk = b.row(k);
      for (int j = 0; j < b.cols; ++j) ci[j] += aik * bk[j];
    }
  }
}

void gemm_tn_serial(const Matrix& a, const Matrix& b, Matrix& c) {
  if (a.rows != b.rows) throw std::invalid_argument("gemm_tn: inner dimensions differ");
  if (c.rows != a.cols || c.cols != b.cols) c = Matrix(a.cols, b.cols);
  c.fill(0.0);
  for (int i = 0; i < a.cols; ++i) {
    double* ci = c.row(i);
    for (int k = 0; k < a.rows; ++k) {
      const double aki = a(k, i);
      const double* bk = b.row(k);
      for (int j = 0; j < b.cols; ++j) ci[j] += aki * bk[j];
    }
  }
}

void gemm_tn(const Matrix& a, const Matrix& b, Matrix& c) {
  if (a.rows != b.rows) throw std::invalid_argument("gemm_tn: inner dimensions differ");
  if (c.rows != a.cols || c.cols != b.cols) c = Matrix(a.cols, b.cols);
  c.fill(0.0);
  const long work = static_cast<long>(a.cols) * a.rows * b.cols;
#pragma omp parallel for schedule(static) if (work > kParallelCutoff)
  for (int i = 0; i < a.cols; ++i) {
    double* ci = c.row(i);
    for (int k = 0; k < a.rows; ++k) {
      const double aki = a(k, i);
      const double* bk = b.row(k);
      for (int j = 0; j < b.cols; ++j) ci[j] += aki * bk[j];
    }
  }
}

void gemm_nt_serial(const Matrix& a, const Matrix& b, Matrix& c) {
  if (a.cols != b.cols) throw std::invalid_argument("gemm_nt: inner dimensions differ");
  if (c.rows != a.rows || c.cols != b.rows) c = Matrix(a.rows, b.rows);
  for (int i = 0; i < a.rows; ++i) {
    double* ci = c.row(i);
    const double* ai = a.row(i);
    for (int j = 0; j < b.rows; ++j) {
      const double* bj = b.row(j);
      double s = 0.0;
      for (int k = 0; k < a.cols; ++k) s += ai[k] * bj[k];
      ci[j] = s;
    }
  }
}

void gemm_nt(const Matrix& a, const Matrix& b, Matrix& c) {
  if (a.cols != b.cols) throw std::invalid_argument("gemm_nt: inner dimensions differ");
  if (c.rows != a.rows || c.cols != b.rows) c = Matrix(a.rows, b.rows);
  const long work = static_cast<long>(a.rows) * a.cols * b.rows;
#pragma omp parallel for schedule(static) if (work > kParallelCutoff)
  for (int i = 0; i < a.rows; ++i) {
    double* ci = c.row(i);
    const double* ai = a.row(i);
    for (int j = 0; j < b.rows; ++j) {
      const double* bj = b.row(j);
      double s = 0.0;
      for (int k = 0; k < a.cols; ++k) s += ai[k] * bj[k];
      ci[j] = s;
    }
  }
}

}  // namespace topo
