#include "slbr/kernels.hpp"

namespace slbr::kernels {
namespace {

void gemm_ref(std::size_t m, std::size_t n, std::size_t k, const double* a,
              std::ptrdiff_t a_rs, std::ptrdiff_t a_cs, const double* b,
              std::ptrdiff_t ldb, double* c, std::ptrdiff_t ldc,
              bool accumulate) {
  for (std::size_t i = 0; i < m; ++i) {
    double* crow = c + static_cast<std::ptrdiff_t>(i) * ldc;
    if (!accumulate) {
      for (std::size_t j = 0; j < n; ++j) crow[j] = 0.0;
    }
    for (std::size_t p = 0; p < k; ++p) {
      const double aik = a[static_cast<std::ptrdiff_t>(i) * a_rs +
                           static_cast<std::ptrdiff_t>(p) * a_cs];
      if (aik == 0.0) continue;
      const double* brow = b + static_cast<std::ptrdiff_t>(p) * ldb;
      for (std::size_t j = 0; j < n; ++j) crow[j] += aik * brow[j];
    }
  }
}

void gemm_abt_ref(std::size_t m, std::size_t n, std::size_t k,
                  const double* a, std::ptrdiff_t lda, const double* b,
                  std::ptrdiff_t ldb, double* c, std::ptrdiff_t ldc) {
  for (std::size_t i = 0; i < m; ++i) {
    const double* arow = a + static_cast<std::ptrdiff_t>(i) * lda;
    for (std::size_t j = 0; j < n; ++j) {
      const double* brow = b + static_cast<std::ptrdiff_t>(j) * ldb;
      double acc = 0.0;
      for (std::size_t p = 0; p < k; ++p) acc += arow[p] * brow[p];
      c[static_cast<std::ptrdiff_t>(i) * ldc + static_cast<std::ptrdiff_t>(j)] += acc;
    }
  }
}

void axpy_ref(std::size_t n, double alpha, const double* x, double* y) {
  for (std::size_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

double dot_ref(std::size_t n, const double* x, const double* y) {
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) acc += x[i] * y[i];
  return acc;
}

double sum_ref(std::size_t n, const double* x) {
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) acc += x[i];
  return acc;
}

}  // namespace

const KernelTable& scalar_table() {
  static const KernelTable table{Isa::scalar, gemm_ref, gemm_abt_ref,
                                 axpy_ref,    dot_ref,  sum_ref};
  return table;
}

}  // namespace slbr::kernels
