// AVX2 + FMA variants. This translation unit is the only one compiled with
// -mavx2 -mfma; nothing here may run before cpu_supports(Isa::avx2) is checked.

#include <immintrin.h>

#include "slbr/kernels.hpp"

namespace slbr::kernels {
namespace {

inline double hsum(__m256d v) {
  const __m128d lo = _mm256_castpd256_pd128(v);
  const __m128d hi = _mm256_extractf128_pd(v, 1);
  const __m128d s = _mm_add_pd(lo, hi);
  return _mm_cvtsd_f64(_mm_add_sd(s, _mm_unpackhi_pd(s, s)));
}

// One row of A against columns [j0, n) of B.
inline void gemm_row(std::size_t n, std::size_t k, const double* arow,
                     std::ptrdiff_t a_cs, const double* b, std::ptrdiff_t ldb,
                     double* crow, std::size_t j0) {
  std::size_t j = j0;
  for (; j + 8 <= n; j += 8) {
    __m256d c0 = _mm256_loadu_pd(crow + j);
    __m256d c1 = _mm256_loadu_pd(crow + j + 4);
    for (std::size_t p = 0; p < k; ++p) {
      const double* bp = b + static_cast<std::ptrdiff_t>(p) * ldb + j;
      const __m256d av = _mm256_broadcast_sd(arow + static_cast<std::ptrdiff_t>(p) * a_cs);
      c0 = _mm256_fmadd_pd(av, _mm256_loadu_pd(bp), c0);
      c1 = _mm256_fmadd_pd(av, _mm256_loadu_pd(bp + 4), c1);
    }
    _mm256_storeu_pd(crow + j, c0);
    _mm256_storeu_pd(crow + j + 4, c1);
  }
  for (; j < n; ++j) {
    double acc = crow[j];
    for (std::size_t p = 0; p < k; ++p) {
      acc += arow[static_cast<std::ptrdiff_t>(p) * a_cs] *
             b[static_cast<std::ptrdiff_t>(p) * ldb + static_cast<std::ptrdiff_t>(j)];
    }
    crow[j] = acc;
  }
}

void gemm_avx2(std::size_t m, std::size_t n, std::size_t k, const double* a,
               std::ptrdiff_t a_rs, std::ptrdiff_t a_cs, const double* b,
               std::ptrdiff_t ldb, double* c, std::ptrdiff_t ldc,
               bool accumulate) {
  if (!accumulate) {
    const __m256d zero = _mm256_setzero_pd();
    for (std::size_t i = 0; i < m; ++i) {
      double* crow = c + static_cast<std::ptrdiff_t>(i) * ldc;
      std::size_t j = 0;
      for (; j + 4 <= n; j += 4) _mm256_storeu_pd(crow + j, zero);
      for (; j < n; ++j) crow[j] = 0.0;
    }
  }

  std::size_t i = 0;
  for (; i + 4 <= m; i += 4) {
    const double* a0 = a + static_cast<std::ptrdiff_t>(i) * a_rs;
    const double* a1 = a0 + a_rs;
    const double* a2 = a1 + a_rs;
    const double* a3 = a2 + a_rs;
    double* c0 = c + static_cast<std::ptrdiff_t>(i) * ldc;
    double* c1 = c0 + ldc;
    double* c2 = c1 + ldc;
    double* c3 = c2 + ldc;

    std::size_t j = 0;
    for (; j + 8 <= n; j += 8) {
      __m256d r00 = _mm256_loadu_pd(c0 + j), r01 = _mm256_loadu_pd(c0 + j + 4);
      __m256d r10 = _mm256_loadu_pd(c1 + j), r11 = _mm256_loadu_pd(c1 + j + 4);
      __m256d r20 = _mm256_loadu_pd(c2 + j), r21 = _mm256_loadu_pd(c2 + j + 4);
      __m256d r30 = _mm256_loadu_pd(c3 + j), r31 = _mm256_loadu_pd(c3 + j + 4);
      for (std::size_t p = 0; p < k; ++p) {
        const std::ptrdiff_t ap = static_cast<std::ptrdiff_t>(p) * a_cs;
        const double* bp = b + static_cast<std::ptrdiff_t>(p) * ldb + j;
        const __m256d b0 = _mm256_loadu_pd(bp);
        const __m256d b1 = _mm256_loadu_pd(bp + 4);
        __m256d av = _mm256_broadcast_sd(a0 + ap);
        r00 = _mm256_fmadd_pd(av, b0, r00);
        r01 = _mm256_fmadd_pd(av, b1, r01);
        av = _mm256_broadcast_sd(a1 + ap);
        r10 = _mm256_fmadd_pd(av, b0, r10);
        r11 = _mm256_fmadd_pd(av, b1, r11);
        av = _mm256_broadcast_sd(a2 + ap);
        r20 = _mm256_fmadd_pd(av, b0, r20);
        r21 = _mm256_fmadd_pd(av, b1, r21);
        av = _mm256_broadcast_sd(a3 + ap);
        r30 = _mm256_fmadd_pd(av, b0, r30);
        r31 = _mm256_fmadd_pd(av, b1, r31);
      }
      _mm256_storeu_pd(c0 + j, r00), _mm256_storeu_pd(c0 + j + 4, r01);
      _mm256_storeu_pd(c1 + j, r10), _mm256_storeu_pd(c1 + j + 4, r11);
      _mm256_storeu_pd(c2 + j, r20), _mm256_storeu_pd(c2 + j + 4, r21);
      _mm256_storeu_pd(c3 + j, r30), _mm256_storeu_pd(c3 + j + 4, r31);
    }
    if (j < n) {
      gemm_row(n, k, a0, a_cs, b, ldb, c0, j);
      gemm_row(n, k, a1, a_cs, b, ldb, c1, j);
      gemm_row(n, k, a2, a_cs, b, ldb, c2, j);
      gemm_row(n, k, a3, a_cs, b, ldb, c3, j);
    }
  }
  for (; i < m; ++i) {
    gemm_row(n, k, a + static_cast<std::ptrdiff_t>(i) * a_rs, a_cs, b, ldb,
             c + static_cast<std::ptrdiff_t>(i) * ldc, 0);
  }
}

void gemm_abt_avx2(std::size_t m, std::size_t n, std::size_t k,
                   const double* a, std::ptrdiff_t lda, const double* b,
                   std::ptrdiff_t ldb, double* c, std::ptrdiff_t ldc) {
  for (std::size_t i = 0; i < m; ++i) {
    const double* arow = a + static_cast<std::ptrdiff_t>(i) * lda;
    double* crow = c + static_cast<std::ptrdiff_t>(i) * ldc;
    std::size_t j = 0;
    for (; j + 4 <= n; j += 4) {
      const double* b0 = b + static_cast<std::ptrdiff_t>(j) * ldb;
      const double* b1 = b0 + ldb;
      const double* b2 = b1 + ldb;
      const double* b3 = b2 + ldb;
      __m256d s0 = _mm256_setzero_pd(), s1 = _mm256_setzero_pd();
      __m256d s2 = _mm256_setzero_pd(), s3 = _mm256_setzero_pd();
      std::size_t p = 0;
      for (; p + 4 <= k; p += 4) {
        const __m256d av = _mm256_loadu_pd(arow + p);
        s0 = _mm256_fmadd_pd(av, _mm256_loadu_pd(b0 + p), s0);
        s1 = _mm256_fmadd_pd(av, _mm256_loadu_pd(b1 + p), s1);
        s2 = _mm256_fmadd_pd(av, _mm256_loadu_pd(b2 + p), s2);
        s3 = _mm256_fmadd_pd(av, _mm256_loadu_pd(b3 + p), s3);
      }
      double t0 = hsum(s0), t1 = hsum(s1), t2 = hsum(s2), t3 = hsum(s3);
      for (; p < k; ++p) {
        t0 += arow[p] * b0[p];
        t1 += arow[p] * b1[p];
        t2 += arow[p] * b2[p];
        t3 += arow[p] * b3[p];
      }
      crow[j] += t0;
      crow[j + 1] += t1;
      crow[j + 2] += t2;
      crow[j + 3] += t3;
    }
    for (; j < n; ++j) {
      const double* brow = b + static_cast<std::ptrdiff_t>(j) * ldb;
      __m256d s = _mm256_setzero_pd();
      std::size_t p = 0;
      for (; p + 4 <= k; p += 4) {
        s = _mm256_fmadd_pd(_mm256_loadu_pd(arow + p), _mm256_loadu_pd(brow + p), s);
      }
      double t = hsum(s);
      for (; p < k; ++p) t += arow[p] * brow[p];
      crow[j] += t;
    }
  }
}

void axpy_avx2(std::size_t n, double alpha, const double* x, double* y) {
  const __m256d av = _mm256_set1_pd(alpha);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    _mm256_storeu_pd(y + i, _mm256_fmadd_pd(av, _mm256_loadu_pd(x + i),
                                            _mm256_loadu_pd(y + i)));
  }
  for (; i < n; ++i) y[i] += alpha * x[i];
}

double dot_avx2(std::size_t n, const double* x, const double* y) {
  __m256d s0 = _mm256_setzero_pd(), s1 = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    s0 = _mm256_fmadd_pd(_mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i), s0);
    s1 = _mm256_fmadd_pd(_mm256_loadu_pd(x + i + 4), _mm256_loadu_pd(y + i + 4), s1);
  }
  double acc = hsum(_mm256_add_pd(s0, s1));
  for (; i < n; ++i) acc += x[i] * y[i];
  return acc;
}

double sum_avx2(std::size_t n, const double* x) {
  __m256d s0 = _mm256_setzero_pd(), s1 = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    s0 = _mm256_add_pd(_mm256_loadu_pd(x + i), s0);
    s1 = _mm256_add_pd(_mm256_loadu_pd(x + i + 4), s1);
  }
  double acc = hsum(_mm256_add_pd(s0, s1));
  for (; i < n; ++i) acc += x[i];
  return acc;
}

}  // namespace

const KernelTable* avx2_table() {
  static const KernelTable table{Isa::avx2, gemm_avx2, gemm_abt_avx2,
                                 axpy_avx2, dot_avx2,  sum_avx2};
  return &table;
}

}  // namespace slbr::kernels
