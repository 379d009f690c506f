#pragma once

// Dense double-precision inner loops used by the tensor ops.
//
// Every kernel has a portable scalar reference implementation; wider
// variants are compiled into separate translation units with their own
// target flags and selected once at runtime from the CPU feature set.
// Results differ from the reference only by floating-point reassociation.

#include <cstddef>
#include <string_view>

namespace slbr::kernels {

enum class Isa { scalar, avx2 };

std::string_view isa_name(Isa isa);

struct KernelTable {
  Isa isa;

  // C[M,N] (+)= A[M,K] * B[K,N]
  // A(i,k) lives at a[i * a_rs + k * a_cs], so a transposed operand is just
  // a swap of strides. B and C are row-major with leading dims ldb, ldc.
  void (*gemm)(std::size_t m, std::size_t n, std::size_t k, const double* a,
               std::ptrdiff_t a_rs, std::ptrdiff_t a_cs, const double* b,
               std::ptrdiff_t ldb, double* c, std::ptrdiff_t ldc,
               bool accumulate);

  // C[M,N] += A[M,K] * B[N,K]^T, both operands row-major (row dot products).
  void (*gemm_abt)(std::size_t m, std::size_t n, std::size_t k,
                   const double* a, std::ptrdiff_t lda, const double* b,
                   std::ptrdiff_t ldb, double* c, std::ptrdiff_t ldc);

  // y += alpha * x
  void (*axpy)(std::size_t n, double alpha, const double* x, double* y);

  double (*dot)(std::size_t n, const double* x, const double* y);

  double (*sum)(std::size_t n, const double* x);
};

const KernelTable& scalar_table();

// nullptr when the variant was not compiled in.
const KernelTable* avx2_table();

bool cpu_supports(Isa isa);

// The table every op dispatches through. Chosen on first use: the widest
// supported variant, unless SLBR_KERNELS=scalar|avx2 says otherwise.
const KernelTable& active();

// Pins the active table (tests, reproducibility runs). Throws
// std::invalid_argument when the CPU or build lacks the variant.
void set_active(Isa isa);

}  // namespace slbr::kernels
