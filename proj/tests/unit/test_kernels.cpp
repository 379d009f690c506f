#include <doctest.h>

#include <random>
#include <vector>

#include "../support/helpers.hpp"
#include "slbr/kernels.hpp"
#include "slbr/ops.hpp"

using namespace slbr;
namespace k = slbr::kernels;

namespace {

std::vector<double> random_vec(std::size_t n, Rng& rng) {
  std::vector<double> v(n);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (double& x : v) x = u(rng);
  return v;
}

double max_rel(const std::vector<double>& a, const std::vector<double>& b) {
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    worst = std::max(worst, std::abs(a[i] - b[i]) / std::max(1.0, std::abs(a[i])));
  }
  return worst;
}

// Pins a table for the scope and restores the default afterwards.
struct PinIsa {
  explicit PinIsa(k::Isa isa) : saved(k::active().isa) { k::set_active(isa); }
  ~PinIsa() { k::set_active(saved); }
  k::Isa saved;
};

}  // namespace

TEST_CASE("scalar gemm matches a textbook triple loop") {
  Rng rng(1);
  const std::size_t m = 5, n = 7, kk = 3;
  auto a = random_vec(m * kk, rng), b = random_vec(kk * n, rng);
  std::vector<double> c(m * n, 0.0), ref(m * n, 0.0);
  k::scalar_table().gemm(m, n, kk, a.data(), kk, 1, b.data(), n, c.data(), n, false);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j)
      for (std::size_t p = 0; p < kk; ++p) ref[i * n + j] += a[i * kk + p] * b[p * n + j];
  CHECK(max_rel(c, ref) < 1e-14);
}

TEST_CASE("avx2 kernels agree with the scalar reference") {
  const k::KernelTable* wide = k::avx2_table();
  if (wide == nullptr || !k::cpu_supports(k::Isa::avx2)) {
    MESSAGE("avx2 variant unavailable; skipping");
    return;
  }
  const k::KernelTable& ref = k::scalar_table();
  Rng rng(2);
  // Sizes straddle the 4x8 register tile and the 4-wide vector tail.
  for (std::size_t m : {1u, 3u, 4u, 9u, 17u}) {
    for (std::size_t n : {1u, 5u, 8u, 13u, 67u}) {
      for (std::size_t kk : {1u, 2u, 9u, 31u}) {
        CAPTURE(m);
        CAPTURE(n);
        CAPTURE(kk);
        auto a = random_vec(m * kk, rng), b = random_vec(kk * n, rng);
        auto c0 = random_vec(m * n, rng);
        for (bool acc : {false, true}) {
          auto c1 = c0, c2 = c0;
          ref.gemm(m, n, kk, a.data(), kk, 1, b.data(), n, c1.data(), n, acc);
          wide->gemm(m, n, kk, a.data(), kk, 1, b.data(), n, c2.data(), n, acc);
          CHECK(max_rel(c1, c2) < 1e-12);
        }
        // Transposed A via strides.
        auto c1 = c0, c2 = c0;
        ref.gemm(m, n, kk, a.data(), 1, m, b.data(), n, c1.data(), n, true);
        wide->gemm(m, n, kk, a.data(), 1, m, b.data(), n, c2.data(), n, true);
        CHECK(max_rel(c1, c2) < 1e-12);

        auto bt = random_vec(n * kk, rng);
        auto d1 = c0, d2 = c0;
        ref.gemm_abt(m, n, kk, a.data(), kk, bt.data(), kk, d1.data(), n);
        wide->gemm_abt(m, n, kk, a.data(), kk, bt.data(), kk, d2.data(), n);
        CHECK(max_rel(d1, d2) < 1e-12);
      }
    }
  }
  for (std::size_t n : {0u, 1u, 3u, 4u, 7u, 8u, 33u, 1000u}) {
    auto x = random_vec(n, rng), y = random_vec(n, rng);
    auto y1 = y, y2 = y;
    ref.axpy(n, 0.7, x.data(), y1.data());
    wide->axpy(n, 0.7, x.data(), y2.data());
    CHECK(max_rel(y1, y2) < 1e-15);
    CHECK(ref.dot(n, x.data(), y.data()) == doctest::Approx(wide->dot(n, x.data(), y.data())).epsilon(1e-12));
    CHECK(ref.sum(n, x.data()) == doctest::Approx(wide->sum(n, x.data())).epsilon(1e-12));
  }
}

TEST_CASE("conv forward and backward agree across kernel tables") {
  if (!k::cpu_supports(k::Isa::avx2) || k::avx2_table() == nullptr) return;
  Rng rng(3);
  const Tensor x = testing::random_tensor({2, 5, 9, 9}, rng);
  const Tensor w = testing::random_tensor({6, 5, 3, 3}, rng);
  const Tensor b = testing::random_tensor({1, 6, 1, 1}, rng);
  auto run = [&](k::Isa isa, int stride) {
    PinIsa pin(isa);
    Var xv(x, true), wv(w, true), bv(b, true);
    Var y = ops::conv2d(xv, wv, bv, stride, 1);
    Var loss = ops::mean_abs_diff(y, Var(Tensor(y.shape(), 0.1)));
    backward(loss);
    return std::vector<Tensor>{y.value(), xv.grad(), wv.grad(), bv.grad()};
  };
  for (int stride : {1, 2}) {
    const auto s = run(k::Isa::scalar, stride);
    const auto v = run(k::Isa::avx2, stride);
    for (std::size_t i = 0; i < s.size(); ++i) CHECK(max_abs_diff(s[i], v[i]) < 1e-12);
  }
}

TEST_CASE("set_active rejects unknown variants only when unsupported") {
  CHECK_NOTHROW(k::set_active(k::Isa::scalar));
  CHECK(k::active().isa == k::Isa::scalar);
  if (k::cpu_supports(k::Isa::avx2) && k::avx2_table() != nullptr) {
    CHECK_NOTHROW(k::set_active(k::Isa::avx2));
    CHECK(k::active().isa == k::Isa::avx2);
  }
}
