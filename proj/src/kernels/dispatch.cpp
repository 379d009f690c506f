#include <atomic>
#include <cstdlib>
#include <stdexcept>
#include <string>

#include "slbr/kernels.hpp"

namespace slbr::kernels {

#ifndef SLBR_HAVE_AVX2
const KernelTable* avx2_table() { return nullptr; }
#endif

std::string_view isa_name(Isa isa) {
  switch (isa) {
    case Isa::scalar: return "scalar";
    case Isa::avx2: return "avx2";
  }
  return "unknown";
}

bool cpu_supports(Isa isa) {
  switch (isa) {
    case Isa::scalar:
      return true;
    case Isa::avx2:
#if defined(SLBR_HAVE_AVX2) && (defined(__GNUC__) || defined(__clang__))
      return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
      return false;
#endif
  }
  return false;
}

namespace {

const KernelTable* table_for(Isa isa) {
  if (isa == Isa::scalar) return &scalar_table();
  return cpu_supports(isa) ? avx2_table() : nullptr;
}

const KernelTable* pick_default() {
  if (const char* env = std::getenv("SLBR_KERNELS")) {
    const std::string want(env);
    if (want == "scalar") return &scalar_table();
    if (want == "avx2") {
      if (const KernelTable* t = table_for(Isa::avx2)) return t;
      throw std::invalid_argument("SLBR_KERNELS=avx2 but AVX2/FMA unavailable");
    }
    throw std::invalid_argument("SLBR_KERNELS must be 'scalar' or 'avx2', got '" + want + "'");
  }
  if (const KernelTable* t = table_for(Isa::avx2)) return t;
  return &scalar_table();
}

std::atomic<const KernelTable*> g_active{nullptr};

}  // namespace

const KernelTable& active() {
  const KernelTable* t = g_active.load(std::memory_order_acquire);
  if (t == nullptr) {
    t = pick_default();
    g_active.store(t, std::memory_order_release);
  }
  return *t;
}

void set_active(Isa isa) {
  const KernelTable* t = table_for(isa);
  if (t == nullptr) {
    throw std::invalid_argument("kernel variant '" + std::string(isa_name(isa)) +
                                "' not supported on this CPU/build");
  }
  g_active.store(t, std::memory_order_release);
}

}  // namespace slbr::kernels
