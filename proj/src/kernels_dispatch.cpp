#include <atomic>
#include <cstdlib>
#include <cstring>

#include "cmnet/errors.hpp"
#include "cmnet/kernels.hpp"

namespace cmnet::kernels {

const KernelTable<float>* avx2_table_compiled();  // defined in kernels_avx2.cpp

namespace {

bool cpu_has_avx2() {
#if defined(__x86_64__) || defined(__i386__)
  return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
  return false;
#endif
}

SimdLevel initial_level() {
  SimdLevel best = detect_simd();
  const char* env = std::getenv("CMNET_SIMD");
  if (!env || std::strcmp(env, "auto") == 0) return best;
  if (std::strcmp(env, "scalar") == 0) return SimdLevel::Scalar;
  if (std::strcmp(env, "avx2") == 0) {
    if (best != SimdLevel::Avx2) throw UsageError("CMNET_SIMD=avx2 but AVX2 is unavailable");
    return SimdLevel::Avx2;
  }
  throw UsageError(std::string("unknown CMNET_SIMD value: ") + env);
}

std::atomic<SimdLevel>& level_state() {
  static std::atomic<SimdLevel> level{initial_level()};
  return level;
}

}  // namespace

SimdLevel detect_simd() {
  return (cpu_has_avx2() && avx2_table_compiled() != nullptr) ? SimdLevel::Avx2 : SimdLevel::Scalar;
}

SimdLevel simd_level() { return level_state().load(std::memory_order_relaxed); }

void set_simd_level(SimdLevel level) {
  if (level == SimdLevel::Avx2 && detect_simd() != SimdLevel::Avx2)
    throw UsageError("AVX2 kernels unavailable on this machine/build");
  level_state().store(level, std::memory_order_relaxed);
}

std::string simd_level_name(SimdLevel level) {
  return level == SimdLevel::Avx2 ? "avx2" : "scalar";
}

const KernelTable<float>* avx2_table() {
  return cpu_has_avx2() ? avx2_table_compiled() : nullptr;
}

template <typename T>
const KernelTable<T>& active() {
  return scalar_table<T>();
}

template <>
const KernelTable<float>& active<float>() {
  if (simd_level() == SimdLevel::Avx2) {
    const KernelTable<float>* t = avx2_table();
    if (t) return *t;
  }
  return scalar_table<float>();
}

template <typename T>
std::vector<const KernelTable<T>*> available_tables() {
  return {&scalar_table<T>()};
}

template <>
std::vector<const KernelTable<float>*> available_tables<float>() {
  std::vector<const KernelTable<float>*> out{&scalar_table<float>()};
  if (const KernelTable<float>* t = avx2_table()) out.push_back(t);
  return out;
}

template const KernelTable<double>& active<double>();
template std::vector<const KernelTable<double>*> available_tables<double>();

}  // namespace cmnet::kernels
